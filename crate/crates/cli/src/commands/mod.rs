pub mod eval_cast;
pub mod eval_versatility;
pub mod ingest;
pub mod nn;
pub mod significance;
pub mod synth;
pub mod train;
