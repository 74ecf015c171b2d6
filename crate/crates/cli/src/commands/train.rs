//! `train`: fit one model variant on the relation files and write a
//! checkpoint plus a per-epoch training log.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;

use gausscast::{save_checkpoint, Checkpoint, TrainReport};

use crate::io::write_atomic;
use crate::pipeline::{
    checkpoint_vocab, load_split_dataset, resolve_config, train_model, ModelArg, RunFlags,
};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Model variant
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Movie-persona-actor triples (TSV)
    #[arg(long)]
    pub triples: PathBuf,
    /// Movie-keyword pairs (TSV)
    #[arg(long)]
    pub pairs: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    pub out: PathBuf,
    /// Pretrained word vectors for keyword mean initialization
    #[arg(long = "pretrained-vectors")]
    pub pretrained_vectors: Option<PathBuf>,
    /// Training log path (default: <out>.log.tsv)
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Seed for the train/val/test split (default: the run seed)
    #[arg(long = "split-seed")]
    pub split_seed: Option<u64>,
    #[command(flatten)]
    pub flags: RunFlags,
}

pub fn write_train_log(path: &std::path::Path, report: &TrainReport) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "#epoch\tmean_loss\teta\twall_ms")?;
        for e in 0..report.loss_history.len() {
            writeln!(
                w,
                "{e}\t{:.6}\t{:.6}\t{}",
                report.loss_history[e], report.eta_history[e], report.epoch_ms[e]
            )?;
        }
        Ok(())
    })
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let rc = resolve_config(args.model, &args.flags)?;
    let split_seed = args.split_seed.unwrap_or(rc.train.seed);
    let dataset = load_split_dataset(&args.triples, &args.pairs, split_seed)?;

    let (model, report) =
        train_model(args.model, &dataset, &rc, args.pretrained_vectors.as_deref())?;

    let ckpt = Checkpoint { vocab: checkpoint_vocab(&dataset), split_seed, model };
    save_checkpoint_atomic(&args.out, &ckpt)?;

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.tsv"));
    write_train_log(&log_path, &report)?;

    let last = report.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {:?} for {} epochs (final mean loss {last:.4}, {} skipped examples) -> {}",
        args.model,
        report.loss_history.len(),
        report.skipped_examples,
        args.out.display()
    );
    Ok(())
}

/// Checkpoints get the same atomic treatment as reports.
pub fn save_checkpoint_atomic(path: &std::path::Path, ckpt: &Checkpoint) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    save_checkpoint(tmp.path(), ckpt)?;
    tmp.persist(path)?;
    Ok(())
}
