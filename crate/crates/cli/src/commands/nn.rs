//! `nn`: nearest actors to a named actor under the persona-free
//! actor-to-actor similarity.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use gausscast::eval::nearest_neighbors;
use gausscast::{load_checkpoint, log_overlap, EntityId, ModelFamily, Vocab};

use crate::io::write_atomic;

#[derive(Debug, clap::Args)]
pub struct NnArgs {
    /// Trained Gaussian checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Query actor name
    #[arg(long)]
    pub actor: String,
    /// Neighbors to list
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Output TSV
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &NnArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let ModelFamily::Gaussian(params) = &ckpt.model else {
        bail!("nearest-neighbor queries need a Gaussian checkpoint");
    };
    let vocab = Vocab::from_names(ckpt.vocab.actors.iter().cloned());
    let query = vocab
        .get(&args.actor)
        .with_context(|| format!("actor {:?} is not in the checkpoint", args.actor))?;
    let neighbors = nearest_neighbors(params, EntityId::actor(query), args.topk)?;

    let me = &params.actors[query];
    write_atomic(&args.out, |w| {
        writeln!(w, "#rank\tactor\tsimilarity")?;
        for (id, rank) in &neighbors {
            let other = &params.actors[id.index];
            let sim = log_overlap(&me.mean, &me.var, &other.mean, &other.var)?;
            writeln!(w, "{rank}\t{}\t{sim:.6}", vocab.name(id.index))?;
        }
        Ok(())
    })?;
    println!(
        "{} neighbors of {:?} -> {}",
        neighbors.len(),
        args.actor,
        args.out.display()
    );
    Ok(())
}
