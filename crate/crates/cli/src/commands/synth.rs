//! `synth`: emit a planted world as standard relation files plus the
//! planted expert pairs and the per-actor ground truth.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;

use gausscast::eval::versatility_score;
use gausscast::{generate_planted, planted_expert_pairs, PlantedConfig};

use crate::io::write_atomic;
use crate::pipeline::write_dataset_tsv;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub movies: usize,
    #[arg(long, default_value_t = 50)]
    pub actors: usize,
    #[arg(long, default_value_t = 20)]
    pub keywords: usize,
    #[arg(long, default_value_t = 5)]
    pub personae: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Role clusters spanned by the versatile half of the actors
    #[arg(long, default_value_t = 5)]
    pub spread: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let cfg = PlantedConfig::new(
        args.movies,
        args.actors,
        args.keywords,
        args.personae,
        args.dim,
        args.spread,
        args.seed,
    );
    let world = generate_planted(&cfg)?;

    write_dataset_tsv(
        &world.dataset,
        &args.out.join("triples.tsv"),
        &args.out.join("pairs.tsv"),
    )?;

    let expert = planted_expert_pairs(&world);
    write_atomic(&args.out.join("expert_pairs.tsv"), |w| {
        for p in &expert {
            writeln!(
                w,
                "{}\t{}\t{}",
                world.dataset.actors.name(p.winner),
                world.dataset.actors.name(p.loser),
                p.majority_count
            )?;
        }
        Ok(())
    })?;

    write_atomic(&args.out.join("planted_actors.tsv"), |w| {
        writeln!(w, "#actor\tspread\tplanted_versatility")?;
        for (a, spread) in world.spreads.iter().enumerate() {
            let v = versatility_score(&world.truth, a)?;
            writeln!(w, "{}\t{spread}\t{v:.6}", world.dataset.actors.name(a))?;
        }
        Ok(())
    })?;

    println!(
        "planted world: {} triples, {} pairs, {} expert pairs -> {}",
        world.dataset.triples.len(),
        world.dataset.pairs.len(),
        expert.len(),
        args.out.display()
    );
    Ok(())
}
