//! `eval-cast`: rank all actors for each held-out test triple and report
//! mean rank and hits@k. With `--repeats` the model is retrained from fresh
//! seeds and per-run rows accompany the aggregate.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};

use gausscast::eval::{evaluate_cast, known_true_actors, CastScorer, RankResult};
use gausscast::{load_checkpoint, Dataset, ModelFamily, PersonaDescriptor, Split};

use crate::io::{write_atomic, write_report, ReportRow};
use crate::pipeline::{
    load_split_dataset, queries_for_split, resolve_config, train_model, IdMap, ModelArg, RunFlags,
};

#[derive(Debug, clap::Args)]
pub struct EvalCastArgs {
    /// Trained model checkpoint (single-model mode)
    #[arg(long, conflicts_with = "repeats")]
    pub checkpoint: Option<PathBuf>,
    /// Model variant (repeats mode trains from scratch)
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Train/evaluate this many runs with shifted seeds
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Movie-persona-actor triples (TSV)
    #[arg(long)]
    pub triples: PathBuf,
    /// Movie-keyword pairs (TSV)
    #[arg(long)]
    pub pairs: PathBuf,
    /// Report output path
    #[arg(long)]
    pub out: PathBuf,
    /// Per-query ranks file (default: <out stem>.ranks.tsv)
    #[arg(long = "ranks-out")]
    pub ranks_out: Option<PathBuf>,
    /// Remove other known-true actors from each query's candidate list
    #[arg(long)]
    pub filtered: bool,
    /// hits@k cutoff
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    #[command(flatten)]
    pub flags: RunFlags,
}

fn eval_on_split(
    scorer: &dyn CastScorer,
    dataset: &Dataset,
    ids: &IdMap,
    filtered: bool,
    topk: usize,
) -> Result<RankResult> {
    let queries = queries_for_split(dataset, ids, Split::Test);
    if queries.is_empty() {
        bail!("no test triples to evaluate");
    }
    let filter_map = if filtered {
        // Known-true sets are built in checkpoint-id space over all splits.
        let mut remapped = std::collections::HashMap::new();
        for ((m, desc), actors) in known_true_actors(dataset) {
            let actors = actors.into_iter().map(|a| ids.actor(a)).collect();
            remapped.insert((ids.movie(m), desc), actors);
        }
        Some(remapped)
    } else {
        None
    };
    Ok(evaluate_cast(scorer, &queries, filter_map.as_ref(), topk)?)
}

fn write_ranks_file(
    path: &std::path::Path,
    dataset: &Dataset,
    result: &RankResult,
) -> Result<()> {
    let queries: Vec<_> = dataset.triples_with_split(Split::Test).collect();
    write_atomic(path, |w| {
        writeln!(w, "#movie\tactor\ttopic\trank")?;
        for (t, rank) in queries.iter().zip(&result.ranks) {
            let topic = t.persona.topic_group.map_or("-".into(), |x: usize| x.to_string());
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                dataset.movies.name(t.movie.index),
                dataset.actors.name(t.actor.index),
                topic,
                rank
            )?;
        }
        Ok(())
    })
}

fn scorer_of(family: &ModelFamily) -> &dyn CastScorer {
    match family {
        ModelFamily::Gaussian(p) => p,
        ModelFamily::TransE(p) => p,
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn run(args: &EvalCastArgs) -> Result<()> {
    match (&args.checkpoint, args.repeats) {
        (Some(ckpt_path), None) => {
            let ckpt = load_checkpoint(ckpt_path)?;
            let dataset = load_split_dataset(&args.triples, &args.pairs, ckpt.split_seed)?;
            let ids = IdMap::build(&dataset, &ckpt)?;
            let result =
                eval_on_split(scorer_of(&ckpt.model), &dataset, &ids, args.filtered, args.topk)?;
            let rows = vec![
                ReportRow::new("mean_rank", result.mean_rank, result.ranks.len(), ckpt.split_seed),
                ReportRow::new(
                    format!("hits_at_{}", args.topk),
                    result.hits_at_k,
                    result.ranks.len(),
                    ckpt.split_seed,
                ),
            ];
            write_report(&args.out, &rows)?;
            let ranks_path = args
                .ranks_out
                .clone()
                .unwrap_or_else(|| args.out.with_extension("ranks.tsv"));
            write_ranks_file(&ranks_path, &dataset, &result)?;
            println!(
                "mean rank {:.2}, hits@{} {:.2}% over {} queries -> {}",
                result.mean_rank,
                args.topk,
                result.hits_at_k,
                result.ranks.len(),
                args.out.display()
            );
        }
        (None, Some(repeats)) => {
            let Some(model) = args.model else {
                bail!("--repeats needs --model to train fresh runs");
            };
            if repeats == 0 {
                bail!("--repeats must be at least 1");
            }
            let rc = resolve_config(model, &args.flags)?;
            let split_seed = rc.train.seed;
            let dataset = load_split_dataset(&args.triples, &args.pairs, split_seed)?;

            let mut rows = Vec::new();
            let mut mean_ranks = Vec::new();
            let mut hits = Vec::new();
            for run in 0..repeats {
                let mut run_rc = rc.clone();
                run_rc.train.seed = split_seed.wrapping_add(run as u64);
                let (family, _) = train_model(model, &dataset, &run_rc, None)?;
                let ckpt = gausscast::Checkpoint {
                    vocab: crate::pipeline::checkpoint_vocab(&dataset),
                    split_seed,
                    model: family,
                };
                let ids = IdMap::build(&dataset, &ckpt)?;
                let result = eval_on_split(
                    scorer_of(&ckpt.model),
                    &dataset,
                    &ids,
                    args.filtered,
                    args.topk,
                )?;
                rows.push(ReportRow::new(
                    "mean_rank",
                    result.mean_rank,
                    result.ranks.len(),
                    run_rc.train.seed,
                ));
                rows.push(ReportRow::new(
                    format!("hits_at_{}", args.topk),
                    result.hits_at_k,
                    result.ranks.len(),
                    run_rc.train.seed,
                ));
                mean_ranks.push(result.mean_rank);
                hits.push(result.hits_at_k);
            }
            let (mr_mean, mr_std) = mean_and_std(&mean_ranks);
            let (h_mean, h_std) = mean_and_std(&hits);
            rows.push(ReportRow::new("mean_rank_mean", mr_mean, repeats, split_seed));
            rows.push(ReportRow::new("mean_rank_std", mr_std, repeats, split_seed));
            rows.push(ReportRow::new(format!("hits_at_{}_mean", args.topk), h_mean, repeats, split_seed));
            rows.push(ReportRow::new(format!("hits_at_{}_std", args.topk), h_std, repeats, split_seed));
            write_report(&args.out, &rows)?;
            println!(
                "{repeats} runs: mean rank {mr_mean:.2} +- {mr_std:.2}, hits@{} {h_mean:.2}% -> {}",
                args.topk,
                args.out.display()
            );
        }
        (Some(_), Some(_)) => bail!("--checkpoint and --repeats are mutually exclusive"),
        (None, None) => bail!("eval-cast needs either --checkpoint or --model with --repeats"),
    }
    Ok(())
}
