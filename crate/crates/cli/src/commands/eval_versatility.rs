//! `eval-versatility`: score actors by learned variance (or an entropy
//! heuristic), split the expert pairs into disjoint validation/test actor
//! halves, and report pairwise accuracy and rank correlation.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use anyhow::{bail, Result};
use ndarray::Array2;

use gausscast::eval::{dominant_topics, nmf_topics, pairwise_accuracy, rank_correlation};
use gausscast::{
    load_checkpoint, read_expert_pairs, Dataset, ExpertPair, ModelFamily, Vocab, TOPIC_GROUPS,
};

use crate::io::{write_report, ReportRow};
use crate::pipeline::{
    checkpoint_vocab, load_split_dataset, resolve_config, train_model, ModelArg, RunFlags,
};

const N_SORTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    /// Entropy of actor keyword counts (genres live in the keyword vocabulary).
    Genre,
    /// Entropy of actor persona-topic-group counts.
    Ptg,
    /// Entropy over NMF keyword topics of the actor's movies.
    KeywordTopics,
}

#[derive(Debug, clap::Args)]
pub struct EvalVersatilityArgs {
    /// Trained Gaussian checkpoint
    #[arg(long, conflicts_with_all = ["baseline", "repeats"])]
    pub checkpoint: Option<PathBuf>,
    /// Entropy heuristic instead of a model
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
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
    /// Expert pairs file: winner TAB loser TAB majority_count
    #[arg(long = "expert-pairs")]
    pub expert_pairs: PathBuf,
    /// Report output path
    #[arg(long)]
    pub out: PathBuf,
    /// NMF topic count for the keyword-topics baseline
    #[arg(long, default_value_t = 10)]
    pub topics: usize,
    /// NMF iterations
    #[arg(long = "nmf-iters", default_value_t = 200)]
    pub nmf_iters: usize,
    #[command(flatten)]
    pub flags: RunFlags,
}

/// Entropy scores over per-actor count vectors; actors in the universe with
/// no counts at all get the minimum score (a point distribution).
fn entropy_scores(
    counts: HashMap<usize, Vec<f64>>,
    universe: &HashSet<usize>,
) -> Result<HashMap<usize, f64>> {
    let mut scores: HashMap<usize, f64> = HashMap::new();
    for (actor, vec) in counts {
        scores.insert(actor, gausscast::eval::entropy(&vec)?);
    }
    for &a in universe {
        scores.entry(a).or_insert(0.0);
    }
    Ok(scores)
}

fn baseline_scores(
    baseline: Baseline,
    d: &Dataset,
    universe: &HashSet<usize>,
    topics: usize,
    nmf_iters: usize,
    seed: u64,
) -> Result<HashMap<usize, f64>> {
    match baseline {
        Baseline::Genre => {
            // Actor x keyword co-occurrence through shared movies.
            let movie_keywords = d.keyword_positives();
            let mut counts: HashMap<usize, Vec<f64>> = HashMap::new();
            for t in &d.triples {
                if let Some(kws) = movie_keywords.get(&t.movie.index) {
                    let v = counts
                        .entry(t.actor.index)
                        .or_insert_with(|| vec![0.0; d.keywords.len()]);
                    for &k in kws {
                        v[k] += 1.0;
                    }
                }
            }
            entropy_scores(counts, universe)
        }
        Baseline::Ptg => {
            let mut counts: HashMap<usize, Vec<f64>> = HashMap::new();
            for t in &d.triples {
                if let Some(topic) = t.persona.topic_group {
                    counts
                        .entry(t.actor.index)
                        .or_insert_with(|| vec![0.0; TOPIC_GROUPS])[topic] += 1.0;
                }
            }
            entropy_scores(counts, universe)
        }
        Baseline::KeywordTopics => {
            let mut matrix = Array2::zeros((d.movies.len(), d.keywords.len()));
            for p in &d.pairs {
                matrix[(p.movie.index, p.keyword.index)] += 1.0;
            }
            let (w, _, _) = nmf_topics(&matrix, topics, nmf_iters, seed)?;
            let movie_topic = dominant_topics(&w);
            let mut counts: HashMap<usize, Vec<f64>> = HashMap::new();
            for t in &d.triples {
                counts
                    .entry(t.actor.index)
                    .or_insert_with(|| vec![0.0; topics])[movie_topic[t.movie.index]] += 1.0;
            }
            entropy_scores(counts, universe)
        }
    }
}

struct VersatilityEval {
    val_accuracy: f64,
    test_accuracy: f64,
    test_rank_correlation: f64,
    n_val: usize,
    n_test: usize,
}

fn evaluate_scores(
    scores: &HashMap<usize, f64>,
    expert_pairs: &[ExpertPair],
    seed: u64,
) -> Result<VersatilityEval> {
    let actor_set: Vec<usize> = {
        let mut s: HashSet<usize> =
            expert_pairs.iter().flat_map(|p| [p.winner, p.loser]).collect();
        let mut v: Vec<usize> = s.drain().collect();
        v.sort_unstable();
        v
    };
    let (val_pairs, test_pairs) =
        gausscast::split_versatility_actors(&actor_set, expert_pairs, seed)?;
    if val_pairs.is_empty() || test_pairs.is_empty() {
        bail!(
            "degenerate versatility split (val {}, test {}); need more expert pairs",
            val_pairs.len(),
            test_pairs.len()
        );
    }
    let val_accuracy = pairwise_accuracy(scores, &val_pairs)?;
    let test_accuracy = pairwise_accuracy(scores, &test_pairs)?;
    // Correlation runs over the actors touched by test pairs.
    let test_actors: HashSet<usize> =
        test_pairs.iter().flat_map(|p| [p.winner, p.loser]).collect();
    let test_scores: HashMap<usize, f64> = scores
        .iter()
        .filter(|(a, _)| test_actors.contains(a))
        .map(|(&a, &s)| (a, s))
        .collect();
    let test_rank_correlation = rank_correlation(&test_scores, &test_pairs, N_SORTS, seed)?;
    Ok(VersatilityEval {
        val_accuracy,
        test_accuracy,
        test_rank_correlation,
        n_val: val_pairs.len(),
        n_test: test_pairs.len(),
    })
}

fn rows_for(eval: &VersatilityEval, seed: u64) -> Vec<ReportRow> {
    vec![
        ReportRow::new("val_accuracy", eval.val_accuracy, eval.n_val, seed),
        ReportRow::new("test_accuracy", eval.test_accuracy, eval.n_test, seed),
        ReportRow::new("test_rank_correlation", eval.test_rank_correlation, eval.n_test, seed),
    ]
}

pub fn run(args: &EvalVersatilityArgs) -> Result<()> {
    let seed = args.flags.seed.unwrap_or(42);

    if let Some(baseline) = args.baseline {
        let d = load_split_dataset(&args.triples, &args.pairs, seed)?;
        let expert = read_expert_pairs(&args.expert_pairs, &d.actors)?;
        let universe: HashSet<usize> = expert.iter().flat_map(|p| [p.winner, p.loser]).collect();
        let scores =
            baseline_scores(baseline, &d, &universe, args.topics, args.nmf_iters, seed)?;
        let eval = evaluate_scores(&scores, &expert, seed)?;
        write_report(&args.out, &rows_for(&eval, seed))?;
        println!(
            "baseline {:?}: val {:.2}%, test {:.2}%, corr {:.3} -> {}",
            baseline,
            eval.val_accuracy,
            eval.test_accuracy,
            eval.test_rank_correlation,
            args.out.display()
        );
        return Ok(());
    }

    if let Some(ckpt_path) = &args.checkpoint {
        let ckpt = load_checkpoint(ckpt_path)?;
        let ModelFamily::Gaussian(params) = &ckpt.model else {
            bail!("versatility scoring reads Gaussian variances; checkpoint holds the baseline model");
        };
        let actor_vocab = Vocab::from_names(ckpt.vocab.actors.iter().cloned());
        let expert = read_expert_pairs(&args.expert_pairs, &actor_vocab)?;
        let scores = gausscast::eval::versatility_scores(params);
        let eval = evaluate_scores(&scores, &expert, seed)?;
        write_report(&args.out, &rows_for(&eval, seed))?;
        println!(
            "versatility: val {:.2}%, test {:.2}%, corr {:.3} -> {}",
            eval.val_accuracy,
            eval.test_accuracy,
            eval.test_rank_correlation,
            args.out.display()
        );
        return Ok(());
    }

    let Some(repeats) = args.repeats else {
        bail!("eval-versatility needs --checkpoint, --baseline, or --model with --repeats");
    };
    let Some(model) = args.model else {
        bail!("--repeats needs --model to train fresh runs");
    };
    if !model.is_gaussian() {
        bail!("versatility scoring requires a Gaussian model");
    }
    let rc = resolve_config(model, &args.flags)?;
    let split_seed = rc.train.seed;
    let dataset = load_split_dataset(&args.triples, &args.pairs, split_seed)?;
    let expert = read_expert_pairs(&args.expert_pairs, &dataset.actors)?;

    let mut rows = Vec::new();
    let mut test_accs = Vec::new();
    for run in 0..repeats {
        let mut run_rc = rc.clone();
        run_rc.train.seed = split_seed.wrapping_add(run as u64);
        let (family, _) = train_model(model, &dataset, &run_rc, None)?;
        let ModelFamily::Gaussian(params) = &family else { unreachable!() };
        let scores = gausscast::eval::versatility_scores(params);
        let eval = evaluate_scores(&scores, &expert, split_seed)?;
        rows.extend(rows_for(&eval, run_rc.train.seed));
        test_accs.push(eval.test_accuracy);
    }
    let mean = test_accs.iter().sum::<f64>() / test_accs.len() as f64;
    rows.push(ReportRow::new("test_accuracy_mean", mean, repeats, split_seed));
    write_report(&args.out, &rows)?;
    println!(
        "{repeats} runs: mean test accuracy {mean:.2}% -> {}",
        args.out.display()
    );
    Ok(())
}
