//! `significance`: one-tailed Welch's t-test between the per-run values of a
//! metric in two report files.

use std::path::PathBuf;

use anyhow::{bail, Result};

use gausscast::eval::welch_t_test;

use crate::io::{read_report_metric, write_report, ReportRow};

#[derive(Debug, clap::Args)]
pub struct SignificanceArgs {
    /// First report file (the "greater" side of the one-tailed test)
    #[arg(long = "runs-a")]
    pub runs_a: PathBuf,
    /// Second report file
    #[arg(long = "runs-b")]
    pub runs_b: PathBuf,
    /// Metric name to compare
    #[arg(long, default_value = "mean_rank")]
    pub metric: String,
    /// Report output path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SignificanceArgs) -> Result<()> {
    let a = read_report_metric(&args.runs_a, &args.metric)?;
    let b = read_report_metric(&args.runs_b, &args.metric)?;
    if a.len() < 2 || b.len() < 2 {
        bail!(
            "need at least 2 runs of {:?} per file, found {} and {}",
            args.metric,
            a.len(),
            b.len()
        );
    }
    let (t, p) = welch_t_test(&a, &b)?;
    let rows = vec![
        ReportRow::new("t_statistic", t, a.len() + b.len(), 0),
        ReportRow::new("p_one_tailed", p, a.len() + b.len(), 0),
        ReportRow::new("mean_a", a.iter().sum::<f64>() / a.len() as f64, a.len(), 0),
        ReportRow::new("mean_b", b.iter().sum::<f64>() / b.len() as f64, b.len(), 0),
    ];
    write_report(&args.out, &rows)?;
    println!(
        "{}: t = {t:.4}, one-tailed p (mean A > mean B) = {p:.6} -> {}",
        args.metric,
        args.out.display()
    );
    Ok(())
}
