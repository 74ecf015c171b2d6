//! `ingest`: validate and filter the relation files, write the cleaned
//! dataset plus vocabularies and a summary report.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;

use gausscast::{filter_entities, ingest_catalog, Vocab};

use crate::io::{write_atomic, write_report, ReportRow};
use crate::pipeline::write_dataset_tsv;

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Movie-persona-actor triples (TSV)
    #[arg(long)]
    pub triples: PathBuf,
    /// Movie-keyword pairs (TSV)
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output directory for the cleaned dataset
    #[arg(long)]
    pub out: PathBuf,
    /// Keep entities with at least this many relations
    #[arg(long, default_value_t = 1)]
    pub min_relations: usize,
    /// Drop triples whose cast rank exceeds this (default: keep all)
    #[arg(long)]
    pub max_cast_rank: Option<u32>,
}

fn write_vocab(path: &std::path::Path, vocab: &Vocab) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "#id\tname")?;
        for (i, name) in vocab.names().iter().enumerate() {
            writeln!(w, "{i}\t{name}")?;
        }
        Ok(())
    })
}

pub fn run(args: &IngestArgs) -> Result<()> {
    let raw = ingest_catalog(&args.triples, &args.pairs)?;
    let filtered = filter_entities(&raw, args.min_relations, args.max_cast_rank)?;

    write_dataset_tsv(&filtered, &args.out.join("triples.tsv"), &args.out.join("pairs.tsv"))?;
    write_vocab(&args.out.join("movies.tsv"), &filtered.movies)?;
    write_vocab(&args.out.join("actors.tsv"), &filtered.actors)?;
    write_vocab(&args.out.join("keywords.tsv"), &filtered.keywords)?;

    let rows = vec![
        ReportRow::new("movies", filtered.movies.len() as f64, 1, 0),
        ReportRow::new("actors", filtered.actors.len() as f64, 1, 0),
        ReportRow::new("keywords", filtered.keywords.len() as f64, 1, 0),
        ReportRow::new("triples", filtered.triples.len() as f64, 1, 0),
        ReportRow::new("pairs", filtered.pairs.len() as f64, 1, 0),
        ReportRow::new("triples_dropped", (raw.triples.len() - filtered.triples.len()) as f64, 1, 0),
        ReportRow::new("pairs_dropped", (raw.pairs.len() - filtered.pairs.len()) as f64, 1, 0),
    ];
    write_report(&args.out.join("summary.tsv"), &rows)?;
    println!(
        "ingested {} movies, {} actors, {} keywords; {} triples, {} pairs -> {}",
        filtered.movies.len(),
        filtered.actors.len(),
        filtered.keywords.len(),
        filtered.triples.len(),
        filtered.pairs.len(),
        args.out.display()
    );
    Ok(())
}
