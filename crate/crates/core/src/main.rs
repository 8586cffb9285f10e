use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dialclean::corpus::{read_pairs, PunctTokenizer};
use dialclean::evalkit::diversity_stats;
use dialclean::filter::Method;
use dialclean::pipeline::{Pipeline, PipelineConfig, Stage, StageReport};
use dialclean::synth::{generate, SynthConfig};
use dialclean::{Error, Result};

#[derive(Parser)]
#[command(name = "dialclean", version, about = "Score and filter dialogue utterance-pair corpora")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, default_value = "dialclean.toml")]
    config: PathBuf,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Fraction of pairs to keep, in (0, 1].
    #[arg(long, global = true, conflicts_with = "keep_count")]
    keep_ratio: Option<f64>,
    /// Number of pairs to keep.
    #[arg(long, global = true)]
    keep_count: Option<usize>,
    /// Ranking method: ours, frame, content, entropy-src, entropy-trg.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Seed for sampling (component fit, synthetic data).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Pair consecutive lines, tokenize, and apply the rule filters.
    Ingest,
    /// Train both alignment directions and write symmetrized alignments.
    Align,
    /// Extract phrase pairs and build the nPMI phrase table.
    ExtractTable,
    /// Fit the common component of SIF sentence vectors.
    FitEmbedder,
    /// Score every pair and calibrate the combined score.
    Score,
    /// Keep the best-ranked pairs by the configured method.
    Filter,
    /// Correlations, histograms and diversity statistics.
    Evaluate,
    /// Print corpus and diversity statistics for a pairs file.
    Stats {
        /// Pairs file; defaults to the ingested corpus.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run every stage in order.
    RunAll,
    /// Write a synthetic corpus with planted pairs and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        planted: usize,
        #[arg(long, default_value_t = 500)]
        shuffled: usize,
        /// Extra pairs answered by stock generic responses.
        #[arg(long, default_value_t = 0)]
        generic: usize,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        min_count: u64,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    let o = &cli.overrides;
    if let Some(r) = o.keep_ratio {
        cfg.filter.keep_ratio = Some(r);
        cfg.filter.keep_count = None;
    }
    if let Some(k) = o.keep_count {
        cfg.filter.keep_count = Some(k);
        cfg.filter.keep_ratio = None;
    }
    if let Some(m) = &o.method {
        m.parse::<Method>()?;
        cfg.filter.method = m.clone();
    }
    if let Some(s) = o.seed {
        cfg.embed.seed = s;
    }
    Ok(cfg)
}

fn print_report(r: &StageReport) {
    let rows: Vec<String> = r.outputs.iter().map(|(n, k)| format!("{n}={k}")).collect();
    println!("{}: {} ({} ms)", r.stage.name(), rows.join(" "), r.wall_time_ms);
}

fn run(cli: Cli) -> Result<()> {
    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Align => Some(Stage::Align),
        Command::ExtractTable => Some(Stage::Table),
        Command::FitEmbedder => Some(Stage::Embed),
        Command::Score => Some(Stage::Score),
        Command::Filter => Some(Stage::Filter),
        Command::Evaluate => Some(Stage::Eval),
        _ => None,
    };
    if let Some(stage) = stage {
        let p = Pipeline::new(load_config(&cli)?, cli.threads)?;
        print_report(&p.run(stage)?);
        return Ok(());
    }
    match &cli.command {
        Command::RunAll => {
            let p = Pipeline::new(load_config(&cli)?, cli.threads)?;
            for s in Stage::ALL {
                print_report(&p.run(s)?);
            }
        }
        Command::Stats { input } => {
            let path = match input {
                Some(p) => p.clone(),
                None => Pipeline::new(load_config(&cli)?, cli.threads)?.artifacts().pairs(),
            };
            if !path.is_file() {
                return Err(Error::MissingArtifact(format!("pairs ({})", path.display())));
            }
            let corpus = read_pairs(&path, &PunctTokenizer)?;
            println!("{}", corpus.stats());
            if !corpus.is_empty() {
                for (side, utts) in [
                    ("x", corpus.pairs().iter().map(|p| &p.x.tokens).collect::<Vec<_>>()),
                    ("y", corpus.pairs().iter().map(|p| &p.y.tokens).collect::<Vec<_>>()),
                ] {
                    let d = diversity_stats(&utts)?;
                    println!("{}", d.to_csv_row(side));
                }
            }
        }
        Command::Synth {
            out,
            planted,
            shuffled,
            generic,
            dim,
            min_count,
        } => {
            let seed = cli.overrides.seed.unwrap_or(SynthConfig::default().seed);
            let cfg = SynthConfig {
                planted: *planted,
                shuffled: *shuffled,
                generic: *generic,
                dim: *dim,
                seed,
                ..SynthConfig::default()
            };
            let corpus = generate(&cfg);
            corpus.write(out, seed)?;
            let toml = format!(
                "[paths]\ncorpus = \"corpus.txt\"\nvectors = \"vectors.vec\"\nfrequencies = \"freqs.tsv\"\n\
                 ratings = \"ratings.tsv\"\nartifacts = \"artifacts\"\n\n[table]\nmin_count = {min_count}\n\n\
                 [filter]\nmethod = \"ours\"\nkeep_ratio = 0.5\n"
            );
            std::fs::write(out.join("dialclean.toml"), toml).map_err(|e| Error::io(out, e))?;
            println!("synth: {} pairs written to {}", corpus.pairs.len(), out.display());
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
