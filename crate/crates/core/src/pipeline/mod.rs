//! Stage orchestration over a directory of persisted artifacts.
//!
//! Each stage reads its inputs from the artifacts directory (or the
//! configured input files), writes its outputs atomically, and leaves a
//! `reports/<stage>.txt` with input digests, a config digest, row counts and
//! wall time.

mod config;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{
    validate_config, AlignSection, CorpusFormat, CorpusSection, EmbedSection, EvalSection,
    FilterSection, Paths, PipelineConfig, TableSection,
};

use crate::aligner::{
    align_corpus, read_alignments, train_alignment, write_alignments, Direction,
};
use crate::corpus::{
    apply_rule_filters, pair_consecutive_lines, read_blank_separated, read_language_labels,
    read_pairs, read_with_manifest, write_pairs, Corpus, PunctTokenizer, RuleFilter,
};
use crate::error::{Error, Result};
use crate::evalkit::{diversity_stats, histogram, spearman, DiversityReport, HumanRatingSet};
use crate::filter::{
    entropy_scores, method_scores, rank_and_select, write_filter_report, write_filtered,
    FilterSpec, Keep, Method, Side,
};
use crate::phrase_table::{build_table, PhraseTable};
use crate::scorer::{read_scores, save_calibration, write_scores, Scorer};
use crate::sentvec::{
    load_component, load_word_vectors, sample_indices, save_component, ComponentSolver,
    FrequencyTable, SentenceEmbedder,
};
use crate::util::{bytes_digest, file_digest, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Align,
    Table,
    Embed,
    Score,
    Filter,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Align,
        Stage::Table,
        Stage::Embed,
        Stage::Score,
        Stage::Filter,
        Stage::Eval,
    ];

    /// Subcommand name.
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Align => "align",
            Stage::Table => "extract-table",
            Stage::Embed => "fit-embedder",
            Stage::Score => "score",
            Stage::Filter => "filter",
            Stage::Eval => "evaluate",
        }
    }
}

/// File layout inside the artifacts directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn pairs(&self) -> PathBuf {
        self.dir.join("pairs.tsv")
    }
    pub fn alignments(&self) -> PathBuf {
        self.dir.join("alignments.txt")
    }
    pub fn model(&self, d: Direction) -> PathBuf {
        self.dir.join(format!("model.{}.txt", d.as_str()))
    }
    pub fn table(&self) -> PathBuf {
        self.dir.join("phrase_table.txt")
    }
    pub fn component(&self) -> PathBuf {
        self.dir.join("component.txt")
    }
    pub fn scores(&self) -> PathBuf {
        self.dir.join("scores.tsv")
    }
    pub fn calibration(&self) -> PathBuf {
        self.dir.join("calibration.txt")
    }
    pub fn filtered(&self, spec: &FilterSpec) -> PathBuf {
        self.dir.join(format!("filtered/{}.tsv", filter_tag(spec)))
    }
    pub fn filter_report(&self, spec: &FilterSpec) -> PathBuf {
        self.dir.join(format!("filtered/{}.report.txt", filter_tag(spec)))
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.dir.join("eval")
    }
    pub fn report(&self, stage: Stage) -> PathBuf {
        self.dir.join(format!("reports/{}.txt", stage.name()))
    }
}

fn filter_tag(spec: &FilterSpec) -> String {
    match spec.keep {
        Keep::Ratio(r) => format!("{}-r{r}", spec.method),
        Keep::Count(k) => format!("{}-k{k}", spec.method),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub threads: usize,
    pub config_digest: String,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, usize)>,
    pub wall_time_ms: u128,
}

impl StageReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stage={}", self.stage.name());
        let _ = writeln!(s, "threads={}", self.threads);
        let _ = writeln!(s, "config_digest={}", self.config_digest);
        for (name, d) in &self.inputs {
            let _ = writeln!(s, "input.{name}={d}");
        }
        for (name, rows) in &self.outputs {
            let _ = writeln!(s, "output.{name}.rows={rows}");
        }
        let _ = writeln!(s, "wall_time_ms={}", self.wall_time_ms);
        s
    }
}

/// Digests and row counts gathered while a stage runs.
struct Tracker {
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, usize)>,
}

impl Tracker {
    fn input(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.inputs.push((name, file_digest(path)?));
        Ok(())
    }

    fn output(&mut self, name: &str, rows: usize) {
        self.outputs.push((name.to_string(), rows));
    }
}

fn require(path: &Path, what: &str, producer: Stage) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(format!(
            "{what} ({} not found; run `{}` first)",
            path.display(),
            producer.name()
        )))
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    threads: Option<usize>,
}

impl Pipeline {
    /// `threads = None` uses rayon's default pool size.
    pub fn new(config: PipelineConfig, threads: Option<usize>) -> Result<Self> {
        Ok(Pipeline {
            config: validate_config(config)?,
            threads,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn artifacts(&self) -> Artifacts {
        Artifacts {
            dir: self.config.paths.artifacts.clone(),
        }
    }

    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    pub fn run(&self, stage: Stage) -> Result<StageReport> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        let threads = pool.current_num_threads();
        let start = Instant::now();
        let mut t = Tracker {
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        let config_text = pool.install(|| match stage {
            Stage::Ingest => self.ingest(&mut t),
            Stage::Align => self.align(&mut t),
            Stage::Table => self.table(&mut t),
            Stage::Embed => self.embed(&mut t),
            Stage::Score => self.score(&mut t),
            Stage::Filter => self.filter(&mut t),
            Stage::Eval => self.evaluate(&mut t),
        })?;
        let report = StageReport {
            stage,
            threads,
            config_digest: bytes_digest(config_text.as_bytes()),
            inputs: t.inputs,
            outputs: t.outputs,
            wall_time_ms: start.elapsed().as_millis(),
        };
        let text = report.to_text();
        write_atomic(&self.artifacts().report(stage), |w| w.write_all(text.as_bytes()))?;
        Ok(report)
    }

    fn load_corpus(&self, t: &mut Tracker) -> Result<Corpus> {
        let path = self.artifacts().pairs();
        require(&path, "pairs", Stage::Ingest)?;
        t.input(&path)?;
        read_pairs(&path, &PunctTokenizer)
    }

    fn load_embedder(&self, t: &mut Tracker) -> Result<SentenceEmbedder> {
        let p = &self.config.paths;
        t.input(&p.vectors)?;
        t.input(&p.frequencies)?;
        let vectors = load_word_vectors(&p.vectors)?;
        let freqs = FrequencyTable::load(&p.frequencies)?;
        Ok(SentenceEmbedder::new(vectors, freqs, self.config.embed.a)?
            .with_lowercase(self.config.embed.lowercase))
    }

    fn ingest(&self, t: &mut Tracker) -> Result<String> {
        let c = &self.config;
        t.input(&c.paths.corpus)?;
        let lines = match c.corpus.format {
            CorpusFormat::BlankSeparated => read_blank_separated(&c.paths.corpus)?,
            CorpusFormat::Manifest => {
                let m = c.paths.manifest.as_ref().expect("validated");
                t.input(m)?;
                read_with_manifest(&c.paths.corpus, m)?
            }
        };
        let language = match (&c.paths.language_labels, &c.corpus.language) {
            (Some(p), Some(keep)) => {
                t.input(p)?;
                Some((read_language_labels(p)?, keep.clone()))
            }
            _ => None,
        };
        let rules = RuleFilter {
            min_tokens: c.corpus.min_tokens,
            max_tokens: c.corpus.max_tokens,
            language,
        };
        let candidates = pair_consecutive_lines(&lines);
        let corpus = apply_rule_filters(&candidates, &PunctTokenizer, &rules);
        log::info!(
            "ingest: {} lines, {} candidates, {}",
            lines.len(),
            candidates.len(),
            corpus.stats()
        );
        write_pairs(&self.artifacts().pairs(), corpus.pairs())?;
        t.output("pairs.tsv", corpus.len());
        Ok(PipelineConfig::section_text(&c.corpus))
    }

    fn align(&self, t: &mut Tracker) -> Result<String> {
        let corpus = self.load_corpus(t)?;
        let cfg = self.config.align.model_config();
        let fwd = train_alignment(&corpus, Direction::Forward, &cfg)?;
        let rev = train_alignment(&corpus, Direction::Reverse, &cfg)?;
        let a = self.artifacts();
        fwd.save(&a.model(Direction::Forward))?;
        rev.save(&a.model(Direction::Reverse))?;
        let alignments = align_corpus(&fwd, &rev, &corpus, self.config.align.heuristic)?;
        write_alignments(&a.alignments(), &corpus, &alignments)?;
        t.output("alignments.txt", alignments.len());
        Ok(PipelineConfig::section_text(&self.config.align))
    }

    fn table(&self, t: &mut Tracker) -> Result<String> {
        let corpus = self.load_corpus(t)?;
        let a = self.artifacts();
        require(&a.alignments(), "alignments", Stage::Align)?;
        t.input(&a.alignments())?;
        let alignments = read_alignments(&a.alignments(), &corpus)?;
        let table = build_table(&corpus, &alignments, &self.config.table.table_config())?;
        if table.is_empty() {
            log::warn!("phrase table is empty; consider lowering table.min_count");
        }
        table.save(&a.table())?;
        t.output("phrase_table.txt", table.len());
        Ok(PipelineConfig::section_text(&self.config.table))
    }

    fn embed(&self, t: &mut Tracker) -> Result<String> {
        let corpus = self.load_corpus(t)?;
        let mut embedder = self.load_embedder(t)?;
        let sentences: Vec<&Vec<String>> = corpus
            .pairs()
            .iter()
            .flat_map(|p| [&p.x.tokens, &p.y.tokens])
            .collect();
        let e = &self.config.embed;
        let sample: Vec<Vec<String>> = sample_indices(sentences.len(), e.sample_size, e.seed)
            .into_iter()
            .map(|i| sentences[i].clone())
            .collect();
        let solver = ComponentSolver {
            seed: e.seed,
            ..ComponentSolver::default()
        };
        embedder.fit(&sample, &solver)?;
        let u = embedder.component().expect("fitted");
        save_component(&self.artifacts().component(), u)?;
        t.output("component.txt", u.len());
        Ok(PipelineConfig::section_text(&self.config.embed))
    }

    fn score(&self, t: &mut Tracker) -> Result<String> {
        let a = self.artifacts();
        let corpus = self.load_corpus(t)?;
        require(&a.table(), "phrase table", Stage::Table)?;
        require(&a.component(), "fitted embedder", Stage::Embed)?;
        t.input(&a.table())?;
        t.input(&a.component())?;
        let table = PhraseTable::load(&a.table())?;
        let mut embedder = self.load_embedder(t)?;
        embedder.set_component(load_component(&a.component())?)?;
        let scorer = Scorer::new(&table, embedder);
        let (records, cal) = scorer.score_corpus(&corpus)?;
        write_scores(&a.scores(), &records, &cal)?;
        save_calibration(&a.calibration(), &cal)?;
        t.output("scores.tsv", records.len());
        Ok(format!(
            "{}{}",
            PipelineConfig::section_text(&self.config.table),
            PipelineConfig::section_text(&self.config.embed)
        ))
    }

    /// Pair scores for a ranking method; entropy methods read the corpus.
    fn ranking(&self, method: Method, corpus: &Corpus, t: &mut Tracker) -> Result<Vec<(u64, f64)>> {
        match method {
            Method::EntropySrc => Ok(entropy_scores(corpus, Side::Src).pair_scores(corpus)),
            Method::EntropyTrg => Ok(entropy_scores(corpus, Side::Trg).pair_scores(corpus)),
            m => {
                let path = self.artifacts().scores();
                require(&path, "scores", Stage::Score)?;
                t.input(&path)?;
                method_scores(&read_scores(&path)?.0, m)
            }
        }
    }

    fn filter(&self, t: &mut Tracker) -> Result<String> {
        let spec = self.config.filter_spec()?;
        let corpus = self.load_corpus(t)?;
        let scores = self.ranking(spec.method, &corpus, t)?;
        let sel = rank_and_select(&scores, &spec)?;
        let a = self.artifacts();
        write_filtered(&corpus, &sel.kept, &a.filtered(&spec))?;
        write_filter_report(&a.filter_report(&spec), &spec, &sel)?;
        t.output(&format!("filtered/{}.tsv", filter_tag(&spec)), sel.kept.len());
        Ok(PipelineConfig::section_text(&self.config.filter))
    }

    fn evaluate(&self, t: &mut Tracker) -> Result<String> {
        let a = self.artifacts();
        let dir = a.eval_dir();
        let corpus = self.load_corpus(t)?;
        require(&a.scores(), "scores", Stage::Score)?;
        t.input(&a.scores())?;
        let (records, _) = read_scores(&a.scores())?;

        let columns: [(&str, Vec<f64>); 3] = [
            ("s_frame", records.iter().map(|r| r.s_frame).collect()),
            ("s_content", records.iter().map(|r| r.s_content).collect()),
            ("s_ours", records.iter().map(|r| r.s_ours).collect()),
        ];
        for (name, values) in &columns {
            let range = if *name == "s_content" {
                (0.0, 1.0)
            } else {
                let max = values.iter().cloned().fold(0.0, f64::max);
                (0.0, if max > 0.0 { max } else { 1.0 })
            };
            let h = histogram(values, self.config.eval.histogram_bins, range)?;
            let csv = h.to_csv();
            write_atomic(&dir.join(format!("histogram_{name}.csv")), |w| w.write_all(csv.as_bytes()))?;
            t.output(&format!("eval/histogram_{name}.csv"), h.bins.len());
        }

        if let Some(path) = &self.config.paths.ratings {
            t.input(path)?;
            let human = HumanRatingSet::load(path)?;
            let mut csv = String::from("method,n,spearman_rho,p_value\n");
            let methods = [
                Method::Frame,
                Method::Content,
                Method::Ours,
                Method::EntropySrc,
                Method::EntropyTrg,
            ];
            for m in methods {
                let scores = match m {
                    Method::EntropySrc | Method::EntropyTrg => self.ranking(m, &corpus, t)?,
                    _ => method_scores(&records, m)?,
                };
                match spearman(&human, &scores) {
                    Ok(r) => {
                        let _ = writeln!(csv, "{m},{},{:.6},{:e}", r.n, r.spearman_rho, r.p_value);
                    }
                    Err(e) => {
                        log::warn!("correlation for {m}: {e}");
                        let _ = writeln!(csv, "{m},,,");
                    }
                }
            }
            write_atomic(&dir.join("correlation.csv"), |w| w.write_all(csv.as_bytes()))?;
            t.output("eval/correlation.csv", methods.len());
        }

        // response diversity for the whole corpus and both sides of the cut
        let spec = self.config.filter_spec()?;
        let scores = self.ranking(spec.method, &corpus, t)?;
        let kept = rank_and_select(&scores, &spec)?.kept;
        let mut csv = format!("{}\n", DiversityReport::CSV_HEADER);
        let groups: [(&str, Box<dyn Fn(u64) -> bool>); 3] = [
            ("all", Box::new(|_| true)),
            ("kept", Box::new(|id| kept.contains(&id))),
            ("removed", Box::new(|id| !kept.contains(&id))),
        ];
        let mut rows = 0;
        for (label, keep) in &groups {
            let ys: Vec<&Vec<String>> = corpus
                .pairs()
                .iter()
                .filter(|p| keep(p.id))
                .map(|p| &p.y.tokens)
                .collect();
            if ys.is_empty() {
                continue;
            }
            let d = diversity_stats(&ys)?;
            let _ = writeln!(csv, "{}", d.to_csv_row(label));
            rows += 1;
        }
        write_atomic(&dir.join("diversity.csv"), |w| w.write_all(csv.as_bytes()))?;
        t.output("eval/diversity.csv", rows);
        Ok(format!(
            "{}{}",
            PipelineConfig::section_text(&self.config.eval),
            PipelineConfig::section_text(&self.config.filter)
        ))
    }
}

/// Ids present in a pairs file, for quick set comparisons.
pub fn pair_ids(path: &Path) -> Result<BTreeSet<u64>> {
    Ok(read_pairs(path, &PunctTokenizer)?
        .pairs()
        .iter()
        .map(|p| p.id)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn toy() -> (tempfile::TempDir, PipelineConfig) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            planted: 150,
            shuffled: 150,
            dim: 10,
            ..SynthConfig::default()
        };
        generate(&cfg).write(dir.path(), 1).unwrap();
        let mut c = PipelineConfig::parse(
            "[paths]\nratings = \"ratings.tsv\"\n[table]\nmin_count = 3\n[filter]\nkeep_ratio = 0.5\n",
        )
        .unwrap();
        c.resolve_paths(dir.path());
        (dir, c)
    }

    #[test]
    fn score_before_table_is_reported() {
        let (_d, c) = toy();
        let p = Pipeline::new(c, Some(1)).unwrap();
        p.run(Stage::Ingest).unwrap();
        let err = p.run(Stage::Score).unwrap_err().to_string();
        assert!(err.starts_with("missing artifact: phrase table"), "{err}");
        let err = p.run(Stage::Table).unwrap_err().to_string();
        assert!(err.starts_with("missing artifact: alignments"), "{err}");
    }

    #[test]
    fn full_run_writes_reports_and_outputs() {
        let (_d, c) = toy();
        let p = Pipeline::new(c, Some(2)).unwrap();
        let reports = p.run_all().unwrap();
        assert_eq!(reports.len(), 7);
        let a = p.artifacts();
        for s in Stage::ALL {
            let text = std::fs::read_to_string(a.report(s)).unwrap();
            assert!(text.contains("config_digest="), "{text}");
            assert!(text.contains("wall_time_ms="));
        }
        let spec = p.config().filter_spec().unwrap();
        let kept = pair_ids(&a.filtered(&spec)).unwrap();
        let n = pair_ids(&a.pairs()).unwrap().len();
        assert_eq!(kept.len(), n.div_ceil(2));
        assert!(a.eval_dir().join("correlation.csv").exists());
        assert!(a.eval_dir().join("diversity.csv").exists());
        let report = std::fs::read_to_string(a.report(Stage::Score)).unwrap();
        assert!(report.contains("input.pairs.tsv="));
        assert!(report.contains(&format!("output.scores.tsv.rows={n}")));
    }
}
