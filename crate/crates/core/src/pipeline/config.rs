use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aligner::{AlignConfig, Heuristic, Prior};
use crate::error::{Error, Result};
use crate::filter::{FilterSpec, Keep, Method};
use crate::phrase_table::TableConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// Works separated by blank lines.
    #[default]
    BlankSeparated,
    /// Works given by a `work_id<TAB>start<TAB>end` manifest.
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub manifest: Option<PathBuf>,
    /// Per-line language labels for the optional language pre-filter.
    pub language_labels: Option<PathBuf>,
    pub vectors: PathBuf,
    pub frequencies: PathBuf,
    pub artifacts: PathBuf,
    pub ratings: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus.txt".into(),
            manifest: None,
            language_labels: None,
            vectors: "vectors.vec".into(),
            frequencies: "freqs.tsv".into(),
            artifacts: "artifacts".into(),
            ratings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub format: CorpusFormat,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Label kept by the language pre-filter.
    pub language: Option<String>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            format: CorpusFormat::BlankSeparated,
            min_tokens: 3,
            max_tokens: 25,
            language: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub iterations: usize,
    pub null_prob: f64,
    pub tension: f64,
    pub prior: Prior,
    pub heuristic: Heuristic,
    pub lowercase: bool,
}

impl Default for AlignSection {
    fn default() -> Self {
        let d = AlignConfig::default();
        AlignSection {
            iterations: d.iterations,
            null_prob: d.null_prob,
            tension: d.tension,
            prior: d.prior,
            heuristic: Heuristic::GrowDiagFinalAnd,
            lowercase: d.lowercase,
        }
    }
}

impl AlignSection {
    pub fn model_config(&self) -> AlignConfig {
        AlignConfig {
            iterations: self.iterations,
            null_prob: self.null_prob,
            tension: self.tension,
            prior: self.prior,
            lowercase: self.lowercase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSection {
    pub min_count: u64,
    pub max_len: usize,
    pub lowercase: bool,
    pub strict: bool,
}

impl Default for TableSection {
    fn default() -> Self {
        let d = TableConfig::default();
        TableSection {
            min_count: d.min_count,
            max_len: d.max_len,
            lowercase: d.lowercase,
            strict: d.strict,
        }
    }
}

impl TableSection {
    pub fn table_config(&self) -> TableConfig {
        TableConfig {
            min_count: self.min_count,
            max_len: self.max_len,
            lowercase: self.lowercase,
            strict: self.strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub a: f64,
    /// Sentences sampled for the common component; 0 uses all.
    pub sample_size: usize,
    pub seed: u64,
    pub lowercase: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            a: 1e-3,
            sample_size: 30_000,
            seed: 0x5EED,
            lowercase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub method: String,
    pub keep_ratio: Option<f64>,
    pub keep_count: Option<usize>,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            method: "ours".into(),
            keep_ratio: None,
            keep_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub histogram_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { histogram_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub corpus: CorpusSection,
    pub align: AlignSection,
    pub table: TableSection,
    pub embed: EmbedSection,
    pub filter: FilterSection,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&crate::util::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        fix(&mut p.corpus);
        fix(&mut p.vectors);
        fix(&mut p.frequencies);
        fix(&mut p.artifacts);
        for opt in [&mut p.manifest, &mut p.language_labels, &mut p.ratings] {
            if let Some(q) = opt {
                fix(q);
            }
        }
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        let method: Method = self.filter.method.parse()?;
        let keep = match (self.filter.keep_ratio, self.filter.keep_count) {
            (_, Some(k)) => Keep::Count(k),
            (Some(r), None) => Keep::Ratio(r),
            (None, None) => Keep::Ratio(0.9),
        };
        FilterSpec::new(method, keep)
    }

    /// Canonical text used for config digests.
    pub fn section_text<T: Serialize>(section: &T) -> String {
        toml::to_string(section).unwrap_or_default()
    }
}

/// Checks ranges and input paths, reporting every violation at once.
/// Defaults are already in place from deserialization.
pub fn validate_config(config: PipelineConfig) -> Result<PipelineConfig> {
    let mut errs = Vec::new();
    let c = &config;
    if !(0.0..1.0).contains(&c.align.null_prob) {
        errs.push("null_prob out of [0,1)".to_string());
    }
    if c.align.iterations == 0 {
        errs.push("align.iterations must be >= 1".into());
    }
    if !(c.align.tension >= 0.0 && c.align.tension.is_finite()) {
        errs.push("align.tension must be a non-negative number".into());
    }
    if c.table.min_count == 0 {
        errs.push("table.min_count must be >= 1".into());
    }
    if c.table.max_len == 0 {
        errs.push("table.max_len must be >= 1".into());
    }
    if !(c.embed.a > 0.0 && c.embed.a.is_finite()) {
        errs.push("embed.a must be > 0".into());
    }
    if c.corpus.min_tokens == 0 || c.corpus.min_tokens > c.corpus.max_tokens {
        errs.push("corpus token bounds must satisfy 1 <= min_tokens <= max_tokens".into());
    }
    if c.corpus.format == CorpusFormat::Manifest && c.paths.manifest.is_none() {
        errs.push("corpus.format = \"manifest\" requires paths.manifest".into());
    }
    if c.corpus.language.is_some() != c.paths.language_labels.is_some() {
        errs.push("corpus.language and paths.language_labels must be given together".into());
    }
    if c.filter.keep_ratio.is_some() && c.filter.keep_count.is_some() {
        errs.push("give only one of filter.keep_ratio and filter.keep_count".into());
    }
    if let Err(e) = c.filter_spec() {
        errs.push(e.to_string());
    }
    if c.eval.histogram_bins == 0 {
        errs.push("eval.histogram_bins must be >= 1".into());
    }
    let inputs = [
        ("paths.corpus", Some(&c.paths.corpus)),
        ("paths.vectors", Some(&c.paths.vectors)),
        ("paths.frequencies", Some(&c.paths.frequencies)),
        ("paths.manifest", c.paths.manifest.as_ref()),
        ("paths.language_labels", c.paths.language_labels.as_ref()),
        ("paths.ratings", c.paths.ratings.as_ref()),
    ];
    for (name, p) in inputs {
        if let Some(p) = p {
            if !p.is_file() {
                errs.push(format!("{name}: no such file {}", p.display()));
            }
        }
    }
    if errs.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_inputs(extra: &str) -> (tempfile::TempDir, Result<PipelineConfig>) {
        let dir = tempfile::tempdir().unwrap();
        for f in ["corpus.txt", "vectors.vec", "freqs.tsv"] {
            std::fs::write(dir.path().join(f), "").unwrap();
        }
        let path = dir.path().join("c.toml");
        std::fs::write(&path, extra).unwrap();
        let r = PipelineConfig::load(&path).and_then(validate_config);
        (dir, r)
    }

    #[test]
    fn defaults_fill_in() {
        let (_d, c) = with_inputs("");
        let c = c.unwrap();
        assert_eq!(c.table.min_count, 200);
        assert_eq!(c.align.null_prob, 0.5);
        assert_eq!(c.align.iterations, 5);
        assert_eq!(c.align.heuristic, Heuristic::GrowDiagFinalAnd);
        assert_eq!(c.embed.sample_size, 30_000);
        assert_eq!(c.embed.a, 1e-3);
    }

    #[test]
    fn null_prob_range() {
        let (_d, c) = with_inputs("[align]\nnull_prob = 1.5\n");
        assert!(c.unwrap_err().to_string().contains("null_prob out of [0,1)"));
    }

    #[test]
    fn errors_are_aggregated() {
        let (_d, c) = with_inputs(
            "[align]\nnull_prob = -0.1\niterations = 0\n[table]\nmin_count = 0\n[paths]\nratings = \"nope.tsv\"\n",
        );
        match c.unwrap_err() {
            Error::Config(v) => assert_eq!(v.len(), 4, "{v:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_keys_and_enums_rejected() {
        assert!(PipelineConfig::parse("[table]\nmin_cnt = 3\n").is_err());
        assert!(PipelineConfig::parse("[align]\nheuristic = \"union\"\n").is_err());
        let c = PipelineConfig::parse("[align]\nheuristic = \"grow-diag-final\"\nprior = \"uniform\"\n").unwrap();
        assert_eq!(c.align.heuristic, Heuristic::GrowDiagFinal);
        assert_eq!(c.align.prior, Prior::Uniform);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let (d, c) = with_inputs("[paths]\nartifacts = \"out\"\n");
        assert_eq!(c.unwrap().paths.artifacts, d.path().join("out"));
    }

    #[test]
    fn filter_spec_from_config() {
        let c = PipelineConfig::parse("[filter]\nmethod = \"entropy-src\"\nkeep_ratio = 0.5\n").unwrap();
        let s = c.filter_spec().unwrap();
        assert_eq!(s.method, Method::EntropySrc);
        assert_eq!(s.keep, Keep::Ratio(0.5));
    }
}
