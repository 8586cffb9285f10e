//! Key phrase pair table: extracted block counts and their nPMI.

mod extract;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

pub use extract::{extract_modified, extract_reference, Block};

use crate::aligner::AlignmentMatrix;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::util::{write_atomic, SHARD_SIZE};

const TABLE_MAGIC: &str = "# dialclean-phrase-table";

/// Normalized PMI with probabilities `count / n`:
/// `ln(p(f,e) / (p(f) p(e))) / -ln p(f,e)`.
///
/// Returns exactly 1 when `count_fe = count_f = count_e`, including the
/// `p(f,e) = 1` limit.
pub fn npmi(count_fe: u64, count_f: u64, count_e: u64, n: u64) -> Result<f64> {
    if count_fe == 0 || count_fe > count_f.min(count_e) || count_f.max(count_e) > n {
        return Err(Error::InvalidCounts(format!(
            "need 0 < count_fe <= min(count_f, count_e) <= N, got ({count_fe}, {count_f}, {count_e}, {n})"
        )));
    }
    if count_fe == count_f && count_fe == count_e {
        return Ok(1.0);
    }
    let pmi = ln_ratio(count_fe as u128 * n as u128, count_f as u128 * count_e as u128);
    let h = ln_ratio(n as u128, count_fe as u128);
    Ok((pmi / h).clamp(-1.0, 1.0))
}

/// `ln(a / b)` without cancellation near `a ≈ b`.
fn ln_ratio(a: u128, b: u128) -> f64 {
    if a == b {
        return 0.0;
    }
    let (af, bf) = (a as f64, b as f64);
    if a <= 2 * b && 2 * a >= b {
        let d = a as i128 - b as i128;
        (d as f64 / bf).ln_1p()
    } else {
        (af / bf).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhrasePair {
    pub f: Vec<String>,
    pub e: Vec<String>,
}

impl PhrasePair {
    pub fn new<S: AsRef<str>>(f: &[S], e: &[S]) -> Self {
        PhrasePair {
            f: f.iter().map(|s| s.as_ref().to_string()).collect(),
            e: e.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    /// Builds a pair from space-separated phrases.
    pub fn parse(f: &str, e: &str) -> Self {
        PhrasePair {
            f: f.split_whitespace().map(str::to_string).collect(),
            e: e.split_whitespace().map(str::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub count: u64,
    pub npmi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub min_count: u64,
    pub max_len: usize,
    pub lowercase: bool,
    /// Also require that no link from outside an `x` span lands in its `y` span.
    pub strict: bool,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            min_count: 200,
            max_len: 4,
            lowercase: false,
            strict: false,
        }
    }
}

pub(crate) fn fold(token: &str, lowercase: bool) -> Cow<'_, str> {
    if lowercase {
        Cow::Owned(token.to_lowercase())
    } else {
        Cow::Borrowed(token)
    }
}

/// Unpruned instance counts over the extracted block stream.
#[derive(Debug, Clone, Default)]
pub struct PhraseCounts {
    pub pairs: FxHashMap<(String, String), u64>,
    pub f: FxHashMap<String, u64>,
    pub e: FxHashMap<String, u64>,
    pub total: u64,
}

impl PhraseCounts {
    fn add(&mut self, f: String, e: String, c: u64) {
        *self.f.entry(f.clone()).or_default() += c;
        *self.e.entry(e.clone()).or_default() += c;
        *self.pairs.entry((f, e)).or_default() += c;
        self.total += c;
    }

    fn merge(&mut self, other: PhraseCounts) {
        for ((f, e), c) in other.pairs {
            self.add(f, e, c);
        }
    }
}

/// Counts every extracted block of every pair, one instance per block.
pub fn count_phrases(
    corpus: &Corpus,
    alignments: &[AlignmentMatrix],
    config: &TableConfig,
) -> Result<PhraseCounts> {
    if corpus.len() != alignments.len() {
        return Err(Error::Dimension(format!(
            "{} pairs but {} alignments",
            corpus.len(),
            alignments.len()
        )));
    }
    for (p, a) in corpus.pairs().iter().zip(alignments) {
        if (p.x.token_count(), p.y.token_count()) != (a.x_len(), a.y_len()) {
            return Err(Error::Dimension(format!(
                "pair {} is {}x{} but its alignment is {}x{}",
                p.id,
                p.x.token_count(),
                p.y.token_count(),
                a.x_len(),
                a.y_len()
            )));
        }
    }
    let join = |toks: &[String]| -> String {
        let parts: Vec<Cow<'_, str>> = toks.iter().map(|t| fold(t, config.lowercase)).collect();
        parts.join(" ")
    };
    let shards: Vec<PhraseCounts> = corpus
        .pairs()
        .par_chunks(SHARD_SIZE)
        .zip(alignments.par_chunks(SHARD_SIZE))
        .map(|(pairs, aligns)| {
            let mut c = PhraseCounts::default();
            for (p, a) in pairs.iter().zip(aligns) {
                for b in extract_modified(a, config.max_len, config.strict) {
                    let f = join(&p.x.tokens[b.f_start..=b.f_end]);
                    let e = join(&p.y.tokens[b.e_start..=b.e_end]);
                    c.add(f, e, 1);
                }
            }
            c
        })
        .collect();
    let mut all = PhraseCounts::default();
    for s in shards {
        all.merge(s);
    }
    Ok(all)
}

/// The key phrase pair set with its co-occurrence statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhraseTable {
    entries: BTreeMap<PhrasePair, TableEntry>,
    /// Instances extracted before pruning.
    total: u64,
    min_count: u64,
    max_len: usize,
    lowercase: bool,
}

impl PhraseTable {
    /// Prunes entries below `min_count` or with identical sides and computes
    /// nPMI for the survivors.
    pub fn from_counts(counts: &PhraseCounts, config: &TableConfig) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for ((f, e), &c) in &counts.pairs {
            if c < config.min_count || f == e {
                continue;
            }
            let value = npmi(c, counts.f[f], counts.e[e], counts.total)?;
            entries.insert(PhrasePair::parse(f, e), TableEntry { count: c, npmi: value });
        }
        Ok(PhraseTable {
            entries,
            total: counts.total,
            min_count: config.min_count,
            max_len: config.max_len,
            lowercase: config.lowercase,
        })
    }

    /// Assembles a table from explicit entries (for tests and external tables).
    pub fn from_entries<I>(entries: I, total: u64, config: &TableConfig) -> Self
    where
        I: IntoIterator<Item = (PhrasePair, TableEntry)>,
    {
        PhraseTable {
            entries: entries.into_iter().collect(),
            total,
            min_count: config.min_count,
            max_len: config.max_len,
            lowercase: config.lowercase,
        }
    }

    pub fn entries(&self) -> &BTreeMap<PhrasePair, TableEntry> {
        &self.entries
    }

    pub fn get(&self, pair: &PhrasePair) -> Option<&TableEntry> {
        self.entries.get(pair)
    }

    pub fn insert(&mut self, pair: PhrasePair, entry: TableEntry) {
        self.entries.insert(pair, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    /// Writes a header line and `f ||| e ||| count ||| npmi` rows.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{TABLE_MAGIC} N={} min_count={} max_len={} lowercase={}",
            self.total, self.min_count, self.max_len, self.lowercase
        );
        for (p, e) in &self.entries {
            let _ = writeln!(
                s,
                "{} ||| {} ||| {} ||| {}",
                p.f.join(" "),
                p.e.join(" "),
                e.count,
                e.npmi
            );
        }
        write_atomic(path, |w| w.write_all(s.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix(TABLE_MAGIC))
            .ok_or_else(|| Error::parse(path, 1, "missing phrase table header"))?;
        let mut table = PhraseTable::default();
        for kv in header.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("bad header field {kv:?}")))?;
            let bad = || Error::parse(path, 1, format!("bad header value {kv:?}"));
            match k {
                "N" => table.total = v.parse().map_err(|_| bad())?,
                "min_count" => table.min_count = v.parse().map_err(|_| bad())?,
                "max_len" => table.max_len = v.parse().map_err(|_| bad())?,
                "lowercase" => table.lowercase = v.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(" ||| ").collect();
            let bad = |what: &str| Error::parse(path, n + 2, what.to_string());
            if fields.len() != 4 {
                return Err(bad("expected `f ||| e ||| count ||| npmi`"));
            }
            let count = fields[2].parse().map_err(|_| bad("bad count"))?;
            let value: f64 = fields[3].parse().map_err(|_| bad("bad npmi"))?;
            if !(-1.0..=1.0).contains(&value) {
                return Err(bad("npmi outside [-1, 1]"));
            }
            let pair = PhrasePair::parse(fields[0], fields[1]);
            if pair.f.is_empty() || pair.e.is_empty() {
                return Err(bad("empty phrase"));
            }
            table.entries.insert(pair, TableEntry { count, npmi: value });
        }
        Ok(table)
    }
}

/// Extracts, counts and prunes in one go.
pub fn build_table(
    corpus: &Corpus,
    alignments: &[AlignmentMatrix],
    config: &TableConfig,
) -> Result<PhraseTable> {
    let counts = count_phrases(corpus, alignments, config)?;
    PhraseTable::from_counts(&counts, config)
}
