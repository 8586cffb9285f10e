//! Raw subtitle text → tokenized, rule-filtered utterance pairs.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Splits text into tokens. Implementations must be deterministic.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Whitespace split, then leading and trailing punctuation characters are
/// peeled off into single-character tokens. Word-internal punctuation
/// ("don't", "3.5") is left alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct PunctTokenizer;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '¿' | '¡' | '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '–' | '—' | '。' | '、' | '！'
                | '？' | '「' | '」' | '『' | '』' | '（' | '）' | '・'
        )
}

impl Tokenizer for PunctTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let chars: Vec<char> = word.chars().collect();
            let mut lo = 0;
            let mut hi = chars.len();
            while lo < hi && is_punct(chars[lo]) {
                lo += 1;
            }
            while hi > lo && is_punct(chars[hi - 1]) {
                hi -= 1;
            }
            out.extend(chars[..lo].iter().map(|c| c.to_string()));
            if lo < hi {
                out.push(chars[lo..hi].iter().collect());
            }
            out.extend(chars[hi..].iter().map(|c| c.to_string()));
        }
        out
    }
}

/// Tokenizes with the default [`PunctTokenizer`].
pub fn tokenize(text: &str) -> Vec<String> {
    PunctTokenizer.tokenize(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(raw: impl Into<String>, tokenizer: &dyn Tokenizer) -> Self {
        let raw = raw.into();
        let tokens = tokenizer.tokenize(&raw);
        Utterance { raw, tokens }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtterancePair {
    pub id: u64,
    pub x: Utterance,
    pub y: Utterance,
    pub work_id: String,
    /// Input line number (0-based) of `x`.
    pub line_index: usize,
}

/// A raw consecutive-line pair before tokenization and filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub work_id: String,
    pub x_line: usize,
    pub y_line: usize,
    pub x_raw: String,
    pub y_raw: String,
}

/// One input line together with the work it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLine {
    pub work_id: String,
    pub line_index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub pairs: usize,
    pub x_tokens: usize,
    pub y_tokens: usize,
}

/// An immutable, rule-filtered set of utterance pairs with ids `1..=n` in
/// input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pairs: Vec<UtterancePair>,
}

impl Corpus {
    pub fn pairs(&self) -> &[UtterancePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            pairs: self.pairs.len(),
            x_tokens: self.pairs.iter().map(|p| p.x.token_count()).sum(),
            y_tokens: self.pairs.iter().map(|p| p.y.token_count()).sum(),
        }
    }

    /// Builds a corpus from already-numbered pairs (e.g. read back from a
    /// pairs file) without re-running the rule filters.
    pub fn from_pairs(pairs: Vec<UtterancePair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            if !seen.insert(p.id) {
                return Err(Error::InvalidInput(format!("duplicate pair id {}", p.id)));
            }
        }
        Ok(Corpus { pairs })
    }

    /// Converts back into candidates, e.g. to re-filter.
    pub fn to_candidates(&self) -> Vec<Candidate> {
        self.pairs
            .iter()
            .map(|p| Candidate {
                work_id: p.work_id.clone(),
                x_line: p.line_index,
                y_line: p.line_index + 1,
                x_raw: p.x.raw.clone(),
                y_raw: p.y.raw.clone(),
            })
            .collect()
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pairs={} x_tokens={} y_tokens={}",
            self.pairs, self.x_tokens, self.y_tokens
        )
    }
}

/// Emits `(L1,L2), (L2,L3), ...` within each work. Lines of a work must be
/// contiguous in the input; a change of `work_id` starts a new work.
pub fn pair_consecutive_lines(lines: &[SourceLine]) -> Vec<Candidate> {
    lines
        .windows(2)
        .filter(|w| w[0].work_id == w[1].work_id)
        .map(|w| Candidate {
            work_id: w[0].work_id.clone(),
            x_line: w[0].line_index,
            y_line: w[1].line_index,
            x_raw: w[0].text.clone(),
            y_raw: w[1].text.clone(),
        })
        .collect()
}

/// Length bounds and the optional language pre-filter applied at admission.
#[derive(Debug, Clone)]
pub struct RuleFilter {
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Per-line language labels (indexed by input line) and the label to keep.
    pub language: Option<(Vec<String>, String)>,
}

impl Default for RuleFilter {
    fn default() -> Self {
        RuleFilter {
            min_tokens: 3,
            max_tokens: 25,
            language: None,
        }
    }
}

impl RuleFilter {
    fn language_ok(&self, c: &Candidate) -> bool {
        match &self.language {
            None => true,
            Some((labels, keep)) => [c.x_line, c.y_line]
                .iter()
                .all(|&i| labels.get(i).is_some_and(|l| l == keep)),
        }
    }
}

/// Tokenizes candidates and keeps those with both sides within the length
/// bounds, dropping parrot-back pairs and repeated `(x, y)` raw pairs (first
/// occurrence wins). Ids are assigned `1..=n` in input order.
pub fn apply_rule_filters(
    candidates: &[Candidate],
    tokenizer: &dyn Tokenizer,
    rules: &RuleFilter,
) -> Corpus {
    let bounds = rules.min_tokens..=rules.max_tokens;
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut pairs = Vec::new();
    for c in candidates {
        if c.x_raw == c.y_raw || !rules.language_ok(c) {
            continue;
        }
        let x = Utterance::new(c.x_raw.as_str(), tokenizer);
        if !bounds.contains(&x.token_count()) {
            continue;
        }
        let y = Utterance::new(c.y_raw.as_str(), tokenizer);
        if !bounds.contains(&y.token_count()) {
            continue;
        }
        if !seen.insert((c.x_raw.as_str(), c.y_raw.as_str())) {
            continue;
        }
        pairs.push(UtterancePair {
            id: pairs.len() as u64 + 1,
            x,
            y,
            work_id: c.work_id.clone(),
            line_index: c.x_line,
        });
    }
    Corpus { pairs }
}

fn clean_line(s: &str) -> String {
    s.trim().replace('\t', " ")
}

/// Reads a corpus where works are separated by one or more blank lines.
/// Works are numbered from 1 in order of appearance.
pub fn read_blank_separated(path: &Path) -> Result<Vec<SourceLine>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut work = 1usize;
    let mut in_work = false;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = clean_line(&line);
        if text.is_empty() {
            if in_work {
                work += 1;
                in_work = false;
            }
            continue;
        }
        in_work = true;
        out.push(SourceLine {
            work_id: work.to_string(),
            line_index: i,
            text,
        });
    }
    Ok(out)
}

/// Reads a corpus with a work manifest of `work_id<TAB>start_line<TAB>end_line`
/// rows (1-based, inclusive). Lines outside every range are ignored; blank
/// lines inside a range are skipped but do not split the work.
pub fn read_with_manifest(path: &Path, manifest: &Path) -> Result<Vec<SourceLine>> {
    let text = crate::util::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mtext = crate::util::read_to_string(manifest)?;
    let mut out = Vec::new();
    for (n, row) in mtext.lines().enumerate() {
        if row.trim().is_empty() || row.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        let bad = || Error::parse(manifest, n + 1, "expected work_id<TAB>start_line<TAB>end_line");
        if fields.len() != 3 {
            return Err(bad());
        }
        let start: usize = fields[1].trim().parse().map_err(|_| bad())?;
        let end: usize = fields[2].trim().parse().map_err(|_| bad())?;
        if start == 0 || end < start || end > lines.len() {
            return Err(Error::parse(
                manifest,
                n + 1,
                format!("line range {start}-{end} outside 1..={}", lines.len()),
            ));
        }
        for i in (start - 1)..end {
            let t = clean_line(lines[i]);
            if !t.is_empty() {
                out.push(SourceLine {
                    work_id: fields[0].to_string(),
                    line_index: i,
                    text: t,
                });
            }
        }
    }
    Ok(out)
}

/// Reads one language label per input line.
pub fn read_language_labels(path: &Path) -> Result<Vec<String>> {
    Ok(crate::util::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .collect())
}

/// Writes `id<TAB>x_raw<TAB>y_raw` rows.
pub fn write_pairs<'a, I>(path: &Path, pairs: I) -> Result<()>
where
    I: IntoIterator<Item = &'a UtterancePair>,
{
    write_atomic(path, |w| {
        for p in pairs {
            writeln!(w, "{}\t{}\t{}", p.id, p.x.raw, p.y.raw)?;
        }
        Ok(())
    })
}

/// Reads a pairs file, re-tokenizing each side.
pub fn read_pairs(path: &Path, tokenizer: &dyn Tokenizer) -> Result<Corpus> {
    let text = crate::util::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (n, row) in text.lines().enumerate() {
        if row.is_empty() {
            continue;
        }
        let mut it = row.splitn(3, '\t');
        let (Some(id), Some(x), Some(y)) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(path, n + 1, "expected id<TAB>x<TAB>y"));
        };
        let id: u64 = id
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("bad pair id {id:?}")))?;
        pairs.push(UtterancePair {
            id,
            x: Utterance::new(x, tokenizer),
            y: Utterance::new(y, tokenizer),
            work_id: String::new(),
            line_index: n,
        });
    }
    Corpus::from_pairs(pairs)
}
