//! Pair scoring: connectivity (`s_frame`), content relatedness (`s_content`),
//! their mean-normalizing calibration, and the combined `s_ours`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::corpus::{Corpus, UtterancePair};
use crate::error::{Error, Result};
use crate::phrase_table::{fold, PhrasePair, PhraseTable};
use crate::sentvec::{content_cosine, SentenceEmbedder};
use crate::util::{write_atomic, KahanSum};

/// All `(f, e)` with `f` an n-gram of `x` (`1 ≤ n ≤ max_f_len`) and `e` an
/// m-gram of `y` (`1 ≤ m ≤ max_e_len`), as a set of token sequences.
pub fn enumerate_phi<S: AsRef<str>>(
    x: &[S],
    y: &[S],
    max_f_len: usize,
    max_e_len: usize,
) -> BTreeSet<PhrasePair> {
    let grams = |toks: &[S], max: usize| -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        for start in 0..toks.len() {
            for end in start + 1..=toks.len().min(start + max) {
                out.insert(toks[start..end].iter().map(|t| t.as_ref().to_string()).collect());
            }
        }
        out
    };
    let fs = grams(x, max_f_len);
    let es = grams(y, max_e_len);
    let mut out = BTreeSet::new();
    for f in &fs {
        for e in &es {
            out.insert(PhrasePair {
                f: f.clone(),
                e: e.clone(),
            });
        }
    }
    out
}

/// Connectivity by direct enumeration of `φ(x, y) ∩ P`:
/// `Σ max(nPMI(f,e), 0) · |f|/|x| · |e|/|y|`.
///
/// This is the definitional form; [`PhraseIndex::s_frame`] computes the
/// same quantity without materializing `φ`.
pub fn s_frame<S: AsRef<str>>(x: &[S], y: &[S], table: &PhraseTable) -> f64 {
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    let norm = |t: &[S]| -> Vec<String> {
        t.iter()
            .map(|s| fold(s.as_ref(), table.lowercase()).into_owned())
            .collect()
    };
    let (xn, yn) = (norm(x), norm(y));
    let (lx, ly) = (x.len() as f64, y.len() as f64);
    let max = table.max_len().max(1);
    enumerate_phi(&xn, &yn, max, max)
        .iter()
        .filter_map(|p| table.get(p).map(|e| (p, e)))
        .map(|(p, e)| e.npmi.max(0.0) * (p.f.len() as f64 / lx) * (p.e.len() as f64 / ly))
        .sum()
}

const UNKNOWN: u32 = u32::MAX;

fn pack(f: u32, e: u32) -> u64 {
    ((f as u64) << 32) | e as u64
}

/// Integer-keyed view of a [`PhraseTable`] for fast lookups of n-grams.
#[derive(Debug, Clone, Default)]
pub struct PhraseIndex {
    tokens: FxHashMap<String, u32>,
    f_phrases: FxHashMap<Box<[u32]>, u32>,
    e_phrases: FxHashMap<Box<[u32]>, u32>,
    f_len: Vec<usize>,
    e_len: Vec<usize>,
    /// Positive nPMI values only; non-positive entries contribute nothing.
    weights: FxHashMap<u64, f64>,
    max_f_len: usize,
    max_e_len: usize,
    lowercase: bool,
}

impl PhraseIndex {
    pub fn new(table: &PhraseTable) -> Self {
        let mut ix = PhraseIndex {
            lowercase: table.lowercase(),
            ..Default::default()
        };
        for (p, entry) in table.entries() {
            if entry.npmi <= 0.0 {
                continue;
            }
            let f = ix.intern_phrase(&p.f, true);
            let e = ix.intern_phrase(&p.e, false);
            ix.weights.insert(pack(f, e), entry.npmi);
        }
        ix
    }

    fn intern_phrase(&mut self, words: &[String], f_side: bool) -> u32 {
        let ids: Box<[u32]> = words
            .iter()
            .map(|w| {
                let n = self.tokens.len() as u32;
                *self.tokens.entry(w.clone()).or_insert(n)
            })
            .collect();
        let (map, lens, max) = if f_side {
            (&mut self.f_phrases, &mut self.f_len, &mut self.max_f_len)
        } else {
            (&mut self.e_phrases, &mut self.e_len, &mut self.max_e_len)
        };
        *max = (*max).max(words.len());
        let n = map.len() as u32;
        *map.entry(ids).or_insert_with(|| {
            lens.push(words.len());
            n
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn encode<S: AsRef<str>>(&self, toks: &[S]) -> Vec<u32> {
        toks.iter()
            .map(|t| {
                let t = fold(t.as_ref(), self.lowercase);
                self.tokens.get(t.as_ref()).copied().unwrap_or(UNKNOWN)
            })
            .collect()
    }

    fn matched(
        ids: &[u32],
        max: usize,
        map: &FxHashMap<Box<[u32]>, u32>,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        for start in 0..ids.len() {
            for end in start + 1..=ids.len().min(start + max) {
                if ids[end - 1] == UNKNOWN {
                    break;
                }
                if let Some(&p) = map.get(&ids[start..end]) {
                    out.push(p);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Connectivity score; equal to [`s_frame`] on the source table.
    pub fn s_frame<S: AsRef<str>>(&self, x: &[S], y: &[S]) -> f64 {
        if x.is_empty() || y.is_empty() || self.weights.is_empty() {
            return 0.0;
        }
        let mut fs = Vec::new();
        let mut es = Vec::new();
        Self::matched(&self.encode(x), self.max_f_len, &self.f_phrases, &mut fs);
        if fs.is_empty() {
            return 0.0;
        }
        Self::matched(&self.encode(y), self.max_e_len, &self.e_phrases, &mut es);
        let (lx, ly) = (x.len() as f64, y.len() as f64);
        let mut total = 0.0;
        for &f in &fs {
            let wf = self.f_len[f as usize] as f64 / lx;
            for &e in &es {
                if let Some(&v) = self.weights.get(&pack(f, e)) {
                    total += v * wf * (self.e_len[e as usize] as f64 / ly);
                }
            }
        }
        total
    }
}

/// Content relatedness: `max(cos(v(x), v(y)), 0)`.
pub fn s_content<S: AsRef<str>>(x: &[S], y: &[S], embedder: &SentenceEmbedder) -> f64 {
    let vx = embedder.embed(x);
    let vy = embedder.embed(y);
    content_cosine(&vx, &vy).map_or(0.0, |c| c.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub pair_id: u64,
    pub s_frame: f64,
    pub s_content: f64,
    pub s_ours: f64,
}

impl ScoreRecord {
    /// `(α·s_frame, β·s_content)`, the two addends of `s_ours`.
    pub fn normalized_components(&self, cal: &Calibration) -> (f64, f64) {
        (cal.alpha * self.s_frame, cal.beta * self.s_content)
    }

    /// Renders `α·s_frame + β·s_content = s_ours` with two decimals.
    pub fn decomposition(&self, cal: &Calibration) -> String {
        let (f, c) = self.normalized_components(cal);
        format!("{f:.2} + {c:.2} = {:.2}", f + c)
    }
}

/// Inverse-mean weights over the calibration set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
}

/// `α = 1 / mean(s_frame)`, `β = 1 / mean(s_content)`.
pub fn calibrate(records: &[(f64, f64)]) -> Result<Calibration> {
    if records.is_empty() {
        return Err(Error::InvalidInput("cannot calibrate on an empty score set".into()));
    }
    let n = records.len() as f64;
    let frame: KahanSum = records.iter().map(|r| r.0).collect();
    let content: KahanSum = records.iter().map(|r| r.1).collect();
    let (mf, mc) = (frame.value() / n, content.value() / n);
    if !(mf > 0.0) {
        return Err(Error::DegenerateCalibration(
            "mean s_frame is zero; the corpus is too small or the phrase table is empty \
             (try a lower table.min_count)"
                .into(),
        ));
    }
    if !(mc > 0.0) {
        return Err(Error::DegenerateCalibration(
            "mean s_content is zero; no pair has positively related sentence vectors \
             (check the word vector and frequency files)"
                .into(),
        ));
    }
    Ok(Calibration {
        alpha: 1.0 / mf,
        beta: 1.0 / mc,
        n: records.len(),
    })
}

/// `α·s_frame + β·s_content`.
pub fn s_ours(s_frame: f64, s_content: f64, cal: &Calibration) -> f64 {
    cal.alpha * s_frame + cal.beta * s_content
}

/// Immutable bundle of everything needed to score pairs.
#[derive(Debug, Clone)]
pub struct Scorer {
    index: PhraseIndex,
    embedder: SentenceEmbedder,
}

impl Scorer {
    pub fn new(table: &PhraseTable, embedder: SentenceEmbedder) -> Self {
        Scorer {
            index: PhraseIndex::new(table),
            embedder,
        }
    }

    pub fn index(&self) -> &PhraseIndex {
        &self.index
    }

    pub fn embedder(&self) -> &SentenceEmbedder {
        &self.embedder
    }

    /// `(s_frame, s_content)` for one pair.
    pub fn components(&self, pair: &UtterancePair) -> (f64, f64) {
        (
            self.index.s_frame(&pair.x.tokens, &pair.y.tokens),
            s_content(&pair.x.tokens, &pair.y.tokens, &self.embedder),
        )
    }

    /// Component scores for every pair, in corpus order.
    pub fn components_for(&self, corpus: &Corpus) -> Vec<(f64, f64)> {
        corpus.pairs().par_iter().map(|p| self.components(p)).collect()
    }

    /// Scores and calibrates on the same set.
    pub fn score_corpus(&self, corpus: &Corpus) -> Result<(Vec<ScoreRecord>, Calibration)> {
        let comps = self.components_for(corpus);
        let cal = calibrate(&comps)?;
        Ok((apply_calibration(corpus, &comps, &cal), cal))
    }
}

pub fn apply_calibration(corpus: &Corpus, comps: &[(f64, f64)], cal: &Calibration) -> Vec<ScoreRecord> {
    corpus
        .pairs()
        .iter()
        .zip(comps)
        .map(|(p, &(f, c))| ScoreRecord {
            pair_id: p.id,
            s_frame: f,
            s_content: c,
            s_ours: s_ours(f, c, cal),
        })
        .collect()
}

/// Writes the calibration header and `pair_id<TAB>s_frame<TAB>s_content<TAB>s_ours`
/// rows at 6 decimals.
pub fn write_scores(path: &Path, records: &[ScoreRecord], cal: &Calibration) -> Result<()> {
    let mut s = String::with_capacity(records.len() * 40);
    let _ = writeln!(s, "# alpha={:?} beta={:?} n={}", cal.alpha, cal.beta, cal.n);
    for r in records {
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            r.pair_id, r.s_frame, r.s_content, r.s_ours
        );
    }
    write_atomic(path, |w| w.write_all(s.as_bytes()))
}

pub fn read_scores(path: &Path) -> Result<(Vec<ScoreRecord>, Option<Calibration>)> {
    let text = crate::util::read_to_string(path)?;
    let mut records = Vec::new();
    let mut cal = None;
    for (n, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix('#') {
            cal = parse_calibration(h).ok();
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::parse(path, n + 1, "expected pair_id<TAB>s_frame<TAB>s_content<TAB>s_ours");
        if f.len() != 4 {
            return Err(bad());
        }
        records.push(ScoreRecord {
            pair_id: f[0].parse().map_err(|_| bad())?,
            s_frame: f[1].parse().map_err(|_| bad())?,
            s_content: f[2].parse().map_err(|_| bad())?,
            s_ours: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok((records, cal))
}

fn parse_calibration(text: &str) -> Result<Calibration> {
    let mut alpha = None;
    let mut beta = None;
    let mut n = None;
    for kv in text.split_whitespace() {
        match kv.split_once('=') {
            Some(("alpha", v)) => alpha = v.parse().ok(),
            Some(("beta", v)) => beta = v.parse().ok(),
            Some(("n", v)) => n = v.parse().ok(),
            _ => {}
        }
    }
    match (alpha, beta, n) {
        (Some(alpha), Some(beta), Some(n)) => Ok(Calibration { alpha, beta, n }),
        _ => Err(Error::InvalidInput(format!("bad calibration line {text:?}"))),
    }
}

pub fn save_calibration(path: &Path, cal: &Calibration) -> Result<()> {
    let s = format!("alpha={:?} beta={:?} n={}\n", cal.alpha, cal.beta, cal.n);
    write_atomic(path, |w| w.write_all(s.as_bytes()))
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    parse_calibration(&crate::util::read_to_string(path)?)
        .map_err(|e| Error::parse(path, 1, e.to_string()))
}
