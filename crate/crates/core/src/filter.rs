//! Ranking and selection of pairs by score, plus the source/target entropy
//! baseline.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rustc_hash::FxHashMap;

use crate::corpus::{write_pairs, Corpus};
use crate::error::{Error, Result};
use crate::scorer::ScoreRecord;
use crate::util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ours,
    Frame,
    Content,
    EntropySrc,
    EntropyTrg,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Frame => "frame",
            Method::Content => "content",
            Method::EntropySrc => "entropy-src",
            Method::EntropyTrg => "entropy-trg",
        }
    }

    pub fn is_entropy(self) -> bool {
        matches!(self, Method::EntropySrc | Method::EntropyTrg)
    }

    /// Low entropy is kept; for the other scores high is kept.
    pub fn default_direction(self) -> Direction {
        if self.is_entropy() {
            Direction::KeepBottom
        } else {
            Direction::KeepTop
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ours" | "s_ours" => Method::Ours,
            "frame" | "s_frame" => Method::Frame,
            "content" | "s_content" => Method::Content,
            "entropy-src" | "entropy_src" => Method::EntropySrc,
            "entropy-trg" | "entropy_trg" => Method::EntropyTrg,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown method {s:?} (expected ours, frame, content, entropy-src or entropy-trg)"
                )))
            }
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    KeepTop,
    KeepBottom,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::KeepTop => "keep-top",
            Direction::KeepBottom => "keep-bottom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Keep {
    Ratio(f64),
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub method: Method,
    pub keep: Keep,
    pub direction: Direction,
}

impl FilterSpec {
    pub fn new(method: Method, keep: Keep) -> Result<Self> {
        let spec = FilterSpec {
            method,
            keep,
            direction: method.default_direction(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.keep {
            Keep::Ratio(r) if !(r > 0.0 && r <= 1.0) => Err(Error::InvalidInput(format!(
                "keep_ratio {r} out of (0,1]"
            ))),
            Keep::Count(0) => Err(Error::InvalidInput("keep_count must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Number of pairs kept out of `n`.
    pub fn kept_of(&self, n: usize) -> usize {
        match self.keep {
            Keep::Ratio(r) => ceil_ratio(r, n),
            Keep::Count(k) => k.min(n),
        }
    }
}

/// `⌈ratio · n⌉`, treating products within rounding error of an integer as
/// that integer (so `0.1 · 30` keeps 3, not 4).
pub fn ceil_ratio(ratio: f64, n: usize) -> usize {
    let x = ratio * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (k as usize).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub kept: BTreeSet<u64>,
    /// Score of the last kept pair in ranking order.
    pub cutoff: f64,
    pub total: usize,
}

/// Keeps the favored `spec.kept_of(n)` pairs; ties broken by ascending id.
pub fn rank_and_select(scores: &[(u64, f64)], spec: &FilterSpec) -> Result<Selection> {
    spec.validate()?;
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to filter".into()));
    }
    if let Some((id, _)) = scores.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::InvalidInput(format!("score of pair {id} is NaN")));
    }
    let mut order: Vec<(u64, f64)> = scores.to_vec();
    order.sort_by(|a, b| {
        let by_score = match spec.direction {
            Direction::KeepTop => b.1.total_cmp(&a.1),
            Direction::KeepBottom => a.1.total_cmp(&b.1),
        };
        by_score.then(a.0.cmp(&b.0))
    });
    let k = spec.kept_of(order.len());
    let kept: BTreeSet<u64> = order[..k].iter().map(|p| p.0).collect();
    if kept.len() != k {
        return Err(Error::InvalidInput("duplicate pair ids in scores".into()));
    }
    Ok(Selection {
        kept,
        cutoff: order[k - 1].1,
        total: order.len(),
    })
}

/// Projects score records onto the column a method ranks by.
pub fn method_scores(records: &[ScoreRecord], method: Method) -> Result<Vec<(u64, f64)>> {
    let pick: fn(&ScoreRecord) -> f64 = match method {
        Method::Ours => |r| r.s_ours,
        Method::Frame => |r| r.s_frame,
        Method::Content => |r| r.s_content,
        _ => {
            return Err(Error::InvalidInput(format!(
                "{method} is computed from the corpus, not from scores"
            )))
        }
    };
    Ok(records.iter().map(|r| (r.pair_id, pick(r))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Src,
    Trg,
}

/// Entropy (nats) of each distinct utterance's counterpart distribution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntropyTable {
    side: Option<Side>,
    values: FxHashMap<String, f64>,
}

impl EntropyTable {
    pub fn get(&self, utterance: &str) -> Option<f64> {
        self.values.get(utterance).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Each pair scored by the entropy of its utterance on the table's side.
    pub fn pair_scores(&self, corpus: &Corpus) -> Vec<(u64, f64)> {
        corpus
            .pairs()
            .iter()
            .map(|p| {
                let u = match self.side {
                    Some(Side::Trg) => &p.y.raw,
                    _ => &p.x.raw,
                };
                (p.id, self.get(u).unwrap_or(0.0))
            })
            .collect()
    }
}

/// Identity clustering: utterances and counterparts grouped by exact raw
/// string.
pub fn entropy_scores(corpus: &Corpus, side: Side) -> EntropyTable {
    let mut counts: FxHashMap<&str, FxHashMap<&str, u64>> = FxHashMap::default();
    for p in corpus.pairs() {
        let (u, c) = match side {
            Side::Src => (p.x.raw.as_str(), p.y.raw.as_str()),
            Side::Trg => (p.y.raw.as_str(), p.x.raw.as_str()),
        };
        *counts.entry(u).or_default().entry(c).or_default() += 1;
    }
    let values = counts
        .into_iter()
        .map(|(u, cs)| {
            let mut cs: Vec<u64> = cs.into_values().collect();
            cs.sort_unstable();
            (u.to_string(), entropy(&cs))
        })
        .collect();
    EntropyTable {
        side: Some(side),
        values,
    }
}

fn entropy(counts: &[u64]) -> f64 {
    if counts.len() <= 1 {
        return 0.0;
    }
    let total: u64 = counts.iter().sum();
    let t = total as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Writes the kept pairs in corpus order.
pub fn write_filtered(corpus: &Corpus, kept: &BTreeSet<u64>, path: &Path) -> Result<()> {
    let ids: BTreeSet<u64> = corpus.pairs().iter().map(|p| p.id).collect();
    if let Some(bad) = kept.iter().find(|id| !ids.contains(id)) {
        return Err(Error::InvalidInput(format!("unknown pair id {bad}")));
    }
    write_pairs(path, corpus.pairs().iter().filter(|p| kept.contains(&p.id)))
}

/// Sidecar report in `key=value` lines.
pub fn write_filter_report(path: &Path, spec: &FilterSpec, sel: &Selection) -> Result<()> {
    let keep = match spec.keep {
        Keep::Ratio(r) => format!("keep_ratio={r}"),
        Keep::Count(k) => format!("keep_count={k}"),
    };
    let text = format!(
        "method={}\n{keep}\ndirection={}\ncutoff={:.6}\ntotal={}\nkept={}\nremoved={}\n",
        spec.method,
        spec.direction.as_str(),
        sel.cutoff,
        sel.total,
        sel.kept.len(),
        sel.total - sel.kept.len()
    );
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}
