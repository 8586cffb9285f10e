use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use super::symmetrize::{symmetrize, Heuristic};
use super::vocab::{Vocabulary, NULL_ID, NULL_TOKEN};
use super::AlignmentMatrix;
use crate::corpus::{Corpus, UtterancePair};
use crate::error::{Error, Result};
use crate::util::{write_atomic, KahanSum, SHARD_SIZE};

const MODEL_MAGIC: &str = "dialclean-alignment-model 1";
const UNKNOWN: u32 = u32::MAX;
/// Shards whose expected counts are held in memory at once before merging.
const SHARD_BATCH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `x` is the source side, `y` the target side.
    Forward,
    /// `y` is the source side, `x` the target side.
    Reverse,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }

    fn sides(self, pair: &UtterancePair) -> (&[String], &[String]) {
        match self {
            Direction::Forward => (&pair.x.tokens, &pair.y.tokens),
            Direction::Reverse => (&pair.y.tokens, &pair.x.tokens),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            _ => Err(Error::InvalidInput(format!("unknown direction {s:?}"))),
        }
    }
}

/// Distribution over source positions for a target position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prior {
    /// `exp(-tension * |i/n - j/m|)`, normalized per target position.
    Diagonal,
    Uniform,
}

impl Prior {
    pub fn as_str(self) -> &'static str {
        match self {
            Prior::Diagonal => "diagonal",
            Prior::Uniform => "uniform",
        }
    }
}

impl FromStr for Prior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Prior::Diagonal),
            "uniform" => Ok(Prior::Uniform),
            _ => Err(Error::InvalidInput(format!("unknown prior {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub iterations: usize,
    /// Probability that a target word is generated by NULL; fixed during training.
    pub null_prob: f64,
    /// Diagonal tension (λ).
    pub tension: f64,
    pub prior: Prior,
    pub lowercase: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            iterations: 5,
            null_prob: 0.5,
            tension: 4.0,
            prior: Prior::Diagonal,
            lowercase: false,
        }
    }
}

impl AlignConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.null_prob) {
            return Err(Error::InvalidInput("null_prob out of [0,1)".into()));
        }
        if !(self.tension >= 0.0 && self.tension.is_finite()) {
            return Err(Error::InvalidInput("tension must be a non-negative number".into()));
        }
        Ok(())
    }
}

fn fold(token: &str, lowercase: bool) -> Cow<'_, str> {
    if lowercase {
        Cow::Owned(token.to_lowercase())
    } else {
        Cow::Borrowed(token)
    }
}

#[inline]
fn key(src: u32, tgt: u32) -> u64 {
    ((src as u64) << 32) | tgt as u64
}

struct EncodedPair {
    src: Vec<u32>,
    tgt: Vec<u32>,
}

/// Lexical translation table `t(target | source)` plus the fixed alignment
/// prior parameters it was trained with.
#[derive(Debug, Clone)]
pub struct AlignmentModel {
    direction: Direction,
    config: AlignConfig,
    source: Vocabulary,
    target: Vocabulary,
    /// Sorted `(source, target)` keys; rows are contiguous.
    keys: Vec<u64>,
    probs: Vec<f64>,
    slots: FxHashMap<u64, u32>,
    log_likelihoods: Vec<f64>,
}

impl AlignmentModel {
    /// Builds a model from explicit `(source, target, prob)` entries. A
    /// source of [`NULL_TOKEN`] addresses the NULL row.
    pub fn from_entries<'a, I>(direction: Direction, config: AlignConfig, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        config.validate()?;
        let mut source = Vocabulary::new();
        let mut target = Vocabulary::new();
        let mut table = Vec::new();
        for (s, t, p) in entries {
            let sid = if s == NULL_TOKEN { NULL_ID } else { source.intern(s) };
            let tid = target.intern(t);
            table.push((key(sid, tid), p));
        }
        table.sort_by_key(|e| e.0);
        table.dedup_by_key(|e| e.0);
        let (keys, probs): (Vec<u64>, Vec<f64>) = table.into_iter().unzip();
        Ok(Self::assemble(direction, config, source, target, keys, probs))
    }

    fn assemble(
        direction: Direction,
        config: AlignConfig,
        source: Vocabulary,
        target: Vocabulary,
        keys: Vec<u64>,
        probs: Vec<f64>,
    ) -> Self {
        let slots = keys.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        AlignmentModel {
            direction,
            config,
            source,
            target,
            keys,
            probs,
            slots,
            log_likelihoods: Vec::new(),
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn config(&self) -> &AlignConfig {
        &self.config
    }

    pub fn source_vocab(&self) -> &Vocabulary {
        &self.source
    }

    pub fn target_vocab(&self) -> &Vocabulary {
        &self.target
    }

    /// Corpus log-likelihood under the parameters entering each EM iteration.
    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    pub fn num_entries(&self) -> usize {
        self.keys.len()
    }

    #[inline]
    fn prob_ids(&self, src: u32, tgt: u32) -> f64 {
        if tgt == UNKNOWN || src == UNKNOWN {
            return 0.0;
        }
        self.slots
            .get(&key(src, tgt))
            .map_or(0.0, |&s| self.probs[s as usize])
    }

    /// `t(target | source)`; pass [`NULL_TOKEN`] as `source` for the NULL row.
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        let s = if source == NULL_TOKEN {
            Some(NULL_ID)
        } else {
            self.source.get(source)
        };
        match (s, self.target.get(target)) {
            (Some(s), Some(t)) => self.prob_ids(s, t),
            _ => 0.0,
        }
    }

    /// Sum of each source row (NULL row first), in source-id order.
    pub fn row_sums(&self) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = Vec::new();
        for (k, p) in self.keys.iter().zip(&self.probs) {
            let src = (k >> 32) as u32;
            match out.last_mut() {
                Some((s, sum)) if *s == src => *sum += p,
                _ => out.push((src, *p)),
            }
        }
        out
    }

    fn encode(&self, tokens: &[String], vocab: &Vocabulary) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| vocab.get(&fold(t, self.config.lowercase)).unwrap_or(UNKNOWN))
            .collect()
    }

    fn encode_pair(&self, pair: &UtterancePair) -> EncodedPair {
        let (s, t) = self.direction.sides(pair);
        EncodedPair {
            src: self.encode(s, &self.source),
            tgt: self.encode(t, &self.target),
        }
    }

    /// Fills `out[i]` with the (1 - p0)-scaled prior of source position `i`
    /// for target position `j`.
    fn position_prior(&self, j: usize, n_src: usize, n_tgt: usize, out: &mut Vec<f64>) {
        out.clear();
        let mass = 1.0 - self.config.null_prob;
        match self.config.prior {
            Prior::Uniform => out.resize(n_src, mass / n_src as f64),
            Prior::Diagonal => {
                let tj = (j + 1) as f64 / n_tgt as f64;
                let lambda = self.config.tension;
                out.extend((0..n_src).map(|i| {
                    let si = (i + 1) as f64 / n_src as f64;
                    (-lambda * (si - tj).abs()).exp()
                }));
                let z: f64 = out.iter().sum();
                for w in out.iter_mut() {
                    *w *= mass / z;
                }
            }
        }
    }

    /// Accumulates posterior link counts for one shard; returns the shard
    /// log-likelihood.
    fn shard_counts(&self, pairs: &[EncodedPair], counts: &mut [KahanSum]) -> KahanSum {
        let mut ll = KahanSum::new();
        let mut prior = Vec::new();
        let mut probs = Vec::new();
        let mut slots = Vec::new();
        let p0 = self.config.null_prob;
        for p in pairs {
            let (n, m) = (p.src.len(), p.tgt.len());
            for (j, &f) in p.tgt.iter().enumerate() {
                self.position_prior(j, n, m, &mut prior);
                probs.clear();
                slots.clear();
                let null_slot = self.slots[&key(NULL_ID, f)];
                probs.push(p0 * self.probs[null_slot as usize]);
                slots.push(null_slot);
                for (i, &e) in p.src.iter().enumerate() {
                    let s = self.slots[&key(e, f)];
                    probs.push(prior[i] * self.probs[s as usize]);
                    slots.push(s);
                }
                let total: f64 = probs.iter().sum();
                if total <= 0.0 {
                    ll.add(f64::NEG_INFINITY);
                    continue;
                }
                ll.add(total.ln());
                for (&s, &q) in slots.iter().zip(&probs) {
                    counts[s as usize].add(q / total);
                }
            }
        }
        ll
    }

    /// One E-step over all pairs. Shards are merged in input order.
    fn expected_counts(&self, pairs: &[EncodedPair]) -> (Vec<KahanSum>, f64) {
        let mut total = vec![KahanSum::new(); self.keys.len()];
        let mut ll = KahanSum::new();
        let shards: Vec<&[EncodedPair]> = pairs.chunks(SHARD_SIZE).collect();
        for batch in shards.chunks(SHARD_BATCH) {
            let results: Vec<(Vec<KahanSum>, KahanSum)> = batch
                .par_iter()
                .map(|shard| {
                    let mut c = vec![KahanSum::new(); self.keys.len()];
                    let l = self.shard_counts(shard, &mut c);
                    (c, l)
                })
                .collect();
            for (c, l) in results {
                for (acc, x) in total.iter_mut().zip(&c) {
                    acc.merge(x);
                }
                ll.merge(&l);
            }
        }
        (total, ll.value())
    }

    fn maximize(&mut self, counts: &[KahanSum]) {
        let mut start = 0;
        while start < self.keys.len() {
            let src = self.keys[start] >> 32;
            let mut end = start;
            while end < self.keys.len() && self.keys[end] >> 32 == src {
                end += 1;
            }
            let row: KahanSum = counts[start..end].iter().map(KahanSum::value).collect();
            let z = row.value();
            for k in start..end {
                self.probs[k] = if z > 0.0 {
                    counts[k].value() / z
                } else {
                    1.0 / (end - start) as f64
                };
            }
            start = end;
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "{MODEL_MAGIC}");
        let _ = writeln!(s, "direction {}", self.direction.as_str());
        let _ = writeln!(s, "iterations {}", c.iterations);
        let _ = writeln!(s, "null_prob {:?}", c.null_prob);
        let _ = writeln!(s, "tension {:?}", c.tension);
        let _ = writeln!(s, "prior {}", c.prior.as_str());
        let _ = writeln!(s, "lowercase {}", c.lowercase);
        for (name, v) in [("source", &self.source), ("target", &self.target)] {
            let _ = writeln!(s, "{name} {}", v.words().len());
            for w in v.words() {
                let _ = writeln!(s, "{w}");
            }
        }
        let _ = writeln!(s, "entries {}", self.keys.len());
        for (k, p) in self.keys.iter().zip(&self.probs) {
            let _ = writeln!(s, "{} {} {:?}", k >> 32, k & 0xffff_ffff, p);
        }
        write_atomic(path, |w| w.write_all(s.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(n, l)| (n + 1, l))
                .ok_or_else(|| Error::parse(path, 0, format!("truncated model: missing {what}")))
        };
        let (n, magic) = next("header")?;
        if magic != MODEL_MAGIC {
            return Err(Error::parse(path, n, "not an alignment model file"));
        }
        fn field<'a>(path: &Path, (n, line): (usize, &'a str), name: &str) -> Result<&'a str> {
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| Error::parse(path, n, format!("expected `{name} ...`")))
        }
        fn num<T: FromStr>(path: &Path, n: usize, s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::parse(path, n, format!("bad number {s:?}")))
        }
        let l = next("direction")?;
        let direction: Direction = field(path, l, "direction")?.parse()?;
        let l = next("iterations")?;
        let iterations = num(path, l.0, field(path, l, "iterations")?)?;
        let l = next("null_prob")?;
        let null_prob = num(path, l.0, field(path, l, "null_prob")?)?;
        let l = next("tension")?;
        let tension = num(path, l.0, field(path, l, "tension")?)?;
        let l = next("prior")?;
        let prior: Prior = field(path, l, "prior")?.parse()?;
        let l = next("lowercase")?;
        let lowercase = num(path, l.0, field(path, l, "lowercase")?)?;
        let config = AlignConfig {
            iterations,
            null_prob,
            tension,
            prior,
            lowercase,
        };
        let mut vocabs = Vec::new();
        for name in ["source", "target"] {
            let l = next(name)?;
            let count: usize = num(path, l.0, field(path, l, name)?)?;
            let mut v = Vocabulary::new();
            for _ in 0..count {
                let (_, w) = next("vocabulary word")?;
                v.intern(w);
            }
            vocabs.push(v);
        }
        let target = vocabs.pop().unwrap();
        let source = vocabs.pop().unwrap();
        let l = next("entries")?;
        let count: usize = num(path, l.0, field(path, l, "entries")?)?;
        let mut keys = Vec::with_capacity(count);
        let mut probs = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next("entry")?;
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 3 {
                return Err(Error::parse(path, n, "expected `source target prob`"));
            }
            let s: u32 = num(path, n, f[0])?;
            let t: u32 = num(path, n, f[1])?;
            if s as usize >= source.len() || t as usize >= target.len() {
                return Err(Error::parse(path, n, "entry id outside vocabulary"));
            }
            keys.push(key(s, t));
            probs.push(num(path, n, f[2])?);
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parse(path, 0, "entries not sorted"));
        }
        Ok(Self::assemble(direction, config, source, target, keys, probs))
    }
}

/// Trains `t(target | source)` by EM with the NULL probability and position
/// prior held fixed. Deterministic for a fixed corpus order and config,
/// independent of the rayon thread count.
pub fn train_alignment(
    corpus: &Corpus,
    direction: Direction,
    config: &AlignConfig,
) -> Result<AlignmentModel> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    config.validate()?;
    let mut source = Vocabulary::new();
    let mut target = Vocabulary::new();
    let mut encoded = Vec::with_capacity(corpus.len());
    let mut key_set: FxHashSet<u64> = FxHashSet::default();
    for pair in corpus.pairs() {
        let (s, t) = direction.sides(pair);
        let src: Vec<u32> = s
            .iter()
            .map(|w| source.intern(&fold(w, config.lowercase)))
            .collect();
        let tgt: Vec<u32> = t
            .iter()
            .map(|w| target.intern(&fold(w, config.lowercase)))
            .collect();
        for &f in &tgt {
            key_set.insert(key(NULL_ID, f));
            for &e in &src {
                key_set.insert(key(e, f));
            }
        }
        encoded.push(EncodedPair { src, tgt });
    }
    let mut keys: Vec<u64> = key_set.into_iter().collect();
    keys.sort_unstable();
    let init = 1.0 / target.len() as f64;
    let probs = vec![init; keys.len()];
    let mut model = AlignmentModel::assemble(direction, config.clone(), source, target, keys, probs);
    for it in 0..config.iterations {
        let (counts, ll) = model.expected_counts(&encoded);
        log::debug!("{} EM iteration {}: log-likelihood {ll}", direction.as_str(), it + 1);
        model.log_likelihoods.push(ll);
        model.maximize(&counts);
    }
    Ok(model)
}

/// Corpus log-likelihood under the model's current parameters.
pub fn corpus_log_likelihood(model: &AlignmentModel, corpus: &Corpus) -> f64 {
    let encoded: Vec<EncodedPair> = corpus.pairs().iter().map(|p| model.encode_pair(p)).collect();
    let mut ll = KahanSum::new();
    let mut prior = Vec::new();
    for p in &encoded {
        let (n, m) = (p.src.len(), p.tgt.len());
        for (j, &f) in p.tgt.iter().enumerate() {
            model.position_prior(j, n, m, &mut prior);
            let mut total = model.config.null_prob * model.prob_ids(NULL_ID, f);
            for (i, &e) in p.src.iter().enumerate() {
                total += prior[i] * model.prob_ids(e, f);
            }
            ll.add(total.ln());
        }
    }
    ll.value()
}

/// Best single alignment for one direction, returned in `(x, y)` orientation.
///
/// Each target position takes the argmax over NULL and the source positions of
/// `prior · t`; NULL emits no link. Ties keep the earlier candidate (NULL,
/// then smaller source index).
pub fn viterbi_align(model: &AlignmentModel, pair: &UtterancePair) -> AlignmentMatrix {
    let enc = model.encode_pair(pair);
    let mut m = AlignmentMatrix::new(pair.x.token_count(), pair.y.token_count());
    let mut prior = Vec::new();
    let (n, len) = (enc.src.len(), enc.tgt.len());
    for (j, &f) in enc.tgt.iter().enumerate() {
        model.position_prior(j, n, len, &mut prior);
        let mut best = model.config.null_prob * model.prob_ids(NULL_ID, f);
        let mut best_i = None;
        for (i, &e) in enc.src.iter().enumerate() {
            let score = prior[i] * model.prob_ids(e, f);
            if score > best {
                best = score;
                best_i = Some(i);
            }
        }
        if let Some(i) = best_i {
            let link = match model.direction {
                Direction::Forward => (i, j),
                Direction::Reverse => (j, i),
            };
            m.insert(link.0, link.1).expect("viterbi link within bounds");
        }
    }
    m
}

/// Viterbi-aligns every pair in both directions and symmetrizes.
pub fn align_corpus(
    forward: &AlignmentModel,
    reverse: &AlignmentModel,
    corpus: &Corpus,
    heuristic: Heuristic,
) -> Result<Vec<AlignmentMatrix>> {
    if forward.direction != Direction::Forward || reverse.direction != Direction::Reverse {
        return Err(Error::InvalidInput(
            "align_corpus expects a forward and a reverse model".into(),
        ));
    }
    corpus
        .pairs()
        .par_iter()
        .map(|p| symmetrize(&viterbi_align(forward, p), &viterbi_align(reverse, p), heuristic))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PunctTokenizer, Utterance};
    use std::collections::HashMap;

    fn corpus(pairs: &[(&str, &str)]) -> Corpus {
        Corpus::from_pairs(
            pairs
                .iter()
                .enumerate()
                .map(|(i, (x, y))| UtterancePair {
                    id: i as u64 + 1,
                    x: Utterance::new(*x, &PunctTokenizer),
                    y: Utterance::new(*y, &PunctTokenizer),
                    work_id: String::new(),
                    line_index: i,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Straightforward EM over string-keyed maps, used as an oracle.
    fn reference_em(
        pairs: &[(&str, &str)],
        cfg: &AlignConfig,
    ) -> HashMap<(String, String), f64> {
        let toks: Vec<(Vec<&str>, Vec<&str>)> = pairs
            .iter()
            .map(|(x, y)| (x.split(' ').collect(), y.split(' ').collect()))
            .collect();
        let mut targets: Vec<&str> = toks.iter().flat_map(|p| p.1.iter().copied()).collect();
        targets.sort();
        targets.dedup();
        let init = 1.0 / (targets.len() + 1) as f64;
        let mut t: HashMap<(String, String), f64> = HashMap::new();
        for (s, g) in &toks {
            for f in g {
                t.insert((NULL_TOKEN.into(), f.to_string()), init);
                for e in s {
                    t.insert((e.to_string(), f.to_string()), init);
                }
            }
        }
        for _ in 0..cfg.iterations {
            let mut c: HashMap<(String, String), f64> = HashMap::new();
            for (s, g) in &toks {
                let (n, m) = (s.len(), g.len());
                for (j, f) in g.iter().enumerate() {
                    let w: Vec<f64> = (0..n)
                        .map(|i| {
                            (-cfg.tension
                                * ((i + 1) as f64 / n as f64 - (j + 1) as f64 / m as f64).abs())
                            .exp()
                        })
                        .collect();
                    let z: f64 = w.iter().sum();
                    let mut cand = vec![(
                        NULL_TOKEN.to_string(),
                        cfg.null_prob * t[&(NULL_TOKEN.to_string(), f.to_string())],
                    )];
                    for (i, e) in s.iter().enumerate() {
                        let pr = (1.0 - cfg.null_prob) * w[i] / z;
                        cand.push((e.to_string(), pr * t[&(e.to_string(), f.to_string())]));
                    }
                    let tot: f64 = cand.iter().map(|c| c.1).sum();
                    for (e, q) in cand {
                        *c.entry((e, f.to_string())).or_default() += q / tot;
                    }
                }
            }
            let mut rows: HashMap<String, f64> = HashMap::new();
            for ((e, _), v) in &c {
                *rows.entry(e.clone()).or_default() += v;
            }
            for (k, v) in t.iter_mut() {
                *v = c.get(k).copied().unwrap_or(0.0) / rows[&k.0];
            }
        }
        t
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = train_alignment(&Corpus::default(), Direction::Forward, &AlignConfig::default());
        assert!(matches!(err, Err(Error::EmptyCorpus)));
        assert_eq!(Error::EmptyCorpus.to_string(), "empty training corpus");
    }

    #[test]
    fn bad_config_rejected() {
        let c = corpus(&[("a", "a")]);
        let cfg = AlignConfig {
            null_prob: 1.0,
            ..AlignConfig::default()
        };
        assert!(train_alignment(&c, Direction::Forward, &cfg).is_err());
        let cfg = AlignConfig {
            iterations: 0,
            ..AlignConfig::default()
        };
        assert!(train_alignment(&c, Direction::Forward, &cfg).is_err());
    }

    #[test]
    fn single_type_row_is_forced() {
        let c = corpus(&[("a", "a")]);
        let m = train_alignment(&c, Direction::Forward, &AlignConfig::default()).unwrap();
        assert_eq!(m.prob("a", "a"), 1.0);
    }

    #[test]
    fn identity_copies_prefer_diagonal() {
        let pairs = vec![("a b", "a b"); 100];
        let cfg = AlignConfig::default();
        let m = train_alignment(&corpus(&pairs), Direction::Forward, &cfg).unwrap();
        let oracle = reference_em(&pairs, &cfg);
        for (e, f) in [("a", "a"), ("a", "b"), ("b", "a"), ("b", "b")] {
            let want = oracle[&(e.to_string(), f.to_string())];
            assert!((m.prob(e, f) - want).abs() < 1e-12, "{e}->{f}");
        }
        assert!(m.prob("a", "a") > m.prob("a", "b"));
        assert!(m.prob("b", "b") > m.prob("b", "a"));
    }

    #[test]
    fn matches_reference_em_on_mixed_corpus() {
        let pairs = vec![
            ("where is it", "at home"),
            ("where is the cat", "at the door"),
            ("what is it", "a cat"),
            ("is it ok", "yes it is"),
            ("the cat", "the dog ran"),
        ];
        let cfg = AlignConfig {
            iterations: 7,
            null_prob: 0.3,
            tension: 2.5,
            ..AlignConfig::default()
        };
        let m = train_alignment(&corpus(&pairs), Direction::Forward, &cfg).unwrap();
        let oracle = reference_em(&pairs, &cfg);
        assert_eq!(oracle.len(), m.num_entries());
        for ((e, f), want) in &oracle {
            assert!((m.prob(e, f) - want).abs() < 1e-12, "{e}->{f}");
        }
    }

    #[test]
    fn rows_normalized_and_likelihood_monotone() {
        let pairs = vec![
            ("a b c", "c b a"),
            ("a d", "d a e"),
            ("b b c", "c"),
            ("e f g h", "h g"),
        ];
        let c = corpus(&pairs);
        for dir in [Direction::Forward, Direction::Reverse] {
            let m = train_alignment(&c, dir, &AlignConfig::default()).unwrap();
            for (_, s) in m.row_sums() {
                assert!((s - 1.0).abs() < 1e-9);
            }
            let ll = m.log_likelihoods();
            assert_eq!(ll.len(), 5);
            for w in ll.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
            assert!(corpus_log_likelihood(&m, &c) >= ll[4] - 1e-9);
        }
    }

    #[test]
    fn viterbi_single_word() {
        let cfg = AlignConfig::default();
        // Untrained NULL row: uniform over the target vocabulary (NULL id included).
        let m = AlignmentModel::from_entries(
            Direction::Forward,
            cfg,
            [("a", "a", 1.0), (NULL_TOKEN, "a", 0.5)],
        )
        .unwrap();
        let c1 = corpus(&[("a", "a")]);
        let p = &c1.pairs()[0];
        // link: 0.5 * 1 * 1.0 = 0.5 > NULL: 0.5 * 0.5 = 0.25
        assert_eq!(viterbi_align(&m, p).to_pharaoh(), "0-0");
    }

    #[test]
    fn viterbi_zero_row_falls_to_null() {
        let m = AlignmentModel::from_entries(
            Direction::Forward,
            AlignConfig::default(),
            [("a", "b", 0.0), ("a", "a", 1.0)],
        )
        .unwrap();
        let c1 = corpus(&[("a", "b")]);
        let p = &c1.pairs()[0];
        assert!(viterbi_align(&m, p).is_empty());
        let c1 = corpus(&[("a", "zzz")]);
        let p = &c1.pairs()[0];
        assert!(viterbi_align(&m, p).is_empty());
    }

    #[test]
    fn viterbi_ties_prefer_smaller_source_index() {
        let cfg = AlignConfig {
            prior: Prior::Uniform,
            null_prob: 0.0,
            ..AlignConfig::default()
        };
        let m = AlignmentModel::from_entries(Direction::Forward, cfg, [("a", "c", 0.5)]).unwrap();
        let c1 = corpus(&[("a a", "c")]);
        let p = &c1.pairs()[0];
        assert_eq!(viterbi_align(&m, p).to_pharaoh(), "0-0");
    }

    #[test]
    fn identity_model_aligns_swapped_words() {
        let mut pairs = vec![("a", "a"), ("b", "b"), ("a b", "a b"), ("b a", "b a")];
        pairs.extend(vec![("a c", "a c"), ("c b", "c b"), ("c", "c")]);
        let c = corpus(&pairs);
        // the diagonal prior would rightly prefer NULL for a crossed pair
        let cfg = AlignConfig {
            prior: Prior::Uniform,
            null_prob: 0.1,
            ..AlignConfig::default()
        };
        let fwd = train_alignment(&c, Direction::Forward, &cfg).unwrap();
        let c1 = corpus(&[("a b", "b a")]);
        let p = &c1.pairs()[0];
        assert_eq!(viterbi_align(&fwd, p).to_pharaoh(), "0-1 1-0");
        let rev = train_alignment(&c, Direction::Reverse, &cfg).unwrap();
        assert_eq!(viterbi_align(&rev, p).to_pharaoh(), "0-1 1-0");
    }

    #[test]
    fn save_load_round_trip() {
        let c = corpus(&[("a b c", "c b a"), ("a d", "d a e")]);
        let m = train_alignment(&c, Direction::Reverse, &AlignConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        m.save(&path).unwrap();
        let back = AlignmentModel::load(&path).unwrap();
        assert_eq!(back.keys, m.keys);
        assert_eq!(back.probs, m.probs);
        assert_eq!(back.config, m.config);
        assert_eq!(back.direction, m.direction);
        for p in c.pairs() {
            assert_eq!(viterbi_align(&back, p), viterbi_align(&m, p));
        }
    }

    #[test]
    fn training_is_thread_count_independent() {
        let pairs: Vec<(String, String)> = (0..5000)
            .map(|i| {
                (
                    format!("w{} w{} w{}", i % 7, i % 11, i % 13),
                    format!("v{} v{}", i % 5, i % 11),
                )
            })
            .collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let c = corpus(&refs);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_alignment(&c, Direction::Forward, &AlignConfig::default()).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.log_likelihoods, b.log_likelihoods);
    }
}
