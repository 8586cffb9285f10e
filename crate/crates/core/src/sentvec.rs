//! SIF sentence vectors: frequency-weighted averages of word vectors with the
//! first common component projected out.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::util::{write_atomic, KahanSum};

pub const DEFAULT_SIF_A: f64 = 1e-3;

/// Word vectors stored as `f32`, one contiguous row per word.
#[derive(Debug, Clone, Default)]
pub struct WordVectorTable {
    dim: usize,
    index: FxHashMap<String, usize>,
    data: Vec<f32>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable {
            dim,
            ..Default::default()
        }
    }

    /// Inserts or replaces a word's vector.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector for {word:?} has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        match self.index.get(word) {
            Some(&row) => self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(word.to_string(), self.index.len());
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }
}

/// Loads a `.vec` text file: a `vocab_size dim` header, then `word v1 .. vd`
/// rows. A repeated word replaces the earlier vector (with a warning).
pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable> {
    let text = crate::util::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty vector file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, 1, "expected `vocab_size dim` header"))?;
    let [declared, dim] = dims[..] else {
        return Err(Error::parse(path, 1, "expected `vocab_size dim` header"));
    };
    if dim == 0 {
        return Err(Error::parse(path, 1, "dimension must be positive"));
    }
    let mut table = WordVectorTable::new(dim);
    let mut row = Vec::with_capacity(dim);
    let mut rows = 0usize;
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        row.clear();
        for v in parts {
            row.push(
                v.parse::<f32>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad value {v:?}")))?,
            );
        }
        if row.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", row.len()),
            ));
        }
        if table.get(word).is_some() {
            log::warn!("{}:{lineno}: duplicate word {word:?}, keeping the later vector", path.display());
        }
        table.insert(word, &row)?;
        rows += 1;
    }
    if rows != declared {
        log::warn!(
            "{}: header declares {declared} words, file has {rows} rows",
            path.display()
        );
    }
    Ok(table)
}

/// Unigram probabilities from `word<TAB>count` rows.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    probs: FxHashMap<String, f64>,
    total: u64,
}

impl FrequencyTable {
    pub fn from_counts<'a, I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut raw: FxHashMap<String, u64> = FxHashMap::default();
        for (w, c) in counts {
            *raw.entry(w.to_string()).or_default() += c;
        }
        raw.retain(|_, c| *c > 0);
        let total: u64 = raw.values().sum();
        let probs = raw
            .into_iter()
            .map(|(w, c)| (w, c as f64 / total as f64))
            .collect();
        FrequencyTable { probs, total }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let mut counts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (w, c) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, n + 1, "expected word<TAB>count"))?;
            let c: u64 = c
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, n + 1, format!("bad count {c:?}")))?;
            counts.push((w.to_string(), c));
        }
        Ok(Self::from_counts(counts.iter().map(|(w, c)| (w.as_str(), *c))))
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability assigned to words missing from the table.
    pub fn floor(&self) -> f64 {
        1.0 / (self.total as f64 + self.probs.len() as f64).max(1.0)
    }

    pub fn prob(&self, word: &str) -> f64 {
        self.probs.get(word).copied().unwrap_or_else(|| self.floor())
    }
}

/// Turns token sequences into SIF vectors:
/// `v = (1/k) Σ a / (a + p(w)) · vec(w)` over the `k` words that have
/// vectors, then `v ← v − (u·v) u` once a common component `u` is fitted.
#[derive(Debug, Clone)]
pub struct SentenceEmbedder {
    vectors: WordVectorTable,
    freqs: FrequencyTable,
    a: f64,
    lowercase: bool,
    component: Option<Vec<f64>>,
}

impl SentenceEmbedder {
    pub fn new(vectors: WordVectorTable, freqs: FrequencyTable, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("SIF parameter a must be > 0, got {a}")));
        }
        Ok(SentenceEmbedder {
            vectors,
            freqs,
            a,
            lowercase: false,
            component: None,
        })
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn component(&self) -> Option<&[f64]> {
        self.component.as_deref()
    }

    pub fn set_component(&mut self, u: Vec<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "component has {} values, embedder dimension is {}",
                u.len(),
                self.dim()
            )));
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("component is not unit length (norm {norm})")));
        }
        self.component = Some(u);
        Ok(())
    }

    /// SIF-weighted average only, without component removal.
    pub fn weighted_average<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        let mut known = 0usize;
        for t in tokens {
            let w: Cow<'_, str> = if self.lowercase {
                Cow::Owned(t.as_ref().to_lowercase())
            } else {
                Cow::Borrowed(t.as_ref())
            };
            let Some(vec) = self.vectors.get(&w) else { continue };
            let weight = self.a / (self.a + self.freqs.prob(&w));
            for (acc, &x) in v.iter_mut().zip(vec) {
                *acc += weight * x as f64;
            }
            known += 1;
        }
        if known > 0 {
            let k = known as f64;
            v.iter_mut().for_each(|x| *x /= k);
        }
        v
    }

    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = self.weighted_average(tokens);
        if let Some(u) = &self.component {
            remove_component(&mut v, u);
        }
        v
    }

    /// Fits the common component on the SIF averages of `sentences`.
    pub fn fit<S: AsRef<str>>(&mut self, sentences: &[Vec<S>], solver: &ComponentSolver) -> Result<()> {
        let sample: Vec<Vec<f64>> = sentences.iter().map(|s| self.weighted_average(s)).collect();
        let u = solver.solve(&sample)?;
        self.component = Some(u);
        Ok(())
    }
}

/// Functional form of [`SentenceEmbedder::embed`].
pub fn sif_embed<S: AsRef<str>>(sentence: &[S], embedder: &SentenceEmbedder) -> Vec<f64> {
    embedder.embed(sentence)
}

pub fn remove_component(v: &mut [f64], u: &[f64]) {
    let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    for (x, &ui) in v.iter_mut().zip(u) {
        *x -= proj * ui;
    }
}

/// Power iteration on the Gram matrix `XᵀX` of a sample.
#[derive(Debug, Clone)]
pub struct ComponentSolver {
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ComponentSolver {
    fn default() -> Self {
        ComponentSolver {
            seed: 0x5EED,
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

/// Flips `u` so its first coordinate with magnitude above `1e-12` is positive.
pub fn fix_sign(u: &mut [f64]) {
    if let Some(&first) = u.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

impl ComponentSolver {
    /// First right singular vector of the sample matrix (rows are sentence
    /// vectors), sign-fixed.
    pub fn solve(&self, sample: &[Vec<f64>]) -> Result<Vec<f64>> {
        let Some(first) = sample.first() else {
            return Err(Error::InvalidInput("empty component sample".into()));
        };
        let d = first.len();
        if sample.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension("sample vectors differ in length".into()));
        }
        if sample.iter().all(|v| v.iter().all(|&x| x == 0.0)) {
            return Err(Error::InvalidInput("component sample is all zero".into()));
        }
        // Upper triangle of the Gram matrix with compensated sums, mirrored.
        let mut gram = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let s: KahanSum = sample.iter().map(|v| v[a] * v[b]).collect();
                gram[a * d + b] = s.value();
                gram[b * d + a] = s.value();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Start inside the sample's row space so a lucky orthogonal draw
        // cannot stall the iteration.
        for v in sample {
            let w: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
            if w != 0.0 {
                break;
            }
            u.iter_mut().zip(v).for_each(|(x, y)| *x += y);
        }
        normalize(&mut u);
        let mut next = vec![0.0; d];
        for _ in 0..self.max_iterations {
            for (r, out) in next.iter_mut().enumerate() {
                *out = gram[r * d..(r + 1) * d]
                    .iter()
                    .zip(&u)
                    .map(|(g, x)| g * x)
                    .sum();
            }
            if normalize(&mut next) == 0.0 {
                return Err(Error::InvalidInput("power iteration collapsed to zero".into()));
            }
            fix_sign(&mut next);
            let delta = next
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut u, &mut next);
            if delta < self.tolerance {
                break;
            }
        }
        fix_sign(&mut u);
        Ok(u)
    }
}

/// [`ComponentSolver::solve`] with default settings.
pub fn fit_common_component(sample: &[Vec<f64>]) -> Result<Vec<f64>> {
    ComponentSolver::default().solve(sample)
}

/// `cos(x, y)`, or 0 when either vector is zero.
pub fn content_cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} vs {}", x.len(), y.len())));
    }
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0))
}

/// Writes `d` and then one component value per line.
pub fn save_component(path: &Path, u: &[f64]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{}", u.len());
    for x in u {
        let _ = writeln!(s, "{x:?}");
    }
    write_atomic(path, |w| w.write_all(s.as_bytes()))
}

pub fn load_component(path: &Path) -> Result<Vec<f64>> {
    let text = crate::util::read_to_string(path)?;
    let mut lines = text.lines();
    let d: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "expected dimension"))?;
    let u: Vec<f64> = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::parse(path, n + 2, format!("bad value {l:?}")))
        })
        .collect::<Result<_>>()?;
    if u.len() != d {
        return Err(Error::parse(path, 1, format!("declared {d} values, found {}", u.len())));
    }
    Ok(u)
}

/// Chooses up to `size` sentences at random (seeded); `size == 0` or a size
/// at least the population takes everything in order.
pub fn sample_indices(population: usize, size: usize, seed: u64) -> Vec<usize> {
    if size == 0 || size >= population {
        return (0..population).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, population, size).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(&str, &[f32])]) -> WordVectorTable {
        let mut t = WordVectorTable::new(rows[0].1.len());
        for (w, v) in rows {
            t.insert(w, v).unwrap();
        }
        t
    }

    #[test]
    fn loads_vec_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.vec");
        std::fs::write(&p, "2 3\na 1 0 0\nb 0 1 0\n").unwrap();
        let t = load_word_vectors(&p).unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.get("b").unwrap(), [0.0, 1.0, 0.0]);

        std::fs::write(&p, "2 3\na 1 0 0\nb 0 1\n").unwrap();
        match load_word_vectors(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&p, "2 2\na 1 0\na 0 1\n").unwrap();
        let t = load_word_vectors(&p).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn frequency_file_and_floor() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsv");
        std::fs::write(&p, "the\t6\ncat\t2\n").unwrap();
        let f = FrequencyTable::load(&p).unwrap();
        assert_eq!(f.total(), 8);
        assert_eq!(f.prob("the"), 0.75);
        assert_eq!(f.prob("zebra"), 1.0 / 10.0);
    }

    #[test]
    fn single_word_half_weight() {
        let a = 0.01;
        let freqs = FrequencyTable::from_counts([("w", 1), ("z", 99)]);
        let e = SentenceEmbedder::new(table(&[("w", &[2.0, -4.0])]), freqs, a).unwrap();
        let v = e.embed(&["w"]);
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_words_give_zero_vector() {
        let e = SentenceEmbedder::new(table(&[("w", &[1.0])]), FrequencyTable::default(), 1e-3).unwrap();
        assert_eq!(e.embed(&["x", "y"]), vec![0.0]);
        assert_eq!(e.embed::<&str>(&[]), vec![0.0]);
    }

    #[test]
    fn two_word_weighted_average() {
        let freqs = FrequencyTable::from_counts([("a", 1), ("b", 3)]);
        let vt = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let e = SentenceEmbedder::new(vt, freqs, 0.5).unwrap();
        // weights: 0.5/(0.5+0.25) = 2/3 and 0.5/(0.5+0.75) = 2/5; the
        // unknown word "c" is skipped.
        let v = e.embed(&["a", "c", "b"]);
        assert!((v[0] - (2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((v[1] - (2.0 / 5.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn lowercase_lookup() {
        let vt = table(&[("hi", &[1.0])]);
        let e = SentenceEmbedder::new(vt, FrequencyTable::default(), 1e-3).unwrap();
        assert_eq!(e.embed(&["HI"]), vec![0.0]);
        let e = e.with_lowercase(true);
        assert!(e.embed(&["HI"])[0] > 0.0);
    }

    #[test]
    fn component_of_rank_one_sample() {
        let v = vec![-3.0, 4.0, 0.0];
        let u = fit_common_component(&vec![v.clone(); 5]).unwrap();
        let want = [0.6, -0.8, 0.0];
        for (a, b) in u.iter().zip(want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn component_of_symmetric_sample() {
        let u = fit_common_component(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && u[1].abs() < 1e-12);
    }

    #[test]
    fn component_errors() {
        assert!(fit_common_component(&[]).is_err());
        assert!(fit_common_component(&[vec![0.0, 0.0]]).is_err());
        assert!(fit_common_component(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert!((content_cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(content_cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(content_cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(content_cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn component_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        let u = vec![0.6, -0.8, 1e-17];
        save_component(&p, &u).unwrap();
        assert_eq!(load_component(&p).unwrap(), u);
    }

    #[test]
    fn sampling_is_seeded() {
        assert_eq!(sample_indices(10, 0, 1), (0..10).collect::<Vec<_>>());
        assert_eq!(sample_indices(10, 20, 1).len(), 10);
        let a = sample_indices(1000, 30, 7);
        assert_eq!(a, sample_indices(1000, 30, 7));
        assert_ne!(a, sample_indices(1000, 30, 8));
        assert_eq!(a.len(), 30);
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, d)
    }

    proptest! {
        #[test]
        fn cosine_properties(x in vec_strategy(5), y in vec_strategy(5), c in 0.01f64..100.0) {
            let xy = content_cosine(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&xy));
            prop_assert!((xy - content_cosine(&y, &x).unwrap()).abs() < 1e-15);
            let cx: Vec<f64> = x.iter().map(|v| v * c).collect();
            prop_assert!((content_cosine(&cx, &y).unwrap() - xy).abs() < 1e-12);
        }

        #[test]
        fn embedding_is_order_invariant_and_orthogonal(
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
            rows in prop::collection::vec(vec_strategy(4), 6),
        ) {
            let words = ["a", "b", "c", "d", "e", "f"];
            let mut vt = WordVectorTable::new(4);
            for (w, r) in words.iter().zip(&rows) {
                let r: Vec<f32> = r.iter().map(|&x| x as f32).collect();
                vt.insert(w, &r).unwrap();
            }
            let freqs = FrequencyTable::from_counts(words.iter().enumerate().map(|(i, w)| (*w, i as u64 + 1)));
            let mut e = SentenceEmbedder::new(vt, freqs, 1e-2).unwrap();
            let sents: Vec<Vec<&str>> = vec![vec!["a", "b"], vec!["c", "d", "e"], vec!["f", "a"]];
            if e.fit(&sents, &ComponentSolver::default()).is_ok() {
                let shuffled: Vec<&str> = perm.iter().map(|&i| words[i]).collect();
                let v1 = e.embed(&words);
                let v2 = e.embed(&shuffled);
                for (a, b) in v1.iter().zip(&v2) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
                let u = e.component().unwrap();
                let dot: f64 = u.iter().zip(&v1).map(|(a, b)| a * b).sum();
                prop_assert!(dot.abs() <= 1e-9);
            }
        }
    }
}
