//! Evaluation helpers: Spearman correlation against human ratings,
//! len/distinct-n diversity statistics, and score histograms.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean human rating per pair id, each in `[1, 5]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HumanRatingSet {
    ratings: BTreeMap<u64, f64>,
}

impl HumanRatingSet {
    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I) -> Result<Self> {
        let mut ratings = BTreeMap::new();
        for (id, r) in pairs {
            if !(1.0..=5.0).contains(&r) {
                return Err(Error::InvalidInput(format!("rating {r} of pair {id} outside [1,5]")));
            }
            if ratings.insert(id, r).is_some() {
                return Err(Error::InvalidInput(format!("duplicate rating for pair {id}")));
            }
        }
        Ok(HumanRatingSet { ratings })
    }

    /// Reads `pair_id<TAB>mean_rating` rows.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::parse(path, n + 1, "expected pair_id<TAB>mean_rating");
            let (id, r) = line.split_once('\t').ok_or_else(bad)?;
            pairs.push((id.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?));
        }
        Self::from_pairs(pairs).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.ratings.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub n: usize,
    pub spearman_rho: f64,
    pub p_value: f64,
}

impl CorrelationReport {
    pub fn to_kv(&self) -> String {
        format!(
            "n={}\nspearman_rho={:.6}\np_value={:e}\n",
            self.n, self.spearman_rho, self.p_value
        )
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ of two aligned samples with a two-sided t-test p-value.
pub fn spearman_vectors(a: &[f64], b: &[f64]) -> Result<CorrelationReport> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 shared ids, got {n}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in correlation input".into()));
    }
    let (ra, rb) = (midranks(a), midranks(b));
    // mean rank is (n+1)/2 regardless of ties
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroRankVariance);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(CorrelationReport {
        n,
        spearman_rho: rho,
        p_value,
    })
}

/// Correlation over the ids present in both `human` and `auto`.
pub fn spearman(human: &HumanRatingSet, auto: &[(u64, f64)]) -> Result<CorrelationReport> {
    let mut seen = HashSet::new();
    let (mut h, mut a) = (Vec::new(), Vec::new());
    for &(id, s) in auto {
        if !seen.insert(id) {
            return Err(Error::InvalidInput(format!("duplicate score for pair {id}")));
        }
        if let Some(r) = human.get(id) {
            h.push(r);
            a.push(s);
        }
    }
    spearman_vectors(&h, &a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityReport {
    pub utterances: usize,
    pub mean_len: f64,
    /// (unique unigrams, unique / total)
    pub distinct_1: (usize, f64),
    /// (unique bigrams, unique / total)
    pub distinct_2: (usize, f64),
}

impl DiversityReport {
    pub const CSV_HEADER: &'static str = "label,utterances,len,distinct1_unique,distinct1,distinct2_unique,distinct2";

    pub fn to_csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{:.2},{},{:.4},{},{:.4}",
            self.utterances,
            self.mean_len,
            self.distinct_1.0,
            self.distinct_1.1,
            self.distinct_2.0,
            self.distinct_2.1
        )
    }

    pub fn to_kv(&self) -> String {
        format!(
            "utterances={}\nlen={:.2}\ndistinct1={}/{:.3}\ndistinct2={}/{:.3}\n",
            self.utterances,
            self.mean_len,
            self.distinct_1.0,
            self.distinct_1.1,
            self.distinct_2.0,
            self.distinct_2.1
        )
    }
}

/// Mean token length and pooled distinct-1/2 over tokenized utterances.
pub fn diversity_stats<U, S>(utterances: &[U]) -> Result<DiversityReport>
where
    U: AsRef<[S]>,
    S: AsRef<str>,
{
    if utterances.is_empty() {
        return Err(Error::InvalidInput("no utterances".into()));
    }
    let mut uni: HashSet<&str> = HashSet::new();
    let mut bi: HashSet<(&str, &str)> = HashSet::new();
    let (mut n1, mut n2) = (0usize, 0usize);
    for u in utterances {
        let u = u.as_ref();
        n1 += u.len();
        n2 += u.len().saturating_sub(1);
        uni.extend(u.iter().map(AsRef::as_ref));
        bi.extend(u.windows(2).map(|w| (w[0].as_ref(), w[1].as_ref())));
    }
    let ratio = |k: usize, total: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    Ok(DiversityReport {
        utterances: utterances.len(),
        mean_len: n1 as f64 / utterances.len() as f64,
        distinct_1: (uni.len(), ratio(uni.len(), n1)),
        distinct_2: (bi.len(), ratio(bi.len(), n2)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<Bin>,
    pub below: usize,
    pub above: usize,
}

impl Histogram {
    pub fn in_range(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `bin_low,bin_high,count` rows; out-of-range counts as trailing comments.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_low,bin_high,count\n");
        for b in &self.bins {
            let _ = writeln!(s, "{:.6},{:.6},{}", b.low, b.high, b.count);
        }
        let _ = writeln!(s, "# below={} above={}", self.below, self.above);
        s
    }
}

/// Equal-width bins over `[lo, hi]`; `[low, high)` except the last, which
/// also includes `hi`. NaN scores count as out of range (above).
pub fn histogram(scores: &[f64], bin_count: usize, (lo, hi): (f64, f64)) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::InvalidInput("bin_count must be at least 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput(format!("degenerate histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bin_count as f64;
    let edge = |k: usize| if k == bin_count { hi } else { lo + width * k as f64 };
    let mut bins: Vec<Bin> = (0..bin_count)
        .map(|k| Bin {
            low: edge(k),
            high: edge(k + 1),
            count: 0,
        })
        .collect();
    let (mut below, mut above) = (0, 0);
    for &s in scores {
        if s < lo {
            below += 1;
        } else if !(s <= hi) {
            above += 1;
        } else {
            let mut k = (((s - lo) / width) as usize).min(bin_count - 1);
            // correct for rounding in the division so edges stay left-closed
            while k > 0 && s < bins[k].low {
                k -= 1;
            }
            while k + 1 < bin_count && s >= bins[k + 1].low {
                k += 1;
            }
            bins[k].count += 1;
        }
    }
    Ok(Histogram { bins, below, above })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pearson on midranks computed the slow way: ranks by counting.
    fn oracle(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|&x| {
                    let less = v.iter().filter(|&&y| y < x).count() as f64;
                    let eq = v.iter().filter(|&&y| y == x).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let (ra, rb) = (rank(a), rank(b));
        let n = a.len() as f64;
        let ma = ra.iter().sum::<f64>() / n;
        let mb = rb.iter().sum::<f64>() / n;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn spearman_examples() {
        let h = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman_vectors(&h, &[0.1, 0.5, 0.7, 2.0, 9.0]).unwrap().spearman_rho, 1.0);
        let r = spearman_vectors(&h, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.spearman_rho, -1.0);
        assert_eq!(r.p_value, 0.0);
        let tied = spearman_vectors(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((tied.spearman_rho - 0.9487).abs() < 1e-4);
        assert!((tied.spearman_rho - 4.5 / 22.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            spearman_vectors(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroRankVariance)
        ));
        assert!(spearman_vectors(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_value_matches_t_table() {
        // n = 12, rho = 0.5: t = 0.5·sqrt(10/0.75) = 1.8257, two-sided p ≈ 0.0979
        let a: Vec<f64> = (0..12).map(f64::from).collect();
        let b = [2.0, 0.0, 5.0, 1.0, 9.0, 3.0, 4.0, 11.0, 6.0, 7.0, 8.0, 10.0];
        let r = spearman_vectors(&a, &b).unwrap();
        let df = 10.0;
        let t = r.spearman_rho * (df / (1.0 - r.spearman_rho.powi(2))).sqrt();
        let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
        assert!((r.p_value - p).abs() < 1e-12);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn spearman_uses_intersection() {
        let h = HumanRatingSet::from_pairs([(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.5), (99, 5.0)]).unwrap();
        let r = spearman(&h, &[(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4), (5, 0.0)]).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.spearman_rho, 1.0);
        assert!(HumanRatingSet::from_pairs([(1, 0.5)]).is_err());
        assert!(HumanRatingSet::from_pairs([(1, 2.0), (1, 3.0)]).is_err());
    }

    #[test]
    fn ratings_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.tsv");
        std::fs::write(&p, "1\t2.5\n2\t4\n").unwrap();
        let h = HumanRatingSet::load(&p).unwrap();
        assert_eq!(h.get(2), Some(4.0));
        std::fs::write(&p, "1\t2.5\nx\t4\n").unwrap();
        assert!(HumanRatingSet::load(&p).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn exhaustive_small_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..3000 {
            let n = rng.gen_range(3..=12);
            let levels = rng.gen_range(2..=6);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.3).collect();
            match spearman_vectors(&a, &b) {
                Ok(r) => assert!((r.spearman_rho - oracle(&a, &b)).abs() < 1e-10),
                Err(Error::ZeroRankVariance) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn diversity_examples() {
        let d = diversity_stats(&[vec!["a", "b", "a"]]).unwrap();
        assert_eq!(d.mean_len, 3.0);
        assert_eq!(d.distinct_1, (2, 2.0 / 3.0));
        assert_eq!(d.distinct_2, (2, 1.0));
        let d = diversity_stats(&[vec!["a", "b"], vec!["a", "b"]]).unwrap();
        assert_eq!(d.distinct_1, (2, 0.5));
        assert_eq!(d.distinct_2, (1, 0.5));
        assert!(diversity_stats::<Vec<&str>, &str>(&[]).is_err());
        assert!(d.to_kv().contains("distinct1=2/0.500"));
    }

    #[test]
    fn diversity_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let utts: Vec<Vec<String>> = (0..100)
            .map(|_| {
                let len = rng.gen_range(1..6);
                (0..len).map(|_| format!("w{}", rng.gen_range(0..8))).collect()
            })
            .collect();
        let d = diversity_stats(&utts).unwrap();
        let mut grams1 = Vec::new();
        let mut grams2 = Vec::new();
        for u in &utts {
            for i in 0..u.len() {
                grams1.push(u[i].clone());
                if i + 1 < u.len() {
                    grams2.push(format!("{} {}", u[i], u[i + 1]));
                }
            }
        }
        let uniq = |g: &Vec<String>| {
            let mut s = g.clone();
            s.sort();
            s.dedup();
            s.len()
        };
        assert_eq!(d.distinct_1, (uniq(&grams1), uniq(&grams1) as f64 / grams1.len() as f64));
        assert_eq!(d.distinct_2, (uniq(&grams2), uniq(&grams2) as f64 / grams2.len() as f64));
    }

    #[test]
    fn histogram_examples() {
        // left-closed bins: 0 in [0,0.5), 0.5 and 1 in [0.5,1]
        let h = histogram(&[0.0, 0.5, 1.0], 2, (0.0, 1.0)).unwrap();
        assert_eq!(h.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 2]);
        let h = histogram(&[], 4, (0.0, 1.0)).unwrap();
        assert!(h.bins.iter().all(|b| b.count == 0));
        assert!(histogram(&[1.0], 2, (1.0, 1.0)).is_err());
        assert!(histogram(&[1.0], 0, (0.0, 1.0)).is_err());
        let h = histogram(&[-1.0, 2.0, f64::NAN, 0.3], 3, (0.0, 1.0)).unwrap();
        assert_eq!((h.below, h.above, h.in_range()), (1, 2, 1));
        assert!(h.to_csv().starts_with("bin_low,bin_high,count\n0.000000,0.333333,1\n"));
    }

    #[test]
    fn histogram_uniform_within_five_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let s: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let h = histogram(&s, 10, (0.0, 1.0)).unwrap();
        let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
        for b in &h.bins {
            assert!((b.count as f64 - 1000.0).abs() <= 5.0 * sigma);
        }
    }

    proptest! {
        #[test]
        fn spearman_symmetric_and_rank_invariant(
            pairs in prop::collection::vec((0u8..10, 0u8..10), 3..30)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            if let Ok(r) = spearman_vectors(&a, &b) {
                let s = spearman_vectors(&b, &a).unwrap();
                prop_assert!((r.spearman_rho - s.spearman_rho).abs() < 1e-12);
                let t: Vec<f64> = a.iter().map(|x| x.powi(3) + 2.0 * x).collect();
                prop_assert!((r.spearman_rho - spearman_vectors(&t, &b).unwrap().spearman_rho).abs() < 1e-12);
                prop_assert!(r.spearman_rho.abs() <= 1.0);
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
        }

        #[test]
        fn diversity_order_invariant(mut utts in prop::collection::vec(prop::collection::vec(0u8..5, 1..5), 1..20)) {
            let as_str = |u: &Vec<Vec<u8>>| -> Vec<Vec<String>> {
                u.iter().map(|v| v.iter().map(|t| t.to_string()).collect()).collect()
            };
            let d1 = diversity_stats(&as_str(&utts)).unwrap();
            utts.reverse();
            let d2 = diversity_stats(&as_str(&utts)).unwrap();
            prop_assert_eq!(d1, d2);
        }

        #[test]
        fn histogram_conserves_counts(scores in prop::collection::vec(-0.5f64..1.5, 0..200), bins in 1usize..20) {
            let h = histogram(&scores, bins, (0.0, 1.0)).unwrap();
            prop_assert_eq!(h.in_range() + h.below + h.above, scores.len());
            for b in &h.bins {
                let expected = scores.iter().filter(|&&s| s >= b.low && (s < b.high || (b.high == 1.0 && s == 1.0))).count();
                prop_assert_eq!(b.count, expected);
            }
        }
    }
}
