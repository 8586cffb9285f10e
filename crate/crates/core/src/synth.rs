//! Synthetic dialogue corpora with a known planted signal.
//!
//! Planted pairs share a key-phrase template (an `x` phrase that calls for a
//! particular `y` phrase) and a topic; the remaining pairs take their
//! responses from other, independently generated pairs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{apply_rule_filters, Candidate, PunctTokenizer, RuleFilter};
use crate::error::Result;
use crate::util::write_atomic;

const GENERIC: &[&str] = &[
    "i do not know .",
    "what do you mean ?",
    "oh , okay .",
    "yes , i know .",
    "i am not sure .",
];

const FILLERS: &[&str] = &[
    "the", "a", "you", "i", "it", "is", "to", "and", "of", "that", "we", "do", "not", "so", "well",
    "just", "what", "me", "my", "be", "oh", "this", "know", "really", "now", "right", "yes", "no",
    "okay", "then", "here", "there", "all", "can", "get", "go", "was", "will", "your", "on",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub planted: usize,
    pub shuffled: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub templates: usize,
    /// Extra unplanted pairs answered by one of a few stock responses.
    pub generic: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            planted: 5_000,
            shuffled: 5_000,
            topics: 20,
            words_per_topic: 30,
            templates: 16,
            generic: 0,
            dim: 50,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub x: String,
    pub y: String,
    pub planted: bool,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub pairs: Vec<SynthPair>,
    /// Word vectors in file order.
    pub vectors: Vec<(String, Vec<f32>)>,
}

struct Template {
    f: Vec<String>,
    e: Vec<String>,
}

fn topic_word(t: usize, i: usize) -> String {
    format!("t{t}w{i}")
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates: Vec<Template> = (0..cfg.templates)
        .map(|k| Template {
            f: (0..1 + k % 2).map(|i| format!("q{k}{}", ["a", "b"][i])).collect(),
            e: (0..1 + (k / 2) % 2).map(|i| format!("r{k}{}", ["a", "b"][i])).collect(),
        })
        .collect();

    let sample_side = |rng: &mut ChaCha8Rng, phrase: &[String], topic: usize, leading: bool| {
        let mut toks: Vec<String> = Vec::new();
        if leading {
            for _ in 0..rng.gen_range(0..=1) {
                toks.push(FILLERS.choose(rng).unwrap().to_string());
            }
        }
        toks.extend(phrase.iter().cloned());
        for _ in 0..rng.gen_range(2..=4) {
            toks.push(topic_word(topic, rng.gen_range(0..cfg.words_per_topic)));
        }
        for _ in 0..rng.gen_range(1..=3) {
            toks.push(FILLERS.choose(rng).unwrap().to_string());
        }
        toks.join(" ")
    };
    let draw = |rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(0..templates.len());
        let t = rng.gen_range(0..cfg.topics);
        let x = sample_side(rng, &templates[k].f, t, true);
        let y = sample_side(rng, &templates[k].e, t, false);
        (x, y)
    };

    let mut pairs: Vec<SynthPair> = (0..cfg.planted)
        .map(|_| {
            let (x, y) = draw(&mut rng);
            SynthPair { x, y, planted: true }
        })
        .collect();
    let donors: Vec<(String, String)> = (0..cfg.shuffled).map(|_| draw(&mut rng)).collect();
    if cfg.shuffled > 1 {
        // a random rotation guarantees nobody keeps their own response
        let shift = rng.gen_range(1..cfg.shuffled);
        for i in 0..cfg.shuffled {
            pairs.push(SynthPair {
                x: donors[i].0.clone(),
                y: donors[(i + shift) % cfg.shuffled].1.clone(),
                planted: false,
            });
        }
    }
    for _ in 0..cfg.generic {
        let (x, _) = draw(&mut rng);
        let y = GENERIC.choose(&mut rng).unwrap().to_string();
        pairs.push(SynthPair { x, y, planted: false });
    }
    pairs.shuffle(&mut rng);

    let gauss = |rng: &mut ChaCha8Rng| -> f32 {
        // sum of uniforms: cheap, bounded, close enough to normal here
        (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).sum::<f32>() * 0.866
    };
    let shared: Vec<f32> = (0..cfg.dim).map(|_| gauss(&mut rng)).collect();
    let mut vectors = Vec::new();
    let mut push = |word: String, center: &[f32], spread: f32, rng: &mut ChaCha8Rng| {
        let v: Vec<f32> = center
            .iter()
            .zip(&shared)
            .map(|(c, s)| c + 0.8 * s + spread * gauss(rng))
            .collect();
        vectors.push((word, v));
    };
    let zero = vec![0.0f32; cfg.dim];
    for w in FILLERS {
        push(w.to_string(), &zero, 0.4, &mut rng);
    }
    for t in &templates {
        for w in t.f.iter().chain(&t.e) {
            push(w.clone(), &zero, 0.4, &mut rng);
        }
    }
    for t in 0..cfg.topics {
        let center: Vec<f32> = (0..cfg.dim).map(|_| 1.5 * gauss(&mut rng)).collect();
        for i in 0..cfg.words_per_topic {
            push(topic_word(t, i), &center, 0.5, &mut rng);
        }
    }
    SynthCorpus { pairs, vectors }
}

impl SynthCorpus {
    /// Pair ids the default ingest stage assigns, with the planted label.
    pub fn ingest_labels(&self) -> Vec<(u64, bool)> {
        let label: HashMap<(&str, &str), bool> = self
            .pairs
            .iter()
            .map(|p| ((p.x.as_str(), p.y.as_str()), p.planted))
            .collect();
        let cands: Vec<Candidate> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| Candidate {
                work_id: (i + 1).to_string(),
                x_line: 3 * i,
                y_line: 3 * i + 1,
                x_raw: p.x.clone(),
                y_raw: p.y.clone(),
            })
            .collect();
        apply_rule_filters(&cands, &PunctTokenizer, &RuleFilter::default())
            .pairs()
            .iter()
            .map(|p| (p.id, label[&(p.x.raw.as_str(), p.y.raw.as_str())]))
            .collect()
    }

    /// Writes `corpus.txt` (two-line works separated by blank lines),
    /// `vectors.vec`, `freqs.tsv`, `labels.tsv` (`pair_id<TAB>0|1`) and
    /// `ratings.tsv` (simulated mean ratings for a subset of pairs).
    pub fn write(&self, dir: &Path, seed: u64) -> Result<()> {
        let mut corpus = String::new();
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for p in &self.pairs {
            let _ = write!(corpus, "{}\n{}\n\n", p.x, p.y);
            for t in p.x.split_whitespace().chain(p.y.split_whitespace()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        write_atomic(&dir.join("corpus.txt"), |w| w.write_all(corpus.as_bytes()))?;

        let dim = self.vectors.first().map_or(0, |v| v.1.len());
        let mut vec_text = format!("{} {dim}\n", self.vectors.len());
        for (w, v) in &self.vectors {
            vec_text.push_str(w);
            for x in v {
                let _ = write!(vec_text, " {x:.5}");
            }
            vec_text.push('\n');
        }
        write_atomic(&dir.join("vectors.vec"), |w| w.write_all(vec_text.as_bytes()))?;

        let mut counts: Vec<(&str, u64)> = counts.into_iter().collect();
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut freq_text = String::new();
        for (w, c) in counts {
            let _ = writeln!(freq_text, "{w}\t{c}");
        }
        write_atomic(&dir.join("freqs.tsv"), |w| w.write_all(freq_text.as_bytes()))?;

        let labels = self.ingest_labels();
        let mut label_text = String::new();
        for (id, planted) in &labels {
            let _ = writeln!(label_text, "{id}\t{}", u8::from(*planted));
        }
        write_atomic(&dir.join("labels.tsv"), |w| w.write_all(label_text.as_bytes()))?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5241_5445);
        let mut rated = labels.clone();
        rated.shuffle(&mut rng);
        rated.truncate(200.min(rated.len()));
        rated.sort_unstable();
        let mut rating_text = String::new();
        for (id, planted) in rated {
            let base = if planted { 3.8 } else { 2.0 };
            let r: f64 = (base + rng.gen_range(-1.0..1.0f64)).clamp(1.0, 5.0);
            let _ = writeln!(rating_text, "{id}\t{r:.1}");
        }
        write_atomic(&dir.join("ratings.tsv"), |w| w.write_all(rating_text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            planted: 50,
            shuffled: 50,
            dim: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = generate(&small());
        let b = generate(&small());
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.pairs.iter().filter(|p| p.planted).count(), 50);
        assert_eq!(a.pairs.len(), 100);
        let c = generate(&SynthConfig { seed: 8, ..small() });
        assert_ne!(a.pairs, c.pairs);
        let g = generate(&SynthConfig { generic: 10, ..small() });
        assert_eq!(g.pairs.len(), 110);
        assert_eq!(g.pairs.iter().filter(|p| GENERIC.contains(&p.y.as_str())).count(), 10);
    }

    #[test]
    fn sides_are_admissible() {
        let c = generate(&small());
        for p in &c.pairs {
            for s in [&p.x, &p.y] {
                let n = s.split_whitespace().count();
                assert!((3..=25).contains(&n), "{s}");
            }
        }
        assert!(c.ingest_labels().len() >= 99);
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        generate(&small()).write(dir.path(), 1).unwrap();
        for f in ["corpus.txt", "vectors.vec", "freqs.tsv", "labels.tsv", "ratings.tsv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let v = crate::sentvec::load_word_vectors(&dir.path().join("vectors.vec")).unwrap();
        assert_eq!(v.dim(), 8);
    }
}
