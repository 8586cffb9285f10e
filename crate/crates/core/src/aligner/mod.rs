//! Word alignment: an EM-trained lexical translation model with a NULL word
//! and a diagonal-favoring position prior, Viterbi decoding, and
//! grow-diag-final(-and) symmetrization of the two directions.

mod model;
mod symmetrize;
mod vocab;

use std::collections::BTreeSet;
use std::path::Path;

pub use model::{
    align_corpus, corpus_log_likelihood, train_alignment, viterbi_align, AlignConfig,
    AlignmentModel, Direction, Prior,
};
pub use symmetrize::{symmetrize, Heuristic};
pub use vocab::{Vocabulary, NULL_ID, NULL_TOKEN};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Alignment links between positions of `x` (`i`) and `y` (`j`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentMatrix {
    x_len: usize,
    y_len: usize,
    links: BTreeSet<(usize, usize)>,
}

impl AlignmentMatrix {
    pub fn new(x_len: usize, y_len: usize) -> Self {
        AlignmentMatrix {
            x_len,
            y_len,
            links: BTreeSet::new(),
        }
    }

    pub fn from_links<I>(x_len: usize, y_len: usize, links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut m = AlignmentMatrix::new(x_len, y_len);
        for (i, j) in links {
            m.insert(i, j)?;
        }
        Ok(m)
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.x_len || j >= self.y_len {
            return Err(Error::Dimension(format!(
                "link ({i},{j}) outside {}x{}",
                self.x_len, self.y_len
            )));
        }
        self.links.insert((i, j));
        Ok(())
    }

    pub fn x_len(&self) -> usize {
        self.x_len
    }

    pub fn y_len(&self) -> usize {
        self.y_len
    }

    pub fn links(&self) -> &BTreeSet<(usize, usize)> {
        &self.links
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn transpose(&self) -> AlignmentMatrix {
        AlignmentMatrix {
            x_len: self.y_len,
            y_len: self.x_len,
            links: self.links.iter().map(|&(i, j)| (j, i)).collect(),
        }
    }

    /// Pharaoh notation, e.g. `0-0 1-2`.
    pub fn to_pharaoh(&self) -> String {
        let parts: Vec<String> = self.links.iter().map(|(i, j)| format!("{i}-{j}")).collect();
        parts.join(" ")
    }

    pub fn parse_pharaoh(s: &str, x_len: usize, y_len: usize) -> Result<Self> {
        let mut m = AlignmentMatrix::new(x_len, y_len);
        for tok in s.split_whitespace() {
            let (i, j) = tok
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| Error::InvalidInput(format!("bad alignment point {tok:?}")))?;
            m.insert(i, j)?;
        }
        Ok(m)
    }
}

/// Writes `id<TAB>i-j i-j ...` rows, one per corpus pair.
pub fn write_alignments(path: &Path, corpus: &Corpus, alignments: &[AlignmentMatrix]) -> Result<()> {
    if corpus.len() != alignments.len() {
        return Err(Error::Dimension(format!(
            "{} pairs but {} alignments",
            corpus.len(),
            alignments.len()
        )));
    }
    write_atomic(path, |w| {
        for (p, a) in corpus.pairs().iter().zip(alignments) {
            writeln!(w, "{}\t{}", p.id, a.to_pharaoh())?;
        }
        Ok(())
    })
}

/// Reads an alignment dump; rows must follow the corpus pair order.
pub fn read_alignments(path: &Path, corpus: &Corpus) -> Result<Vec<AlignmentMatrix>> {
    let text = crate::util::read_to_string(path)?;
    let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    if rows.len() != corpus.len() {
        return Err(Error::parse(
            path,
            rows.len(),
            format!("expected {} alignment rows, found {}", corpus.len(), rows.len()),
        ));
    }
    rows.iter()
        .zip(corpus.pairs())
        .enumerate()
        .map(|(n, (row, pair))| {
            let (id, links) = row.split_once('\t').unwrap_or((row, ""));
            if id.parse::<u64>().ok() != Some(pair.id) {
                return Err(Error::parse(path, n + 1, format!("expected pair id {}", pair.id)));
            }
            AlignmentMatrix::parse_pharaoh(links, pair.x.token_count(), pair.y.token_count())
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pharaoh_round_trip() {
        let m = AlignmentMatrix::from_links(3, 2, [(2, 1), (0, 0)]).unwrap();
        assert_eq!(m.to_pharaoh(), "0-0 2-1");
        assert_eq!(AlignmentMatrix::parse_pharaoh("0-0 2-1", 3, 2).unwrap(), m);
        assert!(AlignmentMatrix::parse_pharaoh("0-5", 3, 2).is_err());
        assert!(AlignmentMatrix::parse_pharaoh("0_1", 3, 2).is_err());
    }

    #[test]
    fn duplicate_links_collapse() {
        let m = AlignmentMatrix::from_links(2, 2, [(0, 0), (0, 0)]).unwrap();
        assert_eq!(m.len(), 1);
    }
}
