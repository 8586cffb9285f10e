//! Phrase-pair extraction from a single alignment matrix.

use std::collections::BTreeSet;

use crate::aligner::AlignmentMatrix;

/// An aligned block: `x[f_start..=f_end]` paired with `y[e_start..=e_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub f_start: usize,
    pub f_end: usize,
    pub e_start: usize,
    pub e_end: usize,
}

impl Block {
    pub fn new(f: (usize, usize), e: (usize, usize)) -> Self {
        Block {
            f_start: f.0,
            f_end: f.1,
            e_start: e.0,
            e_end: e.1,
        }
    }

    pub fn f_len(&self) -> usize {
        self.f_end - self.f_start + 1
    }

    pub fn e_len(&self) -> usize {
        self.e_end - self.e_start + 1
    }
}

struct Dense {
    x_len: usize,
    y_len: usize,
    cells: Vec<bool>,
}

impl Dense {
    fn new(m: &AlignmentMatrix) -> Self {
        let mut cells = vec![false; m.x_len() * m.y_len()];
        for &(i, j) in m.links() {
            cells[i * m.y_len() + j] = true;
        }
        Dense {
            x_len: m.x_len(),
            y_len: m.y_len(),
            cells,
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.y_len + j]
    }
}

/// Extracts only explicitly corresponding blocks: for each `x` span, the `y`
/// span runs from the smallest to the largest linked `y` position, and the
/// block is kept only if every row and every column inside it carries at
/// least one link from the span. Unaligned words are never absorbed.
///
/// Links from rows outside the span that land inside the `y` range are not
/// checked unless `strict` is set.
pub fn extract_modified(matrix: &AlignmentMatrix, max_len: usize, strict: bool) -> BTreeSet<Block> {
    let a = Dense::new(matrix);
    let mut out = BTreeSet::new();
    let mut col_hit = vec![false; a.y_len];
    for fs in 0..a.x_len {
        col_hit.iter_mut().for_each(|c| *c = false);
        let mut e_min = usize::MAX;
        let mut e_max = 0;
        for fe in fs..a.x_len.min(fs + max_len) {
            let mut row_linked = false;
            for j in 0..a.y_len {
                if a.get(fe, j) {
                    row_linked = true;
                    col_hit[j] = true;
                    e_min = e_min.min(j);
                    e_max = e_max.max(j);
                }
            }
            if !row_linked {
                // Every longer span contains this unaligned row.
                break;
            }
            if e_max - e_min + 1 > max_len {
                continue;
            }
            if !(e_min..=e_max).all(|j| col_hit[j]) {
                continue;
            }
            if strict
                && (e_min..=e_max)
                    .any(|j| (0..a.x_len).any(|i| (i < fs || i > fe) && a.get(i, j)))
            {
                continue;
            }
            out.insert(Block::new((fs, fe), (e_min, e_max)));
        }
    }
    out
}

/// Standard consistent phrase extraction with expansion of the `y` span over
/// unaligned boundary words. Kept for comparisons against
/// [`extract_modified`].
pub fn extract_reference(matrix: &AlignmentMatrix, max_len: usize) -> BTreeSet<Block> {
    let a = Dense::new(matrix);
    let col_aligned: Vec<bool> = (0..a.y_len)
        .map(|j| (0..a.x_len).any(|i| a.get(i, j)))
        .collect();
    let mut out = BTreeSet::new();
    for fs in 0..a.x_len {
        for fe in fs..a.x_len {
            if fe - fs + 1 > max_len {
                break;
            }
            let mut span: Option<(usize, usize)> = None;
            for &(f, e) in matrix.links() {
                if fs <= f && f <= fe {
                    span = Some(match span {
                        None => (e, e),
                        Some((lo, hi)) => (lo.min(e), hi.max(e)),
                    });
                }
            }
            let Some((es, ee)) = span else { continue };
            let consistent = matrix
                .links()
                .iter()
                .all(|&(f, e)| !(es <= e && e <= ee) || (fs <= f && f <= fe));
            if !consistent {
                continue;
            }
            let mut s = es;
            loop {
                let mut t = ee;
                loop {
                    if t - s + 1 <= max_len {
                        out.insert(Block::new((fs, fe), (s, t)));
                    }
                    t += 1;
                    if t >= a.y_len || col_aligned[t] {
                        break;
                    }
                }
                if s == 0 {
                    break;
                }
                s -= 1;
                if col_aligned[s] {
                    break;
                }
            }
        }
    }
    out
}
