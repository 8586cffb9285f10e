use std::str::FromStr;

use super::AlignmentMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    GrowDiagFinal,
    GrowDiagFinalAnd,
}

impl Heuristic {
    pub fn as_str(self) -> &'static str {
        match self {
            Heuristic::GrowDiagFinal => "grow-diag-final",
            Heuristic::GrowDiagFinalAnd => "grow-diag-final-and",
        }
    }
}

impl FromStr for Heuristic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grow-diag-final" => Ok(Heuristic::GrowDiagFinal),
            "grow-diag-final-and" => Ok(Heuristic::GrowDiagFinalAnd),
            _ => Err(Error::InvalidInput(format!("unknown heuristic {s:?}"))),
        }
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

struct Grid {
    cols: usize,
    cells: Vec<bool>,
    row_used: Vec<bool>,
    col_used: Vec<bool>,
}

impl Grid {
    fn new(rows: usize, cols: usize) -> Self {
        Grid {
            cols,
            cells: vec![false; rows * cols],
            row_used: vec![false; rows],
            col_used: vec![false; cols],
        }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize) {
        self.cells[i * self.cols + j] = true;
        self.row_used[i] = true;
        self.col_used[j] = true;
    }
}

/// Combines a forward and a reverse alignment (both in `(x, y)` orientation):
/// start from the intersection, repeatedly add union points in the
/// 8-neighborhood of current points whose row or column is still uncovered,
/// then add remaining forward and then reverse points. The final pass needs
/// the point's row or column uncovered; final-and needs both uncovered.
pub fn symmetrize(
    forward: &AlignmentMatrix,
    reverse: &AlignmentMatrix,
    heuristic: Heuristic,
) -> Result<AlignmentMatrix> {
    if (forward.x_len(), forward.y_len()) != (reverse.x_len(), reverse.y_len()) {
        return Err(Error::Dimension(format!(
            "forward {}x{} vs reverse {}x{}",
            forward.x_len(),
            forward.y_len(),
            reverse.x_len(),
            reverse.y_len()
        )));
    }
    let (rows, cols) = (forward.x_len(), forward.y_len());
    let mut a = Grid::new(rows, cols);
    for &(i, j) in forward.links() {
        if reverse.contains(i, j) {
            a.set(i, j);
        }
    }
    let in_union = |i: usize, j: usize| forward.contains(i, j) || reverse.contains(i, j);

    // grow-diag
    loop {
        let mut added = false;
        for i in 0..rows {
            for j in 0..cols {
                if !a.get(i, j) {
                    continue;
                }
                for (di, dj) in NEIGHBORS {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= rows as isize || nj >= cols as isize {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    if a.get(ni, nj) || !in_union(ni, nj) {
                        continue;
                    }
                    if !a.row_used[ni] || !a.col_used[nj] {
                        a.set(ni, nj);
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }

    for side in [forward, reverse] {
        for &(i, j) in side.links() {
            if a.get(i, j) {
                continue;
            }
            let open = match heuristic {
                Heuristic::GrowDiagFinal => !a.row_used[i] || !a.col_used[j],
                Heuristic::GrowDiagFinalAnd => !a.row_used[i] && !a.col_used[j],
            };
            if open {
                a.set(i, j);
            }
        }
    }

    let mut out = AlignmentMatrix::new(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if a.get(i, j) {
                out.insert(i, j)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(x: usize, y: usize, links: &[(usize, usize)]) -> AlignmentMatrix {
        AlignmentMatrix::from_links(x, y, links.iter().copied()).unwrap()
    }

    #[test]
    fn agreeing_directions() {
        let a = m(1, 1, &[(0, 0)]);
        for h in [Heuristic::GrowDiagFinal, Heuristic::GrowDiagFinalAnd] {
            assert_eq!(symmetrize(&a, &a, h).unwrap(), a);
        }
    }

    #[test]
    fn final_adds_uncovered_union_point() {
        let f = m(1, 1, &[(0, 0)]);
        let r = m(1, 1, &[]);
        assert_eq!(symmetrize(&f, &r, Heuristic::GrowDiagFinal).unwrap(), f);
        assert_eq!(symmetrize(&f, &r, Heuristic::GrowDiagFinalAnd).unwrap(), f);
    }

    #[test]
    fn diagonal_neighbor_grows() {
        let f = m(2, 2, &[(0, 0), (1, 1)]);
        let r = m(2, 2, &[(0, 0)]);
        assert_eq!(
            symmetrize(&f, &r, Heuristic::GrowDiagFinalAnd).unwrap(),
            m(2, 2, &[(0, 0), (1, 1)])
        );
    }

    #[test]
    fn final_and_is_stricter() {
        // Intersection {(0,0)}; forward adds (0,2), which is not a neighbor.
        // Row 0 is covered, column 2 is not: final accepts, final-and rejects.
        let f = m(2, 3, &[(0, 0), (0, 2)]);
        let r = m(2, 3, &[(0, 0)]);
        assert_eq!(
            symmetrize(&f, &r, Heuristic::GrowDiagFinal).unwrap(),
            m(2, 3, &[(0, 0), (0, 2)])
        );
        assert_eq!(
            symmetrize(&f, &r, Heuristic::GrowDiagFinalAnd).unwrap(),
            m(2, 3, &[(0, 0)])
        );
    }

    #[test]
    fn dimension_mismatch() {
        assert!(symmetrize(&m(1, 2, &[]), &m(2, 1, &[]), Heuristic::GrowDiagFinal).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (AlignmentMatrix, AlignmentMatrix)> {
        (1usize..7, 1usize..7).prop_flat_map(|(x, y)| {
            let links = prop::collection::vec((0..x, 0..y), 0..12);
            (links.clone(), links).prop_map(move |(a, b)| {
                (
                    AlignmentMatrix::from_links(x, y, a).unwrap(),
                    AlignmentMatrix::from_links(x, y, b).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn between_intersection_and_union((f, r) in arb_pair()) {
            for h in [Heuristic::GrowDiagFinal, Heuristic::GrowDiagFinalAnd] {
                let s = symmetrize(&f, &r, h).unwrap();
                for l in f.links().intersection(r.links()) {
                    prop_assert!(s.links().contains(l));
                }
                for &(i, j) in s.links() {
                    prop_assert!(f.contains(i, j) || r.contains(i, j));
                }
            }
        }
    }
}
