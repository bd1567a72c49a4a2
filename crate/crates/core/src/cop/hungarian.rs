//! Rectangular assignment with distinguished infinite entries.
//!
//! Entries are lifted into the lexicographic group `(infinite count, finite
//! sum)`, so the solver first maximises the number of finite matches and then
//! minimises their total cost. Pairs matched at infinity come back unmatched.

use std::ops::{Add, AddAssign, Sub, SubAssign};

use super::Cost;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Lex(i64, i64);

impl Lex {
    const ZERO: Lex = Lex(0, 0);
    const BIG: Lex = Lex(i64::MAX / 4, 0);

    fn of(c: Cost) -> Lex {
        match c {
            Cost::Finite(v) => Lex(0, v as i64),
            Cost::Infinite => Lex(1, 0),
        }
    }
}

impl Add for Lex {
    type Output = Lex;
    fn add(self, o: Lex) -> Lex {
        Lex(self.0 + o.0, self.1 + o.1)
    }
}

impl Sub for Lex {
    type Output = Lex;
    fn sub(self, o: Lex) -> Lex {
        Lex(self.0 - o.0, self.1 - o.1)
    }
}

impl AddAssign for Lex {
    fn add_assign(&mut self, o: Lex) {
        *self = *self + o;
    }
}

impl SubAssign for Lex {
    fn sub_assign(&mut self, o: Lex) {
        *self = *self - o;
    }
}

/// Row `i` -> column assigned to it, for `rows <= cols`.
fn solve_wide(a: &[Vec<Lex>], cols: usize) -> Vec<usize> {
    let n = a.len();
    let m = cols;
    let mut u = vec![Lex::ZERO; n + 1];
    let mut v = vec![Lex::ZERO; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![Lex::BIG; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = Lex::BIG;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Minimum-cost injective partial assignment of rows to columns.
///
/// Returns, per row, the assigned column or `None`. The number of finite
/// matches is maximal and, among such assignments, the total cost is minimal.
pub fn assign(costs: &[Vec<Cost>]) -> Vec<Option<usize>> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    debug_assert!(costs.iter().all(|r| r.len() == cols), "cost matrix must be rectangular");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let lifted: Vec<Vec<Lex>> = costs.iter().map(|r| r.iter().map(|&c| Lex::of(c)).collect()).collect();
    let mut out = vec![None; rows];
    if rows <= cols {
        for (i, j) in solve_wide(&lifted, cols).into_iter().enumerate() {
            out[i] = Some(j);
        }
    } else {
        let transposed: Vec<Vec<Lex>> = (0..cols).map(|j| (0..rows).map(|i| lifted[i][j]).collect()).collect();
        for (j, i) in solve_wide(&transposed, rows).into_iter().enumerate() {
            out[i] = Some(j);
        }
    }
    for (i, slot) in out.iter_mut().enumerate() {
        if let Some(j) = *slot {
            if costs[i][j] == Cost::Infinite {
                *slot = None;
            }
        }
    }
    out
}
