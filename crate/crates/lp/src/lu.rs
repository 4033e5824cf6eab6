//! Sparse LU factorization of a simplex basis.
//!
//! Right-looking Gaussian elimination. Each step takes the active column
//! with the fewest nonzeros and, within it, the sparsest row among entries
//! no smaller than [`THRESHOLD`] times the column's largest entry. Basis
//! columns are addressed by position, rows by constraint index.

use std::collections::BTreeSet;

const THRESHOLD: f64 = 0.1;

/// Applies `edit` to the row pattern of position `q`, keeping its queue key current.
fn resize(queue: &mut BTreeSet<(usize, usize)>, pattern: &mut Vec<usize>, q: usize, edit: impl FnOnce(&mut Vec<usize>)) {
    if !pattern.is_empty() {
        queue.remove(&(pattern.len(), q));
    }
    edit(pattern);
    if !pattern.is_empty() {
        queue.insert((pattern.len(), q));
    }
}
const DROP_TOL: f64 = 1e-14;

/// One elimination step: pivot `(row, pos)` with value `diag`.
struct Step {
    row: usize,
    pos: usize,
    diag: f64,
    /// Multipliers `(i, l)`: row `i` had `l` times the pivot row subtracted.
    lower: Vec<(usize, f64)>,
    /// Pivot row entries at positions eliminated later.
    upper: Vec<(usize, f64)>,
}

pub(crate) struct Lu {
    steps: Vec<Step>,
}

/// Rows and positions the elimination could not pair up because the
/// columns at those positions are numerically dependent.
pub(crate) struct Deficiency {
    pub rows: Vec<usize>,
    pub positions: Vec<usize>,
}

impl Lu {
    /// Factors the `m x m` matrix whose column at position `p` is `cols[p]`.
    pub fn factor(m: usize, cols: &[&[(usize, f64)]]) -> (Lu, Deficiency) {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for &(r, v) in col.iter() {
                if v != 0.0 {
                    rows[r].push((p, v));
                    pattern[p].push(r);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut work = vec![0.0; m];
        let mut stamp = vec![0usize; m];
        let mut clock = 0usize;
        let mut steps = Vec::with_capacity(m);

        // Active positions keyed by (nonzero count, position); the first key is
        // the next pivot column. Empty columns are kept out.
        let mut queue: BTreeSet<(usize, usize)> =
            (0..m).filter(|&p| !pattern[p].is_empty()).map(|p| (pattern[p].len(), p)).collect();

        while let Some((_, p)) = queue.pop_first() {
            let entries: Vec<(usize, f64)> = pattern[p]
                .iter()
                .map(|&i| (i, rows[i].iter().find(|e| e.0 == p).map_or(0.0, |e| e.1)))
                .collect();
            let largest = entries.iter().fold(0.0_f64, |a, e| a.max(e.1.abs()));
            if largest <= super::simplex::PIVOT_TOL {
                for &(i, _) in &entries {
                    rows[i].retain(|e| e.0 != p);
                }
                pattern[p].clear();
                continue;
            }
            let (r, v) = entries
                .iter()
                .filter(|e| e.1.abs() >= THRESHOLD * largest)
                .min_by_key(|e| (rows[e.0].len(), e.0))
                .copied()
                .expect("largest entry passes its own threshold");

            let pivot_row = std::mem::take(&mut rows[r]);
            for &(q, _) in &pivot_row {
                if q != p {
                    resize(&mut queue, &mut pattern[q], q, |pat| pat.retain(|&i| i != r));
                }
            }
            let mut lower = Vec::with_capacity(entries.len());
            for &(i, vi) in &entries {
                if i == r {
                    continue;
                }
                let l = vi / v;
                lower.push((i, l));
                clock += 1;
                let old = std::mem::take(&mut rows[i]);
                for &(q, val) in &old {
                    work[q] = val;
                    stamp[q] = clock;
                }
                let mut fills = Vec::new();
                for &(q, val) in &pivot_row {
                    if stamp[q] == clock {
                        work[q] -= l * val;
                    } else {
                        work[q] = -l * val;
                        stamp[q] = clock;
                        fills.push(q);
                    }
                }
                let mut updated = Vec::with_capacity(old.len() + fills.len());
                for &(q, _) in &old {
                    if q == p {
                        continue;
                    }
                    if work[q].abs() > DROP_TOL {
                        updated.push((q, work[q]));
                    } else {
                        resize(&mut queue, &mut pattern[q], q, |pat| pat.retain(|&x| x != i));
                    }
                }
                for q in fills {
                    if work[q].abs() > DROP_TOL {
                        updated.push((q, work[q]));
                        resize(&mut queue, &mut pattern[q], q, |pat| pat.push(i));
                    }
                }
                rows[i] = updated;
            }
            pattern[p].clear();
            row_done[r] = true;
            steps.push(Step {
                row: r,
                pos: p,
                diag: v,
                lower,
                upper: pivot_row.into_iter().filter(|e| e.0 != p).collect(),
            });
        }

        let pivoted: Vec<bool> = {
            let mut used = vec![false; m];
            for s in &steps {
                used[s.pos] = true;
            }
            used
        };
        let deficiency = Deficiency {
            rows: (0..m).filter(|&r| !row_done[r]).collect(),
            positions: (0..m).filter(|&p| !pivoted[p]).collect(),
        };
        (Lu { steps }, deficiency)
    }

    /// Factorization of the identity, row `i` at position `i`.
    pub fn identity(m: usize) -> Lu {
        let mut lu = Lu { steps: Vec::with_capacity(m) };
        for i in 0..m {
            lu.append_unit(i, i, 1.0);
        }
        lu
    }

    /// Completes a deficient factorization with the column `coef * e_row` at `pos`.
    pub fn append_unit(&mut self, row: usize, pos: usize, coef: f64) {
        self.steps.push(Step {
            row,
            pos,
            diag: coef,
            lower: Vec::new(),
            upper: Vec::new(),
        });
    }

    /// Solves `B x = a` in place: `a` is indexed by row on entry, by position on exit.
    pub fn solve(&self, a: &mut [f64]) {
        for s in &self.steps {
            let pivot = a[s.row];
            if pivot != 0.0 {
                for &(i, l) in &s.lower {
                    a[i] -= l * pivot;
                }
            }
        }
        let mut x = vec![0.0; a.len()];
        for s in self.steps.iter().rev() {
            let mut v = a[s.row];
            for &(q, u) in &s.upper {
                v -= u * x[q];
            }
            x[s.pos] = v / s.diag;
        }
        a.copy_from_slice(&x);
    }

    /// Solves `y^T B = u^T` in place: `u` is indexed by position on entry, by row on exit.
    pub fn solve_transpose(&self, u: &mut [f64]) {
        let mut z = vec![0.0; u.len()];
        for s in &self.steps {
            let v = u[s.pos] / s.diag;
            z[s.row] = v;
            if v != 0.0 {
                for &(q, uv) in &s.upper {
                    u[q] -= v * uv;
                }
            }
        }
        for s in self.steps.iter().rev() {
            let mut v = z[s.row];
            for &(i, l) in &s.lower {
                v -= l * z[i];
            }
            z[s.row] = v;
        }
        u.copy_from_slice(&z);
    }
}
