//! Two-phase revised primal simplex.
//!
//! The constraint matrix is stored column-wise and sparse. The basis is held
//! as a sparse LU factorization followed by one elementary "eta" update per
//! pivot; it is refactored every [`REINVERT_EVERY`] pivots so the update list
//! stays short and rounding error does not accumulate.
//!
//! Pricing is Dantzig (largest reduced cost, lowest column on ties). Rows with
//! a slack column get a tiny, fixed right-hand-side perturbation so that
//! ratio-test ties are rare; the unperturbed basic solution is recomputed from
//! the final basis. If a run of degenerate pivots still occurs, the solver
//! drops to Bland's rule until the objective moves again, which rules out
//! cycling. Nothing here depends on hashing, threads or clocks, so identical
//! input gives bitwise identical output.

use log::trace;

use crate::lu::Lu;
use crate::program::{LinearProgram, Relation};
use crate::{LpError, LpSolution, Status};

/// Primal feasibility tolerance on normalized rows.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost tolerance, relative to the largest objective coefficient.
pub const OPT_TOL: f64 = 1e-7;
/// Smallest admissible pivot element.
pub const PIVOT_TOL: f64 = 1e-10;

const DROP_TOL: f64 = 1e-13;
const TIE_TOL: f64 = 1e-12;
const DEGENERATE_STREAK: usize = 50;
const PERTURBATION: f64 = 1e-9;
const REINVERT_EVERY: usize = 40;

/// Deterministic value in `[0, 1)` for row `r` (splitmix64 finalizer).
fn jitter(r: usize) -> f64 {
    let mut z = (r as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

type SparseVec = Vec<(usize, f64)>;

/// Elementary transformation replacing basis position `pos` by a column whose
/// transformed entries are `entries` (off-pivot) and `pivot`.
struct Eta {
    pos: usize,
    pivot: f64,
    entries: SparseVec,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Revised {
    m: usize,
    columns: Vec<SparseVec>,
    kinds: Vec<ColKind>,
    /// Unit column each row starts with (its slack or artificial).
    start: Vec<usize>,
    rhs: Vec<f64>,
    /// Column held at each basis position.
    basis: Vec<usize>,
    basic: Vec<bool>,
    /// Values of the basic variables, by position.
    x: Vec<f64>,
    lu: Lu,
    etas: Vec<Eta>,
    since_reinvert: usize,
    iterations: usize,
}

impl Revised {
    fn ftran(&self, v: &mut [f64]) {
        self.lu.solve(v);
        for eta in &self.etas {
            let vp = v[eta.pos];
            if vp == 0.0 {
                continue;
            }
            let vp = vp / eta.pivot;
            v[eta.pos] = vp;
            for &(i, a) in &eta.entries {
                v[i] -= a * vp;
            }
        }
    }

    fn btran(&self, u: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = u[eta.pos];
            for &(i, a) in &eta.entries {
                s -= u[i] * a;
            }
            u[eta.pos] = s / eta.pivot;
        }
        self.lu.solve_transpose(u);
    }

    fn column_dense(&self, col: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        for &(r, a) in &self.columns[col] {
            v[r] = a;
        }
        self.ftran(&mut v);
        v
    }

    fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }

    /// Refactors the current basis and recomputes the basic values. Columns
    /// that turn out numerically dependent are swapped for the unit column of
    /// a row the factorization left unpivoted.
    fn reinvert(&mut self) {
        let cols: Vec<&[(usize, f64)]> = self.basis.iter().map(|&c| self.columns[c].as_slice()).collect();
        let (mut lu, deficiency) = Lu::factor(self.m, &cols);
        for (&row, &pos) in deficiency.rows.iter().zip(&deficiency.positions) {
            // The row's start column is basic only if some other column took
            // its pivot; its slack of the opposite sign is then free.
            let unit = std::iter::once(self.start[row])
                .chain(0..self.columns.len())
                .find(|&c| !self.basic[c] && self.kinds[c] != ColKind::Structural && self.columns[c][0].0 == row)
                .expect("every row owns a slack or an artificial column");
            trace!("reinversion replaced dependent column {} by {unit}", self.basis[pos]);
            self.basic[self.basis[pos]] = false;
            self.basis[pos] = unit;
            self.basic[unit] = true;
            lu.append_unit(row, pos, self.columns[unit][0].1);
        }
        self.lu = lu;
        self.etas.clear();
        let mut x = self.rhs.clone();
        self.ftran(&mut x);
        self.x = x;
        self.since_reinvert = 0;
    }

    fn pivot(&mut self, pos: usize, col: usize, alpha: &[f64], step: f64) {
        for (xp, &a) in self.x.iter_mut().zip(alpha) {
            if a != 0.0 {
                *xp -= step * a;
            }
        }
        self.x[pos] = step;
        self.basic[self.basis[pos]] = false;
        self.basic[col] = true;
        self.basis[pos] = col;
        self.push_eta(pos, alpha);
        self.iterations += 1;
        self.since_reinvert += 1;
        if self.since_reinvert >= REINVERT_EVERY {
            self.reinvert();
        }
    }

    fn reduced_costs(&self, costs: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&c| costs[c]).collect();
        self.btran(&mut y);
        self.columns
            .iter()
            .zip(costs)
            .map(|(col, &c)| c - col.iter().map(|&(r, a)| y[r] * a).sum::<f64>())
            .collect()
    }

    fn entering(&self, d: &[f64], allowed: &[bool], tol: f64, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &dj) in d.iter().enumerate() {
            if self.basic[j] || !allowed[j] || dj <= tol {
                continue;
            }
            if bland {
                return Some(j);
            }
            match best {
                Some((_, bd)) if dj <= bd => {}
                _ => best = Some((j, dj)),
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, alpha: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut min_ratio = f64::INFINITY;
        for (p, &a) in alpha.iter().enumerate() {
            if a > PIVOT_TOL {
                min_ratio = min_ratio.min(self.x[p].max(0.0) / a);
            }
        }
        if !min_ratio.is_finite() {
            return None;
        }
        let slack = TIE_TOL * min_ratio.max(1.0);
        let mut choice: Option<(usize, f64)> = None;
        for (p, &a) in alpha.iter().enumerate() {
            if a <= PIVOT_TOL || self.x[p].max(0.0) / a > min_ratio + slack {
                continue;
            }
            choice = match choice {
                None => Some((p, a)),
                Some((c, ac)) => {
                    let better = if bland {
                        self.basis[p] < self.basis[c]
                    } else {
                        a > ac || (a == ac && self.basis[p] < self.basis[c])
                    };
                    Some(if better { (p, a) } else { (c, ac) })
                }
            };
        }
        choice.map(|(p, a)| (p, self.x[p].max(0.0) / a))
    }

    fn optimize(&mut self, costs: &[f64], allowed: &[bool], tol: f64, limit: usize) -> Result<Outcome, LpError> {
        let mut streak = 0usize;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let d = self.reduced_costs(costs);
            let Some(q) = self.entering(&d, allowed, tol, bland) else {
                return Ok(Outcome::Optimal);
            };
            let alpha = self.column_dense(q);
            let Some((p, ratio)) = self.leaving(&alpha, bland) else {
                return Ok(Outcome::Unbounded);
            };
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            if ratio <= TIE_TOL {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(p, q, &alpha, ratio);
        }
    }

    /// Pivots basic artificials out wherever some other column has a nonzero
    /// in their row. Artificials left behind sit on redundant rows at zero.
    fn expel_artificials(&mut self) {
        for p in 0..self.m {
            if self.kinds[self.basis[p]] != ColKind::Artificial {
                continue;
            }
            let mut rho = vec![0.0; self.m];
            rho[p] = 1.0;
            self.btran(&mut rho);
            let mut best: Option<(usize, f64)> = None;
            for (j, col) in self.columns.iter().enumerate() {
                if self.basic[j] || self.kinds[j] == ColKind::Artificial {
                    continue;
                }
                let v: f64 = col.iter().map(|&(r, a)| rho[r] * a).sum::<f64>().abs();
                if v > PIVOT_TOL && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.column_dense(j);
                let step = self.x[p] / alpha[p];
                self.pivot(p, j, &alpha, step);
            }
        }
    }
}

/// Solves `lp` (maximization). Infeasible and unbounded programs are reported
/// through [`Status`], not as errors.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let nvars = lp.num_vars();

    // Fixed variables are substituted out; the rest are shifted to y = x - lo >= 0.
    let mut col_of = vec![None; nvars];
    let mut var_of = Vec::new();
    for (j, b) in lp.bounds.iter().enumerate() {
        if b.hi > b.lo {
            col_of[j] = Some(var_of.len());
            var_of.push(j);
        }
    }
    let k = var_of.len();

    let mut rows: Vec<(SparseVec, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut coeffs = Vec::new();
        let mut rhs = c.rhs;
        for (j, &a) in c.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            rhs -= a * lp.bounds[j].lo;
            if let Some(col) = col_of[j] {
                coeffs.push((col, a));
            }
        }
        rows.push((coeffs, c.relation, rhs));
    }
    for (col, &j) in var_of.iter().enumerate() {
        let b = lp.bounds[j];
        if b.hi.is_finite() {
            rows.push((vec![(col, 1.0)], Relation::Le, b.hi - b.lo));
        }
    }

    let infeasible = |iterations| LpSolution {
        status: Status::Infeasible,
        x: lp.bounds.iter().map(|b| b.lo).collect(),
        objective_value: f64::NEG_INFINITY,
        iterations,
    };

    // Normalize, orient to rhs >= 0 and decide which auxiliary columns each row needs.
    struct Row {
        coeffs: SparseVec,
        rhs: f64,
        slack: Option<f64>,
        artificial: bool,
    }
    let mut prepared = Vec::with_capacity(rows.len());
    for (mut coeffs, relation, mut rhs) in rows {
        let scale = coeffs.iter().fold(0.0_f64, |m, (_, a)| m.max(a.abs()));
        if scale == 0.0 {
            let violated = match relation {
                Relation::Le => rhs < -FEAS_TOL,
                Relation::Ge => rhs > FEAS_TOL,
                Relation::Eq => rhs.abs() > FEAS_TOL,
            };
            if violated {
                return Ok(infeasible(0));
            }
            continue;
        }
        coeffs.iter_mut().for_each(|(_, a)| *a /= scale);
        rhs /= scale;
        let mut slack = match relation {
            Relation::Le => Some(1.0),
            Relation::Ge => Some(-1.0),
            Relation::Eq => None,
        };
        if rhs < 0.0 {
            coeffs.iter_mut().for_each(|(_, a)| *a = -*a);
            rhs = -rhs;
            slack = slack.map(|s| -s);
        }
        let artificial = slack != Some(1.0);
        prepared.push(Row {
            coeffs,
            rhs,
            slack,
            artificial,
        });
    }

    let m = prepared.len();
    let mut columns: Vec<SparseVec> = vec![Vec::new(); k];
    let mut kinds = vec![ColKind::Structural; k];
    let mut start = vec![0usize; m];
    let mut rhs = Vec::with_capacity(m);
    let true_rhs: Vec<f64> = prepared.iter().map(|r| r.rhs).collect();
    for (r, row) in prepared.iter().enumerate() {
        for &(c, a) in &row.coeffs {
            columns[c].push((r, a));
        }
        rhs.push(match row.slack {
            Some(_) => row.rhs + PERTURBATION * (1.0 + jitter(r)) * row.rhs.max(1.0),
            None => row.rhs,
        });
    }
    for (r, row) in prepared.iter().enumerate() {
        if let Some(s) = row.slack {
            columns.push(vec![(r, s)]);
            kinds.push(ColKind::Slack);
            if !row.artificial {
                start[r] = columns.len() - 1;
            }
        }
    }
    for (r, row) in prepared.iter().enumerate() {
        if row.artificial {
            columns.push(vec![(r, 1.0)]);
            kinds.push(ColKind::Artificial);
            start[r] = columns.len() - 1;
        }
    }
    let cols = columns.len();
    let n_art = kinds.iter().filter(|k| **k == ColKind::Artificial).count();

    let mut basic = vec![false; cols];
    for &c in &start {
        basic[c] = true;
    }
    let mut t = Revised {
        m,
        columns,
        kinds,
        basis: start.clone(),
        start,
        x: rhs.clone(),
        rhs,
        basic,
        lu: Lu::identity(m),
        etas: Vec::new(),
        since_reinvert: 0,
        iterations: 0,
    };
    let limit = 20_000 + 50 * (m + cols);

    if n_art > 0 {
        let phase1: Vec<f64> = t
            .kinds
            .iter()
            .map(|kd| if *kd == ColKind::Artificial { -1.0 } else { 0.0 })
            .collect();
        let allowed = vec![true; cols];
        // Phase 1 is bounded above by zero.
        t.optimize(&phase1, &allowed, OPT_TOL, limit)?;
        let infeasibility: f64 = (0..m)
            .filter(|&p| t.kinds[t.basis[p]] == ColKind::Artificial)
            .map(|p| t.x[p].max(0.0))
            .sum();
        if infeasibility > FEAS_TOL {
            trace!("phase 1 ended with infeasibility {infeasibility:e}");
            return Ok(infeasible(t.iterations));
        }
        t.expel_artificials();
    }

    let mut costs = vec![0.0; cols];
    for (col, &j) in var_of.iter().enumerate() {
        costs[col] = lp.objective[j];
    }
    let cmax = costs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let allowed: Vec<bool> = t.kinds.iter().map(|kd| *kd != ColKind::Artificial).collect();
    let outcome = t.optimize(&costs, &allowed, OPT_TOL * cmax, limit)?;

    // Undo the perturbation by solving the final basis against the true rhs.
    t.rhs = true_rhs;
    t.reinvert();
    let mut y = vec![0.0; cols];
    for p in 0..m {
        y[t.basis[p]] = t.x[p].max(0.0);
    }
    let mut x: Vec<f64> = lp.bounds.iter().map(|b| b.lo).collect();
    for (col, &j) in var_of.iter().enumerate() {
        let b = lp.bounds[j];
        x[j] = (b.lo + y[col]).min(b.hi);
    }

    let status = match outcome {
        Outcome::Optimal => Status::Optimal,
        Outcome::Unbounded => Status::Unbounded,
    };
    let objective_value = match status {
        Status::Unbounded => f64::INFINITY,
        _ => lp.objective_at(&x),
    };
    Ok(LpSolution {
        status,
        x,
        objective_value,
        iterations: t.iterations,
    })
}
