//! Brute-force vertex enumeration for small bounded linear programs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use swarm_lp::{Bound, LinearProgram, Relation};

/// One hyperplane `a . x = b` that can be made active at a vertex.
struct Plane {
    a: Vec<f64>,
    b: f64,
}

fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..n {
                        m[r][c] -= f * m[col][c];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
    let tol = 1e-7;
    for c in &lp.constraints {
        let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = c.coeffs.iter().fold(1.0_f64, |m, a| m.max(a.abs())).max(c.rhs.abs());
        let ok = match c.relation {
            Relation::Le => lhs <= c.rhs + tol * scale,
            Relation::Ge => lhs >= c.rhs - tol * scale,
            Relation::Eq => (lhs - c.rhs).abs() <= tol * scale,
        };
        if !ok {
            return false;
        }
    }
    lp.bounds
        .iter()
        .zip(x)
        .all(|(b, &v)| v >= b.lo - tol && v <= b.hi + tol)
}

/// Best objective over all basic feasible points, or `None` when no vertex is feasible.
/// Requires every variable to have a finite upper bound.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let v = lp.num_vars();
    let mut equalities = Vec::new();
    let mut planes = Vec::new();
    for c in &lp.constraints {
        let p = Plane {
            a: c.coeffs.clone(),
            b: c.rhs,
        };
        if c.relation == Relation::Eq {
            equalities.push(p);
        } else {
            planes.push(p);
        }
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        let mut a = vec![0.0; v];
        a[j] = 1.0;
        planes.push(Plane { a: a.clone(), b: b.lo });
        assert!(b.hi.is_finite(), "oracle needs a bounded box");
        planes.push(Plane { a, b: b.hi });
    }
    if equalities.len() > v {
        return None;
    }
    let mut best: Option<f64> = None;
    for pick in combinations(planes.len(), v - equalities.len()) {
        let mut m: Vec<Vec<f64>> = equalities.iter().map(|p| p.a.clone()).collect();
        let mut rhs: Vec<f64> = equalities.iter().map(|p| p.b).collect();
        for &i in &pick {
            m.push(planes[i].a.clone());
            rhs.push(planes[i].b);
        }
        if let Some(x) = solve_square(m, rhs) {
            if feasible(lp, &x) {
                let obj = lp.objective_at(&x);
                best = Some(best.map_or(obj, |b: f64| b.max(obj)));
            }
        }
    }
    best
}

pub fn random_bounded_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let v = rng.gen_range(1..=6);
    let rows = rng.gen_range(1..=8);
    let mut lp = LinearProgram::new(v);
    for j in 0..v {
        lp.set_objective(j, rng.gen_range(-5.0..5.0));
        let lo = if rng.gen_bool(0.2) { rng.gen_range(0.0..1.0) } else { 0.0 };
        lp.set_bound(j, Bound::new(lo, lo + rng.gen_range(0.5..10.0)));
    }
    for _ in 0..rows {
        let coeffs: Vec<f64> = (0..v)
            .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(-4.0..4.0) })
            .collect();
        let relation = match rng.gen_range(0..10) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = rng.gen_range(-3.0..12.0);
        lp.add_dense(coeffs, relation, rhs);
    }
    lp
}
