use std::fmt;

use crate::LpError;

/// Relation between a constraint row and its right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Box bounds for one variable. `hi` may be `f64::INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const NON_NEGATIVE: Bound = Bound {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Bound { lo, hi }
    }

    pub fn fixed(value: f64) -> Self {
        Bound {
            lo: value,
            hi: value,
        }
    }
}

impl Default for Bound {
    fn default() -> Self {
        Bound::NON_NEGATIVE
    }
}

/// A dense linear program in maximization form.
///
/// Every variable carries a `[lo, hi]` box with `lo >= 0` and finite, and
/// `hi` possibly infinite. Rows are stored densely; the solver normalizes each
/// row by its largest absolute coefficient before pivoting.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bound>,
}

impl LinearProgram {
    /// An empty program over `num_vars` non-negative variables with a zero objective.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![Bound::NON_NEGATIVE; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) -> &mut Self {
        self.objective[var] = coeff;
        self
    }

    pub fn set_bound(&mut self, var: usize, bound: Bound) -> &mut Self {
        self.bounds[var] = bound;
        self
    }

    /// Adds a row given as `(variable, coefficient)` pairs. Repeated variables accumulate.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> &mut Self {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(var, coeff) in terms {
            coeffs[var] += coeff;
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn add_dense(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    /// Checks the structural invariants the solver relies on.
    pub fn validate(&self) -> Result<(), LpError> {
        let v = self.num_vars();
        if self.bounds.len() != v {
            return Err(LpError::Malformed(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                v
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!("objective coefficient {j} is not finite")));
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != v {
                return Err(LpError::Malformed(format!(
                    "row {r} has {} coefficients, expected {v}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {r} has a non-finite rhs")));
            }
            if row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(LpError::Malformed(format!("row {r} has a non-finite coefficient")));
            }
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if !b.lo.is_finite() || b.lo < 0.0 || b.hi.is_nan() || b.lo > b.hi {
                return Err(LpError::Malformed(format!(
                    "variable {j} has invalid bounds [{}, {}]",
                    b.lo, b.hi
                )));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest signed violation over all rows and bounds at `x`.
    ///
    /// Rows are scaled by their largest absolute coefficient first. A result
    /// `<= 0` means `x` is feasible; `+inf`/`-inf` bounds contribute `-inf`.
    pub fn check_feasible(&self, x: &[f64]) -> Result<f64, LpError> {
        if x.len() != self.num_vars() {
            return Err(LpError::DimensionMismatch {
                expected: self.num_vars(),
                got: x.len(),
            });
        }
        let mut worst = f64::NEG_INFINITY;
        for row in &self.constraints {
            let scale = row
                .coeffs
                .iter()
                .fold(0.0_f64, |m, c| m.max(c.abs()))
                .max(f64::MIN_POSITIVE);
            let scale = if row.coeffs.iter().all(|c| *c == 0.0) { 1.0 } else { scale };
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let diff = (lhs - row.rhs) / scale;
            let violation = match row.relation {
                Relation::Le => diff,
                Relation::Ge => -diff,
                Relation::Eq => diff.abs(),
            };
            worst = worst.max(violation);
        }
        for (b, &v) in self.bounds.iter().zip(x) {
            worst = worst.max(b.lo - v);
            if b.hi.is_finite() {
                worst = worst.max(v - b.hi);
            }
        }
        Ok(worst)
    }
}

/// Plain-text dump in a loose MPS-like layout, for eyeballing generated programs.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "NAME          LP")?;
        writeln!(f, "OBJSENSE      MAX")?;
        writeln!(f, "ROWS")?;
        for (r, row) in self.constraints.iter().enumerate() {
            let kind = match row.relation {
                Relation::Le => 'L',
                Relation::Eq => 'E',
                Relation::Ge => 'G',
            };
            writeln!(f, " {kind}  R{r}")?;
        }
        writeln!(f, "COLUMNS")?;
        for j in 0..self.num_vars() {
            if self.objective[j] != 0.0 {
                writeln!(f, "    X{j}  OBJ  {}", self.objective[j])?;
            }
            for (r, row) in self.constraints.iter().enumerate() {
                if row.coeffs[j] != 0.0 {
                    writeln!(f, "    X{j}  R{r}  {}", row.coeffs[j])?;
                }
            }
        }
        writeln!(f, "RHS")?;
        for (r, row) in self.constraints.iter().enumerate() {
            if row.rhs != 0.0 {
                writeln!(f, "    RHS  R{r}  {}", row.rhs)?;
            }
        }
        writeln!(f, "BOUNDS")?;
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lo == b.hi {
                writeln!(f, " FX BND  X{j}  {}", b.lo)?;
                continue;
            }
            if b.lo != 0.0 {
                writeln!(f, " LO BND  X{j}  {}", b.lo)?;
            }
            if b.hi.is_finite() {
                writeln!(f, " UP BND  X{j}  {}", b.hi)?;
            }
        }
        writeln!(f, "ENDATA")
    }
}
