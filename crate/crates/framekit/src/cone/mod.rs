//! Standard-form cone programs over the nonnegative orthant and second-order
//! cones, and a self-contained primal-dual interior-point solver for them.
//!
//! A program is
//! ```text
//!     minimize    c' x
//!     subject to  A x = b
//!                 M_k x + v_k  in  K_k        for every cone block k
//! ```
//! where each `K_k` is either `R+^d` or the second-order cone
//! `{ u : u_0 >= ||u_1..d-1|| }`.

mod solver;

pub use solver::{solve, solve_with, SolverSettings};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a sparse matrix: (column, coefficient) pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Row-wise sparse matrix.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub ncols: usize,
    pub rows: Vec<SparseRow>,
}

impl SparseMatrix {
    pub fn empty(ncols: usize) -> Self {
        SparseMatrix { ncols, rows: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, row: SparseRow) {
        self.rows.push(row);
    }

    /// y += alpha * A x
    pub fn mul_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(c, a) in row {
                acc += a * x[c];
            }
            y[r] += alpha * acc;
        }
    }

    /// y += alpha * A' x
    pub fn tr_mul_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            let xr = alpha * x[r];
            if xr != 0.0 {
                for &(c, a) in row {
                    y[c] += a * xr;
                }
            }
        }
    }
}

/// Cone tag for one block of constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    /// Componentwise nonnegativity, dimension = number of rows.
    Nonnegative,
    /// Second-order cone; first coordinate is the cone radius.
    SecondOrder,
}

/// One cone block: `map * x + offset` must lie in the tagged cone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeBlockSpec {
    pub kind: ConeKind,
    pub map: SparseMatrix,
    pub offset: Vec<f64>,
}

impl ConeBlockSpec {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }
}

/// A cone program in canonical form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeProgram {
    pub num_vars: usize,
    /// Linear cost vector, length `num_vars`.
    pub objective: Vec<f64>,
    pub equality: SparseMatrix,
    pub equality_rhs: Vec<f64>,
    pub blocks: Vec<ConeBlockSpec>,
}

impl ConeProgram {
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Self {
        ConeProgram {
            num_vars,
            objective,
            equality: SparseMatrix::empty(num_vars),
            equality_rhs: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, row: SparseRow, rhs: f64) {
        self.equality.push_row(row);
        self.equality_rhs.push(rhs);
    }

    pub fn add_block(&mut self, kind: ConeKind, map: SparseMatrix, offset: Vec<f64>) {
        self.blocks.push(ConeBlockSpec { kind, map, offset });
    }

    /// Total number of cone rows.
    pub fn cone_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::MalformedProgram(format!(
                "objective length {} != num_vars {}",
                self.objective.len(),
                self.num_vars
            )));
        }
        if self.equality.nrows() != self.equality_rhs.len() {
            return Err(Error::MalformedProgram(
                "equality rhs length mismatch".into(),
            ));
        }
        if self.blocks.is_empty() {
            return Err(Error::MalformedProgram("program has no cone blocks".into()));
        }
        let check_matrix = |m: &SparseMatrix, what: &str| -> Result<()> {
            for row in &m.rows {
                for &(c, a) in row {
                    if c >= self.num_vars {
                        return Err(Error::MalformedProgram(format!(
                            "{what} references variable {c} out of {}",
                            self.num_vars
                        )));
                    }
                    if !a.is_finite() {
                        return Err(Error::MalformedProgram(format!(
                            "{what} has non-finite coefficient"
                        )));
                    }
                }
            }
            Ok(())
        };
        check_matrix(&self.equality, "equality constraint")?;
        for (k, b) in self.blocks.iter().enumerate() {
            if b.map.nrows() != b.offset.len() {
                return Err(Error::MalformedProgram(format!(
                    "block {k}: map rows {} != offset length {}",
                    b.map.nrows(),
                    b.offset.len()
                )));
            }
            if b.kind == ConeKind::SecondOrder && b.dim() < 2 {
                return Err(Error::MalformedProgram(format!(
                    "block {k}: second-order cone needs dim >= 2, got {}",
                    b.dim()
                )));
            }
            if b.dim() == 0 {
                return Err(Error::MalformedProgram(format!("block {k}: empty block")));
            }
            check_matrix(&b.map, "cone block")?;
        }
        Ok(())
    }

    /// JSON dump of the canonical form, for debugging and external checks.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("cone program serializes")
    }
}

/// Solver exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    NumericalFailure,
}

/// Output of a cone-program solve.
#[derive(Clone, Debug)]
pub struct ConeSolution {
    pub primal: Vec<f64>,
    /// Multipliers for the equality constraints.
    pub dual_eq: Vec<f64>,
    /// Multipliers for the cone constraints, stacked in block order.
    pub dual_cone: Vec<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Relative duality gap at exit.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_bad_programs() {
        let mut p = ConeProgram::new(2, vec![1.0, 0.0]);
        assert!(p.validate().is_err()); // no blocks
        let mut m = SparseMatrix::empty(2);
        m.push_row(vec![(0, 1.0)]);
        p.add_block(ConeKind::SecondOrder, m, vec![0.0]);
        assert!(p.validate().is_err()); // soc dim 1

        let mut p = ConeProgram::new(2, vec![1.0]);
        let mut m = SparseMatrix::empty(2);
        m.push_row(vec![(0, 1.0)]);
        p.add_block(ConeKind::Nonnegative, m, vec![0.0]);
        assert!(p.validate().is_err()); // objective length

        let mut p = ConeProgram::new(2, vec![1.0, 0.0]);
        let mut m = SparseMatrix::empty(2);
        m.push_row(vec![(5, 1.0)]);
        p.add_block(ConeKind::Nonnegative, m, vec![0.0]);
        assert!(p.validate().is_err()); // bad index
    }
}
