//! Semidefinite-program container, dense interior-point solver, and SDPA
//! file export.
//!
//! A problem holds symmetric PSD matrix-variable blocks, free scalar
//! variables, affine equality constraints over their entries, and a linear
//! objective (maximized). Constraint coefficients address the upper
//! triangle of each block: a coefficient `v` on entry `(i, j)`, `i <= j`,
//! contributes `v * X[i,j]` once.

pub mod sdpa;
pub mod solver;

use nalgebra::DMatrix;
use thiserror::Error;

/// Handle to a PSD matrix-variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub(crate) u32);

/// A scalar decision variable: either a free scalar or an entry of a PSD
/// block (canonicalized to the upper triangle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    Free(u32),
    Entry { block: u32, row: u16, col: u16 },
}

impl VarId {
    /// Entry of a block, folding `(j, i)` onto `(i, j)`.
    pub fn entry(block: BlockId, row: usize, col: usize) -> VarId {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        VarId::Entry {
            block: block.0,
            row: r as u16,
            col: c as u16,
        }
    }
}

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("reference to undeclared variable {0:?}")]
    UndeclaredVariable(VarId),
    #[error("empty linear combination in equality constraint")]
    EmptyConstraint,
    #[error("block size must be at least 1")]
    ZeroBlock,
}

/// One affine equality `sum coeff * var = rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub rhs: f64,
}

/// Solver status for a completed solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    /// A primal point satisfying the equalities and PSD constraints to
    /// tolerance was found.
    Feasible,
    /// A verified dual improving ray proves the equalities are inconsistent
    /// with the PSD cone.
    InfeasibleCertificate,
    /// No conclusion; iteration limit or numerical breakdown. Never
    /// reported as infeasible.
    NumericalFailure,
}

/// Solver options. Defaults: duality gap 1e-9, residuals 1e-9, 200
/// iterations.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
    /// Step fraction toward the cone boundary.
    pub step_frac: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            max_iter: 200,
            step_frac: 0.98,
        }
    }
}

/// Result of a solve.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Infinity norm of the equality residual at the returned point.
    pub eq_residual: f64,
    /// Relative duality gap at the returned point.
    pub rel_gap: f64,
    /// Minimum eigenvalue per block.
    pub min_eigenvalues: Vec<f64>,
    /// Normalized dual improving ray backing an infeasibility certificate.
    pub dual_ray: Option<Vec<f64>>,
}

impl SdpSolution {
    pub fn value_of(&self, v: VarId) -> f64 {
        match v {
            VarId::Free(i) => self.free[i as usize],
            VarId::Entry { block, row, col } => self.blocks[block as usize][(row as usize, col as usize)],
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// A semidefinite feasibility/optimization problem.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub(crate) block_sizes: Vec<usize>,
    pub(crate) num_free: usize,
    pub(crate) constraints: Vec<Constraint>,
    /// Linear objective, maximized.
    pub(crate) objective: Vec<(VarId, f64)>,
}

impl SdpProblem {
    pub fn new() -> SdpProblem {
        SdpProblem::default()
    }

    /// Declares a PSD block of the given size and returns its handle.
    pub fn declare_block(&mut self, size: usize) -> BlockId {
        assert!(size >= 1, "block size must be at least 1");
        self.block_sizes.push(size);
        BlockId((self.block_sizes.len() - 1) as u32)
    }

    /// Declares a free scalar variable.
    pub fn declare_free(&mut self) -> VarId {
        self.num_free += 1;
        VarId::Free((self.num_free - 1) as u32)
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_size(&self, b: BlockId) -> usize {
        self.block_sizes[b.0 as usize]
    }

    pub fn num_free(&self) -> usize {
        self.num_free
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn check_var(&self, v: VarId) -> Result<(), SdpError> {
        match v {
            VarId::Free(i) => {
                if (i as usize) < self.num_free {
                    Ok(())
                } else {
                    Err(SdpError::UndeclaredVariable(v))
                }
            }
            VarId::Entry { block, row, col } => {
                let ok = (block as usize) < self.block_sizes.len()
                    && (col as usize) < self.block_sizes[block as usize]
                    && row <= col;
                if ok {
                    Ok(())
                } else {
                    Err(SdpError::UndeclaredVariable(v))
                }
            }
        }
    }

    /// Adds `sum coeff * var = rhs`. Duplicate references (including a
    /// `(j,i)` alias of `(i,j)`) are folded by summing coefficients.
    pub fn add_equality(
        &mut self,
        lincomb: impl IntoIterator<Item = (VarId, f64)>,
        rhs: f64,
    ) -> Result<usize, SdpError> {
        let mut folded: std::collections::BTreeMap<VarId, f64> = std::collections::BTreeMap::new();
        for (v, c) in lincomb {
            self.check_var(v)?;
            *folded.entry(v).or_insert(0.0) += c;
        }
        folded.retain(|_, c| *c != 0.0);
        if folded.is_empty() && rhs == 0.0 {
            // Trivial 0 = 0 row; record nothing but keep ids stable by
            // storing it anyway (harmless and keeps callers simple).
        }
        if folded.is_empty() && rhs != 0.0 {
            // Structurally inconsistent; keep the row so the solver reports
            // an infeasibility certificate rather than erroring here.
        }
        self.constraints.push(Constraint {
            terms: folded.into_iter().collect(),
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Sets the linear objective (maximized). Terms are canonicalized by
    /// variable so the stored form is order-independent.
    pub fn set_objective_max(&mut self, terms: impl IntoIterator<Item = (VarId, f64)>) {
        let mut folded: std::collections::BTreeMap<VarId, f64> = std::collections::BTreeMap::new();
        for (v, c) in terms {
            *folded.entry(v).or_insert(0.0) += c;
        }
        self.objective = folded.into_iter().filter(|(_, c)| *c != 0.0).collect();
    }

    /// Solves with the given options.
    pub fn solve(&self, opts: &SolveOptions) -> SdpSolution {
        solver::solve(self, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_handles_fold_lower_triangle() {
        let mut p = SdpProblem::new();
        let b = p.declare_block(3);
        assert_eq!(VarId::entry(b, 2, 1), VarId::entry(b, 1, 2));
    }

    #[test]
    fn undeclared_variable_rejected() {
        let mut p = SdpProblem::new();
        let b = p.declare_block(2);
        let bad = VarId::Entry { block: 5, row: 0, col: 0 };
        assert!(p.add_equality([(bad, 1.0)], 0.0).is_err());
        let bad2 = VarId::entry(b, 0, 2);
        assert!(p.add_equality([(bad2, 1.0)], 0.0).is_err());
    }

    #[test]
    fn three_blocks_give_distinct_handles() {
        let mut p = SdpProblem::new();
        let a = p.declare_block(1);
        let b = p.declare_block(2);
        let c = p.declare_block(3);
        assert!(a != b && b != c && a != c);
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(p.block_size(c), 3);
    }
}
