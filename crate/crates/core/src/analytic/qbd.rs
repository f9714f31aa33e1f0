//! Quasi-birth-death chains: block representation, the rate-matrix
//! iteration, and the boundary balance solve.
//!
//! A QBD is a 1D-infinite CTMC whose levels beyond a finite boundary share
//! the same block-tridiagonal transitions `A0` (up), `A1` (local), `A2`
//! (down). The stationary distribution of level `l0 + 1 + n` is
//! `x R^n` where `x` is the first repeating level's (sub)distribution and
//! `R` solves `A0 + R A1 + R^2 A2 = 0`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Transition blocks of one boundary level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBlocks {
    /// To the next level up.
    pub up: DMatrix<f64>,
    /// Within the level (diagonal completes the generator rows).
    pub local: DMatrix<f64>,
    /// To the next level down; all zeros at level 0.
    pub down: DMatrix<f64>,
}

/// A QBD generator: boundary levels `0..=l0` with per-level blocks, then
/// repeating levels with blocks `up`/`local`/`down`.
#[derive(Debug, Clone, PartialEq)]
pub struct QbdBlocks {
    pub boundary: Vec<LevelBlocks>,
    pub up: DMatrix<f64>,
    pub local: DMatrix<f64>,
    pub down: DMatrix<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QbdError {
    #[error("malformed QBD blocks: {reason}")]
    Malformed { reason: String },
    #[error("rate matrix iteration did not converge after {iterations} iterations (residual {residual}); the repeating part may not be positive recurrent")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("boundary balance system is singular or rank-deficient")]
    SingularBoundary,
    #[error("stationary distribution failed validation: {reason}")]
    BadSolution { reason: String },
}

const ROW_SUM_TOL: f64 = 1e-10;
const SIGN_TOL: f64 = 1e-12;

impl QbdBlocks {
    pub fn phase_count(&self) -> usize {
        self.local.nrows()
    }

    /// Index of the last boundary level.
    pub fn boundary_levels(&self) -> usize {
        self.boundary.len()
    }

    /// Structural checks: consistent dimensions, nonnegative off-diagonal
    /// entries, nonnegative `up`/`down` blocks, and zero row sums for the
    /// assembled generator at every level.
    pub fn validate(&self) -> Result<(), QbdError> {
        let m = self.phase_count();
        let err = |reason: String| Err(QbdError::Malformed { reason });
        if m == 0 {
            return err("empty phase space".into());
        }
        if self.boundary.is_empty() {
            return err("at least one boundary level is required".into());
        }
        let square = |mat: &DMatrix<f64>, name: &str| -> Result<(), QbdError> {
            if mat.nrows() != m || mat.ncols() != m {
                return Err(QbdError::Malformed {
                    reason: format!("{name} is {}x{}, expected {m}x{m}", mat.nrows(), mat.ncols()),
                });
            }
            Ok(())
        };
        let nonneg = |mat: &DMatrix<f64>, name: &str| -> Result<(), QbdError> {
            if mat.iter().any(|&v| v < -SIGN_TOL) {
                return Err(QbdError::Malformed { reason: format!("{name} has negative entries") });
            }
            Ok(())
        };
        let local_signs = |mat: &DMatrix<f64>, name: &str| -> Result<(), QbdError> {
            for r in 0..m {
                for c in 0..m {
                    let v = mat[(r, c)];
                    if r == c && v > SIGN_TOL {
                        return Err(QbdError::Malformed {
                            reason: format!("{name} has positive diagonal at {r}"),
                        });
                    }
                    if r != c && v < -SIGN_TOL {
                        return Err(QbdError::Malformed {
                            reason: format!("{name} has negative off-diagonal at ({r}, {c})"),
                        });
                    }
                }
            }
            Ok(())
        };
        let zero_rows = |sum: DVector<f64>, name: &str| -> Result<(), QbdError> {
            match sum.iter().enumerate().find(|(_, v)| v.abs() > ROW_SUM_TOL) {
                Some((r, v)) => Err(QbdError::Malformed {
                    reason: format!("{name} generator row {r} sums to {v}"),
                }),
                None => Ok(()),
            }
        };

        square(&self.up, "repeating up")?;
        square(&self.local, "repeating local")?;
        square(&self.down, "repeating down")?;
        nonneg(&self.up, "repeating up")?;
        nonneg(&self.down, "repeating down")?;
        local_signs(&self.local, "repeating local")?;
        let ones = DVector::from_element(m, 1.0);
        zero_rows((&self.up + &self.local + &self.down) * &ones, "repeating")?;

        for (level, blocks) in self.boundary.iter().enumerate() {
            let tag = format!("boundary level {level}");
            square(&blocks.up, &tag)?;
            square(&blocks.local, &tag)?;
            square(&blocks.down, &tag)?;
            nonneg(&blocks.up, &tag)?;
            nonneg(&blocks.down, &tag)?;
            local_signs(&blocks.local, &tag)?;
            if level == 0 && blocks.down.iter().any(|&v| v != 0.0) {
                return err("boundary level 0 has a down block".into());
            }
            zero_rows((&blocks.up + &blocks.local + &blocks.down) * &ones, &tag)?;
        }
        Ok(())
    }
}

/// Stationary distribution of a QBD: explicit boundary levels plus a
/// matrix-geometric tail.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    /// Per-phase probabilities of boundary levels `0..=l0`.
    pub boundary_probs: Vec<DVector<f64>>,
    /// Per-phase probabilities of the first repeating level `l0 + 1`.
    pub first_repeating: DVector<f64>,
    /// Rate matrix of the geometric tail.
    pub rate_matrix: DMatrix<f64>,
    /// Final residual of `A0 + R A1 + R^2 A2`.
    pub residual: f64,
}

impl StationaryDistribution {
    /// Per-phase probabilities of level `level`.
    pub fn level_probs(&self, level: usize) -> DVector<f64> {
        if level < self.boundary_probs.len() {
            return self.boundary_probs[level].clone();
        }
        let mut v = self.first_repeating.transpose();
        for _ in self.boundary_probs.len()..level {
            v = &v * &self.rate_matrix;
        }
        v.transpose()
    }

    /// Total probability of level `level`.
    pub fn level_mass(&self, level: usize) -> f64 {
        self.level_probs(level).sum()
    }

    /// Sum of all level masses, including the closed-form geometric tail.
    pub fn total_mass(&self) -> f64 {
        let m = self.rate_matrix.nrows();
        let tail_sum = (DMatrix::identity(m, m) - &self.rate_matrix)
            .lu()
            .solve(&DVector::from_element(m, 1.0))
            .expect("I - R is invertible when sp(R) < 1");
        self.boundary_probs.iter().map(|v| v.sum()).sum::<f64>()
            + (self.first_repeating.transpose() * tail_sum)[(0, 0)]
    }

    /// Expected level index, summing the geometric tail in closed form:
    /// `sum_n (L + n) x R^n 1 = x [L (I-R)^-1 + R (I-R)^-2] 1`.
    pub fn expected_level(&self) -> f64 {
        let m = self.rate_matrix.nrows();
        let identity = DMatrix::identity(m, m);
        let ones = DVector::from_element(m, 1.0);
        let i_minus_r = &identity - &self.rate_matrix;
        let lu = i_minus_r.lu();
        let inv1 = lu.solve(&ones).expect("I - R invertible");
        let inv2 = lu.solve(&inv1).expect("I - R invertible");
        let first_level = self.boundary_probs.len() as f64;
        let boundary: f64 = self
            .boundary_probs
            .iter()
            .enumerate()
            .map(|(level, v)| level as f64 * v.sum())
            .sum();
        let x = self.first_repeating.transpose();
        boundary + first_level * (&x * &inv1)[(0, 0)] + (&x * &self.rate_matrix * inv2)[(0, 0)]
    }

    /// Spectral radius of the rate matrix.
    pub fn spectral_radius(&self) -> f64 {
        self.rate_matrix
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

fn inf_norm(mat: &DMatrix<f64>) -> f64 {
    (0..mat.nrows())
        .map(|r| (0..mat.ncols()).map(|c| mat[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves the QBD: fixed-point iteration `R <- -(A0 + R^2 A2) A1^-1` from
/// `R = 0` until the quadratic residual drops below `tol`, then the boundary
/// balance equations with the normalization `sum of all levels = 1` (the
/// geometric tail summed via `(I - R)^-1`).
pub fn solve_qbd(
    blocks: &QbdBlocks,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryDistribution, QbdError> {
    blocks.validate()?;
    let m = blocks.phase_count();
    let a0 = &blocks.up;
    let a1 = &blocks.local;
    let a2 = &blocks.down;

    // Right-multiplication by A1^-1 via the transposed LU.
    let a1t_lu = a1.transpose().lu();
    let mut r = DMatrix::zeros(m, m);
    let mut residual = f64::INFINITY;
    let mut iterations = 0usize;
    while iterations < max_iter {
        iterations += 1;
        let rhs = a0 + &r * &r * a2;
        let next = match a1t_lu.solve(&rhs.transpose()) {
            Some(sol) => -sol.transpose(),
            None => return Err(QbdError::Malformed { reason: "singular local block".into() }),
        };
        let delta = inf_norm(&(&next - &r));
        r = next;
        if delta <= 1e-3 * tol || iterations.is_multiple_of(16) {
            residual = inf_norm(&(a0 + &r * a1 + &r * &r * a2));
            if residual <= tol {
                break;
            }
        }
    }
    if !(residual <= tol) {
        residual = inf_norm(&(a0 + &r * a1 + &r * &r * a2));
    }
    if !(residual <= tol) {
        return Err(QbdError::NoConvergence { iterations, residual });
    }

    // Boundary unknowns x_0..x_L (L = l0 + 1 is the first repeating level).
    // Balance columns; column 0 is replaced by the normalization.
    let levels = blocks.boundary.len() + 1;
    let n = levels * m;
    let last = levels - 1;
    let mut system = DMatrix::<f64>::zeros(n, n);

    let up_block = |level: usize| -> &DMatrix<f64> {
        if level < blocks.boundary.len() { &blocks.boundary[level].up } else { &blocks.up }
    };
    let down_block = |level: usize| -> &DMatrix<f64> {
        if level < blocks.boundary.len() { &blocks.boundary[level].down } else { &blocks.down }
    };
    let local_last = a1 + &r * a2;

    for eq_level in 0..levels {
        let local: &DMatrix<f64> = if eq_level == last {
            &local_last
        } else {
            &blocks.boundary[eq_level].local
        };
        for q in 0..m {
            let col = eq_level * m + q;
            for p in 0..m {
                system[(eq_level * m + p, col)] += local[(p, q)];
                if eq_level > 0 {
                    system[((eq_level - 1) * m + p, col)] += up_block(eq_level - 1)[(p, q)];
                }
                if eq_level < last {
                    system[((eq_level + 1) * m + p, col)] += down_block(eq_level + 1)[(p, q)];
                }
            }
        }
    }

    // Normalization column: boundary levels weight 1 per phase, the first
    // repeating level weights (I - R)^-1 1.
    let tail_weights = (DMatrix::identity(m, m) - &r)
        .lu()
        .solve(&DVector::from_element(m, 1.0))
        .ok_or(QbdError::SingularBoundary)?;
    for level in 0..levels {
        for p in 0..m {
            system[(level * m + p, 0)] =
                if level == last { tail_weights[p] } else { 1.0 };
        }
    }

    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let x = system
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(QbdError::SingularBoundary)?;

    let mut boundary_probs = Vec::with_capacity(blocks.boundary.len());
    for level in 0..blocks.boundary.len() {
        boundary_probs.push(DVector::from_fn(m, |p, _| x[level * m + p]));
    }
    let first_repeating = DVector::from_fn(m, |p, _| x[last * m + p]);

    let solution = StationaryDistribution { boundary_probs, first_repeating, rate_matrix: r, residual };

    if let Some(bad) = solution
        .boundary_probs
        .iter()
        .chain(std::iter::once(&solution.first_repeating))
        .flat_map(|v| v.iter())
        .find(|&&v| v < -1e-9)
    {
        return Err(QbdError::BadSolution { reason: format!("negative probability {bad}") });
    }
    let mass = solution.total_mass();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(QbdError::BadSolution { reason: format!("total mass {mass} != 1") });
    }
    // For a null-recurrent or transient repeating part the iteration still
    // converges, to a matrix with a unit eigenvalue; reject it.
    let sr = solution.spectral_radius();
    if sr >= 1.0 - 1e-9 {
        return Err(QbdError::BadSolution { reason: format!("spectral radius {sr} not below 1") });
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// M/M/1 as a one-phase QBD.
    fn mm1_blocks(lambda: f64, mu: f64) -> QbdBlocks {
        QbdBlocks {
            boundary: vec![LevelBlocks {
                up: DMatrix::from_element(1, 1, lambda),
                local: DMatrix::from_element(1, 1, -lambda),
                down: DMatrix::zeros(1, 1),
            }],
            up: DMatrix::from_element(1, 1, lambda),
            local: DMatrix::from_element(1, 1, -(lambda + mu)),
            down: DMatrix::from_element(1, 1, mu),
        }
    }

    /// M/M/k as a one-phase QBD with boundary levels 0..k-1.
    fn mmk_blocks(lambda: f64, mu: f64, k: u32) -> QbdBlocks {
        let boundary = (0..k)
            .map(|n| LevelBlocks {
                up: DMatrix::from_element(1, 1, lambda),
                local: DMatrix::from_element(1, 1, -(lambda + f64::from(n) * mu)),
                down: DMatrix::from_element(1, 1, f64::from(n) * mu),
            })
            .collect();
        QbdBlocks {
            boundary,
            up: DMatrix::from_element(1, 1, lambda),
            local: DMatrix::from_element(1, 1, -(lambda + f64::from(k) * mu)),
            down: DMatrix::from_element(1, 1, f64::from(k) * mu),
        }
    }

    /// Direct M/M/k stationary probabilities for levels 0..=n_max.
    fn mmk_direct(lambda: f64, mu: f64, k: u32, n_max: usize) -> Vec<f64> {
        let kf = f64::from(k);
        let mut unnorm = vec![1.0f64];
        for n in 1..=n_max {
            let prev = unnorm[n - 1];
            let dep = if (n as u32) <= k { f64::from(n as u32) * mu } else { kf * mu };
            unnorm.push(prev * lambda / dep);
        }
        // Normalize including the geometric tail beyond n_max.
        let tail_ratio = lambda / (kf * mu);
        let total: f64 = unnorm.iter().sum::<f64>()
            + unnorm[n_max] * tail_ratio / (1.0 - tail_ratio);
        unnorm.iter().map(|u| u / total).collect()
    }

    #[test]
    fn mm1_geometric_solution() {
        let (lambda, mu) = (0.6, 1.0);
        let sol = solve_qbd(&mm1_blocks(lambda, mu), 1e-12, 100_000).unwrap();
        assert!((sol.rate_matrix[(0, 0)] - lambda / mu).abs() < 1e-10);
        let rho: f64 = lambda / mu;
        for level in 0..30 {
            let expect = (1.0 - rho) * rho.powi(level as i32);
            assert!(
                (sol.level_mass(level) - expect).abs() < 1e-8,
                "level {level}: {} vs {expect}",
                sol.level_mass(level)
            );
        }
        // E[N] = rho / (1 - rho).
        assert!((sol.expected_level() - rho / (1.0 - rho)).abs() < 1e-8);
        assert!((sol.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mmk_matches_direct_formulas() {
        for (lambda, mu, k) in [(1.8, 1.0, 2u32), (3.2, 1.0, 4), (0.9, 0.25, 8)] {
            let sol = solve_qbd(&mmk_blocks(lambda, mu, k), 1e-12, 100_000).unwrap();
            let direct = mmk_direct(lambda, mu, k, 40);
            for (level, expect) in direct.iter().enumerate() {
                assert!(
                    (sol.level_mass(level) - expect).abs() < 1e-8,
                    "(lambda={lambda}, k={k}) level {level}"
                );
            }
        }
    }

    #[test]
    fn residual_contract_holds() {
        let blocks = mmk_blocks(3.0, 1.0, 4);
        let sol = solve_qbd(&blocks, 1e-12, 100_000).unwrap();
        assert!(sol.residual <= 1e-12);
        assert!(sol.spectral_radius() < 1.0);
    }

    #[test]
    fn unstable_chain_fails_to_converge() {
        let blocks = mm1_blocks(1.2, 1.0);
        // With rho > 1 the iteration hits the cap (kept low to keep the
        // test quick) or converges to sp(R) >= 1; either is an error.
        match solve_qbd(&blocks, 1e-12, 3_000) {
            Err(QbdError::NoConvergence { .. }) | Err(QbdError::BadSolution { .. }) => {}
            other => panic!("expected failure on unstable chain, got {other:?}"),
        }
    }

    #[test]
    fn validation_rejects_bad_generators() {
        let mut blocks = mm1_blocks(0.5, 1.0);
        blocks.local[(0, 0)] = -0.9; // breaks the zero row sum
        assert!(matches!(blocks.validate(), Err(QbdError::Malformed { .. })));

        let mut blocks = mm1_blocks(0.5, 1.0);
        blocks.down[(0, 0)] = -1.0;
        assert!(matches!(blocks.validate(), Err(QbdError::Malformed { .. })));
    }
}
