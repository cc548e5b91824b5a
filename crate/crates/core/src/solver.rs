//! Direct solution of the saddle-point system and algebraic diagnostics.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assembly::SaddleSystem;
use crate::error::{Error, Result};
use crate::sparse::{block_matrix, BlockLabel, SparseOperator};

/// Largest system the inf-sup probe accepts.
pub const INFSUP_SIZE_LIMIT: usize = 20_000;

const MAX_REFINEMENT_STEPS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub n_dofs: usize,
    pub nnz: usize,
    pub residual: f64,
    pub factor_time_ms: f64,
    pub solve_time_ms: f64,
}

impl SolverStats {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u0: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    /// Combined flux `u0 + R_h λ` on every facet of every subdomain.
    pub flux: Vec<f64>,
    pub x: Vec<f64>,
    pub stats: SolverStats,
}

fn block_name(system: &SaddleSystem, row: usize) -> (&'static str, usize) {
    let [_, ol, op] = system.layout.block_offsets();
    if row < ol {
        ("u0", row)
    } else if row < op {
        ("lambda", row - ol)
    } else {
        ("p", row - op)
    }
}

/// Sparse LU factorization of a square operator.
pub struct Factorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl Factorization {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        let lu = a.to_faer()?.sp_lu().map_err(|e| match e {
            LuError::SymbolicSingular { index } => Error::Solver(format!("symbolically singular at pivot {index}")),
            LuError::Generic(e) => Error::Solver(format!("{e:?}")),
        })?;
        Ok(Factorization { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solve with iterative refinement against `a`.
    pub fn solve_refined(&self, a: &SparseOperator, b: &[f64]) -> (Vec<f64>, f64) {
        let mut x = self.solve(b);
        let mut r = residual(a, &x, b);
        let mut rn = norm_inf(&r);
        for _ in 0..MAX_REFINEMENT_STEPS {
            if rn == 0.0 {
                break;
            }
            let dx = self.solve(&r);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let tr = residual(a, &trial, b);
            let tn = norm_inf(&tr);
            if !(tn < rn) {
                break;
            }
            x = trial;
            r = tr;
            rn = tn;
        }
        (x, rn)
    }
}

fn residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(b).map(|(ax, b)| b - ax).collect()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the system by sparse LU with iterative refinement. The result
/// satisfies `‖Mx − b‖∞ ≤ tol (‖b‖∞ + ‖M‖∞ ‖x‖∞)`.
pub fn solve(system: &SaddleSystem, tol: f64) -> Result<Solution> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidParameters(format!("solver tolerance {tol} outside (0, 1e-6]")));
    }
    let a = &system.matrix;
    if let Some(row) = (0..a.nrows()).find(|&r| a.is_row_empty(r)) {
        let (block, row) = block_name(system, row);
        return Err(Error::StructurallySingular { block, row });
    }
    let t0 = Instant::now();
    let fact = Factorization::new(a)?;
    let factor_time = t0.elapsed();
    let t1 = Instant::now();
    let (x, rn) = fact.solve_refined(a, &system.rhs);
    let solve_time = t1.elapsed();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite solution".into()));
    }
    let bound = tol * (norm_inf(&system.rhs) + a.norm_inf() * norm_inf(&x));
    if rn > bound {
        return Err(Error::Residual { residual: rn, bound });
    }
    let (u0, lambda, p) = system.split(&x);
    let flux = system.full_flux(&x);
    Ok(Solution {
        u0: u0.to_vec(),
        lambda: lambda.to_vec(),
        p: p.to_vec(),
        flux,
        stats: SolverStats {
            n_dofs: a.nrows(),
            nnz: a.nnz(),
            residual: rn,
            factor_time_ms: factor_time.as_secs_f64() * 1e3,
            solve_time_ms: solve_time.as_secs_f64() * 1e3,
        },
        x,
    })
}

/// `Π_Q(∇·εu_h + ⟦ε̂λ_h⟧) − ε²f` per pressure cell.
pub fn conservation_residual(sol: &Solution, system: &SaddleSystem) -> Vec<f64> {
    let bx = system.b_u.matvec(&sol.u0);
    let bl = system.b_l.matvec(&sol.lambda);
    (0..system.r_p.len()).map(|i| (system.r_p[i] - bx[i] - bl[i]) / system.cell_measure[i]).collect()
}

/// Discrete inf-sup constant of `B = [B_u B_λ]` measured in the norms
/// `‖x‖²_X = xᵀAx + ‖Bx‖²` (with `‖·‖` the cell-measure weighted norm of
/// the divergence) and `‖q‖²_Q = Σ |K| ε̂_max² q²`.
///
/// The smallest eigenvalue of `B X⁻¹ Bᵀ` relative to `Q` is found by
/// subspace iteration on `(B X⁻¹ Bᵀ)⁻¹ Q`, applied through the LU of
/// `[[X, Bᵀ], [B, 0]]`.
pub fn infsup_probe(system: &SaddleSystem, eps_hat_max: &[f64]) -> Result<f64> {
    let n = system.n_dofs();
    if n > INFSUP_SIZE_LIMIT {
        return Err(Error::SizeGuard { what: "infsup_probe", size: n, limit: INFSUP_SIZE_LIMIT });
    }
    let np = system.layout.n_pressure;
    let b = block_matrix(&[vec![Some(&system.b_u), Some(&system.b_l)]], &[np], &[system.layout.n_u0(), system.layout.n_mortar]);
    let inv_measure: Vec<f64> = system.cell_measure.iter().map(|m| 1.0 / m).collect();
    let bt = b.transpose();
    let a = block_matrix(
        &[vec![Some(&system.a_uu), Some(&system.a_ul)], vec![Some(&system.a_ul.transpose()), Some(&system.a_ll)]],
        &[system.layout.n_u0(), system.layout.n_mortar],
        &[system.layout.n_u0(), system.layout.n_mortar],
    );
    let x = a.add(&bt.matmul(&SparseOperator::diagonal(&inv_measure, BlockLabel::Pressure)).matmul(&b));
    let nx = x.nrows();
    let aug = block_matrix(&[vec![Some(&x), Some(&bt)], vec![Some(&b), None]], &[nx, np], &[nx, np]);
    let q: Vec<f64> = (0..np).map(|i| system.cell_measure[i] * eps_hat_max[i] * eps_hat_max[i]).collect();
    if q.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameters("ε̂_max vanishes on a pressure cell".into()));
    }
    let fact = Factorization::new(&aug)?;
    // T = S⁻¹ Q with S = B X⁻¹ Bᵀ: solve [[X,Bᵀ],[B,0]] (x, y) = (0, −Qv), then y = S⁻¹Qv.
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut rhs = vec![0.0; nx + np];
        for i in 0..np {
            rhs[nx + i] = -q[i] * v[i];
        }
        let (sol, _) = fact.solve_refined(&aug, &rhs);
        sol[nx..].to_vec()
    };
    let k = np.min(6);
    let qdot = |u: &[f64], v: &[f64]| u.iter().zip(v).zip(&q).map(|((a, b), w)| a * b * w).sum::<f64>();
    // deterministic start vectors
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..np).map(|i| 1.0 + ((i * (j + 1) * 7919 + 13 * j) % 101) as f64 / 101.0).collect())
        .collect();
    let mut theta = 0.0;
    for _ in 0..300 {
        let mut w: Vec<Vec<f64>> = basis.iter().map(|v| apply(v)).collect();
        // Q-orthonormalize
        for j in 0..k {
            for _ in 0..2 {
                for l in 0..j {
                    let c = qdot(&w[j], &w[l]);
                    let (head, tail) = w.split_at_mut(j);
                    for (a, b) in tail[0].iter_mut().zip(&head[l]) {
                        *a -= c * b;
                    }
                }
            }
            let nrm = qdot(&w[j], &w[j]).sqrt();
            if nrm > 0.0 {
                w[j].iter_mut().for_each(|a| *a /= nrm);
            }
        }
        // Rayleigh-Ritz in the Q inner product
        let tw: Vec<Vec<f64>> = w.iter().map(|v| apply(v)).collect();
        let h = DMatrix::from_fn(k, k, |i, j| 0.5 * (qdot(&w[i], &tw[j]) + qdot(&w[j], &tw[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let new_theta = eig.eigenvalues[order[0]];
        basis = order
            .iter()
            .map(|&c| (0..np).map(|i| (0..k).map(|r| eig.eigenvectors[(r, c)] * w[r][i]).sum()).collect())
            .collect();
        let converged = (new_theta - theta).abs() <= 1e-10 * new_theta.abs();
        theta = new_theta;
        if converged {
            break;
        }
    }
    if !(theta > 0.0) {
        return Err(Error::Solver("inf-sup iteration did not produce a positive eigenvalue".into()));
    }
    Ok((1.0 / theta).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::BlockLabel;

    #[test]
    fn factorization_solves_small_system() {
        let a = SparseOperator::from_triplets(
            3,
            3,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, 1.0)],
            BlockLabel::System,
            BlockLabel::System,
        );
        let f = Factorization::new(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let (x, r) = f.solve_refined(&a, &b);
        assert!(r < 1e-14);
        let ax = a.matvec(&x);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-14);
        }
    }
}
