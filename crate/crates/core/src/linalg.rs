//! Symmetric positive definite solves used by the stage solvers.
//!
//! Both coupling sub-problems and the monolithic system are SPD, so a single
//! abstraction covers them: a cached sparse Cholesky factorization (default)
//! or a Jacobi-preconditioned conjugate gradient method for matrix-light
//! experimentation. Factorizations are built once per operator and reused
//! across time steps and coupling iterations.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inner linear solver selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InnerMethod {
    /// Sparse Cholesky factorization with one step of iterative refinement.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg {
        #[serde(default = "default_pcg_max_iter")]
        max_iter: usize,
    },
}

fn default_pcg_max_iter() -> usize {
    5000
}

enum Backend {
    Empty,
    Direct {
        factor: CscCholesky<f64>,
        matrix: CsrMatrix<f64>,
    },
    Pcg {
        matrix: CsrMatrix<f64>,
        diag_inv: DVector<f64>,
        tol: f64,
        max_iter: usize,
    },
}

/// A prepared SPD solve for a fixed matrix.
pub struct SpdSolver {
    n: usize,
    backend: Backend,
}

impl SpdSolver {
    /// Prepare a solver for `matrix`. `tol` is the relative residual target of
    /// the iterative backend; the direct backend ignores it.
    pub fn new(matrix: &CsrMatrix<f64>, method: InnerMethod, tol: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected square",
                n,
                matrix.ncols()
            )));
        }
        if n == 0 {
            return Ok(Self {
                n,
                backend: Backend::Empty,
            });
        }
        let backend = match method {
            InnerMethod::Direct => {
                let csc = CscMatrix::from(matrix);
                let factor = CscCholesky::factor(&csc)
                    .map_err(|e| Error::Solver(format!("sparse Cholesky failed: {e}")))?;
                Backend::Direct {
                    factor,
                    matrix: matrix.clone(),
                }
            }
            InnerMethod::Pcg { max_iter } => {
                let mut diag_inv = DVector::zeros(n);
                for (i, j, v) in matrix.triplet_iter() {
                    if i == j {
                        diag_inv[i] += v;
                    }
                }
                for i in 0..n {
                    if diag_inv[i] <= 0.0 {
                        return Err(Error::Solver(format!(
                            "matrix diagonal entry {i} is not positive; not SPD"
                        )));
                    }
                    diag_inv[i] = 1.0 / diag_inv[i];
                }
                Backend::Pcg {
                    matrix: matrix.clone(),
                    diag_inv,
                    tol,
                    max_iter,
                }
            }
        };
        Ok(Self { n, backend })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`; returns the solution and the number of inner
    /// iterations spent (1 for a direct solve).
    pub fn solve(&self, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has length {}, matrix is {}x{}",
                b.len(),
                self.n,
                self.n
            )));
        }
        match &self.backend {
            Backend::Empty => Ok((DVector::zeros(0), 0)),
            Backend::Direct { factor, matrix } => {
                let x0 = factor.solve(b);
                let mut x = DVector::from_column_slice(x0.as_slice());
                // One refinement step recovers the digits a large condition
                // number costs; harmless when the factorization is accurate.
                let r = b - matrix * &x;
                let dx = factor.solve(&r);
                x += DVector::from_column_slice(dx.as_slice());
                Ok((x, 1))
            }
            Backend::Pcg {
                matrix,
                diag_inv,
                tol,
                max_iter,
            } => pcg(matrix, diag_inv, b, *tol, *max_iter),
        }
    }
}

fn pcg(
    a: &CsrMatrix<f64>,
    diag_inv: &DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    let norm_b = b.norm();
    if norm_b == 0.0 {
        return Ok((DVector::zeros(b.len()), 0));
    }
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut z = r.component_mul(diag_inv);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 1..=max_iter {
        let ap = a * &p;
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(Error::Solver(
                "conjugate gradients found non-positive curvature; matrix is not SPD".into(),
            ));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= tol * norm_b {
            return Ok((x, it));
        }
        z = r.component_mul(diag_inv);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::Solver(format!(
        "conjugate gradients stalled after {max_iter} iterations (residual {:.3e} of target {:.3e})",
        r.norm() / norm_b,
        tol
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use nalgebra_sparse::CooMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, rng: &mut StdRng) -> (CsrMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let dense = &a * a.transpose() + DMatrix::identity(n, n) * (n as f64);
        let mut coo = CooMatrix::new(n, n);
        for i in 0..n {
            for j in 0..n {
                coo.push(i, j, dense[(i, j)]);
            }
        }
        (CsrMatrix::from(&coo), dense)
    }

    #[test]
    fn direct_matches_dense_solve() {
        let mut rng = StdRng::seed_from_u64(11);
        for n in [1, 4, 17] {
            let (sparse, dense) = random_spd(n, &mut rng);
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let expect = dense.clone().cholesky().unwrap().solve(&b);
            let solver = SpdSolver::new(&sparse, InnerMethod::Direct, 0.0).unwrap();
            let (x, iters) = solver.solve(&b).unwrap();
            assert_eq!(iters, 1);
            assert!((x - expect).amax() <= 1e-12);
        }
    }

    #[test]
    fn pcg_matches_direct() {
        let mut rng = StdRng::seed_from_u64(12);
        let (sparse, dense) = random_spd(25, &mut rng);
        let b = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        let expect = dense.cholesky().unwrap().solve(&b);
        let solver = SpdSolver::new(&sparse, InnerMethod::Pcg { max_iter: 500 }, 1e-14).unwrap();
        let (x, iters) = solver.solve(&b).unwrap();
        assert!(iters > 0 && iters <= 500);
        assert!((x - expect).amax() <= 1e-10);
    }

    #[test]
    fn pcg_on_identity_converges_immediately() {
        let mut coo = CooMatrix::new(6, 6);
        for i in 0..6 {
            coo.push(i, i, 1.0);
        }
        let a = CsrMatrix::from(&coo);
        let solver = SpdSolver::new(&a, InnerMethod::Pcg { max_iter: 10 }, 1e-12).unwrap();
        let b = DVector::from_element(6, 3.0);
        let (x, iters) = solver.solve(&b).unwrap();
        assert_eq!(iters, 1);
        assert!((x - b).amax() <= 1e-15);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut coo = CooMatrix::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(1, 1, -1.0);
        let a = CsrMatrix::from(&coo);
        assert!(SpdSolver::new(&a, InnerMethod::Direct, 0.0).is_err());
        assert!(SpdSolver::new(&a, InnerMethod::Pcg { max_iter: 10 }, 1e-12).is_err());
    }

    #[test]
    fn indefinite_with_positive_diagonal_caught_by_curvature() {
        // Positive diagonal but indefinite: Jacobi setup passes, the
        // curvature test must catch it during iteration.
        let mut coo = CooMatrix::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(0, 1, 4.0);
        coo.push(1, 0, 4.0);
        coo.push(1, 1, 1.0);
        let a = CsrMatrix::from(&coo);
        let solver = SpdSolver::new(&a, InnerMethod::Pcg { max_iter: 50 }, 1e-12).unwrap();
        // Right-hand side with a component along the negative eigenvalue.
        let b = DVector::from_vec(vec![1.0, -1.0]);
        assert!(matches!(solver.solve(&b), Err(Error::Solver(_))));
    }

    #[test]
    fn singular_matrix_rejected_by_direct() {
        let mut coo = CooMatrix::new(2, 2);
        coo.push(0, 0, 1.0);
        let a = CsrMatrix::from(&coo); // second row/column entirely zero
        assert!(SpdSolver::new(&a, InnerMethod::Direct, 0.0).is_err());
    }

    #[test]
    fn empty_system_is_fine() {
        let coo = CooMatrix::new(0, 0);
        let a = CsrMatrix::from(&coo);
        for method in [InnerMethod::Direct, InnerMethod::Pcg { max_iter: 10 }] {
            let solver = SpdSolver::new(&a, method, 1e-12).unwrap();
            let (x, _) = solver.solve(&DVector::zeros(0)).unwrap();
            assert_eq!(x.len(), 0);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let mut rng = StdRng::seed_from_u64(13);
        let (sparse, _) = random_spd(8, &mut rng);
        let b = DVector::zeros(8);
        for method in [InnerMethod::Direct, InnerMethod::Pcg { max_iter: 10 }] {
            let solver = SpdSolver::new(&sparse, method, 1e-12).unwrap();
            let (x, _) = solver.solve(&b).unwrap();
            assert!(x.amax() <= 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = StdRng::seed_from_u64(14);
        let (sparse, _) = random_spd(4, &mut rng);
        let solver = SpdSolver::new(&sparse, InnerMethod::Direct, 0.0).unwrap();
        assert!(solver.solve(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn inner_method_serde_round_trip() {
        for m in [InnerMethod::Direct, InnerMethod::Pcg { max_iter: 123 }] {
            let s = serde_json::to_string(&m).unwrap();
            let back: InnerMethod = serde_json::from_str(&s).unwrap();
            assert_eq!(back, m);
        }
        let with_default: InnerMethod = serde_json::from_str(r#"{"type":"pcg"}"#).unwrap();
        assert_eq!(with_default, InnerMethod::Pcg { max_iter: 5000 });
    }
}
