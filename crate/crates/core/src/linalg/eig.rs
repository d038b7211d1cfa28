//! Cyclic Jacobi eigensolver for Hermitian matrices.

use num_complex::Complex64 as C64;

use super::{re, DenseMatrix};
use crate::error::{Error, Result};

/// Hermiticity tolerance, relative to `max(1, ||A||_F)`.
pub const EIG_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100;
const OFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSpectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, aligned with `eigenvalues`.
    pub eigenvectors: DenseMatrix,
}

impl HermitianSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        (0..self.dim()).map(|i| self.eigenvectors[(i, k)]).collect()
    }

    /// `V f(Lambda) V^dagger`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let fl = f(lam);
            if fl == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * fl;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.apply(|x| x)
    }
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops to `1e-12 * ||A||_F`,
/// at most [`MAX_SWEEPS`] times. Eigenvalues come back in descending order.
pub fn hermitian_eig(a: &DenseMatrix) -> Result<HermitianSpectrum> {
    if !a.is_square() {
        return Err(Error::NotHermitian {
            asymmetry: f64::INFINITY,
        });
    }
    let norm = a.frobenius_norm();
    let defect = a.hermitian_defect();
    if defect > EIG_TOL * norm.max(1.0) {
        return Err(Error::NotHermitian { asymmetry: defect });
    }

    let n = a.rows();
    // work on the exactly Hermitian part
    let mut w = a.add(&a.dagger())?.scale(re(0.5));
    let mut v = DenseMatrix::identity(n);
    let target = OFF_TOL * norm;

    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&w);
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, off });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut w, &mut v, p, q);
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&w);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| w[(i, i)].re).collect();
    // stable sort keeps the result deterministic under ties
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));

    let mut vecs = DenseMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, col)] = v[(i, k)];
        }
    }
    Ok(HermitianSpectrum {
        eigenvalues: order.iter().map(|&k| diag[k]).collect(),
        eigenvectors: vecs,
    })
}

/// One two-sided rotation `W <- J^dagger W J` zeroing `W[p,q]`, with
/// `J = diag(1, e^{-i phi}) * R(theta)` on the `(p, q)` block.
fn rotate(w: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = w[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r; // e^{i phi}
    let app = w[(p, p)].re;
    let aqq = w[(q, q)].re;
    let theta = 0.5 * (2.0 * r).atan2(aqq - app);
    let (s, c) = theta.sin_cos();
    let n = w.rows();

    // block of J: [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
    let jpp = re(c);
    let jpq = re(s);
    let jqp = -phase.conj() * s;
    let jqq = phase.conj() * c;

    // W <- W J
    for k in 0..n {
        let (wkp, wkq) = (w[(k, p)], w[(k, q)]);
        w[(k, p)] = wkp * jpp + wkq * jqp;
        w[(k, q)] = wkp * jpq + wkq * jqq;
    }
    // W <- J^dagger W
    for k in 0..n {
        let (wpk, wqk) = (w[(p, k)], w[(q, k)]);
        w[(p, k)] = jpp.conj() * wpk + jqp.conj() * wqk;
        w[(q, k)] = jpq.conj() * wpk + jqq.conj() * wqk;
    }
    w[(p, q)] = re(0.0);
    w[(q, p)] = re(0.0);
    w[(p, p)] = re(w[(p, p)].re);
    w[(q, q)] = re(w[(q, q)].re);

    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

/// Matrix logarithm restricted to the support: eigenvalues above `eps` are
/// logged, those in `(-eps, eps]` are mapped to zero.
pub fn log_on_support(a: &DenseMatrix, eps: f64) -> Result<DenseMatrix> {
    let spec = hermitian_eig(a)?;
    if let Some(&lowest) = spec.eigenvalues.last() {
        if lowest < -eps {
            return Err(Error::NotPositive { eigenvalue: lowest });
        }
    }
    Ok(spec.apply(|x| if x > eps { x.ln() } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SUPPORT_EPS;

    /// Small deterministic LCG so these unit tests stay independent of the
    /// crate's own generator.
    fn lcg_hermitian(n: usize, mut seed: u64) -> DenseMatrix {
        let mut next = move || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = C64::new(next(), next());
            }
        }
        g.add(&g.dagger()).unwrap()
    }

    fn orthonormality_defect(v: &DenseMatrix) -> f64 {
        v.dagger()
            .matmul(v)
            .unwrap()
            .sub(&DenseMatrix::identity(v.cols()))
            .unwrap()
            .frobenius_norm()
    }

    #[test]
    fn diagonal_input() {
        let s = hermitian_eig(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(s.eigenvalues, vec![3.0, 1.0]);
        assert_eq!(s.eigenvectors, DenseMatrix::identity(2));

        let s = hermitian_eig(&DenseMatrix::diag(&[1.0, 3.0])).unwrap();
        assert_eq!(s.eigenvalues, vec![3.0, 1.0]);
    }

    #[test]
    fn pauli_x() {
        let x = DenseMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = hermitian_eig(&x).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((s.eigenvalues[1] + 1.0).abs() < 1e-15);
        assert!(s.reconstruct().max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn random_hermitian_residual() {
        for seed in 0..8 {
            let a = lcg_hermitian(6, seed);
            let s = hermitian_eig(&a).unwrap();
            let resid = s.reconstruct().sub(&a).unwrap().frobenius_norm();
            assert!(
                resid <= 1e-10 * a.frobenius_norm().max(1.0),
                "residual {resid}"
            );
            assert!(orthonormality_defect(&s.eigenvectors) <= 1e-10);
            let tr: f64 = s.eigenvalues.iter().sum();
            assert!((tr - a.trace().re).abs() <= 1e-10);
            assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn deterministic() {
        let a = lcg_hermitian(5, 42);
        assert_eq!(hermitian_eig(&a).unwrap(), hermitian_eig(&a).unwrap());
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = DenseMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&a), Err(Error::NotHermitian { .. })));
        assert!(hermitian_eig(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn zero_matrix() {
        let s = hermitian_eig(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0; 3]);
    }

    #[test]
    fn log_examples() {
        let l = log_on_support(&DenseMatrix::identity(3), SUPPORT_EPS).unwrap();
        assert!(l.max_abs() < 1e-15);

        let e = std::f64::consts::E;
        let l = log_on_support(&DenseMatrix::diag(&[e, 1.0]), SUPPORT_EPS).unwrap();
        assert!(l.max_abs_diff(&DenseMatrix::diag(&[1.0, 0.0])) < 1e-15);

        let l = log_on_support(&DenseMatrix::diag(&[0.5, 0.5, 0.0]), SUPPORT_EPS).unwrap();
        let h = -std::f64::consts::LN_2;
        assert!(l.max_abs_diff(&DenseMatrix::diag(&[h, h, 0.0])) < 1e-15);
    }

    #[test]
    fn log_rejects_negative_spectrum() {
        let a = DenseMatrix::diag(&[1.0, -0.1]);
        assert!(matches!(
            log_on_support(&a, SUPPORT_EPS),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn log_inverts_exp_on_support() {
        for seed in 0..5 {
            let h = lcg_hermitian(5, 100 + seed).scale(re(0.5));
            let expd = hermitian_eig(&h).unwrap().apply(f64::exp);
            let back = log_on_support(&expd, SUPPORT_EPS).unwrap();
            assert!(back.max_abs_diff(&h) < 1e-8);
        }
    }
}
