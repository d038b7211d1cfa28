//! Density matrices of the MPS and of the observation marginal, the
//! dephasing channel, quantum relative entropy, and the lower bound
//!
//! ```text
//! S(rho_N || rho_{O;N}) >= (1/m) sum_w |Tr A_w|^2
//!                          ln(|Tr A_w|^2 / (m^{3/2} pi^T (prod_l A_{k_l} o conj A_{k_l}) e))
//! ```
//!
//! where `rho_N = |psi_N><psi_N| / m`, `o` is the Schur product and
//! `e = m^{-1/2} sum_j e_j`. Logarithms are natural.

use num_complex::Complex64 as C64;

use crate::bridge::{product_tensors, tensors_from_ehmm};
use crate::ehmm::{advance, build_psi_hon, EhmmModel, ProbabilityVector};
use crate::error::{Error, Result};
use crate::linalg::{checked_volume, hermitian_eig, partial_trace, re, DenseMatrix, SUPPORT_EPS};
use crate::mps::{build_state, SiteTensorSet};

/// Hermiticity and positivity tolerance for [`DensityMatrix`].
pub const DENSITY_TOL: f64 = 1e-10;
/// Default cap on `D^2` entries of a dense density matrix; admits `N <= 6`
/// for `d = 2` and `N <= 4` for `d = 3`.
pub const DEFAULT_DENSITY_CAP: usize = 6561;
/// Slack on `S >= RHS` and on data processing.
pub const BOUND_SLACK: f64 = 1e-8;

fn ensure_density_cap(d: usize, n: usize, cap: usize) -> Result<()> {
    let side = checked_volume(&vec![d; n]);
    let entries = side.saturating_mul(side);
    if entries > cap as u128 {
        Err(Error::SizeCapExceeded { entries, cap })
    } else {
        Ok(())
    }
}

/// Hermitian positive-semidefinite matrix with its trace recorded (not forced
/// to one).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DenseMatrix,
    factor_dims: Vec<usize>,
    trace_value: f64,
}

impl DensityMatrix {
    /// Checks Hermiticity (relative to `max(1, ||A||_F)`) and that no
    /// eigenvalue is below `-1e-10`.
    pub fn new(matrix: DenseMatrix, factor_dims: Vec<usize>) -> Result<Self> {
        let rho = Self::trusted(matrix, factor_dims)?;
        let scale = rho.matrix.frobenius_norm().max(1.0);
        let defect = rho.matrix.hermitian_defect();
        if defect > DENSITY_TOL * scale {
            return Err(Error::NotHermitian { asymmetry: defect });
        }
        let spec = hermitian_eig(&rho.matrix)?;
        if let Some(&low) = spec.eigenvalues.last() {
            if low < -DENSITY_TOL * scale {
                return Err(Error::NotPositive { eigenvalue: low });
            }
        }
        Ok(rho)
    }

    /// Shape checks only, for matrices positive by construction.
    fn trusted(matrix: DenseMatrix, factor_dims: Vec<usize>) -> Result<Self> {
        let dim: usize = factor_dims.iter().product();
        if !matrix.is_square() || matrix.rows() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{:?} matrix against factor dims {factor_dims:?}",
                matrix.shape()
            )));
        }
        let trace_value = matrix.trace().re;
        Ok(DensityMatrix {
            matrix,
            factor_dims,
            trace_value,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn trace_value(&self) -> f64 {
        self.trace_value
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Copy scaled to unit trace. Errors on zero trace.
    pub fn normalized(&self) -> Result<Self> {
        if !(self.trace_value > 0.0) {
            return Err(Error::NotPositive {
                eigenvalue: self.trace_value,
            });
        }
        Self::trusted(
            self.matrix.scale(re(1.0 / self.trace_value)),
            self.factor_dims.clone(),
        )
    }

    /// Reduced matrix on the `keep` factors.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let mut kept = keep.to_vec();
        kept.sort_unstable();
        let reduced = partial_trace(&self.matrix, &self.factor_dims, &kept)?;
        let dims = if kept.is_empty() {
            vec![1]
        } else {
            kept.iter().map(|&f| self.factor_dims[f]).collect()
        };
        Self::trusted(reduced, dims)
    }
}

/// `rho_N = |psi_N><psi_N| / m`, literally; the trace is `||psi_N||^2 / m`.
pub fn mps_density(t: &SiteTensorSet, n: usize, cap: usize) -> Result<DensityMatrix> {
    ensure_density_cap(t.d(), n, cap)?;
    let psi = build_state(t, n, cap)?;
    let rho = psi.projector().scale(re(1.0 / t.m() as f64));
    DensityMatrix::trusted(rho, vec![t.d(); n])
}

/// Observation marginal from the closed form: entry `(w, w')` is
/// `sqrt(m) pi^T (prod_l A_{k_l} o conj A_{k'_l}) e`, summed independently over
/// both words.
pub fn observation_density_formula(
    t: &SiteTensorSet,
    pi: &ProbabilityVector,
    n: usize,
    cap: usize,
) -> Result<DensityMatrix> {
    let (m, d) = (t.m(), t.d());
    if pi.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "pi has {} entries for bond dimension {m}",
            pi.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidRange("N must be at least 1".into()));
    }
    t.ensure_sites(n)?;
    ensure_density_cap(d, n, cap)?;
    let families: Vec<&[DenseMatrix]> = (1..=n).map(|s| t.family(s)).collect::<Result<_>>()?;
    // Schur products A_k o conj(A_k') per site and symbol pair
    let schur: Vec<Vec<DenseMatrix>> = families
        .iter()
        .map(|f| {
            let mut out = Vec::with_capacity(d * d);
            for a in f.iter() {
                for b in f.iter() {
                    out.push(a.schur(&b.conj()).expect("same shape"));
                }
            }
            out
        })
        .collect();

    let dim = d.pow(n as u32);
    let e_weight = 1.0 / (m as f64).sqrt();
    let root_m = (m as f64).sqrt();
    let mut rho = DenseMatrix::zeros(dim, dim);
    let mut w = vec![0usize; n];
    for row in 0..dim {
        let mut w2 = vec![0usize; n];
        for col in 0..dim {
            let mut v: Vec<C64> = pi.entries().iter().map(|&p| re(p)).collect();
            for l in 0..n {
                let x = &schur[l][w[l] * d + w2[l]];
                let mut next = vec![C64::new(0.0, 0.0); m];
                for (i, &vi) in v.iter().enumerate() {
                    if vi == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (j, slot) in next.iter_mut().enumerate() {
                        *slot += vi * x[(i, j)];
                    }
                }
                v = next;
            }
            let s: C64 = v.iter().map(|&z| z * e_weight).sum();
            rho[(row, col)] = s * root_m;
            advance(&mut w2, d);
        }
        advance(&mut w, d);
    }
    DensityMatrix::trusted(rho, vec![d; n])
}

/// `Tr_{H^(N+1)} |Psi_{H,O;N}><Psi_{H,O;N}|`.
pub fn observation_density_trace(model: &EhmmModel, n: usize, cap: usize) -> Result<DensityMatrix> {
    ensure_density_cap(model.d(), n, cap)?;
    let psi = build_psi_hon(model, n, cap)?;
    let obs = model.d().pow(n as u32);
    let hid = psi.len() / obs;
    let data = psi.data();
    let mut rho = DenseMatrix::zeros(obs, obs);
    for h in 0..hid {
        let block = &data[h * obs..(h + 1) * obs];
        for (a, &x) in block.iter().enumerate() {
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for (b, &y) in block.iter().enumerate() {
                rho[(a, b)] += x * y.conj();
            }
        }
    }
    DensityMatrix::trusted(rho, vec![model.d(); n])
}

/// Zeroes the off-diagonal entries.
pub fn diagonal_channel(rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix {
        matrix: rho.matrix.diagonal_part(),
        factor_dims: rho.factor_dims.clone(),
        trace_value: rho.trace_value,
    }
}

/// `Tr(rho ln rho) - Tr(rho ln sigma)` with logarithms on the support.
///
/// Eigenvalues at or below `eps` count as zero. Returns `+inf` when an
/// eigenvector of `rho` with eigenvalue above `eps` has squared overlap above
/// `eps` with the null space of `sigma`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix, eps: f64) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "relative entropy of {}-dim against {}-dim matrix",
            rho.dim(),
            sigma.dim()
        )));
    }
    let r = hermitian_eig(&rho.matrix)?;
    let s = hermitian_eig(&sigma.matrix)?;
    for spec in [&r, &s] {
        let scale = spec.eigenvalues.iter().map(|x| x.abs()).fold(1.0, f64::max);
        if let Some(&low) = spec.eigenvalues.last() {
            if low < -DENSITY_TOL * scale {
                return Err(Error::NotPositive { eigenvalue: low });
            }
        }
    }
    let n = rho.dim();
    let mut total = 0.0;
    for (i, &lam) in r.eigenvalues.iter().enumerate() {
        if lam <= eps {
            continue;
        }
        let v = r.eigenvector(i);
        let mut cross = 0.0;
        let mut null_overlap = 0.0;
        for (j, &mu) in s.eigenvalues.iter().enumerate() {
            let mut ov = C64::new(0.0, 0.0);
            for (k, &vk) in v.iter().enumerate().take(n) {
                ov += s.eigenvectors[(k, j)].conj() * vk;
            }
            let w = ov.norm_sqr();
            if mu > eps {
                cross += w * mu.ln();
            } else {
                null_overlap += w;
            }
        }
        if null_overlap > eps {
            return Ok(f64::INFINITY);
        }
        total += lam * lam.ln() - lam * cross;
    }
    Ok(total)
}

/// Right-hand side of the bound and the words that forced `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRhs {
    pub value: f64,
    /// Words (0-based symbols) with a nonzero trace but zero denominator.
    pub infinite_words: Vec<Vec<usize>>,
}

/// `|Tr A_w|^2` and the denominator `pi^T (prod_l |A_{k_l}|^2) 1` per word,
/// in lexicographic order.
fn word_weights(
    t: &SiteTensorSet,
    pi: &ProbabilityVector,
    n: usize,
    cap: usize,
) -> Result<Vec<(f64, f64)>> {
    let (m, d) = (t.m(), t.d());
    if pi.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "pi has {} entries for bond dimension {m}",
            pi.len()
        )));
    }
    let psi = build_state(t, n, cap)?;
    let moduli: Vec<Vec<DenseMatrix>> = (1..=n)
        .map(|s| {
            t.family(s)
                .map(|f| f.iter().map(|a| a.map(|z| re(z.norm_sqr()))).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(psi.len());
    let mut w = vec![0usize; n];
    for &c in psi.data() {
        let mut v: Vec<f64> = pi.entries().to_vec();
        for l in 0..n {
            let x = &moduli[l][w[l]];
            let mut next = vec![0.0; m];
            for (i, &vi) in v.iter().enumerate() {
                for (j, slot) in next.iter_mut().enumerate() {
                    *slot += vi * x[(i, j)].re;
                }
            }
            v = next;
        }
        out.push((c.norm_sqr(), v.iter().sum()));
        advance(&mut w, d);
    }
    Ok(out)
}

fn rhs_from_weights(weights: &[(f64, f64)], numerator_scale: f64, n: usize, d: usize) -> BoundRhs {
    let mut value = 0.0;
    let mut infinite_words = Vec::new();
    for (flat, &(num, den)) in weights.iter().enumerate() {
        let p = num * numerator_scale;
        if p == 0.0 {
            continue;
        }
        if den <= 0.0 {
            let mut word = vec![0; n];
            let mut x = flat;
            for slot in word.iter_mut().rev() {
                *slot = x % d;
                x /= d;
            }
            infinite_words.push(word);
            continue;
        }
        value += p * (p / den).ln();
    }
    if !infinite_words.is_empty() {
        value = f64::INFINITY;
    }
    BoundRhs {
        value,
        infinite_words,
    }
}

/// `(1/m) sum_w |Tr A_w|^2 ln(|Tr A_w|^2 / (m^{3/2} pi^T (prod |A|^2) e))`.
/// Words with zero trace contribute nothing.
pub fn bound_rhs(
    t: &SiteTensorSet,
    pi: &ProbabilityVector,
    n: usize,
    cap: usize,
) -> Result<BoundRhs> {
    let weights = word_weights(t, pi, n, cap)?;
    // m^{3/2} pi^T X e = m pi^T X 1, so each term is p ln(p / q) with p = |Tr|^2 / m
    Ok(rhs_from_weights(&weights, 1.0 / t.m() as f64, n, t.d()))
}

/// Which tensors [`check_bound`] used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRoute {
    /// Hidden matrices unitary; gauge-satisfying tensors.
    Unitary,
    /// Hidden matrices only row-normalized; plain products `U_ij chi_i(k)`.
    Product,
}

/// Quantities recomputed with `rho_N` scaled to unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBound {
    pub s_value: f64,
    pub rhs_value: f64,
    pub s_diag: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub route: TensorRoute,
    /// `S(rho_N || rho_{O;N})` with the literal `rho_N`.
    pub s_value: f64,
    pub rhs_value: f64,
    /// Relative entropy of the dephased pair.
    pub s_diag: f64,
    /// `s_value >= rhs_value - 1e-8`.
    pub holds: bool,
    /// `s_diag <= s_value + 1e-8`.
    pub data_processing_holds: bool,
    /// `|rhs_value - s_diag|`, zero when both are infinite.
    pub rhs_gap: f64,
    pub trace_rho_n: f64,
    pub trace_rho_o: f64,
    /// `|Tr rho_N - 1| <= 1e-8`.
    pub unit_trace: bool,
    /// `None` when `rho_N` vanishes.
    pub normalized: Option<NormalizedBound>,
    pub diagnostics: Vec<String>,
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Evaluates both sides of the bound for `model` at length `n`.
///
/// Unitary models use gauge-satisfying tensors; other valid models fall back
/// to the plain products, flagged in `route` and `diagnostics`. `rho_{O;N}`
/// comes from the partial trace of the joint state.
pub fn check_bound(model: &EhmmModel, n: usize, eps: f64, cap: usize) -> Result<BoundReport> {
    model.ensure_valid()?;
    let mut diagnostics = Vec::new();
    let (t, route) = if model.all_unitary() {
        (tensors_from_ehmm(model)?, TensorRoute::Unitary)
    } else {
        diagnostics.push(format!(
            "hidden matrices not unitary (defect {:e}); using plain product tensors",
            model.max_unitarity_defect()
        ));
        (product_tensors(model)?, TensorRoute::Product)
    };
    let rho_n = mps_density(&t, n, cap)?;
    let rho_o = observation_density_trace(model, n, cap)?;
    let s_value = relative_entropy(&rho_n, &rho_o, eps)?;
    let s_diag = relative_entropy(&diagonal_channel(&rho_n), &diagonal_channel(&rho_o), eps)?;

    let weights = word_weights(&t, model.pi(), n, cap)?;
    let rhs = rhs_from_weights(&weights, 1.0 / t.m() as f64, n, t.d());
    if !rhs.infinite_words.is_empty() {
        diagnostics.push(format!(
            "{} word(s) with nonzero trace and zero denominator; right side is +inf",
            rhs.infinite_words.len()
        ));
    }
    if s_value.is_infinite() {
        diagnostics.push("rho_N not supported on supp(rho_O); S = +inf".into());
    }

    let trace_rho_n = rho_n.trace_value();
    let unit_trace = (trace_rho_n - 1.0).abs() <= BOUND_SLACK;
    if !unit_trace {
        diagnostics.push(format!("Tr rho_N = {trace_rho_n} differs from 1"));
    }
    let normalized = if trace_rho_n > 0.0 {
        let rho_hat = rho_n.normalized()?;
        let s = relative_entropy(&rho_hat, &rho_o, eps)?;
        let sd = relative_entropy(&diagonal_channel(&rho_hat), &diagonal_channel(&rho_o), eps)?;
        let norm_sq = trace_rho_n * t.m() as f64;
        let r = rhs_from_weights(&weights, 1.0 / norm_sq, n, t.d()).value;
        Some(NormalizedBound {
            s_value: s,
            rhs_value: r,
            s_diag: sd,
            holds: s == f64::INFINITY || s >= r - BOUND_SLACK,
        })
    } else {
        diagnostics.push("rho_N vanishes; normalized comparison skipped".into());
        None
    };

    Ok(BoundReport {
        n,
        route,
        s_value,
        rhs_value: rhs.value,
        s_diag,
        holds: s_value == f64::INFINITY || s_value >= rhs.value - BOUND_SLACK,
        data_processing_holds: s_value == f64::INFINITY || s_diag <= s_value + BOUND_SLACK,
        rhs_gap: gap(rhs.value, s_diag),
        trace_rho_n,
        trace_rho_o: rho_o.trace_value(),
        unit_trace,
        normalized,
        diagnostics,
    })
}

/// [`check_bound`] with the default support threshold and density cap.
pub fn check_bound_default(model: &EhmmModel, n: usize) -> Result<BoundReport> {
    check_bound(model, n, SUPPORT_EPS, DEFAULT_DENSITY_CAP)
}
