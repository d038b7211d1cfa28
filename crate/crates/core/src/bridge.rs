//! The two directions between EHMMs and periodic MPS.
//!
//! Forward: site tensors `a_{k;ij} = U_ij chi_i(k)` and the partial
//! measurement of `Psi_{H,O;n}` against the boundary vector `E_{N,n}`, which
//! reproduces `psi_N` for every `n >= N`.
//!
//! Backward: classical transition/emission matrices
//! `Pi'_ij = sum_k |a_{k;ij}|^2`, `Q'_i(k) = sum_j |a_{k;ij}|^2`, the EHMM
//! built from their square roots, and a test of whether a tensor set factors
//! exactly as `U_ij chi_i(k)`.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::ehmm::{
    advance, build_psi_hon, emission_kron, ensure_cap, EhmmModel, ProbabilityVector,
    StochasticMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, partial_inner_product_over, re, DenseMatrix, TensorVector};
use crate::mps::{ensure_gauge, SiteTensorSet};

/// Gauge tolerance applied before extracting classical data.
pub const EXTRACT_GAUGE_TOL: f64 = 1e-10;

/// `a_{k;ij} = U_ij chi_i(k)` for any valid model, one family per stored site.
/// No unitarity requirement, so the result need not satisfy the gauge
/// condition.
pub fn product_tensors(model: &EhmmModel) -> Result<SiteTensorSet> {
    model.ensure_valid()?;
    let (m, d) = (model.m(), model.d());
    let sites = model
        .hidden()
        .iter()
        .zip(model.emission())
        .map(|(u, chi)| {
            (0..d)
                .map(|k| {
                    let mut a = DenseMatrix::zeros(m, m);
                    for i in 0..m {
                        let c = chi.matrix()[(i, k)];
                        for j in 0..m {
                            a[(i, j)] = u.matrix()[(i, j)] * c;
                        }
                    }
                    a
                })
                .collect()
        })
        .collect();
    SiteTensorSet::new(sites, model.is_translation_invariant())
}

/// [`product_tensors`] for models whose hidden matrices are all unitary; the
/// result then satisfies the gauge condition.
pub fn tensors_from_ehmm(model: &EhmmModel) -> Result<SiteTensorSet> {
    model.ensure_valid()?;
    for (n, u) in model.hidden().iter().enumerate() {
        if !u.is_unitary() {
            return Err(Error::NotUnitary {
                site: n + 1,
                deviation: u.matrix().unitarity_defect(),
            });
        }
    }
    product_tensors(model)
}

fn check_e_args(model: &EhmmModel, big_n: usize, n: usize) -> Result<()> {
    if big_n == 0 || n < big_n {
        return Err(Error::InvalidRange(format!(
            "need n >= N >= 1, got N = {big_n}, n = {n}"
        )));
    }
    model.ensure_valid()?;
    model.ensure_sites(n)?;
    if let Some(index) = model.pi().entries().iter().position(|&p| p <= 0.0) {
        return Err(Error::ZeroPrior { index: index + 1 });
    }
    Ok(())
}

/// `E_{N,n}` on `H^(n+1) (x) K^(n-N)` with coefficient
/// `pi_{i_1}^{-1/2} * prod_{l=N+1}^{n} U^[l]_{i_l i_{l+1}} chi^[l]_{i_l}(k_l) * delta(i_{N+1}, i_1)`.
///
/// The hidden indices `i_2 .. i_N` do not enter the coefficient. For `n = N`
/// the product is empty and only the delta remains.
pub fn build_e_vector(
    model: &EhmmModel,
    big_n: usize,
    n: usize,
    cap: usize,
) -> Result<TensorVector> {
    check_e_args(model, big_n, n)?;
    let (m, d) = (model.m(), model.d());
    let tail = n - big_n;
    let mut dims = vec![m; n + 1];
    dims.extend(std::iter::repeat_n(d, tail));
    ensure_cap(&dims, cap)?;

    let block = d.pow(tail as u32);
    let mut data = vec![C64::new(0.0, 0.0); dims.iter().product()];
    let mut hid = vec![0usize; n + 1];
    let mut em = Vec::with_capacity(block);
    for h in 0..m.pow(n as u32 + 1) {
        if hid[big_n] == hid[0] {
            let mut amp = re(1.0 / model.pi().entries()[hid[0]].sqrt());
            for l in big_n + 1..=n {
                amp *= model.hidden_at(l)?.matrix()[(hid[l - 1], hid[l])];
            }
            if amp != C64::new(0.0, 0.0) {
                emission_kron(model, &hid, big_n + 1, n, &mut em)?;
                for (slot, &e) in data[h * block..(h + 1) * block].iter_mut().zip(&em) {
                    *slot = amp * e;
                }
            }
        }
        advance(&mut hid, m);
    }
    TensorVector::new(dims, data)
}

/// `<Psi_{H,O;n} | E_{N,n}>` over the hidden chain and the trailing `n - N`
/// observation factors, leaving a vector on `K^N`.
pub fn observed_mps(model: &EhmmModel, big_n: usize, n: usize, cap: usize) -> Result<TensorVector> {
    check_e_args(model, big_n, n)?;
    let joint = build_psi_hon(model, n, cap)?;
    let e = build_e_vector(model, big_n, n, cap)?;
    let held: Vec<usize> = (0..=n).chain(n + 1 + big_n..=2 * n).collect();
    partial_inner_product_over(&joint, &e, &held)
}

/// Classical matrices extracted from a gauge-satisfying tensor set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedHmm {
    /// `Pi'` per stored site.
    pub transitions: Vec<StochasticMatrix>,
    /// `Q'` per stored site.
    pub emissions: Vec<StochasticMatrix>,
}

/// `Pi'_ij = sum_k |a_{k;ij}|^2` and `Q'_i(k) = sum_j |a_{k;ij}|^2` per site.
pub fn extract_classical_hmm(t: &SiteTensorSet) -> Result<ExtractedHmm> {
    ensure_gauge(t, EXTRACT_GAUGE_TOL)?;
    let (m, d) = (t.m(), t.d());
    let mut transitions = Vec::new();
    let mut emissions = Vec::new();
    for family in t.sites() {
        let mut pi = vec![0.0; m * m];
        let mut q = vec![0.0; m * d];
        for (k, a) in family.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    let w = a[(i, j)].norm_sqr();
                    pi[i * m + j] += w;
                    q[i * d + k] += w;
                }
            }
        }
        transitions.push(StochasticMatrix::new(m, m, pi)?);
        emissions.push(StochasticMatrix::new(m, d, q)?);
    }
    Ok(ExtractedHmm {
        transitions,
        emissions,
    })
}

/// EHMM with `U'_ij = sqrt(Pi'_ij)` and `chi'_i(k) = sqrt(Q'_i(k))`
/// (nonnegative roots). `pi` defaults to the uniform distribution. The model
/// is translation-invariant when the tensor set is.
pub fn isometries_from_mps(t: &SiteTensorSet, pi: Option<&ProbabilityVector>) -> Result<EhmmModel> {
    let extracted = extract_classical_hmm(t)?;
    let root = |s: &StochasticMatrix| {
        let data: Vec<f64> = s.to_rows().concat().into_iter().map(f64::sqrt).collect();
        DenseMatrix::from_real(s.rows(), s.cols(), &data)
    };
    let pi = pi
        .cloned()
        .unwrap_or_else(|| ProbabilityVector::uniform(t.m()));
    if pi.len() != t.m() {
        return Err(Error::DimensionMismatch(format!(
            "pi has {} entries for bond dimension {}",
            pi.len(),
            t.m()
        )));
    }
    let hidden = extracted.transitions.iter().map(root).collect();
    let emission = extracted.emissions.iter().map(root).collect();
    let model = EhmmModel::build(
        pi.entries().to_vec(),
        hidden,
        emission,
        t.is_translation_invariant(),
    )?;
    model.ensure_valid()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// A slice has a second singular value above tolerance.
    NotRankOne,
    /// A slice vanishes, so its emission row could not have unit norm.
    ZeroSlice,
    /// Every slice factors but the assembled hidden matrix is not unitary.
    NotUnitary,
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfeasibleReason::NotRankOne => "not-rank-one",
            InfeasibleReason::ZeroSlice => "zero-slice",
            InfeasibleReason::NotUnitary => "not-unitary",
        })
    }
}

/// First obstruction found by [`decompose_tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// 1-based.
    pub site: usize,
    /// 1-based; `None` for [`InfeasibleReason::NotUnitary`].
    pub hidden_index: Option<usize>,
    /// Second singular value of the slice, or the unitarity defect.
    pub magnitude: f64,
    pub reason: InfeasibleReason,
}

/// Recovered `(U, chi)` for one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFactors {
    pub u: DenseMatrix,
    pub chi: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub feasible: bool,
    /// One entry per stored site when feasible, empty otherwise.
    pub factors: Vec<SiteFactors>,
    pub witness: Option<Witness>,
    /// `max |a_{k;ij} - U_ij chi_i(k)|` over the recovered factors.
    pub reconstruction_error: f64,
    /// Whether the source tensor set repeats its last family.
    pub repeat_last: bool,
}

impl DecompositionResult {
    fn infeasible(witness: Witness, repeat_last: bool) -> Self {
        DecompositionResult {
            feasible: false,
            factors: Vec::new(),
            witness: Some(witness),
            reconstruction_error: f64::NAN,
            repeat_last,
        }
    }

    /// The recovered factors as an EHMM with the given (default uniform) prior.
    pub fn to_model(&self, pi: Option<&ProbabilityVector>) -> Result<EhmmModel> {
        if !self.feasible {
            return Err(Error::InvalidModel("decomposition is infeasible".into()));
        }
        let m = self.factors[0].u.rows();
        let pi = pi.cloned().unwrap_or_else(|| ProbabilityVector::uniform(m));
        EhmmModel::build(
            pi.entries().to_vec(),
            self.factors.iter().map(|f| f.u.clone()).collect(),
            self.factors.iter().map(|f| f.chi.clone()).collect(),
            self.repeat_last && self.factors.len() == 1,
        )
    }
}

/// Singular values of a small matrix from the spectrum of its smaller Gram
/// matrix, descending.
fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let gram = if a.rows() <= a.cols() {
        a.matmul(&a.dagger())?
    } else {
        a.dagger().matmul(a)?
    };
    Ok(hermitian_eig(&gram)?
        .eigenvalues
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect())
}

/// `sigma_2` of a slice, resolved near zero.
///
/// The Gram spectrum only fixes `sigma_2` to about `sqrt(eps) * sigma_1`, too
/// coarse for a rank-one test. `sqrt(sum |2x2 minor|^2) / sigma_1` is accurate
/// to roundoff; it equals `sigma_2` when the rank is at most two and bounds it
/// from above otherwise, in which case the Gram value is used once it is
/// resolvable.
fn second_singular_value(a: &DenseMatrix) -> Result<f64> {
    let sv = singular_values(a)?;
    let sigma1 = sv.first().copied().unwrap_or(0.0);
    if sigma1 == 0.0 {
        return Ok(0.0);
    }
    let mut minors = 0.0;
    for r1 in 0..a.rows() {
        for r2 in r1 + 1..a.rows() {
            for c1 in 0..a.cols() {
                for c2 in c1 + 1..a.cols() {
                    let det = a[(r1, c1)] * a[(r2, c2)] - a[(r1, c2)] * a[(r2, c1)];
                    minors += det.norm_sqr();
                }
            }
        }
    }
    let residual = minors.sqrt() / sigma1;
    if a.rows().min(a.cols()) <= 2 || residual <= 1e-6 * sigma1 {
        Ok(residual)
    } else {
        Ok(sv.get(1).copied().unwrap_or(0.0))
    }
}

/// Tests whether every site factors as `a_{k;ij} = U_ij chi_i(k)` with unit
/// emission rows and unitary `U`.
///
/// For hidden index `i` the slice `M_jk = a_{k;ij}` must be rank one:
/// `sigma_2 <= tol * ||M||_F`. The emission row is the largest row of `M`
/// normalized, with its phase fixed so the first entry above `tol` in modulus
/// is real and positive, and `U_ij = sum_k M_jk conj(chi_i(k))`.
pub fn decompose_tensors(t: &SiteTensorSet, tol: f64) -> Result<DecompositionResult> {
    let (m, d) = (t.m(), t.d());
    let mut factors = Vec::new();
    let mut worst = 0.0f64;
    for (n, family) in t.sites().iter().enumerate() {
        let mut u = DenseMatrix::zeros(m, m);
        let mut chi = DenseMatrix::zeros(m, d);
        for i in 0..m {
            let mut slice = DenseMatrix::zeros(m, d);
            for (k, a) in family.iter().enumerate() {
                for j in 0..m {
                    slice[(j, k)] = a[(i, j)];
                }
            }
            let norm = slice.frobenius_norm();
            if norm <= tol {
                return Ok(DecompositionResult::infeasible(
                    Witness {
                        site: n + 1,
                        hidden_index: Some(i + 1),
                        magnitude: 0.0,
                        reason: InfeasibleReason::ZeroSlice,
                    },
                    t.repeat_last(),
                ));
            }
            let sigma2 = second_singular_value(&slice)?;
            if sigma2 > tol * norm {
                return Ok(DecompositionResult::infeasible(
                    Witness {
                        site: n + 1,
                        hidden_index: Some(i + 1),
                        magnitude: sigma2,
                        reason: InfeasibleReason::NotRankOne,
                    },
                    t.repeat_last(),
                ));
            }

            let mut best = 0;
            let mut best_norm = -1.0;
            for j in 0..m {
                let r: f64 = slice.row(j).iter().map(|z| z.norm_sqr()).sum();
                if r > best_norm {
                    best = j;
                    best_norm = r;
                }
            }
            let row = slice.row(best);
            let mut phase = re(1.0);
            if let Some(z) = row.iter().find(|z| z.norm() > tol) {
                phase = z.conj() / z.norm();
            }
            let scale = phase / best_norm.sqrt();
            for k in 0..d {
                chi[(i, k)] = row[k] * scale;
            }
            for j in 0..m {
                u[(i, j)] = (0..d).map(|k| slice[(j, k)] * chi[(i, k)].conj()).sum();
            }
        }

        let defect = u.unitarity_defect();
        if !(defect <= tol) {
            return Ok(DecompositionResult::infeasible(
                Witness {
                    site: n + 1,
                    hidden_index: None,
                    magnitude: defect,
                    reason: InfeasibleReason::NotUnitary,
                },
                t.repeat_last(),
            ));
        }
        for (k, a) in family.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    worst = worst.max((a[(i, j)] - u[(i, j)] * chi[(i, k)]).norm());
                }
            }
        }
        factors.push(SiteFactors { u, chi });
    }
    Ok(DecompositionResult {
        feasible: true,
        factors,
        witness: None,
        reconstruction_error: worst,
        repeat_last: t.repeat_last(),
    })
}
