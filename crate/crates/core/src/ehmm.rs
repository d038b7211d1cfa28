//! Entangled hidden Markov models in the Schrödinger picture.
//!
//! A model is an initial distribution `pi` over `m` hidden states together
//! with, per site, an `m x m` hidden amplitude matrix `U` and an `m x d`
//! emission amplitude matrix `chi`. Squared moduli of `U` and `chi` give the
//! classical transition and emission matrices. The joint state on
//! `H^(n+1) (x) K^n` is
//!
//! ```text
//! Psi_{H,O;n}[i_1..i_{n+1}, k_1..k_n]
//!     = sqrt(pi_{i_1}) * prod_l U^[l]_{i_l i_{l+1}} * prod_l chi^[l]_{i_l}(k_l)
//! ```
//!
//! Sites are numbered from 1.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{checked_volume, partial_inner_product, re, DenseMatrix, TensorVector};

/// Row-normalization tolerance for amplitude and stochastic matrices.
pub const ROW_TOL: f64 = 1e-10;
/// Tolerance on the sum of the initial distribution.
pub const PI_TOL: f64 = 1e-12;
/// Default cap on the number of entries of any dense state.
pub const DEFAULT_STATE_CAP: usize = 1 << 22;

pub(crate) fn ensure_cap(dims: &[usize], cap: usize) -> Result<()> {
    let entries = checked_volume(dims);
    if entries > cap as u128 {
        Err(Error::SizeCapExceeded { entries, cap })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Checked constructor.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        let p = ProbabilityVector(entries);
        match p.violations().first() {
            Some(v) => Err(Error::InvalidModel(v.to_string())),
            None => Ok(p),
        }
    }

    /// Stores the entries without checking them; see [`EhmmModel::validate`].
    pub fn from_raw(entries: Vec<f64>) -> Self {
        ProbabilityVector(entries)
    }

    pub fn uniform(m: usize) -> Self {
        ProbabilityVector(vec![1.0 / m as f64; m])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, &p) in self.0.iter().enumerate() {
            if !(p >= 0.0) {
                out.push(Violation::new(
                    format!("pi[{}]", i + 1),
                    "negative weight",
                    p,
                ));
            }
        }
        let sum: f64 = self.0.iter().sum();
        if !((sum - 1.0).abs() <= PI_TOL) {
            out.push(Violation::new("pi", "sum", sum));
        }
        out
    }
}

/// Hidden amplitude matrix `U` (square). Rows must have unit 2-norm for the
/// model to validate; unitarity is recorded, not required.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    matrix: DenseMatrix,
    unitary: bool,
}

impl AmplitudeMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::ShapeMismatch {
                op: "AmplitudeMatrix",
                left: matrix.shape(),
                right: (matrix.rows(), matrix.rows()),
            });
        }
        let unitary = matrix.unitarity_defect() <= ROW_TOL;
        Ok(AmplitudeMatrix { matrix, unitary })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Emission amplitude matrix `chi`, `m x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionAmplitudeMatrix(DenseMatrix);

impl EmissionAmplitudeMatrix {
    pub fn new(matrix: DenseMatrix) -> Self {
        EmissionAmplitudeMatrix(matrix)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Real, entrywise nonnegative matrix with unit row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "StochasticMatrix",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        let s = StochasticMatrix { rows, cols, data };
        let defect = s.row_sum_defect();
        if s.data.iter().any(|&x| !(x >= 0.0)) || !(defect <= ROW_TOL) {
            return Err(Error::InvalidModel(format!(
                "not row-stochastic (row-sum defect {defect:e})"
            )));
        }
        Ok(s)
    }

    /// Entrywise squared moduli.
    pub fn from_moduli(a: &DenseMatrix) -> Result<Self> {
        Self::new(
            a.rows(),
            a.cols(),
            a.data().iter().map(|z| z.norm_sqr()).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Largest `|row sum - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.data
            .chunks(self.cols)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, rows: &[&[f64]]) -> f64 {
        if rows.len() != self.rows || rows.iter().any(|r| r.len() != self.cols) {
            return f64::INFINITY;
        }
        rows.iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &x)| (i, j, x)))
            .map(|(i, j, x)| (self.get(i, j) - x).abs())
            .fold(0.0, f64::max)
    }
}

/// One violated invariant found by [`EhmmModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub what: String,
    pub magnitude: f64,
}

impl Violation {
    fn new(location: impl Into<String>, what: impl Into<String>, magnitude: f64) -> Self {
        Violation {
            location: location.into(),
            what: what.into(),
            magnitude,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} = {}", self.location, self.what, self.magnitude)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// An EHMM: `(pi, (U^[n])_n, (chi^[n])_n)`.
///
/// A translation-invariant model stores a single `(U, chi)` pair that serves
/// every site; otherwise site `n` uses entry `n - 1` and only as many sites
/// as stored are available.
#[derive(Debug, Clone, PartialEq)]
pub struct EhmmModel {
    m: usize,
    d: usize,
    pi: ProbabilityVector,
    hidden: Vec<AmplitudeMatrix>,
    emission: Vec<EmissionAmplitudeMatrix>,
    translation_invariant: bool,
}

impl EhmmModel {
    pub fn homogeneous(pi: Vec<f64>, hidden: DenseMatrix, emission: DenseMatrix) -> Result<Self> {
        Self::build(pi, vec![hidden], vec![emission], true)
    }

    pub fn site_dependent(
        pi: Vec<f64>,
        hidden: Vec<DenseMatrix>,
        emission: Vec<DenseMatrix>,
    ) -> Result<Self> {
        Self::build(pi, hidden, emission, false)
    }

    /// Shape checks only; numerical invariants are left to [`Self::validate`].
    pub fn build(
        pi: Vec<f64>,
        hidden: Vec<DenseMatrix>,
        emission: Vec<DenseMatrix>,
        translation_invariant: bool,
    ) -> Result<Self> {
        if hidden.is_empty() || hidden.len() != emission.len() {
            return Err(Error::InvalidModel(format!(
                "{} hidden vs {} emission matrices",
                hidden.len(),
                emission.len()
            )));
        }
        if translation_invariant && hidden.len() != 1 {
            return Err(Error::InvalidModel(
                "translation-invariant model must store exactly one site pair".into(),
            ));
        }
        let m = hidden[0].rows();
        let d = emission[0].cols();
        if pi.len() != m {
            return Err(Error::InvalidModel(format!(
                "pi has {} entries for hidden dimension {m}",
                pi.len()
            )));
        }
        for (n, (u, chi)) in hidden.iter().zip(&emission).enumerate() {
            if u.shape() != (m, m) || chi.shape() != (m, d) {
                return Err(Error::InvalidModel(format!(
                    "site {}: hidden {:?}, emission {:?}, expected ({m}, {m}) and ({m}, {d})",
                    n + 1,
                    u.shape(),
                    chi.shape()
                )));
            }
        }
        Ok(EhmmModel {
            m,
            d,
            pi: ProbabilityVector::from_raw(pi),
            hidden: hidden
                .into_iter()
                .map(AmplitudeMatrix::new)
                .collect::<Result<_>>()?,
            emission: emission
                .into_iter()
                .map(EmissionAmplitudeMatrix::new)
                .collect(),
            translation_invariant,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn pi(&self) -> &ProbabilityVector {
        &self.pi
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.translation_invariant
    }

    /// Stored hidden matrices, one per stored site.
    pub fn hidden(&self) -> &[AmplitudeMatrix] {
        &self.hidden
    }

    pub fn emission(&self) -> &[EmissionAmplitudeMatrix] {
        &self.emission
    }

    /// `None` when every site is available.
    pub fn site_count(&self) -> Option<usize> {
        (!self.translation_invariant).then_some(self.hidden.len())
    }

    fn slot(&self, site: usize) -> Result<usize> {
        if self.translation_invariant {
            return Ok(0);
        }
        if site == 0 || site > self.hidden.len() {
            return Err(Error::SitesExhausted {
                requested: site,
                available: self.hidden.len(),
            });
        }
        Ok(site - 1)
    }

    pub fn hidden_at(&self, site: usize) -> Result<&AmplitudeMatrix> {
        Ok(&self.hidden[self.slot(site)?])
    }

    pub fn emission_at(&self, site: usize) -> Result<&EmissionAmplitudeMatrix> {
        Ok(&self.emission[self.slot(site)?])
    }

    pub fn ensure_sites(&self, n: usize) -> Result<()> {
        match self.site_count() {
            Some(avail) if n > avail => Err(Error::SitesExhausted {
                requested: n,
                available: avail,
            }),
            _ => Ok(()),
        }
    }

    /// Every violated invariant, with location and magnitude.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = self.pi.violations();
        for (n, u) in self.hidden.iter().enumerate() {
            for (i, row) in u.matrix().to_rows().iter().enumerate() {
                let s: f64 = row.iter().map(|z| z.norm_sqr()).sum();
                if !((s - 1.0).abs() <= ROW_TOL) {
                    violations.push(Violation::new(
                        format!("hidden[site {}] row {}", n + 1, i + 1),
                        "squared norm",
                        s,
                    ));
                }
            }
        }
        for (n, chi) in self.emission.iter().enumerate() {
            for (i, row) in chi.matrix().to_rows().iter().enumerate() {
                let s: f64 = row.iter().map(|z| z.norm_sqr()).sum();
                if !((s - 1.0).abs() <= ROW_TOL) {
                    violations.push(Violation::new(
                        format!("emission[site {}] row {}", n + 1, i + 1),
                        "squared norm",
                        s,
                    ));
                }
            }
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report.to_string()))
        }
    }

    /// Largest `||U^dagger U - I||_F` over stored sites.
    pub fn max_unitarity_defect(&self) -> f64 {
        self.hidden
            .iter()
            .map(|u| u.matrix().unitarity_defect())
            .fold(0.0, f64::max)
    }

    pub fn all_unitary(&self) -> bool {
        self.hidden.iter().all(AmplitudeMatrix::is_unitary)
    }
}

/// Classical transition matrices `Pi^[n]_ij = |U^[n]_ij|^2` and emission
/// matrices `Q^[n]_i(k) = |chi^[n]_i(k)|^2`, one per stored site.
pub fn stochastic_projections(
    model: &EhmmModel,
) -> Result<(Vec<StochasticMatrix>, Vec<StochasticMatrix>)> {
    model.ensure_valid()?;
    let pis = model
        .hidden
        .iter()
        .map(|u| StochasticMatrix::from_moduli(u.matrix()))
        .collect::<Result<_>>()?;
    let qs = model
        .emission
        .iter()
        .map(|c| StochasticMatrix::from_moduli(c.matrix()))
        .collect::<Result<_>>()?;
    Ok((pis, qs))
}

/// `V_H: e_i -> sum_j U_ij e_i (x) e_j` as an `m^2 x m` matrix.
pub fn hidden_isometry_matrix(u: &AmplitudeMatrix) -> DenseMatrix {
    let m = u.dim();
    let mut v = DenseMatrix::zeros(m * m, m);
    for i in 0..m {
        for j in 0..m {
            v[(i * m + j, i)] = u.matrix()[(i, j)];
        }
    }
    v
}

/// `V_O: e_i -> sum_k chi_i(k) e_i (x) |k>` as an `m d x m` matrix.
pub fn emission_isometry_matrix(chi: &EmissionAmplitudeMatrix) -> DenseMatrix {
    let (m, d) = chi.matrix().shape();
    let mut v = DenseMatrix::zeros(m * d, m);
    for i in 0..m {
        for k in 0..d {
            v[(i * d + k, i)] = chi.matrix()[(i, k)];
        }
    }
    v
}

/// `sum_{ij} sum_{kl} conj(W_ik) W_jl X_ij Y_kl e_i e_j^dagger`, shared by the
/// transition and emission expectations.
fn conjugation_formula(w: &DenseMatrix, x: &DenseMatrix, y: &DenseMatrix) -> DenseMatrix {
    let (m, d) = w.shape();
    let mut out = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let xij = x[(i, j)];
            if xij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                let wik = w[(i, k)].conj();
                for l in 0..d {
                    acc += wik * w[(j, l)] * y[(k, l)];
                }
            }
            out[(i, j)] = acc * xij;
        }
    }
    out
}

/// `E_H(X (x) X') = V_H^dagger (X (x) X') V_H`, evaluated entrywise.
pub fn transition_expectation(
    u: &AmplitudeMatrix,
    x: &DenseMatrix,
    x2: &DenseMatrix,
) -> Result<DenseMatrix> {
    let m = u.dim();
    for a in [x, x2] {
        if a.shape() != (m, m) {
            return Err(Error::ShapeMismatch {
                op: "transition_expectation",
                left: (m, m),
                right: a.shape(),
            });
        }
    }
    Ok(conjugation_formula(u.matrix(), x, x2))
}

/// `E_{H,O}(X (x) Y) = V_O^dagger (X (x) Y) V_O`, evaluated entrywise.
pub fn emission_expectation(
    chi: &EmissionAmplitudeMatrix,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (m, d) = chi.matrix().shape();
    if x.shape() != (m, m) {
        return Err(Error::ShapeMismatch {
            op: "emission_expectation",
            left: (m, m),
            right: x.shape(),
        });
    }
    if y.shape() != (d, d) {
        return Err(Error::ShapeMismatch {
            op: "emission_expectation",
            left: (d, d),
            right: y.shape(),
        });
    }
    Ok(conjugation_formula(chi.matrix(), x, y))
}

/// Steps `idx` as a base-`base` odometer, rightmost digit fastest.
pub(crate) fn advance(idx: &mut [usize], base: usize) {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < base {
            return;
        }
        *slot = 0;
    }
}

/// `prod_{l=1}^{n} U^[l]_{i_l i_{l+1}}` for a hidden string of length `n + 1`.
fn hidden_amplitude(model: &EhmmModel, hid: &[usize]) -> Result<C64> {
    let mut amp = re(1.0);
    for (l, w) in hid.windows(2).enumerate() {
        amp *= model.hidden_at(l + 1)?.matrix()[(w[0], w[1])];
        if amp == C64::new(0.0, 0.0) {
            break;
        }
    }
    Ok(amp)
}

/// Kronecker product of emission rows `chi^[l]_{i_l}(.)` over the sites
/// `first..=last` (1-based), written into `out`.
pub(crate) fn emission_kron(
    model: &EhmmModel,
    hid: &[usize],
    first: usize,
    last: usize,
    out: &mut Vec<C64>,
) -> Result<()> {
    out.clear();
    out.push(re(1.0));
    let mut next = Vec::new();
    for site in first..=last {
        let row = model.emission_at(site)?.matrix().row(hid[site - 1]);
        next.clear();
        for &a in out.iter() {
            next.extend(row.iter().map(|&c| a * c));
        }
        std::mem::swap(out, &mut next);
    }
    Ok(())
}

fn check_n(model: &EhmmModel, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidRange("n must be at least 1".into()));
    }
    model.ensure_valid()?;
    model.ensure_sites(n)
}

/// `|Psi_{H,O;n}>` on `H^(n+1) (x) K^n`.
pub fn build_psi_hon(model: &EhmmModel, n: usize, cap: usize) -> Result<TensorVector> {
    check_n(model, n)?;
    let (m, d) = (model.m, model.d);
    let mut dims = vec![m; n + 1];
    dims.extend(std::iter::repeat_n(d, n));
    ensure_cap(&dims, cap)?;

    let block = d.pow(n as u32);
    let mut data = vec![C64::new(0.0, 0.0); dims.iter().product()];
    let mut hid = vec![0usize; n + 1];
    let mut em = Vec::with_capacity(block);
    for h in 0..m.pow(n as u32 + 1) {
        let amp = hidden_amplitude(model, &hid)? * model.pi.entries()[hid[0]].sqrt();
        if amp != C64::new(0.0, 0.0) {
            emission_kron(model, &hid, 1, n, &mut em)?;
            for (slot, &e) in data[h * block..(h + 1) * block].iter_mut().zip(&em) {
                *slot = amp * e;
            }
        }
        advance(&mut hid, m);
    }
    TensorVector::new(dims, data)
}

/// `|Psi_{H;n}>` on `H^(n+1)`.
pub fn build_psi_hn(model: &EhmmModel, n: usize, cap: usize) -> Result<TensorVector> {
    check_n(model, n)?;
    let m = model.m;
    let dims = vec![m; n + 1];
    ensure_cap(&dims, cap)?;
    let mut data = Vec::with_capacity(m.pow(n as u32 + 1));
    let mut hid = vec![0usize; n + 1];
    for _ in 0..m.pow(n as u32 + 1) {
        data.push(hidden_amplitude(model, &hid)? * model.pi.entries()[hid[0]].sqrt());
        advance(&mut hid, m);
    }
    TensorVector::new(dims, data)
}

/// Which transition matrix couples `i_l -> i_{l+1}` in the closed-form
/// observation process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiOnReading {
    /// Factors `Pi^[2]_{i_1 i_2} ... Pi^[n]_{i_{n-1} i_n}`: the chain ends on
    /// `Pi^[n]` as displayed in the closed form.
    AsPrinted,
    /// Factors `Pi^[1]_{i_1 i_2} ... Pi^[n-1]_{i_{n-1} i_n}`: site `l` drives
    /// the step out of `i_l`, matching `Psi_{H,O;n}`.
    SiteAligned,
}

/// `|Psi_{O;n}>` from its closed form
/// `sum_{i_1..i_n} pi_{i_1} prod Pi_{i_l i_{l+1}} prod chi_{i_l}(k_l) |k_1..k_n>`.
/// Not normalized in general. For translation-invariant models both readings
/// coincide.
pub fn build_psi_on(
    model: &EhmmModel,
    n: usize,
    reading: PsiOnReading,
    cap: usize,
) -> Result<TensorVector> {
    check_n(model, n)?;
    let (m, d) = (model.m, model.d);
    let dims = vec![d; n];
    ensure_cap(&dims, cap)?;
    let mut data = vec![C64::new(0.0, 0.0); d.pow(n as u32)];
    let mut hid = vec![0usize; n];
    let mut em = Vec::with_capacity(data.len());
    for _ in 0..m.pow(n as u32) {
        let mut weight = model.pi.entries()[hid[0]];
        for (l, w) in hid.windows(2).enumerate() {
            let site = match reading {
                PsiOnReading::AsPrinted => l + 2,
                PsiOnReading::SiteAligned => l + 1,
            };
            weight *= model.hidden_at(site)?.matrix()[(w[0], w[1])].norm_sqr();
        }
        if weight != 0.0 {
            emission_kron(model, &hid, 1, n, &mut em)?;
            for (slot, &e) in data.iter_mut().zip(&em) {
                *slot += e * weight;
            }
        }
        advance(&mut hid, m);
    }
    TensorVector::new(dims, data)
}

/// `<Psi_{H,O;n} | Psi_{H;n}>_{H^(n+1)}`, the observation process obtained by
/// partially measuring the joint state on the hidden chain.
pub fn observation_process(model: &EhmmModel, n: usize, cap: usize) -> Result<TensorVector> {
    let joint = build_psi_hon(model, n, cap)?;
    let hidden = build_psi_hn(model, n, cap)?;
    partial_inner_product(&joint, &hidden, n + 1)
}

/// Largest entrywise gap between the as-printed closed form and the
/// partial-measurement route. Zero for translation-invariant models.
pub fn psi_on_discrepancy(model: &EhmmModel, n: usize, cap: usize) -> Result<f64> {
    let printed = build_psi_on(model, n, PsiOnReading::AsPrinted, cap)?;
    let measured = observation_process(model, n, cap)?;
    Ok(printed.max_abs_diff(&measured))
}
