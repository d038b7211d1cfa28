//! Matrix product states with periodic boundary conditions.
//!
//! A tensor set assigns to every site `n` a family `{A_k^[n]}` of `m x m`
//! matrices indexed by the physical symbol `k`, and defines the state
//! `psi_N = sum_w Tr(A_{k_1}^[1] ... A_{k_N}^[N]) |k_1 ... k_N>`.

use num_complex::Complex64 as C64;

use crate::ehmm::{advance, ensure_cap};
use crate::error::{Error, Result};
use crate::linalg::{re, DenseMatrix, TensorVector};

/// Site families of an MPS.
///
/// Site `n` (1-based) uses stored family `n - 1`. When `repeat_last` is set,
/// sites past the end of the list reuse the last family, so a single stored
/// family with `repeat_last` is a translation-invariant tensor set.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensorSet {
    m: usize,
    d: usize,
    sites: Vec<Vec<DenseMatrix>>,
    repeat_last: bool,
}

impl SiteTensorSet {
    pub fn new(sites: Vec<Vec<DenseMatrix>>, repeat_last: bool) -> Result<Self> {
        let first = sites
            .first()
            .and_then(|f| f.first())
            .ok_or_else(|| Error::InvalidModel("tensor set needs at least one matrix".into()))?;
        let m = first.rows();
        let d = sites[0].len();
        for (n, family) in sites.iter().enumerate() {
            if family.len() != d {
                return Err(Error::InvalidModel(format!(
                    "site {} has {} matrices, expected {d}",
                    n + 1,
                    family.len()
                )));
            }
            for (k, a) in family.iter().enumerate() {
                if a.shape() != (m, m) {
                    return Err(Error::InvalidModel(format!(
                        "site {} symbol {k}: shape {:?}, expected ({m}, {m})",
                        n + 1,
                        a.shape()
                    )));
                }
            }
        }
        Ok(SiteTensorSet {
            m,
            d,
            sites,
            repeat_last,
        })
    }

    pub fn translation_invariant(family: Vec<DenseMatrix>) -> Result<Self> {
        Self::new(vec![family], true)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sites(&self) -> &[Vec<DenseMatrix>] {
        &self.sites
    }

    pub fn repeat_last(&self) -> bool {
        self.repeat_last
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.repeat_last && self.sites.len() == 1
    }

    /// `None` when every site is available.
    pub fn site_count(&self) -> Option<usize> {
        (!self.repeat_last).then_some(self.sites.len())
    }

    pub fn family(&self, site: usize) -> Result<&[DenseMatrix]> {
        if site == 0 {
            return Err(Error::InvalidRange("sites are numbered from 1".into()));
        }
        match self.sites.get(site - 1) {
            Some(f) => Ok(f),
            None if self.repeat_last => Ok(self.sites.last().expect("nonempty")),
            None => Err(Error::SitesExhausted {
                requested: site,
                available: self.sites.len(),
            }),
        }
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

    /// Copy with site `site`'s family multiplied by `c`. Sites past the stored
    /// list are materialized first.
    pub fn scale_site(&self, site: usize, c: C64) -> Result<Self> {
        self.family(site)?;
        let mut sites = self.sites.clone();
        // keep an unscaled copy behind the target so repeated sites stay untouched
        let extra = usize::from(self.repeat_last);
        while sites.len() < site + extra {
            sites.push(sites.last().expect("nonempty").clone());
        }
        for a in &mut sites[site - 1] {
            *a = a.scale(c);
        }
        Self::new(sites, self.repeat_last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeReport {
    /// `||sum_k A_k A_k^dagger - I||_F` per stored site.
    pub deviations: Vec<f64>,
    pub pass: Vec<bool>,
    pub tol: f64,
}

impl GaugeReport {
    pub fn passed(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }

    /// 1-based site of the first failure.
    pub fn first_failure(&self) -> Option<(usize, f64)> {
        self.pass
            .iter()
            .position(|&p| !p)
            .map(|n| (n + 1, self.deviations[n]))
    }
}

/// Deviation of `sum_k A_k A_k^dagger` from the identity, per stored site.
pub fn gauge_check(t: &SiteTensorSet, tol: f64) -> GaugeReport {
    let deviations: Vec<f64> = t
        .sites
        .iter()
        .map(|family| {
            let mut acc = DenseMatrix::identity(t.m).scale(re(-1.0));
            for a in family {
                acc = acc
                    .add(&a.matmul(&a.dagger()).expect("square"))
                    .expect("same shape");
            }
            acc.frobenius_norm()
        })
        .collect();
    GaugeReport {
        pass: deviations.iter().map(|&x| x <= tol).collect(),
        deviations,
        tol,
    }
}

/// Errors with [`Error::GaugeViolation`] at the first failing site.
pub fn ensure_gauge(t: &SiteTensorSet, tol: f64) -> Result<()> {
    match gauge_check(t, tol).first_failure() {
        Some((site, deviation)) => Err(Error::GaugeViolation { site, deviation }),
        None => Ok(()),
    }
}

/// `Tr(A_{k_1}^[1] ... A_{k_N}^[N])` for the word `k_1 .. k_N` (0-based symbols).
pub fn coefficient(t: &SiteTensorSet, word: &[usize]) -> Result<C64> {
    if word.is_empty() {
        return Err(Error::InvalidRange("empty word".into()));
    }
    t.ensure_sites(word.len())?;
    let mut prod = DenseMatrix::identity(t.m);
    for (l, &k) in word.iter().enumerate() {
        if k >= t.d {
            return Err(Error::SymbolOutOfRange { symbol: k, d: t.d });
        }
        prod = prod.matmul(&t.family(l + 1)?[k])?;
    }
    Ok(prod.trace())
}

/// Dense `psi_N` over `K^N`, unnormalized. Words are visited in
/// lexicographic order and prefix products are reused between neighbours.
pub fn build_state(t: &SiteTensorSet, n: usize, cap: usize) -> Result<TensorVector> {
    if n == 0 {
        return Err(Error::InvalidRange("N must be at least 1".into()));
    }
    t.ensure_sites(n)?;
    let dims = vec![t.d; n];
    ensure_cap(&dims, cap)?;
    let families: Vec<&[DenseMatrix]> = (1..=n).map(|s| t.family(s)).collect::<Result<_>>()?;

    let total = t.d.pow(n as u32);
    // prefix[l] = product of the first l matrices of the current word
    let mut prefix = vec![DenseMatrix::identity(t.m); n + 1];
    let mut word = vec![0usize; n];
    let mut stale = 0;
    let mut data = Vec::with_capacity(total);
    for _ in 0..total {
        for l in stale..n {
            prefix[l + 1] = prefix[l].matmul(&families[l][word[l]])?;
        }
        data.push(prefix[n].trace());
        let before = word.clone();
        advance(&mut word, t.d);
        stale = before
            .iter()
            .zip(&word)
            .position(|(a, b)| a != b)
            .unwrap_or(0);
    }
    TensorVector::new(dims, data)
}

/// `Tr(prod_n E_n)` with `E_n = sum_k A_k (x) conj(A_k)`, which equals
/// `sum_w |Tr A_w|^2` without enumerating words.
pub fn state_norm_squared(t: &SiteTensorSet, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidRange("N must be at least 1".into()));
    }
    t.ensure_sites(n)?;
    let mut transfer: Vec<DenseMatrix> = Vec::with_capacity(t.sites.len());
    for family in &t.sites {
        let mut e = DenseMatrix::zeros(t.m * t.m, t.m * t.m);
        for a in family {
            e = e.add(&a.kron(&a.conj()))?;
        }
        transfer.push(e);
    }
    let slot = |site: usize| (site - 1).min(transfer.len() - 1);
    let mut prod = transfer[slot(1)].clone();
    for site in 2..=n {
        prod = prod.matmul(&transfer[slot(site)])?;
    }
    Ok(prod.trace().re.max(0.0))
}

/// `||psi_N||` via [`state_norm_squared`].
pub fn state_norm(t: &SiteTensorSet, n: usize) -> Result<f64> {
    Ok(state_norm_squared(t, n)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehmm::DEFAULT_STATE_CAP;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn projectors() -> Vec<DenseMatrix> {
        vec![
            DenseMatrix::diag(&[1.0, 0.0]),
            DenseMatrix::diag(&[0.0, 1.0]),
        ]
    }

    fn aklt() -> SiteTensorSet {
        let a = (2.0f64 / 3.0).sqrt();
        let b = (1.0f64 / 3.0).sqrt();
        SiteTensorSet::translation_invariant(vec![
            DenseMatrix::from_real(2, 2, &[0.0, a, 0.0, 0.0]),
            DenseMatrix::from_real(2, 2, &[b, 0.0, 0.0, -b]),
            DenseMatrix::from_real(2, 2, &[0.0, 0.0, -a, 0.0]),
        ])
        .unwrap()
    }

    fn cluster() -> SiteTensorSet {
        let s = FRAC_1_SQRT_2;
        SiteTensorSet::translation_invariant(vec![
            DenseMatrix::from_real(2, 2, &[s, s, 0.0, 0.0]),
            DenseMatrix::from_real(2, 2, &[0.0, 0.0, s, -s]),
        ])
        .unwrap()
    }

    #[test]
    fn constructor_checks_shapes() {
        assert!(SiteTensorSet::new(vec![], true).is_err());
        assert!(SiteTensorSet::new(
            vec![vec![DenseMatrix::identity(2), DenseMatrix::identity(3)]],
            true
        )
        .is_err());
        assert!(
            SiteTensorSet::new(vec![projectors(), vec![DenseMatrix::identity(2)]], false).is_err()
        );
    }

    #[test]
    fn family_lookup() {
        let t = SiteTensorSet::new(vec![projectors(), cluster().sites()[0].clone()], true).unwrap();
        assert_eq!(t.family(1).unwrap(), projectors().as_slice());
        assert_eq!(t.family(7).unwrap(), t.family(2).unwrap());
        let fixed = SiteTensorSet::new(vec![projectors()], false).unwrap();
        assert!(matches!(
            fixed.family(2),
            Err(Error::SitesExhausted {
                requested: 2,
                available: 1
            })
        ));
        assert!(build_state(&fixed, 2, DEFAULT_STATE_CAP).is_err());
    }

    #[test]
    fn gauge_examples() {
        let ghz = SiteTensorSet::translation_invariant(projectors()).unwrap();
        let r = gauge_check(&ghz, 1e-12);
        assert_eq!(r.deviations, vec![0.0]);
        assert!(r.passed());

        let r = gauge_check(&aklt(), 1e-12);
        assert!(r.max_deviation() <= 1e-15);

        let ids = SiteTensorSet::translation_invariant(vec![
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
        ])
        .unwrap();
        let r = gauge_check(&ids, 1e-12);
        assert!((r.deviations[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(!r.passed());
        assert_eq!(r.first_failure().map(|f| f.0), Some(1));
        assert!(matches!(
            ensure_gauge(&ids, 1e-12),
            Err(Error::GaugeViolation { site: 1, .. })
        ));
    }

    #[test]
    fn coefficient_examples() {
        let ghz = SiteTensorSet::translation_invariant(projectors()).unwrap();
        assert_eq!(coefficient(&ghz, &[0, 0, 0, 0]).unwrap(), re(1.0));
        assert_eq!(coefficient(&ghz, &[0, 1, 0, 0]).unwrap(), re(0.0));

        // + then - with symbols ordered (+, 0, -)
        let c = coefficient(&aklt(), &[0, 2]).unwrap();
        assert!((c - re(-2.0 / 3.0)).norm() < 1e-15);

        let t = cluster();
        for k in 0..2 {
            assert_eq!(coefficient(&t, &[k]).unwrap(), t.sites()[0][k].trace());
        }
        assert!(matches!(
            coefficient(&t, &[2]),
            Err(Error::SymbolOutOfRange { symbol: 2, d: 2 })
        ));
    }

    #[test]
    fn ghz_unit_state_with_folded_first_site() {
        let folded: Vec<DenseMatrix> = projectors()
            .iter()
            .map(|a| a.scale(re(FRAC_1_SQRT_2)))
            .collect();
        let t = SiteTensorSet::new(vec![folded, projectors()], true).unwrap();
        let psi = build_state(&t, 4, DEFAULT_STATE_CAP).unwrap();
        let mut expect = vec![re(0.0); 16];
        expect[0] = re(FRAC_1_SQRT_2);
        expect[15] = re(FRAC_1_SQRT_2);
        assert!(psi.max_abs_diff(&TensorVector::new(vec![2; 4], expect).unwrap()) < 1e-16);
    }

    #[test]
    fn cluster_state_by_hand() {
        // A_0 A_0 = A_0/sqrt2, A_0 A_1 = [[1,-1],[0,0]]/2, A_1 A_0 = [[0,0],[1,1]]/2,
        // A_1 A_1 = [[0,0],[-1,1]]/2; every length-3 trace has modulus 1/(2 sqrt 2)
        let psi = build_state(&cluster(), 3, DEFAULT_STATE_CAP).unwrap();
        let h = 1.0 / (2.0 * 2f64.sqrt());
        let signs = [1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0];
        for (flat, &s) in signs.iter().enumerate() {
            assert!((psi.data()[flat] - re(s * h)).norm() < 1e-15, "word {flat}");
        }
        assert!((psi.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn build_state_matches_coefficient() {
        let t = aklt();
        let psi = build_state(&t, 4, DEFAULT_STATE_CAP).unwrap();
        for flat in 0..psi.len() {
            let w = psi.multi_index(flat);
            assert!((psi.data()[flat] - coefficient(&t, &w).unwrap()).norm() < 1e-15);
        }
        assert!(matches!(
            build_state(&t, 12, 1000),
            Err(Error::SizeCapExceeded { .. })
        ));
    }

    #[test]
    fn single_symbol_sets() {
        let a = DenseMatrix::from_real(2, 2, &[0.5, 1.0, -1.0, 2.0]);
        let t = SiteTensorSet::translation_invariant(vec![a.clone()]).unwrap();
        let psi = build_state(&t, 3, DEFAULT_STATE_CAP).unwrap();
        let a3 = a.matmul(&a).unwrap().matmul(&a).unwrap();
        assert_eq!(psi.dims(), &[1, 1, 1]);
        assert!((psi.data()[0] - a3.trace()).norm() < 1e-14);

        let id = SiteTensorSet::translation_invariant(vec![DenseMatrix::identity(2)]).unwrap();
        assert!((state_norm(&id, 5).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn state_norm_examples() {
        let ghz = SiteTensorSet::translation_invariant(projectors()).unwrap();
        assert!((state_norm(&ghz, 3).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        for t in [aklt(), cluster()] {
            for n in 1..=6 {
                let dense = build_state(&t, n, DEFAULT_STATE_CAP).unwrap().norm();
                assert!((state_norm(&t, n).unwrap() - dense).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_site_scales_state() {
        let t = aklt();
        let scaled = t.scale_site(2, C64::new(0.0, 2.0)).unwrap();
        assert_eq!(scaled.sites().len(), 3);
        let a = build_state(&t, 3, DEFAULT_STATE_CAP).unwrap();
        let b = build_state(&scaled, 3, DEFAULT_STATE_CAP).unwrap();
        assert!(a.scale(C64::new(0.0, 2.0)).max_abs_diff(&b) < 1e-15);
    }
}
