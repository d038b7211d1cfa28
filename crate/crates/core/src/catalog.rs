//! Named example models and tensor sets, and seeded random models.
//!
//! | name           | tensors                         | model                          |
//! |----------------|---------------------------------|--------------------------------|
//! | `ghz`          | projectors `e_i e_i^dagger`     | `pi` uniform, `U = I`, `chi = I` |
//! | `cluster`      | from the Hadamard model         | `U = H`, `chi = I`             |
//! | `aklt`         | spin-1 valence-bond tensors     | none (no exact factorization)  |
//! | `aklt-derived` | from the bundled model          | `U` rotation, `chi` below      |
//! | `theta`        | `[[cos, 0], [0, 1]]`, `[[0, sin], [0, 0]]` | moduli of the tensors |
//!
//! AKLT symbols are ordered `(+, 0, -)`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;

use crate::bridge::tensors_from_ehmm;
use crate::ehmm::EhmmModel;
use crate::error::{Error, Result};
use crate::linalg::{re, DenseMatrix};
use crate::mps::SiteTensorSet;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    pub tensors: Option<SiteTensorSet>,
    /// Variant of `tensors` whose `N`-site state has unit norm for every `N`,
    /// when that differs from `tensors`.
    pub unit_state_tensors: Option<SiteTensorSet>,
    pub model: Option<EhmmModel>,
    pub parameters: Vec<(String, f64)>,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogInfo {
    pub name: &'static str,
    /// Parameter signature, empty when none.
    pub parameters: &'static str,
    pub has_tensors: bool,
    pub has_model: bool,
    pub description: &'static str,
}

/// Names accepted by [`get`].
pub fn list() -> Vec<CatalogInfo> {
    vec![
        CatalogInfo {
            name: "ghz",
            parameters: "",
            has_tensors: true,
            has_model: true,
            description: "GHZ state; identity hidden copier and identity emission",
        },
        CatalogInfo {
            name: "cluster",
            parameters: "",
            has_tensors: true,
            has_model: true,
            description: "1D cluster state; Hadamard hidden transitions, identity emission",
        },
        CatalogInfo {
            name: "aklt",
            parameters: "",
            has_tensors: true,
            has_model: false,
            description: "AKLT valence-bond state, symbols (+, 0, -); no exact EHMM factorization",
        },
        CatalogInfo {
            name: "aklt-derived",
            parameters: "",
            has_tensors: true,
            has_model: true,
            description:
                "EHMM with the AKLT transition and emission statistics but a signed hidden rotation",
        },
        CatalogInfo {
            name: "theta",
            parameters: "theta_1[,theta_2,...] (radians, one per site; one value repeats)",
            has_tensors: true,
            has_model: true,
            description: "two-symbol family A_1 = [[cos t, 0], [0, 1]], A_2 = [[0, sin t], [0, 0]]",
        },
    ]
}

fn hadamard() -> DenseMatrix {
    DenseMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, -1.0]).scale(re(FRAC_1_SQRT_2))
}

fn projectors() -> Vec<DenseMatrix> {
    vec![
        DenseMatrix::diag(&[1.0, 0.0]),
        DenseMatrix::diag(&[0.0, 1.0]),
    ]
}

fn no_params(name: &str, params: &[f64]) -> Result<()> {
    if params.is_empty() {
        Ok(())
    } else {
        Err(Error::BadParameters(format!("{name} takes no parameters")))
    }
}

fn ghz() -> Result<CatalogEntry> {
    let model = EhmmModel::homogeneous(
        vec![0.5, 0.5],
        DenseMatrix::identity(2),
        DenseMatrix::identity(2),
    )?;
    let folded: Vec<DenseMatrix> = projectors()
        .iter()
        .map(|a| a.scale(re(FRAC_1_SQRT_2)))
        .collect();
    Ok(CatalogEntry {
        name: "ghz".into(),
        tensors: Some(SiteTensorSet::translation_invariant(projectors())?),
        unit_state_tensors: Some(SiteTensorSet::new(vec![folded, projectors()], true)?),
        model: Some(model),
        parameters: Vec::new(),
        notes: "tensors are the translation-invariant projectors, so psi_N = |0..0> + |1..1> \
                has norm sqrt(2); unit_state_tensors fold 1/sqrt(2) into site 1 only (no \
                further prefactor), giving a unit vector whose first site fails the gauge \
                condition by 1/sqrt(2)"
            .into(),
    })
}

fn cluster() -> Result<CatalogEntry> {
    let model = EhmmModel::homogeneous(vec![0.5, 0.5], hadamard(), DenseMatrix::identity(2))?;
    Ok(CatalogEntry {
        name: "cluster".into(),
        tensors: Some(tensors_from_ehmm(&model)?),
        unit_state_tensors: None,
        model: Some(model),
        parameters: Vec::new(),
        notes: "U is the Hadamard gate [[1,1],[1,-1]]/sqrt(2), so A_0 = [[1,1],[0,0]]/sqrt(2) and \
                A_1 = [[0,0],[1,-1]]/sqrt(2)"
            .into(),
    })
}

fn aklt_tensors() -> Result<SiteTensorSet> {
    let a = (2.0f64 / 3.0).sqrt();
    let b = (1.0f64 / 3.0).sqrt();
    SiteTensorSet::translation_invariant(vec![
        DenseMatrix::from_real(2, 2, &[0.0, a, 0.0, 0.0]),
        DenseMatrix::from_real(2, 2, &[b, 0.0, 0.0, -b]),
        DenseMatrix::from_real(2, 2, &[0.0, 0.0, -a, 0.0]),
    ])
}

fn aklt() -> Result<CatalogEntry> {
    Ok(CatalogEntry {
        name: "aklt".into(),
        tensors: Some(aklt_tensors()?),
        unit_state_tensors: None,
        model: None,
        parameters: Vec::new(),
        notes: "A_+ = sqrt(2/3) sigma+, A_0 = sqrt(1/3) sigma_z, A_- = -sqrt(2/3) sigma-; the \
                first hidden slice has rank two, so no (U, chi) factorization exists"
            .into(),
    })
}

fn aklt_derived() -> Result<CatalogEntry> {
    let (a, b) = ((1.0f64 / 3.0).sqrt(), (2.0f64 / 3.0).sqrt());
    let model = EhmmModel::homogeneous(
        vec![0.5, 0.5],
        DenseMatrix::from_real(2, 2, &[a, b, -b, a]),
        DenseMatrix::from_real(2, 3, &[b, a, 0.0, 0.0, a, -b]),
    )?;
    Ok(CatalogEntry {
        name: "aklt-derived".into(),
        tensors: Some(tensors_from_ehmm(&model)?),
        unit_state_tensors: None,
        model: Some(model),
        parameters: Vec::new(),
        notes: "same classical statistics as aklt; pi is taken uniform".into(),
    })
}

fn theta(params: &[f64]) -> Result<CatalogEntry> {
    if params.is_empty() {
        return Err(Error::BadParameters(
            "theta needs at least one angle (one per site)".into(),
        ));
    }
    if let Some(x) = params.iter().find(|x| !x.is_finite()) {
        return Err(Error::BadParameters(format!("angle {x} is not finite")));
    }
    let mut families = Vec::new();
    let mut hidden = Vec::new();
    let mut emission = Vec::new();
    for &t in params {
        let (s, c) = t.sin_cos();
        families.push(vec![
            DenseMatrix::from_real(2, 2, &[c, 0.0, 0.0, 1.0]),
            DenseMatrix::from_real(2, 2, &[0.0, s, 0.0, 0.0]),
        ]);
        let (s, c) = (s.abs(), c.abs());
        hidden.push(DenseMatrix::from_real(2, 2, &[c, s, 0.0, 1.0]));
        emission.push(DenseMatrix::from_real(2, 2, &[c, s, 1.0, 0.0]));
    }
    let invariant = params.len() == 1;
    Ok(CatalogEntry {
        name: "theta".into(),
        tensors: Some(SiteTensorSet::new(families, invariant)?),
        unit_state_tensors: None,
        model: Some(EhmmModel::build(
            vec![0.5, 0.5],
            hidden,
            emission,
            invariant,
        )?),
        parameters: params
            .iter()
            .enumerate()
            .map(|(n, &t)| (format!("theta_{}", n + 1), t))
            .collect(),
        notes:
            "model U = [[|cos|, |sin|], [0, 1]], chi = [[|cos|, |sin|], [1, 0]] with pi uniform; \
                U is not unitary, so the model's product tensors differ from the listed tensors"
                .into(),
    })
}

/// Catalog entry by name. `params` are the theta angles and must be empty for
/// the other entries.
pub fn get(name: &str, params: &[f64]) -> Result<CatalogEntry> {
    match name {
        "ghz" => no_params(name, params).and_then(|_| ghz()),
        "cluster" => no_params(name, params).and_then(|_| cluster()),
        "aklt" => no_params(name, params).and_then(|_| aklt()),
        "aklt-derived" => no_params(name, params).and_then(|_| aklt_derived()),
        "theta" => theta(params),
        other => Err(Error::UnknownEntry(other.to_string())),
    }
}

/// Unitary `m x m` matrix: modified Gram-Schmidt on the columns of a complex
/// Gaussian matrix drawn row-major.
fn random_unitary(rng: &mut SeededRng, m: usize) -> DenseMatrix {
    loop {
        let mut g = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = rng.complex_gaussian();
            }
        }
        let mut ok = true;
        for j in 0..m {
            for p in 0..j {
                let proj: C64 = (0..m).map(|i| g[(i, p)].conj() * g[(i, j)]).sum();
                for i in 0..m {
                    let v = g[(i, p)];
                    g[(i, j)] -= proj * v;
                }
            }
            let norm = (0..m).map(|i| g[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for i in 0..m {
                g[(i, j)] /= norm;
            }
        }
        if ok {
            return g;
        }
    }
}

/// Each row: a simplex draw of `d` weights (square-rooted) times `d`
/// independent phases.
fn random_emission(rng: &mut SeededRng, m: usize, d: usize) -> DenseMatrix {
    let mut chi = DenseMatrix::zeros(m, d);
    for i in 0..m {
        let weights = rng.simplex(d);
        for (k, w) in weights.into_iter().enumerate() {
            chi[(i, k)] = re(w.sqrt());
        }
        for k in 0..d {
            chi[(i, k)] *= rng.phase();
        }
    }
    chi
}

fn random_parts(
    m: usize,
    d: usize,
    sites: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<DenseMatrix>, Vec<DenseMatrix>)> {
    if m == 0 || d == 0 || sites == 0 {
        return Err(Error::BadParameters(format!(
            "need m, d, sites >= 1, got ({m}, {d}, {sites})"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let pi = rng.simplex(m);
    let mut hidden = Vec::with_capacity(sites);
    let mut emission = Vec::with_capacity(sites);
    for _ in 0..sites {
        hidden.push(random_unitary(&mut rng, m));
        emission.push(random_emission(&mut rng, m, d));
    }
    Ok((pi, hidden, emission))
}

/// Site-dependent model with `sites` unitary hidden matrices.
///
/// Draw order from `SeededRng::new(seed)`: `pi` as a simplex of `m`, then per
/// site the hidden matrix (complex Gaussians row-major, orthonormalized
/// column by column) followed by the emission rows (simplex weights, then
/// phases).
pub fn random_model(m: usize, d: usize, sites: usize, seed: u64) -> Result<EhmmModel> {
    let (pi, hidden, emission) = random_parts(m, d, sites, seed)?;
    EhmmModel::site_dependent(pi, hidden, emission)
}

/// Translation-invariant variant of [`random_model`] (one site drawn).
pub fn random_homogeneous_model(m: usize, d: usize, seed: u64) -> Result<EhmmModel> {
    let (pi, hidden, emission) = random_parts(m, d, 1, seed)?;
    EhmmModel::build(pi, hidden, emission, true)
}
