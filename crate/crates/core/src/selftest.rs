//! End-to-end invariant suite behind the `selftest` command.
//!
//! Each check returns a [`CriterionOutcome`] instead of panicking so the CLI
//! can print one line per check and choose its exit code.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, LN_2};
use std::time::{Duration, Instant};

use crate::bridge::{decompose_tensors, extract_classical_hmm, observed_mps, product_tensors};
use crate::catalog::{self, random_model};
use crate::ehmm::{
    build_psi_hon, build_psi_on, observation_process, EhmmModel, PsiOnReading, DEFAULT_STATE_CAP,
};
use crate::entropy::{
    check_bound, diagonal_channel, observation_density_formula, observation_density_trace,
    relative_entropy, DensityMatrix, DEFAULT_DENSITY_CAP,
};
use crate::error::Result;
use crate::linalg::{DenseMatrix, SUPPORT_EPS};
use crate::mps::{build_state, gauge_check};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// `(m, d)` shapes cycled through by the seeded random models.
pub const RANDOM_SHAPES: [(usize, usize); 3] = [(2, 2), (2, 3), (3, 2)];
/// Sites stored by each seeded random model.
pub const RANDOM_SITES: usize = 6;

/// The round-trip model set: ghz, cluster, aklt-derived, theta(pi/3) and ten
/// seeded site-dependent random unitary models.
pub fn round_trip_models() -> Result<Vec<(String, EhmmModel)>> {
    let mut out = Vec::new();
    for name in ["ghz", "cluster", "aklt-derived"] {
        out.push((
            name.to_string(),
            catalog::get(name, &[])?.model.expect("has model"),
        ));
    }
    out.push((
        "theta(pi/3)".to_string(),
        catalog::get("theta", &[FRAC_PI_3])?
            .model
            .expect("has model"),
    ));
    for i in 0..10u64 {
        let (m, d) = RANDOM_SHAPES[i as usize % 3];
        let seed = 1000 + i;
        out.push((
            format!("random(m={m},d={d},seed={seed})"),
            random_model(m, d, RANDOM_SITES, seed)?,
        ));
    }
    Ok(out)
}

fn outcome(
    id: u32,
    name: &'static str,
    start: Instant,
    body: Result<(bool, String)>,
) -> CriterionOutcome {
    let (passed, detail) = match body {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Partial measurement reproduces `build_state` for `N <= 4`,
/// `n in {N, N+1, N+2}`, independently of `n`, within 60 s.
pub fn round_trip() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let mut worst = 0.0f64;
        let mut worst_spread = 0.0f64;
        for (_, model) in round_trip_models()? {
            let t = product_tensors(&model)?;
            for big_n in 1..=4 {
                let psi = build_state(&t, big_n, DEFAULT_STATE_CAP)?;
                let first = observed_mps(&model, big_n, big_n, DEFAULT_STATE_CAP)?;
                for n in big_n..=big_n + 2 {
                    let got = observed_mps(&model, big_n, n, DEFAULT_STATE_CAP)?;
                    worst = worst.max(got.max_abs_diff(&psi));
                    worst_spread = worst_spread.max(got.max_abs_diff(&first));
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        Ok((
            worst <= 1e-10 && worst_spread <= 1e-10 && secs <= 60.0,
            format!("max deviation {worst:.3e}, max n-spread {worst_spread:.3e}, {secs:.2} s"),
        ))
    })();
    outcome(1, "partial measurement reproduces the MPS", start, body)
}

fn max_diff(a: &[Vec<f64>], b: &[&[f64]]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            if x.len() != y.len() {
                vec![f64::INFINITY]
            } else {
                x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).collect()
            }
        })
        .fold(0.0, f64::max)
}

/// Extraction fixtures for aklt and theta, and the gauge condition for every
/// catalog tensor set.
pub fn gauge_and_extraction() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let aklt = catalog::get("aklt", &[])?.tensors.expect("tensors");
        let x = extract_classical_hmm(&aklt)?;
        let (a, b) = (1.0 / 3.0, 2.0 / 3.0);
        let aklt_err = max_diff(&x.transitions[0].to_rows(), &[&[a, b], &[b, a]]).max(max_diff(
            &x.emissions[0].to_rows(),
            &[&[b, a, 0.0], &[0.0, a, b]],
        ));

        let mut theta_err = 0.0f64;
        for th in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
            let t = catalog::get("theta", &[th])?.tensors.expect("tensors");
            let x = extract_classical_hmm(&t)?;
            let (c2, s2) = (th.cos().powi(2), th.sin().powi(2));
            theta_err = theta_err
                .max(max_diff(
                    &x.transitions[0].to_rows(),
                    &[&[c2, s2], &[0.0, 1.0]],
                ))
                .max(max_diff(
                    &x.emissions[0].to_rows(),
                    &[&[c2, s2], &[1.0, 0.0]],
                ));
        }

        let mut gauge = 0.0f64;
        for info in catalog::list() {
            let params: &[f64] = if info.name == "theta" {
                &[FRAC_PI_6, FRAC_PI_4, FRAC_PI_3]
            } else {
                &[]
            };
            if let Some(t) = catalog::get(info.name, params)?.tensors {
                gauge = gauge.max(gauge_check(&t, 1e-12).max_deviation());
            }
        }
        Ok((
            aklt_err <= 1e-15 && theta_err <= 1e-15 && gauge <= 1e-12,
            format!(
                "aklt extraction error {aklt_err:.3e}, theta extraction error {theta_err:.3e}, \
                 max catalog gauge deviation {gauge:.3e}"
            ),
        ))
    })();
    outcome(2, "gauge condition and classical extraction", start, body)
}

/// aklt is infeasible with a nonzero witness; cluster factors with
/// `|U| = 1/sqrt(2)` and small reconstruction error.
pub fn decomposition() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let aklt = catalog::get("aklt", &[])?.tensors.expect("tensors");
        let r = decompose_tensors(&aklt, 1e-10)?;
        let witness = r.witness.clone();
        let aklt_ok = !r.feasible && witness.as_ref().is_some_and(|w| w.magnitude > 0.0);

        let cluster = catalog::get("cluster", &[])?.tensors.expect("tensors");
        let r = decompose_tensors(&cluster, 1e-10)?;
        let moduli_err = r
            .factors
            .iter()
            .flat_map(|f| {
                f.u.data()
                    .iter()
                    .map(|z| (z.norm() - std::f64::consts::FRAC_1_SQRT_2).abs())
            })
            .fold(0.0, f64::max);
        let cluster_ok = r.feasible && moduli_err <= 1e-12 && r.reconstruction_error <= 1e-10;
        let w = witness
            .map(|w| match w.hidden_index {
                Some(i) => format!(
                    "site {}, hidden index {i}, sigma2 {:.6}",
                    w.site, w.magnitude
                ),
                None => format!("site {}, {} {:.3e}", w.site, w.reason, w.magnitude),
            })
            .unwrap_or_else(|| "none".into());
        Ok((
            aklt_ok && cluster_ok,
            format!(
                "aklt witness: {w}; cluster feasible = {}, |U| error {moduli_err:.3e}, \
                 reconstruction {:.3e}",
                r.feasible, r.reconstruction_error
            ),
        ))
    })();
    outcome(3, "decomposition feasibility", start, body)
}

/// The closed-form observation density equals the partial trace of the
/// joint state.
pub fn density_routes() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let mut models = Vec::new();
        for name in ["ghz", "cluster", "aklt-derived"] {
            models.push(catalog::get(name, &[])?.model.expect("model"));
        }
        models.push(catalog::get("theta", &[FRAC_PI_3])?.model.expect("model"));
        for i in 0..5u64 {
            let (m, d) = RANDOM_SHAPES[i as usize % 3];
            models.push(random_model(m, d, 3, 2000 + i)?);
        }
        let mut worst = 0.0f64;
        let mut cases = 0;
        for model in &models {
            let t = product_tensors(model)?;
            let top = if model.d() >= 3 { 2 } else { 3 };
            for n in 1..=top {
                let f = observation_density_formula(&t, model.pi(), n, DEFAULT_DENSITY_CAP)?;
                let tr = observation_density_trace(model, n, DEFAULT_DENSITY_CAP)?;
                worst = worst.max(f.matrix().max_abs_diff(tr.matrix()));
                cases += 1;
            }
        }
        Ok((
            worst <= 1e-12,
            format!("{cases} cases, max entry gap {worst:.3e}"),
        ))
    })();
    outcome(
        4,
        "observation density: closed form vs partial trace",
        start,
        body,
    )
}

/// GHZ fixture values and the bound with its dephased identity on the
/// round-trip models.
pub fn entropy_bound() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let ghz = catalog::get("ghz", &[])?.model.expect("model");
        let r = check_bound(&ghz, 3, SUPPORT_EPS, DEFAULT_DENSITY_CAP)?;
        let ghz_ok = (r.s_value - LN_2).abs() <= 1e-8 && r.rhs_value.abs() <= 1e-10;

        let mut failures = Vec::new();
        let mut worst_gap = 0.0f64;
        let mut non_unit = 0;
        for (name, model) in round_trip_models()? {
            for n in 1..=3 {
                let r = check_bound(&model, n, SUPPORT_EPS, DEFAULT_DENSITY_CAP)?;
                if !r.unit_trace {
                    non_unit += 1;
                }
                let nb = r.normalized.as_ref().expect("nonzero state");
                let gap = if nb.rhs_value == nb.s_diag {
                    0.0
                } else {
                    (nb.rhs_value - nb.s_diag).abs()
                };
                worst_gap = worst_gap.max(gap).max(r.rhs_gap);
                if !nb.holds || !r.holds || gap > 1e-10 || r.rhs_gap > 1e-10 {
                    failures.push(format!("{name} N={n}"));
                }
            }
        }
        Ok((
            ghz_ok && failures.is_empty(),
            format!(
                "ghz S = {:.12}, RHS = {:.3e}; max |RHS - S_diag| {worst_gap:.3e}; \
                 {non_unit} case(s) with Tr rho_N != 1; failures: {}",
                r.s_value,
                r.rhs_value,
                if failures.is_empty() {
                    "none".into()
                } else {
                    failures.join(", ")
                }
            ),
        ))
    })();
    outcome(5, "relative-entropy lower bound", start, body)
}

/// Random full-rank density matrix `G G^dagger / Tr`.
pub fn random_density(rng: &mut SeededRng, dim: usize) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] = rng.complex_gaussian();
        }
    }
    let rho = g.matmul(&g.dagger()).expect("square");
    let tr = rho.trace().re;
    rho.scale(crate::linalg::re(1.0 / tr))
}

/// Data processing for the dephasing channel and a single-factor partial
/// trace on 50 seeded pairs each in dimensions 4 and 8.
pub fn data_processing() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let mut rng = SeededRng::new(3000);
        let mut worst = f64::NEG_INFINITY;
        let mut pairs = 0;
        for dims in [vec![2usize, 2], vec![2, 4]] {
            let dim: usize = dims.iter().product();
            for _ in 0..50 {
                let rho = DensityMatrix::new(random_density(&mut rng, dim), dims.clone())?;
                let sigma = DensityMatrix::new(random_density(&mut rng, dim), dims.clone())?;
                let s = relative_entropy(&rho, &sigma, SUPPORT_EPS)?;
                let sd = relative_entropy(
                    &diagonal_channel(&rho),
                    &diagonal_channel(&sigma),
                    SUPPORT_EPS,
                )?;
                let sp = relative_entropy(
                    &rho.partial_trace(&[1])?,
                    &sigma.partial_trace(&[1])?,
                    SUPPORT_EPS,
                )?;
                worst = worst.max(sd - s).max(sp - s);
                pairs += 1;
            }
        }
        Ok((
            worst <= 1e-8,
            format!("{pairs} pairs, max S(channel) - S = {worst:.3e}"),
        ))
    })();
    outcome(6, "data processing inequality", start, body)
}

/// Unit norm of the joint state and agreement of the observation process
/// with its closed form.
pub fn unit_vector() -> CriterionOutcome {
    let start = Instant::now();
    let body = (|| {
        let mut norm_err = 0.0f64;
        let mut aligned = 0.0f64;
        let mut printed = 0.0f64;
        let mut triggered = 0;
        for (_, model) in round_trip_models()? {
            for n in 1..=5 {
                norm_err =
                    norm_err.max((build_psi_hon(&model, n, DEFAULT_STATE_CAP)?.norm() - 1.0).abs());
                let measured = observation_process(&model, n, DEFAULT_STATE_CAP)?;
                let a = build_psi_on(&model, n, PsiOnReading::SiteAligned, DEFAULT_STATE_CAP)?;
                let p = build_psi_on(&model, n, PsiOnReading::AsPrinted, DEFAULT_STATE_CAP)?;
                aligned = aligned.max(a.max_abs_diff(&measured));
                let gap = p.max_abs_diff(&measured);
                if gap > 1e-10 {
                    triggered += 1;
                }
                printed = printed.max(gap);
            }
        }
        Ok((
            norm_err <= 1e-10 && aligned <= 1e-10,
            format!(
                "max | ||Psi|| - 1 | {norm_err:.3e}; partial measurement vs closed form {aligned:.3e}; \
                 as-printed index reading differs in {triggered} case(s), max {printed:.3e}"
            ),
        ))
    })();
    outcome(7, "joint state norm and observation process", start, body)
}

/// `|<psi_aklt, psi_derived>| / (||psi_aklt|| ||psi_derived||)` at `N`. NaN when
/// the aklt state vanishes, as it does at `N = 1`.
pub fn aklt_overlap(n: usize) -> Result<f64> {
    let a = build_state(
        &catalog::get("aklt", &[])?.tensors.expect("tensors"),
        n,
        DEFAULT_STATE_CAP,
    )?;
    let b = build_state(
        &catalog::get("aklt-derived", &[])?.tensors.expect("tensors"),
        n,
        DEFAULT_STATE_CAP,
    )?;
    Ok(a.inner(&b)?.norm() / (a.norm() * b.norm()))
}

/// The aklt and aklt-derived states at `N = 3` are not parallel.
pub fn distinctness() -> (CriterionOutcome, Option<f64>) {
    let start = Instant::now();
    let value = aklt_overlap(3);
    let overlap = value.as_ref().ok().copied();
    let body = value.map(|v| {
        (
            v < 1.0 - 1e-6,
            format!("normalized overlap at N = 3: {v:.15}"),
        )
    });
    (
        outcome(8, "aklt and aklt-derived states are distinct", start, body),
        overlap,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub outcomes: Vec<CriterionOutcome>,
    pub aklt_overlap: Option<f64>,
    pub elapsed: Duration,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

pub fn run_all() -> SelftestReport {
    let start = Instant::now();
    let mut outcomes = vec![
        round_trip(),
        gauge_and_extraction(),
        decomposition(),
        density_routes(),
        entropy_bound(),
        data_processing(),
        unit_vector(),
    ];
    let (c8, overlap) = distinctness();
    outcomes.push(c8);
    SelftestReport {
        outcomes,
        aklt_overlap: overlap,
        elapsed: start.elapsed(),
    }
}
