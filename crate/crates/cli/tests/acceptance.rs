//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines reach the console. Reference
//! values come from naive oracles in this file (explicit index loops over the
//! definitions) rather than from the library routines under test.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, LN_2};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ehmm_mps::bridge::{decompose_tensors, extract_classical_hmm, observed_mps, product_tensors};
use ehmm_mps::catalog;
use ehmm_mps::ehmm::{build_psi_hon, observation_process, EhmmModel, DEFAULT_STATE_CAP};
use ehmm_mps::entropy::{
    check_bound, observation_density_formula, observation_density_trace, relative_entropy,
    DensityMatrix, DEFAULT_DENSITY_CAP,
};
use ehmm_mps::linalg::{DenseMatrix, SUPPORT_EPS};
use ehmm_mps::mps::{build_state, SiteTensorSet};
use ehmm_mps::rng::SeededRng;
use ehmm_mps::selftest::{random_density, round_trip_models, RANDOM_SHAPES};
use ehmm_mps::C64;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Check);

const FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/tests/fixtures/acceptance_report.json"
);

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Digits of `flat` in base `base`, most significant first.
fn digits(mut flat: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = flat % base;
        flat /= base;
    }
    out
}

fn mat_mul(a: &[Vec<C64>], b: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![zero(); c]; r];
    for i in 0..r {
        for j in 0..c {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

fn family_at(t: &SiteTensorSet, site: usize) -> Vec<Vec<Vec<C64>>> {
    t.family(site)
        .unwrap()
        .iter()
        .map(|a| a.to_rows())
        .collect()
}

/// `Tr(A_{w_1}^[1] ... A_{w_N}^[N])` for every word, by explicit products.
fn oracle_mps(t: &SiteTensorSet, n: usize) -> Vec<C64> {
    let (m, d) = (t.m(), t.d());
    let families: Vec<_> = (1..=n).map(|s| family_at(t, s)).collect();
    (0..d.pow(n as u32))
        .map(|flat| {
            let w = digits(flat, d, n);
            let mut p = families[0][w[0]].clone();
            for l in 1..n {
                p = mat_mul(&p, &families[l][w[l]]);
            }
            (0..m).map(|i| p[i][i]).sum()
        })
        .collect()
}

/// `sqrt(pi_{i_1}) prod U^[l]_{i_l i_{l+1}} chi^[l]_{i_l}(k_l)`, hidden digits
/// first.
fn oracle_joint(model: &EhmmModel, n: usize) -> Vec<C64> {
    let (m, d) = (model.m(), model.d());
    let hid_count = m.pow(n as u32 + 1);
    let obs_count = d.pow(n as u32);
    let mut out = Vec::with_capacity(hid_count * obs_count);
    for h in 0..hid_count {
        let hid = digits(h, m, n + 1);
        for o in 0..obs_count {
            let obs = digits(o, d, n);
            let mut c = C64::new(model.pi().entries()[hid[0]].sqrt(), 0.0);
            for l in 0..n {
                c *= model.hidden_at(l + 1).unwrap().matrix()[(hid[l], hid[l + 1])];
                c *= model.emission_at(l + 1).unwrap().matrix()[(hid[l], obs[l])];
            }
            out.push(c);
        }
    }
    out
}

/// `sqrt(pi_{i_1}) prod U^[l]_{i_l i_{l+1}}`.
fn oracle_hidden(model: &EhmmModel, n: usize) -> Vec<C64> {
    let m = model.m();
    (0..m.pow(n as u32 + 1))
        .map(|h| {
            let hid = digits(h, m, n + 1);
            let mut c = C64::new(model.pi().entries()[hid[0]].sqrt(), 0.0);
            for l in 0..n {
                c *= model.hidden_at(l + 1).unwrap().matrix()[(hid[l], hid[l + 1])];
            }
            c
        })
        .collect()
}

/// `rho_O[k, k'] = sum_h Psi[h, k] conj(Psi[h, k'])`.
fn oracle_observation_density(model: &EhmmModel, n: usize) -> Vec<Vec<C64>> {
    let joint = oracle_joint(model, n);
    let obs = model.d().pow(n as u32);
    let hid = joint.len() / obs;
    let mut rho = vec![vec![zero(); obs]; obs];
    for h in 0..hid {
        let row = &joint[h * obs..(h + 1) * obs];
        for k in 0..obs {
            for kp in 0..obs {
                rho[k][kp] += row[k] * row[kp].conj();
            }
        }
    }
    rho
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| {
            if q > 0.0 {
                p * (p / q).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

fn max_gap(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn gauge_defect(t: &SiteTensorSet) -> f64 {
    let m = t.m();
    let mut worst = 0.0f64;
    for family in t.sites() {
        for i in 0..m {
            for j in 0..m {
                let mut s = zero();
                for a in family {
                    for l in 0..m {
                        s += a[(i, l)] * a[(j, l)].conj();
                    }
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).norm());
            }
        }
    }
    worst
}

fn dm(rows: Vec<Vec<C64>>, dims: Vec<usize>) -> DensityMatrix {
    DensityMatrix::new(DenseMatrix::from_rows(&rows).unwrap(), dims).unwrap()
}

fn dephase(a: &DenseMatrix) -> Vec<Vec<C64>> {
    let n = a.rows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { a[(i, i)] } else { zero() })
                .collect()
        })
        .collect()
}

/// Traces out the first factor of a `(a, b)` bipartite matrix.
fn trace_first(x: &DenseMatrix, a: usize, b: usize) -> Vec<Vec<C64>> {
    let mut out = vec![vec![zero(); b]; b];
    for i in 0..b {
        for j in 0..b {
            for s in 0..a {
                out[i][j] += x[(s * b + i, s * b + j)];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut spread = 0.0f64;
    let mut cases = 0;
    for (_, model) in round_trip_models()? {
        let t = product_tensors(&model)?;
        for big_n in 1..=4 {
            let reference = oracle_mps(&t, big_n);
            worst = worst.max(max_gap(
                build_state(&t, big_n, DEFAULT_STATE_CAP)?.data(),
                &reference,
            ));
            let first = observed_mps(&model, big_n, big_n, DEFAULT_STATE_CAP)?;
            for n in big_n..=big_n + 2 {
                let got = observed_mps(&model, big_n, n, DEFAULT_STATE_CAP)?;
                worst = worst.max(max_gap(got.data(), &reference));
                spread = spread.max(max_gap(got.data(), first.data()));
                cases += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-10 && spread <= 1e-10 && secs <= 60.0,
        format!("{cases} cases, max deviation {worst:.2e}, n-spread {spread:.2e}, {secs:.2} s"),
    ))
}

fn criterion_2() -> Check {
    let aklt = catalog::get("aklt", &[])?.tensors.unwrap();
    let x = extract_classical_hmm(&aklt)?;
    let (a, b) = (1.0 / 3.0, 2.0 / 3.0);
    let mut err = 0.0f64;
    let mut cmp = |got: Vec<Vec<f64>>, want: Vec<Vec<f64>>| {
        for (r, s) in got.iter().zip(&want) {
            assert_eq!(r.len(), s.len());
            for (x, y) in r.iter().zip(s) {
                err = err.max((x - y).abs());
            }
        }
    };
    cmp(x.transitions[0].to_rows(), vec![vec![a, b], vec![b, a]]);
    cmp(
        x.emissions[0].to_rows(),
        vec![vec![b, a, 0.0], vec![0.0, a, b]],
    );
    for th in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
        let t = catalog::get("theta", &[th])?.tensors.unwrap();
        let x = extract_classical_hmm(&t)?;
        let (c2, s2) = (th.cos() * th.cos(), th.sin() * th.sin());
        cmp(
            x.transitions[0].to_rows(),
            vec![vec![c2, s2], vec![0.0, 1.0]],
        );
        cmp(x.emissions[0].to_rows(), vec![vec![c2, s2], vec![1.0, 0.0]]);
    }
    let mut gauge = 0.0f64;
    for name in ["ghz", "cluster", "aklt", "aklt-derived"] {
        gauge = gauge.max(gauge_defect(&catalog::get(name, &[])?.tensors.unwrap()));
    }
    for th in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
        gauge = gauge.max(gauge_defect(
            &catalog::get("theta", &[th])?.tensors.unwrap(),
        ));
    }
    Ok((
        err <= 1e-15 && gauge <= 1e-12,
        format!("fixture error {err:.2e}, gauge deviation {gauge:.2e}"),
    ))
}

fn criterion_3() -> Check {
    let aklt = catalog::get("aklt", &[])?.tensors.unwrap();
    let r = decompose_tensors(&aklt, 1e-10)?;
    let w = r.witness.clone().ok_or("aklt produced no witness")?;
    // sigma_2 of the slice M_jk = a_{k;0j} from the 2x2 Gram matrix M M^dagger.
    let fam = family_at(&aklt, 1);
    let mut g = [[zero(); 2]; 2];
    for (j, row) in g.iter_mut().enumerate() {
        for (jp, slot) in row.iter_mut().enumerate() {
            for a in &fam {
                *slot += a[0][j] * a[0][jp].conj();
            }
        }
    }
    let (tr, det) = (
        (g[0][0] + g[1][1]).re,
        (g[0][0] * g[1][1] - g[0][1] * g[1][0]).re,
    );
    let sigma2 = ((tr - (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0)
        .max(0.0)
        .sqrt();
    let aklt_ok = !r.feasible
        && w.site == 1
        && w.hidden_index == Some(1)
        && sigma2 > 0.0
        && (w.magnitude - sigma2).abs() <= 1e-12;

    let cluster = catalog::get("cluster", &[])?.tensors.unwrap();
    let r = decompose_tensors(&cluster, 1e-10)?;
    let mut moduli = 0.0f64;
    let mut recon = 0.0f64;
    for (site, f) in r.factors.iter().enumerate() {
        for z in f.u.data() {
            moduli = moduli.max((z.norm() - FRAC_1_SQRT_2).abs());
        }
        for (k, a) in cluster.family(site + 1)?.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    recon = recon.max((a[(i, j)] - f.u[(i, j)] * f.chi[(i, k)]).norm());
                }
            }
        }
    }
    let cluster_ok = r.feasible && !r.factors.is_empty() && moduli <= 1e-12 && recon <= 1e-10;
    Ok((
        aklt_ok && cluster_ok,
        format!(
            "aklt infeasible at site {} hidden index {}, sigma2 {:.12} (oracle {sigma2:.12}); \
             cluster |U| error {moduli:.2e}, reconstruction {recon:.2e}",
            w.site,
            w.hidden_index.map_or("-".to_string(), |i| i.to_string()),
            w.magnitude
        ),
    ))
}

fn criterion_4() -> Check {
    let mut models = Vec::new();
    for name in ["ghz", "cluster", "aklt-derived"] {
        models.push(catalog::get(name, &[])?.model.unwrap());
    }
    for th in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
        models.push(catalog::get("theta", &[th])?.model.unwrap());
    }
    for i in 0..5u64 {
        let (m, d) = RANDOM_SHAPES[i as usize % 3];
        models.push(catalog::random_model(m, d, 3, 4000 + i)?);
    }
    let mut worst = 0.0f64;
    let mut oracle = 0.0f64;
    let mut cases = 0;
    for model in &models {
        let t = product_tensors(model)?;
        let top = if model.d() >= 3 { 2 } else { 3 };
        for n in 1..=top {
            let formula = observation_density_formula(&t, model.pi(), n, DEFAULT_DENSITY_CAP)?;
            let trace = observation_density_trace(model, n, DEFAULT_DENSITY_CAP)?;
            worst = worst.max(formula.matrix().max_abs_diff(trace.matrix()));
            let reference = oracle_observation_density(model, n);
            let flat: Vec<C64> = reference.into_iter().flatten().collect();
            oracle = oracle.max(max_gap(formula.matrix().data(), &flat));
            cases += 1;
        }
    }
    Ok((
        worst <= 1e-12 && oracle <= 1e-12,
        format!("{cases} cases, formula vs trace {worst:.2e}, formula vs oracle {oracle:.2e}"),
    ))
}

fn criterion_5() -> Check {
    // GHZ, N = 3: rho = |GHZ><GHZ| is pure and rho_O = (|000><000| + |111><111|)/2,
    // so S = -<GHZ| ln rho_O |GHZ> = ln 2. Both diagonals equal (1/2, 0, ..., 0, 1/2),
    // so the classical term vanishes.
    let ghz = catalog::get("ghz", &[])?.model.unwrap();
    let r = check_bound(&ghz, 3, SUPPORT_EPS, DEFAULT_DENSITY_CAP)?;
    let nb = r.normalized.clone().ok_or("ghz rho_N vanished")?;
    let ghz_ok = (nb.s_value - LN_2).abs() <= 1e-8 && nb.rhs_value.abs() <= 1e-10;

    let mut failures = Vec::new();
    let mut identity = 0.0f64;
    let mut cases = 0;
    for (name, model) in round_trip_models()? {
        let t = product_tensors(&model)?;
        for n in 1..=3 {
            let r = check_bound(&model, n, SUPPORT_EPS, DEFAULT_DENSITY_CAP)?;
            let nb = r.normalized.clone().ok_or("rho_N vanished")?;
            let psi = oracle_mps(&t, n);
            let norm_sq: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            let p: Vec<f64> = psi.iter().map(|z| z.norm_sqr() / norm_sq).collect();
            let rho_o = oracle_observation_density(&model, n);
            let q: Vec<f64> = (0..p.len()).map(|k| rho_o[k][k].re).collect();
            let classical = kl(&p, &q);
            let gap = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() };
            let g = gap(nb.rhs_value, classical).max(gap(nb.s_diag, classical));
            identity = identity.max(g);
            let holds = nb.s_value == f64::INFINITY || nb.s_value >= nb.rhs_value - 1e-8;
            if !holds || g > 1e-10 {
                failures.push(format!("{name} N={n}"));
            }
            cases += 1;
        }
    }
    Ok((
        ghz_ok && failures.is_empty(),
        format!(
            "ghz S = {:.12}, RHS = {:.2e}; {cases} cases, max |RHS - S_diag| vs oracle {identity:.2e}; \
             failures: {}",
            nb.s_value,
            nb.rhs_value,
            if failures.is_empty() { "none".to_string() } else { failures.join(", ") }
        ),
    ))
}

fn criterion_6() -> Check {
    let mut rng = SeededRng::new(6000);
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (a, b) in [(2usize, 2usize), (2, 4)] {
        let dim = a * b;
        for _ in 0..50 {
            let x = random_density(&mut rng, dim);
            let y = random_density(&mut rng, dim);
            let s = relative_entropy(
                &dm(x.to_rows(), vec![a, b]),
                &dm(y.to_rows(), vec![a, b]),
                SUPPORT_EPS,
            )?;
            let sd = relative_entropy(
                &dm(dephase(&x), vec![dim]),
                &dm(dephase(&y), vec![dim]),
                SUPPORT_EPS,
            )?;
            let sp = relative_entropy(
                &dm(trace_first(&x, a, b), vec![b]),
                &dm(trace_first(&y, a, b), vec![b]),
                SUPPORT_EPS,
            )?;
            worst = worst.max(sd - s).max(sp - s);
            pairs += 1;
        }
    }
    // Commuting pair: the quantum value reduces to the classical one.
    let p = [0.5, 0.3, 0.2, 0.0];
    let q = [0.25, 0.25, 0.25, 0.25];
    let diag = |v: &[f64]| DenseMatrix::diag(v);
    let s = relative_entropy(
        &DensityMatrix::new(diag(&p), vec![4])?,
        &DensityMatrix::new(diag(&q), vec![4])?,
        SUPPORT_EPS,
    )?;
    let classical = (s - kl(&p, &q)).abs();
    Ok((
        worst <= 1e-8 && classical <= 1e-12,
        format!(
            "{pairs} pairs, max S(channel) - S = {worst:.3e}, commuting-pair error {classical:.2e}"
        ),
    ))
}

fn criterion_7() -> Check {
    let mut norm = 0.0f64;
    let mut joint = 0.0f64;
    let mut pip = 0.0f64;
    for (_, model) in round_trip_models()? {
        for n in 1..=5 {
            let reference = oracle_joint(&model, n);
            let got = build_psi_hon(&model, n, DEFAULT_STATE_CAP)?;
            joint = joint.max(max_gap(got.data(), &reference));
            let sq: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
            norm = norm.max((sq.sqrt() - 1.0).abs());

            let hidden = oracle_hidden(&model, n);
            let obs = reference.len() / hidden.len();
            let mut measured = vec![zero(); obs];
            for (h, hv) in hidden.iter().enumerate() {
                for (k, slot) in measured.iter_mut().enumerate() {
                    *slot += hv.conj() * reference[h * obs + k];
                }
            }
            pip = pip.max(max_gap(
                observation_process(&model, n, DEFAULT_STATE_CAP)?.data(),
                &measured,
            ));
        }
    }
    Ok((
        norm <= 1e-10 && joint <= 1e-10 && pip <= 1e-10,
        format!("max | ||Psi|| - 1 | {norm:.2e}, joint vs oracle {joint:.2e}, observation process vs oracle {pip:.2e}"),
    ))
}

fn criterion_8() -> Check {
    let a = oracle_mps(&catalog::get("aklt", &[])?.tensors.unwrap(), 3);
    let b = oracle_mps(&catalog::get("aklt-derived", &[])?.tensors.unwrap(), 3);
    let inner: C64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let overlap = inner.norm() / (na * nb);
    let library = ehmm_mps::selftest::aklt_overlap(3)?;

    let path = Path::new(FIXTURE);
    let fixture = if path.exists() {
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let stored = doc["aklt_overlap_N3"]
            .as_f64()
            .ok_or("fixture lacks aklt_overlap_N3")?;
        (
            (stored - overlap).abs() <= 1e-12,
            format!("matches fixture {stored:e}"),
        )
    } else {
        std::fs::create_dir_all(path.parent().unwrap())?;
        let doc = serde_json::json!({ "schema_version": 1, "kind": "acceptance_report", "aklt_overlap_N3": overlap });
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        (true, format!("written to {}", path.display()))
    };
    Ok((
        overlap < 1.0 - 1e-6 && (overlap - library).abs() <= 1e-12 && fixture.0,
        format!(
            "normalized overlap {overlap:e} (library {library:e}), {}",
            fixture.1
        ),
    ))
}

fn criterion_9() -> Check {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_ehmm-mps"))
        .arg("selftest")
        .output()?;
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines = stdout.lines().filter(|l| l.starts_with("[PASS]")).count();
    Ok((
        out.status.code() == Some(0) && lines == 8 && elapsed < Duration::from_secs(300),
        format!(
            "exit {:?}, {lines}/8 checks passed, {:.2} s",
            out.status.code(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("round trip through partial measurement", criterion_1),
        ("gauge and extraction fixtures", criterion_2),
        ("decomposition feasibility", criterion_3),
        ("observation density routes", criterion_4),
        ("relative-entropy bound", criterion_5),
        ("data processing", criterion_6),
        ("unit joint state and observation process", criterion_7),
        ("aklt and aklt-derived are distinct", criterion_8),
        ("selftest binary", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (passed, detail) = match f() {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {} ({name}): {detail}",
            if passed { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
