use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ehmm_mps::bridge::{decompose_tensors, extract_classical_hmm, observed_mps, product_tensors};
use ehmm_mps::catalog::{self, random_model};
use ehmm_mps::ehmm::{
    build_psi_hn, build_psi_hon, observation_process, EhmmModel, DEFAULT_STATE_CAP,
};
use ehmm_mps::entropy::{check_bound, DEFAULT_DENSITY_CAP};
use ehmm_mps::io;
use ehmm_mps::linalg::{DenseMatrix, TensorVector, SUPPORT_EPS};
use ehmm_mps::mps::{build_state, SiteTensorSet};
use ehmm_mps::{selftest, Error, C64};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "ehmm-mps",
    version,
    about = "Matrix product states and quantum hidden Markov models"
)]
struct Cli {
    /// Absolute tolerance for verification.
    #[arg(long, global = true, default_value_t = 1e-10, value_parser = positive)]
    atol: f64,
    /// Relative tolerance for verification, scaled by the largest reference entry.
    #[arg(long, global = true, default_value_t = 0.0, value_parser = nonnegative)]
    rtol: f64,
    /// Support threshold for relative entropy.
    #[arg(long, global = true, default_value_t = SUPPORT_EPS, value_parser = positive)]
    eps: f64,
    /// Maximum number of entries in any dense state vector.
    #[arg(long, global = true, env = "EHMM_MPS_SIZE_CAP", default_value_t = DEFAULT_STATE_CAP)]
    size_cap: usize,
    /// Maximum dimension of a density matrix.
    #[arg(long, global = true, env = "EHMM_MPS_DENSITY_CAP", default_value_t = DEFAULT_DENSITY_CAP)]
    density_cap: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Built-in states and models.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Dense coefficients of the periodic MPS on N sites.
    BuildMps {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        sites: usize,
        /// Use the unit-norm variant of a catalog entry when it has one.
        #[arg(long)]
        unit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dense joint, hidden or observation state of an EHMM.
    BuildEhmmState {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Classical transition and emission matrices of a gauge-fixed tensor set.
    Extract {
        #[command(flatten)]
        source: Source,
    },
    /// Factor a tensor set into hidden and emission amplitudes.
    Decompose {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 1e-10, value_parser = positive)]
        tol: f64,
    },
    /// Relative-entropy bound between the MPS and the observation process.
    Entropy {
        #[command(flatten)]
        source: Source,
        #[arg(long = "N")]
        big_n: usize,
    },
    /// Run the full invariant suite.
    Selftest {
        /// Write a structured report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogCommand {
    List,
    Export {
        name: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Vec<f64>,
        /// Write `<name>.tensors.json` and `<name>.model.json` here instead of stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum VerifyCommand {
    /// Partial measurement of the EHMM reproduces the MPS.
    Theorem1 {
        #[command(flatten)]
        source: Source,
        #[arg(long = "N")]
        big_n: usize,
        #[arg(long = "n", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Overrides --atol.
        #[arg(long, value_parser = positive)]
        tol: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    Hon,
    Hn,
    On,
}

#[derive(Args, Debug, Clone)]
struct Source {
    #[arg(long, conflicts_with_all = ["model", "name"])]
    tensors: Option<PathBuf>,
    #[arg(long, conflicts_with = "name")]
    model: Option<PathBuf>,
    /// Catalog entry, or `random` for a seeded random unitary model.
    #[arg(long)]
    name: Option<String>,
    /// Angles for `--name theta`, one per stored site.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `m,d` for `--name random`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    dims: Vec<usize>,
    /// Stored sites for `--name random`; 0 gives a translation-invariant model.
    #[arg(long, default_value_t = 0)]
    model_sites: usize,
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a positive finite number, got {s}"))
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a nonnegative finite number, got {s}"))
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::GaugeViolation { .. }
            | Error::NotUnitary { .. }
            | Error::InvalidModel(_)
            | Error::NoConvergence { .. } => EXIT_FAIL,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

/// 12 significant digits, shortest form.
fn sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "+inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".into()
    } else if !(1e-4..1e12).contains(&rounded.abs()) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn csig(z: C64) -> String {
    let (re, im) = (sig(z.re), sig(z.im.abs()));
    if im == "0" {
        re
    } else if sig(z.re) == "0" {
        format!("{}{im}i", if z.im < 0.0 { "-" } else { "" })
    } else {
        format!("{re}{}{im}i", if z.im < 0.0 { "-" } else { "+" })
    }
}

fn real_rows(rows: &[Vec<f64>]) -> String {
    let body: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter().map(|&x| sig(x)).collect::<Vec<_>>().join(", ")
            )
        })
        .collect();
    format!("[{}]", body.join(", "))
}

fn complex_rows(a: &DenseMatrix) -> String {
    let body: Vec<String> = a
        .to_rows()
        .iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter().map(|&z| csig(z)).collect::<Vec<_>>().join(", ")
            )
        })
        .collect();
    format!("[{}]", body.join(", "))
}

struct Ctx {
    cli: Cli,
}

impl Ctx {
    fn emit(&self, table: &str, value: &Value) -> Result<(), Failure> {
        match self.cli.format {
            Format::Table => print!("{table}"),
            Format::Json => println!("{}", io::to_pretty(value)?),
        }
        Ok(())
    }
}

fn catalog_entry(source: &Source) -> Result<catalog::CatalogEntry, Failure> {
    let name = source.name.as_deref().expect("checked by caller");
    Ok(catalog::get(name, &source.theta)?)
}

fn random_source(source: &Source) -> Result<EhmmModel, Failure> {
    let [m, d] = source.dims[..] else {
        return Err(Failure::usage("--name random needs --dims m,d"));
    };
    let model = if source.model_sites == 0 {
        catalog::random_homogeneous_model(m, d, source.seed)?
    } else {
        random_model(m, d, source.model_sites, source.seed)?
    };
    Ok(model)
}

fn load_model(source: &Source) -> Result<EhmmModel, Failure> {
    if let Some(path) = &source.model {
        return Ok(io::read_model(path)?);
    }
    match source.name.as_deref() {
        Some("random") => random_source(source),
        Some(name) => catalog_entry(source)?
            .model
            .ok_or_else(|| Failure::usage(format!("catalog entry {name} has no EHMM model"))),
        None => Err(Failure::usage("one of --model or --name is required")),
    }
}

fn load_tensors(source: &Source, unit: bool) -> Result<SiteTensorSet, Failure> {
    if let Some(path) = &source.tensors {
        return Ok(io::read_tensors(path)?);
    }
    if source.model.is_some() || source.name.as_deref() == Some("random") {
        return Ok(product_tensors(&load_model(source)?)?);
    }
    match source.name.as_deref() {
        Some(_) => {
            let entry = catalog_entry(source)?;
            let tensors = if unit {
                entry.unit_state_tensors.or(entry.tensors)
            } else {
                entry.tensors
            };
            match (tensors, entry.model) {
                (Some(t), _) => Ok(t),
                (None, Some(model)) => Ok(product_tensors(&model)?),
                (None, None) => Err(Failure::usage(format!(
                    "catalog entry {} is empty",
                    entry.name
                ))),
            }
        }
        None => Err(Failure::usage(
            "one of --tensors, --model or --name is required",
        )),
    }
}

fn state_table(header: &str, psi: &TensorVector, atol: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{header}");
    let _ = writeln!(s, "dims = {:?}", psi.dims());
    let _ = writeln!(s, "norm = {}", sig(psi.norm()));
    let _ = writeln!(s, "index\tcoefficient");
    for (flat, z) in psi.data().iter().enumerate() {
        if z.norm() > atol {
            let idx: Vec<String> = psi
                .multi_index(flat)
                .iter()
                .map(|k| k.to_string())
                .collect();
            let _ = writeln!(s, "{}\t{}", idx.join(" "), csig(*z));
        }
    }
    s
}

fn write_out(out: &Option<PathBuf>, value: &Value) -> Result<(), Failure> {
    if let Some(path) = out {
        io::write_text(path, &io::to_pretty(value)?)?;
    }
    Ok(())
}

fn catalog_cmd(ctx: &Ctx, cmd: &CatalogCommand) -> Outcome {
    match cmd {
        CatalogCommand::List => {
            let infos = catalog::list();
            let mut table = String::from("name\tparameters\ttensors\tmodel\tdescription\n");
            for i in &infos {
                let _ = writeln!(
                    table,
                    "{}\t{}\t{}\t{}\t{}",
                    i.name,
                    if i.parameters.is_empty() {
                        "-"
                    } else {
                        i.parameters
                    },
                    i.has_tensors,
                    i.has_model,
                    i.description
                );
            }
            let entries: Vec<Value> = infos
                .iter()
                .map(|i| {
                    json!({
                        "name": i.name,
                        "parameters": i.parameters,
                        "has_tensors": i.has_tensors,
                        "has_model": i.has_model,
                        "description": i.description,
                    })
                })
                .collect();
            ctx.emit(
                &table,
                &io::document("catalog", json!({ "entries": entries })),
            )?;
            Ok(0)
        }
        CatalogCommand::Export {
            name,
            theta,
            out_dir,
        } => {
            let entry = catalog::get(name, theta)?;
            let tensors = entry.tensors.as_ref().map(io::tensor_doc);
            let model = entry.model.as_ref().map(io::model_doc);
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(Error::from)?;
                    let mut written = String::new();
                    if let Some(doc) = &tensors {
                        let path = dir.join(format!("{name}.tensors.json"));
                        io::write_text(&path, &io::to_pretty(doc)?)?;
                        let _ = writeln!(written, "{}", path.display());
                    }
                    if let Some(doc) = &model {
                        let path = dir.join(format!("{name}.model.json"));
                        io::write_text(&path, &io::to_pretty(doc)?)?;
                        let _ = writeln!(written, "{}", path.display());
                    }
                    print!("{written}");
                }
                None => {
                    let value = io::document(
                        "catalog_entry",
                        json!({
                            "name": entry.name,
                            "parameters": entry.parameters,
                            "notes": entry.notes,
                            "tensors": tensors,
                            "model": model,
                        }),
                    );
                    println!("{}", io::to_pretty(&value)?);
                }
            }
            Ok(0)
        }
    }
}

fn build_mps_cmd(
    ctx: &Ctx,
    source: &Source,
    sites: usize,
    unit: bool,
    out: &Option<PathBuf>,
) -> Outcome {
    let t = load_tensors(source, unit)?;
    let psi = build_state(&t, sites, ctx.cli.size_cap)?;
    let value = io::document(
        "mps_state",
        serde_json::to_value(io::state_doc(&psi)).map_err(Error::from)?,
    );
    write_out(out, &value)?;
    ctx.emit(
        &state_table(&format!("MPS on {sites} sites"), &psi, ctx.cli.atol),
        &value,
    )?;
    Ok(0)
}

fn build_ehmm_cmd(
    ctx: &Ctx,
    source: &Source,
    n: usize,
    which: Which,
    out: &Option<PathBuf>,
) -> Outcome {
    let model = load_model(source)?;
    let cap = ctx.cli.size_cap;
    let (label, psi) = match which {
        Which::Hon => (
            "joint hidden-observation state",
            build_psi_hon(&model, n, cap)?,
        ),
        Which::Hn => ("hidden state", build_psi_hn(&model, n, cap)?),
        Which::On => ("observation state", observation_process(&model, n, cap)?),
    };
    let value = io::document(
        "ehmm_state",
        serde_json::to_value(io::state_doc(&psi)).map_err(Error::from)?,
    );
    write_out(out, &value)?;
    ctx.emit(
        &state_table(&format!("{label}, n = {n}"), &psi, ctx.cli.atol),
        &value,
    )?;
    Ok(0)
}

fn verify_cmd(ctx: &Ctx, cmd: &VerifyCommand) -> Outcome {
    let VerifyCommand::Theorem1 {
        source,
        big_n,
        n,
        tol,
    } = cmd;
    let model = load_model(source)?;
    let t = product_tensors(&model)?;
    let cap = ctx.cli.size_cap;
    let psi = build_state(&t, *big_n, cap)?;
    let scale = psi.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = tol.unwrap_or(ctx.cli.atol) + ctx.cli.rtol * scale;
    let mut table = format!("N = {big_n}, tolerance = {}\nn\tmax deviation\n", sig(tol));
    let mut rows = Vec::new();
    let mut ok = true;
    for &small_n in n {
        if small_n < *big_n {
            return Err(Failure::usage(format!(
                "--n {small_n} is below --N {big_n}"
            )));
        }
        let dev = observed_mps(&model, *big_n, small_n, cap)?.max_abs_diff(&psi);
        ok &= dev <= tol;
        let _ = writeln!(table, "{small_n}\t{}", sig(dev));
        rows.push(json!({ "n": small_n, "max_deviation": io::scalar(dev) }));
    }
    let _ = writeln!(table, "{}", if ok { "holds" } else { "FAILS" });
    let value = io::document(
        "theorem1",
        json!({ "N": big_n, "tolerance": tol, "deviations": rows, "holds": ok }),
    );
    ctx.emit(&table, &value)?;
    Ok(if ok { 0 } else { EXIT_FAIL })
}

fn extract_cmd(ctx: &Ctx, source: &Source) -> Outcome {
    let t = load_tensors(source, false)?;
    let x = extract_classical_hmm(&t)?;
    let mut table = String::new();
    for (site, (p, q)) in x.transitions.iter().zip(&x.emissions).enumerate() {
        let _ = writeln!(table, "site {}", site + 1);
        let _ = writeln!(table, "Pi = {}", real_rows(&p.to_rows()));
        let _ = writeln!(table, "Q = {}", real_rows(&q.to_rows()));
    }
    ctx.emit(&table, &io::extracted_value(&x))?;
    Ok(0)
}

fn decompose_cmd(ctx: &Ctx, source: &Source, tol: f64) -> Outcome {
    let t = load_tensors(source, false)?;
    let r = decompose_tensors(&t, tol)?;
    let mut table = String::new();
    if r.feasible {
        let _ = writeln!(
            table,
            "feasible, reconstruction error {}",
            sig(r.reconstruction_error)
        );
        for (site, f) in r.factors.iter().enumerate() {
            let _ = writeln!(table, "site {}", site + 1);
            let _ = writeln!(table, "U = {}", complex_rows(&f.u));
            let _ = writeln!(table, "chi = {}", complex_rows(&f.chi));
        }
    } else if let Some(w) = &r.witness {
        match w.hidden_index {
            Some(i) => {
                let _ = writeln!(table, "infeasible, site {}, hidden index {i}", w.site);
            }
            None => {
                let _ = writeln!(table, "infeasible, site {}", w.site);
            }
        }
        let _ = writeln!(table, "reason {}, magnitude {}", w.reason, sig(w.magnitude));
    }
    ctx.emit(&table, &io::decomposition_value(&r))?;
    Ok(if r.feasible { 0 } else { EXIT_FAIL })
}

fn entropy_cmd(ctx: &Ctx, source: &Source, big_n: usize) -> Outcome {
    let model = load_model(source)?;
    let r = check_bound(&model, big_n, ctx.cli.eps, ctx.cli.density_cap)?;
    let mut table = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(table, "{k}\t{v}");
    };
    row("N", big_n.to_string());
    row("route", format!("{:?}", r.route).to_lowercase());
    row("S(rho_N || rho_O)", sig(r.s_value));
    row("RHS", sig(r.rhs_value));
    row("S(diag rho_N || diag rho_O)", sig(r.s_diag));
    row("Tr rho_N", sig(r.trace_rho_n));
    row("Tr rho_O", sig(r.trace_rho_o));
    row("bound holds", r.holds.to_string());
    row("data processing holds", r.data_processing_holds.to_string());
    if let Some(nb) = &r.normalized {
        row("normalized S", sig(nb.s_value));
        row("normalized RHS", sig(nb.rhs_value));
        row("normalized bound holds", nb.holds.to_string());
    }
    for d in &r.diagnostics {
        row("note", d.clone());
    }
    ctx.emit(&table, &io::bound_value(&r))?;
    Ok(if r.holds { 0 } else { EXIT_FAIL })
}

fn selftest_cmd(ctx: &Ctx, report: &Option<PathBuf>) -> Outcome {
    let r = selftest::run_all();
    let mut table = String::new();
    for o in &r.outcomes {
        let _ = writeln!(
            table,
            "[{}] {} {} ({:.2} s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let _ = writeln!(table, "total {:.2} s", r.elapsed.as_secs_f64());
    let value = io::document(
        "selftest",
        json!({
            "passed": r.passed(),
            "elapsed_seconds": r.elapsed.as_secs_f64(),
            "aklt_overlap_N3": r.aklt_overlap.map(io::scalar),
            "criteria": r.outcomes.iter().map(|o| json!({
                "id": o.id,
                "name": o.name,
                "passed": o.passed,
                "detail": o.detail,
                "elapsed_seconds": o.elapsed.as_secs_f64(),
            })).collect::<Vec<_>>(),
        }),
    );
    write_out(report, &value)?;
    ctx.emit(&table, &value)?;
    Ok(if r.passed() { 0 } else { EXIT_FAIL })
}

fn run(ctx: &Ctx) -> Outcome {
    match &ctx.cli.command {
        Command::Catalog(cmd) => catalog_cmd(ctx, cmd),
        Command::BuildMps {
            source,
            sites,
            unit,
            out,
        } => build_mps_cmd(ctx, source, *sites, *unit, out),
        Command::BuildEhmmState {
            source,
            n,
            which,
            out,
        } => build_ehmm_cmd(ctx, source, *n, *which, out),
        Command::Verify(cmd) => verify_cmd(ctx, cmd),
        Command::Extract { source } => extract_cmd(ctx, source),
        Command::Decompose { source, tol } => decompose_cmd(ctx, source, *tol),
        Command::Entropy { source, big_n } => entropy_cmd(ctx, source, *big_n),
        Command::Selftest { report } => selftest_cmd(ctx, report),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&Ctx { cli }) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig(2.0 / 3.0), "0.666666666667");
        assert_eq!(sig(0.0), "0");
        assert_eq!(sig(1.0), "1");
        assert_eq!(sig(1e-10), "1e-10");
        assert_eq!(sig(-2.220446049250313e-16), "-2.22044604925e-16");
        assert_eq!(sig(f64::INFINITY), "+inf");
        assert_eq!(csig(C64::new(0.5, -0.25)), "0.5-0.25i");
        assert_eq!(csig(C64::new(0.0, 1.0)), "1i");
    }

    #[test]
    fn parses_example_invocations() {
        Cli::try_parse_from([
            "ehmm-mps", "verify", "theorem1", "--name", "ghz", "--N", "3", "--n", "3,4,5",
        ])
        .unwrap();
        Cli::try_parse_from(["ehmm-mps", "decompose", "--name", "aklt"]).unwrap();
        Cli::try_parse_from(["ehmm-mps", "extract", "--name", "aklt"]).unwrap();
        assert!(
            Cli::try_parse_from(["ehmm-mps", "extract", "--name", "aklt", "--tensors", "x"])
                .is_err()
        );
        assert!(Cli::try_parse_from(["ehmm-mps", "--atol", "-1", "selftest"]).is_err());
    }
}
