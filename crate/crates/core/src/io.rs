//! JSON documents for models, tensor sets, states and reports.
//!
//! Every document carries `"schema_version": 1` and a `"kind"` tag. Complex
//! numbers are `[re, im]` pairs and matrices are row-major nested arrays.
//! Floats are written in shortest round-trip form, so export followed by
//! import reproduces every value bit for bit. Non-finite scalars in reports
//! are written as the strings `"+inf"`, `"-inf"` and `"nan"`.

use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bridge::{DecompositionResult, ExtractedHmm};
use crate::ehmm::{EhmmModel, StochasticMatrix};
use crate::entropy::BoundReport;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, TensorVector};
use crate::mps::{GaugeReport, SiteTensorSet};

pub const SCHEMA_VERSION: u32 = 1;

pub type MatrixDoc = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<String>,
    pub m: usize,
    pub d: usize,
    pub pi: Vec<f64>,
    pub hidden: Vec<MatrixDoc>,
    pub emission: Vec<MatrixDoc>,
    pub translation_invariant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<String>,
    pub m: usize,
    pub d: usize,
    /// `sites[n][k]` is `A_k` at site `n + 1`.
    pub sites: Vec<Vec<MatrixDoc>>,
    pub translation_invariant: bool,
    /// Defaults to `translation_invariant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_last: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<String>,
    pub dims: Vec<usize>,
    pub entries: Vec<[f64; 2]>,
    pub norm: f64,
}

pub fn complex_doc(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn matrix_doc(a: &DenseMatrix) -> MatrixDoc {
    a.to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(complex_doc).collect())
        .collect()
}

pub fn matrix_from_doc(doc: &MatrixDoc) -> Result<DenseMatrix> {
    let rows = doc.len();
    let cols = doc.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || doc.iter().any(|r| r.len() != cols) {
        return Err(Error::Schema(
            "matrix must be a nonempty rectangular array".into(),
        ));
    }
    let data = doc
        .iter()
        .flatten()
        .map(|&[re, im]| C64::new(re, im))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

fn stochastic_doc(s: &StochasticMatrix) -> Vec<Vec<f64>> {
    s.to_rows()
}

fn check_header(version: u32, kind: &Option<String>, expected: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "schema_version {version} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    match kind {
        Some(k) if k != expected => Err(Error::Schema(format!(
            "document kind is {k:?}, expected {expected:?}"
        ))),
        _ => Ok(()),
    }
}

pub fn model_doc(model: &EhmmModel) -> ModelDoc {
    ModelDoc {
        schema_version: SCHEMA_VERSION,
        kind: Some("model".into()),
        m: model.m(),
        d: model.d(),
        pi: model.pi().entries().to_vec(),
        hidden: model
            .hidden()
            .iter()
            .map(|u| matrix_doc(u.matrix()))
            .collect(),
        emission: model
            .emission()
            .iter()
            .map(|c| matrix_doc(c.matrix()))
            .collect(),
        translation_invariant: model.is_translation_invariant(),
    }
}

/// Rebuilds the model; numerical invariants are checked separately with
/// [`EhmmModel::validate`].
pub fn model_from_doc(doc: &ModelDoc) -> Result<EhmmModel> {
    check_header(doc.schema_version, &doc.kind, "model")?;
    let hidden = doc
        .hidden
        .iter()
        .map(matrix_from_doc)
        .collect::<Result<Vec<_>>>()?;
    let emission = doc
        .emission
        .iter()
        .map(matrix_from_doc)
        .collect::<Result<Vec<_>>>()?;
    if let Some(x) = doc.pi.iter().find(|x| !x.is_finite()) {
        return Err(Error::Schema(format!("pi entry {x} is not finite")));
    }
    let model = EhmmModel::build(doc.pi.clone(), hidden, emission, doc.translation_invariant)?;
    if (model.m(), model.d()) != (doc.m, doc.d) {
        return Err(Error::Schema(format!(
            "declared (m, d) = ({}, {}) but matrices give ({}, {})",
            doc.m,
            doc.d,
            model.m(),
            model.d()
        )));
    }
    Ok(model)
}

pub fn tensor_doc(t: &SiteTensorSet) -> TensorDoc {
    let ti = t.is_translation_invariant();
    TensorDoc {
        schema_version: SCHEMA_VERSION,
        kind: Some("tensors".into()),
        m: t.m(),
        d: t.d(),
        sites: t
            .sites()
            .iter()
            .map(|f| f.iter().map(matrix_doc).collect())
            .collect(),
        translation_invariant: ti,
        repeat_last: (t.repeat_last() != ti).then_some(t.repeat_last()),
    }
}

pub fn tensors_from_doc(doc: &TensorDoc) -> Result<SiteTensorSet> {
    check_header(doc.schema_version, &doc.kind, "tensors")?;
    if doc.translation_invariant && doc.sites.len() != 1 {
        return Err(Error::Schema(
            "translation_invariant tensor sets store exactly one site".into(),
        ));
    }
    let sites = doc
        .sites
        .iter()
        .map(|f| f.iter().map(matrix_from_doc).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let t = SiteTensorSet::new(sites, doc.repeat_last.unwrap_or(doc.translation_invariant))?;
    if (t.m(), t.d()) != (doc.m, doc.d) {
        return Err(Error::Schema(format!(
            "declared (m, d) = ({}, {}) but matrices give ({}, {})",
            doc.m,
            doc.d,
            t.m(),
            t.d()
        )));
    }
    Ok(t)
}

pub fn state_doc(psi: &TensorVector) -> StateDoc {
    StateDoc {
        schema_version: SCHEMA_VERSION,
        kind: Some("state".into()),
        dims: psi.dims().to_vec(),
        entries: psi.data().iter().copied().map(complex_doc).collect(),
        norm: psi.norm(),
    }
}

pub fn state_from_doc(doc: &StateDoc) -> Result<TensorVector> {
    check_header(doc.schema_version, &doc.kind, "state")?;
    TensorVector::new(
        doc.dims.clone(),
        doc.entries
            .iter()
            .map(|&[re, im]| C64::new(re, im))
            .collect(),
    )
}

pub fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn model_to_json(model: &EhmmModel) -> Result<String> {
    to_pretty(&model_doc(model))
}

pub fn model_from_json(text: &str) -> Result<EhmmModel> {
    model_from_doc(&serde_json::from_str(text)?)
}

pub fn tensors_to_json(t: &SiteTensorSet) -> Result<String> {
    to_pretty(&tensor_doc(t))
}

pub fn tensors_from_json(text: &str) -> Result<SiteTensorSet> {
    tensors_from_doc(&serde_json::from_str(text)?)
}

pub fn read_model(path: &Path) -> Result<EhmmModel> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn read_tensors(path: &Path) -> Result<SiteTensorSet> {
    tensors_from_json(&fs::read_to_string(path)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Finite values as numbers, the rest as tagged strings.
pub fn scalar(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("+inf")
    } else {
        json!("-inf")
    }
}

fn header(kind: &str) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    map.insert("kind".into(), json!(kind));
    map
}

fn with_header(kind: &str, body: Value) -> Value {
    let mut map = header(kind);
    if let Value::Object(fields) = body {
        map.extend(fields);
    }
    Value::Object(map)
}

pub fn gauge_value(r: &GaugeReport) -> Value {
    with_header(
        "gauge",
        json!({
            "tol": r.tol,
            "deviations": r.deviations.iter().copied().map(scalar).collect::<Vec<_>>(),
            "pass": r.pass,
        }),
    )
}

pub fn extracted_value(x: &ExtractedHmm) -> Value {
    with_header(
        "extracted_hmm",
        json!({
            "transitions": x.transitions.iter().map(stochastic_doc).collect::<Vec<_>>(),
            "emissions": x.emissions.iter().map(stochastic_doc).collect::<Vec<_>>(),
        }),
    )
}

pub fn decomposition_value(r: &DecompositionResult) -> Value {
    let witness = r.witness.as_ref().map(|w| {
        json!({
            "site": w.site,
            "hidden_index": w.hidden_index,
            "magnitude": scalar(w.magnitude),
            "reason": w.reason.to_string(),
        })
    });
    with_header(
        "decomposition",
        json!({
            "feasible": r.feasible,
            "u": r.factors.iter().map(|f| matrix_doc(&f.u)).collect::<Vec<_>>(),
            "chi": r.factors.iter().map(|f| matrix_doc(&f.chi)).collect::<Vec<_>>(),
            "reconstruction_error": scalar(r.reconstruction_error),
            "witness": witness,
        }),
    )
}

pub fn bound_value(r: &BoundReport) -> Value {
    let normalized = r.normalized.as_ref().map(|b| {
        json!({
            "s_value": scalar(b.s_value),
            "rhs_value": scalar(b.rhs_value),
            "s_diag": scalar(b.s_diag),
            "holds": b.holds,
        })
    });
    with_header(
        "bound_report",
        json!({
            "N": r.n,
            "route": format!("{:?}", r.route).to_lowercase(),
            "s_value": scalar(r.s_value),
            "rhs_value": scalar(r.rhs_value),
            "s_diag": scalar(r.s_diag),
            "holds": r.holds,
            "data_processing_holds": r.data_processing_holds,
            "rhs_gap": scalar(r.rhs_gap),
            "trace_rho_n": scalar(r.trace_rho_n),
            "trace_rho_o": scalar(r.trace_rho_o),
            "unit_trace": r.unit_trace,
            "normalized": normalized,
            "diagnostics": r.diagnostics,
        }),
    )
}

/// Wraps an arbitrary JSON object with the standard header.
pub fn document(kind: &str, body: Value) -> Value {
    with_header(kind, body)
}
