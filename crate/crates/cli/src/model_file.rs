//! TOML model files.
//!
//! ```toml
//! schema_version = 1
//! m = 2
//! p = 1
//! T = [[-1.0, 0.5], [0.0, -2.0]]   # or a flat row-major list
//! D = [[0.5], [2.0]]
//! pi = [1.0, 0.0]
//! psi = [0.5, 0.5]
//! s0 = [0.5, 0.5]
//! labels = ["A", "B"]               # optional
//! ```

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gph::numkernel::Matrix;
use gph::{Error as ModelError, MixtureModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixField {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixField {
    fn to_matrix(&self, field: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let flat: Vec<f64> = match self {
            MatrixField::Flat(v) => v.clone(),
            MatrixField::Nested(rs) => {
                if rs.len() != rows {
                    bail!("field `{field}`: expected {rows} rows, found {}", rs.len());
                }
                for (k, r) in rs.iter().enumerate() {
                    if r.len() != cols {
                        bail!("field `{field}` row {}: expected {cols} entries, found {}", k + 1, r.len());
                    }
                }
                rs.concat()
            }
        };
        if flat.len() != rows * cols {
            bail!("field `{field}`: expected {} entries ({rows}x{cols}), found {}", rows * cols, flat.len());
        }
        Ok(Matrix::from_row_slice(rows, cols, &flat))
    }

    fn from_matrix(m: &Matrix) -> Self {
        MatrixField::Nested(m.row_iter().map(|r| tidy(r.iter().copied())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: MatrixField,
    #[serde(rename = "D")]
    pub d: MatrixField,
    pub pi: Vec<f64>,
    pub psi: Vec<f64>,
    pub s0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// A parsed, validated model and where it came from.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub file: ModelFile,
    pub model: MixtureModel,
    pub sha256: String,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| anyhow!("schema violation: {e}"))?;
        if file.schema_version != SCHEMA_VERSION {
            bail!(
                "field `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            );
        }
        Ok(file)
    }

    pub fn from_model(model: &MixtureModel, labels: Option<Vec<String>>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            m: model.m(),
            p: model.p(),
            t: MatrixField::from_matrix(model.t()),
            d: MatrixField::from_matrix(model.d()),
            pi: tidy(model.pi().iter().copied()),
            psi: tidy(model.speed().diagonal().iter().copied()),
            s0: tidy(model.s0().iter().copied()),
            labels,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    pub fn build(&self) -> Result<MixtureModel> {
        let (m, p) = (self.m, self.p);
        if m == 0 || p == 0 {
            bail!("fields `m` and `p` must be at least 1");
        }
        let t = self.t.to_matrix("T", m, m)?;
        let d = self.d.to_matrix("D", m, p)?;
        for (name, v) in [("pi", &self.pi), ("psi", &self.psi), ("s0", &self.s0)] {
            if v.len() != m {
                bail!("field `{name}`: expected {m} entries, found {}", v.len());
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != m + p {
                bail!("field `labels`: expected {} names (transient then absorbing), found {}", m + p, labels.len());
            }
        }
        MixtureModel::from_parts(&t, &d, self.psi.clone(), self.pi.clone(), self.s0.clone())
            .map_err(|e| anyhow!(field_message(&e)))
    }

    /// State name, 0-based index.
    pub fn label(&self, state: usize) -> String {
        match &self.labels {
            Some(l) if state < l.len() => l[state].clone(),
            _ => (state + 1).to_string(),
        }
    }

    /// Resolves a 1-based index or a label to a 0-based state.
    pub fn resolve_state(&self, token: &str) -> Result<usize> {
        if let Some(labels) = &self.labels {
            if let Some(k) = labels.iter().position(|l| l == token) {
                return Ok(k);
            }
        }
        let k: usize = token
            .parse()
            .map_err(|_| anyhow!("unknown state `{token}`"))?;
        if k == 0 || k > self.m + self.p {
            bail!("state {k} out of range 1..={}", self.m + self.p);
        }
        Ok(k - 1)
    }
}

/// Rounds to 14 significant digits so derived entries such as
/// `0.37 - 0.25 - 0.05` are written as `0.07`, and clears `-0.0`.
fn tidy(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values
        .map(|v| format!("{v:.13e}").parse::<f64>().expect("formatted float parses") + 0.0)
        .collect()
}

/// Error text that names the offending field.
fn field_message(e: &ModelError) -> String {
    match e {
        ModelError::Sign { matrix, row, col, value } => {
            format!("field `{matrix}` row {} column {}: sign violation ({value})", row + 1, col + 1)
        }
        ModelError::RowSum { row, residual } => format!(
            "fields `T`/`D` row {}: T*1 + D*1 = {residual:e}, rows must sum to zero",
            row + 1
        ),
        ModelError::InitialLaw(msg) => format!("field `pi`: {msg}"),
        ModelError::Mixing { state, value } => format!("field `s0` entry {}: {value} outside [0, 1]", state + 1),
        ModelError::Parameter(msg) if msg.starts_with("psi") => format!("field `psi`: {msg}"),
        ModelError::SingularSubIntensity => "field `T`: singular sub-intensity matrix, absorption is not certain".into(),
        other => other.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        write!(out, "{b:02x}").expect("writing to a String");
    }
    out
}

pub fn load(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let file = ModelFile::parse(&text).with_context(|| format!("in {}", path.display()))?;
    let model = file.build().with_context(|| format!("in {}", path.display()))?;
    Ok(LoadedModel {
        file,
        model,
        sha256: sha256_hex(&bytes),
    })
}

/// Operations that reject a speed matrix with a zero entry.
pub const SINGULAR_SPEED_OPERATIONS: &[&str] = &[
    "moments",
    "Laplace transform",
    "residual lifetime",
    "occupation times",
    "cause sub-distributions",
    "ultimate absorption",
    "absorbing-state posterior limit",
];
