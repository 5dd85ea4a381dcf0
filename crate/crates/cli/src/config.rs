//! Argument validation and the pieces of configuration shared by commands.

use std::path::Path;

use gmt_aniso::measure::DiscreteMeasure;
use gmt_aniso::metric_field::MetricField;
use gmt_aniso::synth::make_field;
use gmt_aniso::GmtError;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Radii `max · 2^{-k/per_octave}` down to `min`, largest first.
pub fn parse_scales(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Usage(format!("--scales expects min:max:per_octave, got '{text}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let per: u32 = parts[2].trim().parse().map_err(|_| bad())?;
    if !(min > 0.0 && max > min && max.is_finite()) || per == 0 {
        return Err(CliError::Usage(format!(
            "--scales needs 0 < min < max and per_octave ≥ 1, got '{text}'"
        )));
    }
    let mut out = Vec::new();
    for k in 0.. {
        let r = max * 2f64.powf(-(k as f64) / per as f64);
        if r < min * (1.0 - 1e-9) {
            break;
        }
        out.push(r);
    }
    if out.len() < 3 {
        return Err(CliError::Usage(format!(
            "--scales '{text}' yields {} radii; at least 3 are needed",
            out.len()
        )));
    }
    Ok(out)
}

pub fn load_measure(path: &Path) -> Result<(DiscreteMeasure, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mu = DiscreteMeasure::read_csv(bytes.as_slice())
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((mu, digest(&bytes)))
}

/// A field file is either a complete field spec or a short form such as
/// `{"kind": "identity"}` whose ambient dimension is taken from the data.
pub fn load_field(
    path: Option<&Path>,
    dim: usize,
) -> Result<(Option<MetricField>, Value), CliError> {
    let Some(path) = path else {
        return Ok((None, Value::Null));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let obj = value.as_object().ok_or_else(|| {
        CliError::Usage(format!("{}: field must be a JSON object", path.display()))
    })?;
    let field = if obj.contains_key("ambient_dim") {
        MetricField::from_json(&text)
    } else {
        let kind = obj.get("kind").and_then(Value::as_str).ok_or_else(|| {
            CliError::Usage(format!("{}: field needs a \"kind\"", path.display()))
        })?;
        let mut rest = obj.clone();
        rest.remove("kind");
        make_field(kind, dim, &Value::Object(rest))
    }
    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if field.dim() != dim {
        return Err(CliError::Usage(format!(
            "field dimension {} does not match the data dimension {dim}",
            field.dim()
        )));
    }
    let spec = serde_json::to_value(field.spec()).expect("field spec serialises");
    Ok((Some(field), spec))
}

pub fn center(given: Option<&[f64]>, dim: usize) -> Result<Vec<f64>, CliError> {
    match given {
        None => Ok(vec![0.0; dim]),
        Some(c) if c.len() == dim => Ok(c.to_vec()),
        Some(c) => Err(CliError::Usage(format!(
            "--center has {} coordinates, data has {dim}",
            c.len()
        ))),
    }
}

pub fn plane_dim(given: Option<usize>, dim: usize) -> Result<usize, CliError> {
    let n = given.unwrap_or(dim - 1);
    if n == 0 || n >= dim {
        return Err(CliError::Usage(format!("--dim must lie in 1..{dim}")));
    }
    Ok(n)
}

pub fn digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the canonical (key-sorted) JSON form of the configuration.
pub fn config_hash(config: &Value) -> String {
    digest(
        serde_json::to_string(config)
            .expect("config serialises")
            .as_bytes(),
    )
}

pub fn threads_from_env() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GMT_ANISO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
        CliError::Usage(format!(
            "GMT_ANISO_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

impl From<GmtError> for CliError {
    fn from(e: GmtError) -> Self {
        let kind = match &e {
            GmtError::InvalidInput(_) => "invalid_input",
            GmtError::DimensionMismatch { .. } => "dimension_mismatch",
            GmtError::NotSpd(_) => "not_spd",
            GmtError::Extrapolation(_) => "extrapolation",
            GmtError::Domain(_) => "domain",
            GmtError::Hypothesis(_) => "hypothesis",
            GmtError::Degenerate(_) => "degenerate",
            GmtError::Solver(_) => "solver",
            GmtError::Parse { .. } => "parse",
            GmtError::Io(_) => "io",
        };
        CliError::Analysis {
            kind: kind.into(),
            message: e.to_string(),
        }
    }
}
