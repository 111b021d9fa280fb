//! Versioned JSON instance documents.
//!
//! Floats are written with shortest round-trip formatting, so an imported
//! instance evaluates bit-identically to the exported one.

use serde::{Deserialize, Serialize};

use super::config::{InstanceConfig, WeightMode};
use super::instance::ProblemInstance;
use crate::bench::{BasicFunction, Rotation};
use crate::error::{Error, Result};

pub const DOCUMENT_FORMAT: &str = "lhcc-instance";
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDocument {
    format: String,
    version: u32,
    seed: u64,
    total_dim: usize,
    effective_dim: usize,
    degree: u8,
    bounds: [f64; 2],
    dims: Vec<usize>,
    functions: Vec<u8>,
    weights: Vec<f64>,
    x_opt: Vec<f64>,
    permutation: Vec<usize>,
    overlaps: Vec<usize>,
    rotations: Vec<Option<Vec<f64>>>,
}

/// Serialize an instance to its structured-text document.
pub fn export_instance(instance: &ProblemInstance) -> String {
    let cfg = instance.config();
    let doc = InstanceDocument {
        format: DOCUMENT_FORMAT.to_string(),
        version: DOCUMENT_VERSION,
        seed: cfg.seed,
        total_dim: cfg.total_dim,
        effective_dim: instance.dim(),
        degree: cfg.separability_degree,
        bounds: [cfg.bounds.0, cfg.bounds.1],
        dims: cfg.subproblem_dims.clone(),
        functions: cfg.function_map.iter().map(|f| f.id()).collect(),
        weights: instance.weights().to_vec(),
        x_opt: instance.x_opt().to_vec(),
        permutation: instance.layout().to_vec(),
        overlaps: instance.overlaps().to_vec(),
        rotations: instance
            .chains()
            .iter()
            .map(|c| c.rotation.as_ref().map(|r| r.as_slice().to_vec()))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

/// 1-based line on which `"field"` first appears, or 1 if absent.
fn line_of(text: &str, field: &str) -> usize {
    let needle = format!("\"{field}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
        .unwrap_or(1)
}

fn schema_error(text: &str, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line_of(text, field),
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parse and validate an instance document.
pub fn import_instance(text: &str) -> Result<ProblemInstance> {
    let doc: InstanceDocument = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let field = message
            .split('`')
            .nth(1)
            .unwrap_or("<document>")
            .to_string();
        Error::Parse {
            line: e.line(),
            field,
            message,
        }
    })?;

    if doc.format != DOCUMENT_FORMAT {
        return Err(schema_error(text, "format", format!("expected `{DOCUMENT_FORMAT}`")));
    }
    if doc.version > DOCUMENT_VERSION {
        return Err(schema_error(
            text,
            "version",
            format!("document version {} is newer than supported {DOCUMENT_VERSION}", doc.version),
        ));
    }
    let k = doc.dims.len();
    for (field, len) in [
        ("functions", doc.functions.len()),
        ("weights", doc.weights.len()),
        ("rotations", doc.rotations.len()),
    ] {
        if len != k {
            return Err(schema_error(text, field, format!("expected {k} entries, found {len}")));
        }
    }
    let functions = doc
        .functions
        .iter()
        .map(|&id| BasicFunction::try_from(id))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| schema_error(text, "functions", e.to_string()))?;

    let rotated = doc.degree >= 2;
    let mut rotations = Vec::with_capacity(k);
    for (i, (entry, &dim)) in doc.rotations.into_iter().zip(&doc.dims).enumerate() {
        match (entry, rotated) {
            (Some(data), true) => rotations.push(Some(
                Rotation::from_row_major(dim, data)
                    .map_err(|e| schema_error(text, "rotations", format!("subproblem {i}: {e}")))?,
            )),
            (None, false) => rotations.push(None),
            (None, true) => {
                return Err(schema_error(
                    text,
                    "rotations",
                    format!("degree {} requires a rotation for subproblem {i}", doc.degree),
                ))
            }
            (Some(_), false) => {
                return Err(schema_error(
                    text,
                    "rotations",
                    format!("degree 1 must not carry a rotation (subproblem {i})"),
                ))
            }
        }
    }

    let config = InstanceConfig {
        total_dim: doc.total_dim,
        subproblem_dims: doc.dims,
        function_map: functions,
        separability_degree: doc.degree,
        weight_mode: WeightMode::Explicit(doc.weights.clone()),
        seed: doc.seed,
        bounds: (doc.bounds[0], doc.bounds[1]),
    };
    let instance = ProblemInstance::from_parts(
        config,
        doc.weights,
        doc.x_opt,
        doc.permutation,
        doc.overlaps,
        rotations,
    )
    .map_err(|e| schema_error(text, "dims", e.to_string()))?;
    if instance.dim() != doc.effective_dim {
        return Err(schema_error(
            text,
            "effective_dim",
            format!("layout implies {} variables", instance.dim()),
        ));
    }
    Ok(instance)
}
