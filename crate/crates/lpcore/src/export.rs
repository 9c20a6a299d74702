//! Fixed-format MPS writer and the JSON model-exchange format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ExportError;
use crate::model::{LinearModel, Relation, Sense, VarKind};

pub const MODEL_JSON_FORMAT: &str = "lpcore.model_json";
pub const MODEL_JSON_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Mps,
    ModelJson,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: LinearModel,
}

pub fn export_model(m: &LinearModel, fmt: ExportFormat) -> Result<String, ExportError> {
    m.validate()?;
    match fmt {
        ExportFormat::Mps => write_mps(m),
        ExportFormat::ModelJson => {
            let doc = ModelDocument {
                format: MODEL_JSON_FORMAT.to_string(),
                version: MODEL_JSON_VERSION,
                model: m.clone(),
            };
            Ok(serde_json::to_string_pretty(&doc)?)
        }
    }
}

pub fn import_model_json(text: &str) -> Result<LinearModel, ExportError> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    if doc.format != MODEL_JSON_FORMAT || doc.version != MODEL_JSON_VERSION {
        return Err(ExportError::Json(serde::de::Error::custom(format!(
            "unsupported document {} v{}",
            doc.format, doc.version
        ))));
    }
    doc.model.validate()?;
    Ok(doc.model)
}

/// SHA-256 of the canonical JSON encoding of the model.
pub fn structure_hash(m: &LinearModel) -> String {
    let bytes = serde_json::to_vec(m).expect("model serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Formats a number into at most 12 characters, keeping as many
/// significant digits as fit.
/// Most accurate rendering of `v` that fits a 12-character MPS field.
fn num12(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    let mut cands: Vec<String> = (0..=15).map(|p| format!("{v:.p$e}")).collect();
    cands.extend((0..=12).map(|p| {
        let s = format!("{v:.p$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }));
    cands
        .into_iter()
        .filter(|s| s.len() <= 12)
        .filter_map(|s| s.parse::<f64>().ok().map(|b| ((b - v).abs(), s)))
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.len().cmp(&y.1.len())))
        .map(|(_, s)| s)
        .unwrap_or_else(|| format!("{v:.0e}"))
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str, f5: &str, f6: &str) {
    let mut s = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}");
    if !f5.is_empty() || !f6.is_empty() {
        let _ = write!(s, "   {f5:<8}  {f6:>12}");
    }
    out.push_str(s.trim_end());
    out.push('\n');
}

fn write_mps(m: &LinearModel) -> Result<String, ExportError> {
    if !m.bilinear.is_empty() {
        return Err(ExportError::BilinearInMps(m.bilinear.len()));
    }
    let col = |j: usize| format!("X{}", j + 1);
    let row = |i: usize| format!("R{}", i + 1);
    let mut out = String::new();
    let name: String = m
        .name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .take(8)
        .collect();
    let _ = writeln!(out, "* generated by lpcore; names are positional");
    for (j, v) in m.variables.iter().enumerate() {
        let _ = writeln!(out, "* {} = {}", col(j), v.name);
    }
    for (i, c) in m.constraints.iter().enumerate() {
        let _ = writeln!(out, "* {} = {}", row(i), c.name);
    }
    let _ = writeln!(out, "NAME          {}", if name.is_empty() { "MODEL" } else { &name });
    if m.objective.sense == Sense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n");
    line(&mut out, "N", "COST", "", "", "", "");
    for (i, c) in m.constraints.iter().enumerate() {
        let t = match c.relation {
            Relation::Le => "L",
            Relation::Ge => "G",
            Relation::Eq => "E",
        };
        line(&mut out, t, &row(i), "", "", "", "");
    }
    out.push_str("COLUMNS\n");
    let n = m.num_vars();
    let mut entries: Vec<Vec<(String, f64)>> = vec![Vec::new(); n];
    let mut objc = vec![0.0; n];
    for &(v, c) in &m.objective.coeffs {
        objc[v.0] += c;
    }
    for (j, &c) in objc.iter().enumerate() {
        if c != 0.0 {
            entries[j].push(("COST".to_string(), c));
        }
    }
    for (i, c) in m.constraints.iter().enumerate() {
        let mut merged: Vec<(usize, f64)> = c.coeffs.iter().map(|&(v, a)| (v.0, a)).collect();
        merged.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < merged.len() {
            let j = merged[k].0;
            let mut a = 0.0;
            while k < merged.len() && merged[k].0 == j {
                a += merged[k].1;
                k += 1;
            }
            if a != 0.0 {
                entries[j].push((row(i), a));
            }
        }
    }
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in m.variables.iter().enumerate() {
        let is_int = v.kind == VarKind::Binary;
        if is_int != in_int {
            let tag = if is_int { "'INTORG'" } else { "'INTEND'" };
            line(&mut out, "", &format!("M{marker}"), "'MARKER'", "", tag, "");
            marker += 1;
            in_int = is_int;
        }
        if entries[j].is_empty() {
            line(&mut out, "", &col(j), "COST", "0", "", "");
        }
        for (r, a) in &entries[j] {
            line(&mut out, "", &col(j), r, &num12(*a), "", "");
        }
    }
    if in_int {
        line(&mut out, "", &format!("M{marker}"), "'MARKER'", "", "'INTEND'", "");
    }
    out.push_str("RHS\n");
    if m.objective.constant != 0.0 {
        line(&mut out, "", "RHS", "COST", &num12(-m.objective.constant), "", "");
    }
    for (i, c) in m.constraints.iter().enumerate() {
        if c.rhs != 0.0 {
            line(&mut out, "", "RHS", &row(i), &num12(c.rhs), "", "");
        }
    }
    out.push_str("BOUNDS\n");
    for (j, v) in m.variables.iter().enumerate() {
        let c = col(j);
        let (l, u) = (v.lower, v.upper);
        if v.kind == VarKind::Binary && l == 0.0 && u == 1.0 {
            line(&mut out, "BV", "BND", &c, "", "", "");
        } else if l == u {
            line(&mut out, "FX", "BND", &c, &num12(l), "", "");
        } else if !l.is_finite() && !u.is_finite() {
            line(&mut out, "FR", "BND", &c, "", "", "");
        } else {
            if !l.is_finite() {
                line(&mut out, "MI", "BND", &c, "", "", "");
            } else if l != 0.0 || v.kind == VarKind::Binary {
                line(&mut out, "LO", "BND", &c, &num12(l), "", "");
            }
            if u.is_finite() {
                line(&mut out, "UP", "BND", &c, &num12(u), "", "");
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}
