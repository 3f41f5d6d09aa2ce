//! Versioned plain-text model files.
//!
//! ```text
//! qfex-svm-model 1
//! kind csvm
//! c 1
//! weight_negative 50
//! weight_positive 1.02
//! rho 0.25
//! objective 3.5
//! iterations 42
//! samples 2
//! sample_id,alpha,label
//! 0,1,-1
//! 1,1,1
//! ```
//!
//! One-class models carry `kind ocsvm` and `nu` instead of `c`/weights and
//! leave the label column at 1. Floats use shortest round-trip formatting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ClassWeights, Model, OcsvmModel, SvmModel};
use crate::error::{Error, IoContext, Result};

const HEADER: &str = "qfex-svm-model 1";

pub fn write_model(model: &Model) -> String {
    let mut out = format!("{HEADER}\n");
    let (ids, alpha, labels): (&[usize], &[f64], Vec<i8>) = match model {
        Model::Svm(m) => {
            out.push_str("kind csvm\n");
            let _ = writeln!(out, "c {}", m.c);
            let _ = writeln!(out, "weight_negative {}", m.class_weights.negative);
            let _ = writeln!(out, "weight_positive {}", m.class_weights.positive);
            let _ = writeln!(out, "rho {}", m.rho);
            let _ = writeln!(out, "objective {}", m.objective);
            let _ = writeln!(out, "iterations {}", m.iterations);
            (&m.sample_ids, &m.alpha, m.labels.clone())
        }
        Model::Ocsvm(m) => {
            out.push_str("kind ocsvm\n");
            let _ = writeln!(out, "nu {}", m.nu);
            let _ = writeln!(out, "rho {}", m.rho);
            let _ = writeln!(out, "objective {}", m.objective);
            let _ = writeln!(out, "iterations {}", m.iterations);
            (&m.sample_ids, &m.alpha, vec![1; m.alpha.len()])
        }
    };
    let _ = writeln!(out, "samples {}", alpha.len());
    out.push_str("sample_id,alpha,label\n");
    for ((id, a), l) in ids.iter().zip(alpha).zip(labels) {
        let _ = writeln!(out, "{id},{a},{l}");
    }
    out
}

pub fn read_model(text: &str, path: &Path) -> Result<Model> {
    let mut offsets = Vec::new();
    let mut at = 0u64;
    for l in text.lines() {
        offsets.push((at, l));
        at += l.len() as u64 + 1;
    }
    let offset = at;
    let mut lines = offsets.into_iter();
    let fail = |at: u64, msg: String| Error::format(path, at, msg);
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((_, other)) => return Err(fail(0, format!("unsupported model header {other:?}"))),
        None => return Err(fail(0, "empty model file".into())),
    }
    let mut fields = HashMap::new();
    let mut samples = None;
    for (at, line) in lines.by_ref() {
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| fail(at, format!("expected `key value`, found {line:?}")))?;
        if key == "samples" {
            samples = Some((at, value.to_string()));
            break;
        }
        fields.insert(key.to_string(), (at, value.to_string()));
    }
    let (at, count) = samples.ok_or_else(|| fail(offset, "missing `samples` line".into()))?;
    let count: usize = count
        .parse()
        .map_err(|_| fail(at, format!("bad sample count {count:?}")))?;
    let num = |key: &str| -> Result<f64> {
        let (at, v) = fields.get(key).ok_or_else(|| fail(0, format!("missing field {key}")))?;
        v.parse().map_err(|_| fail(*at, format!("bad value for {key}: {v:?}")))
    };
    match lines.next() {
        Some((_, "sample_id,alpha,label")) => {}
        other => {
            return Err(fail(
                other.map_or(offset, |o| o.0),
                "missing sample table header".into(),
            ))
        }
    }
    let (mut ids, mut alpha, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (at, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || fail(at, format!("bad sample row {line:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        ids.push(parts[0].parse::<usize>().map_err(|_| bad())?);
        alpha.push(parts[1].parse::<f64>().map_err(|_| bad())?);
        labels.push(parts[2].parse::<i8>().map_err(|_| bad())?);
    }
    if ids.len() != count {
        return Err(fail(offset, format!("declared {count} samples, found {}", ids.len())));
    }
    let kind = fields.get("kind").map(|(_, v)| v.as_str());
    let rho = num("rho")?;
    let objective = num("objective")?;
    let iterations = num("iterations")? as usize;
    match kind {
        Some("csvm") => Ok(Model::Svm(SvmModel {
            sample_ids: ids,
            labels,
            alpha,
            rho,
            c: num("c")?,
            class_weights: ClassWeights {
                negative: num("weight_negative")?,
                positive: num("weight_positive")?,
            },
            objective,
            iterations,
        })),
        Some("ocsvm") => Ok(Model::Ocsvm(OcsvmModel {
            sample_ids: ids,
            alpha,
            rho,
            nu: num("nu")?,
            objective,
            iterations,
        })),
        other => Err(fail(0, format!("unknown model kind {other:?}"))),
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(model)).at(path)
}

pub fn load_model(path: &Path) -> Result<Model> {
    read_model(&std::fs::read_to_string(path).at(path)?, path)
}
