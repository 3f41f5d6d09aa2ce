//! Amplitude encoding on a dense statevector and the fidelity kernel
//! `K(x, x') = |<0..0| S(x')^dagger S(x) |0..0>|^2`.
//!
//! `S(x)` is synthesized from uniformly controlled Y rotations, each
//! decomposed into plain `Ry` gates and CNOTs in Gray-code order. Qubit 0 is
//! the most significant bit of the basis index.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::matrix::Matrix;

/// Tolerance on `sum |a|^2 = 1`.
pub const NORM_TOL: f64 = 1e-12;

/// Smallest `n` with `2^n >= dim` (at least 1).
pub fn qubits_for(dim: usize) -> usize {
    dim.max(2).next_power_of_two().trailing_zeros() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    n_qubits: usize,
}

impl QuantumState {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { amplitudes, n_qubits }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }

    /// Probability of measuring all zeros.
    pub fn zero_probability(&self) -> f64 {
        self.amplitudes[0].norm_sqr()
    }

    fn stride(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    pub fn apply(&mut self, gate: Gate) {
        match gate {
            Gate::Ry { target, theta } => {
                let (s, c) = (theta / 2.0).sin_cos();
                let t = self.stride(target);
                for base in (0..self.amplitudes.len()).filter(|i| i & t == 0) {
                    let a0 = self.amplitudes[base];
                    let a1 = self.amplitudes[base | t];
                    self.amplitudes[base] = a0 * c - a1 * s;
                    self.amplitudes[base | t] = a0 * s + a1 * c;
                }
            }
            Gate::Cnot { control, target } => {
                let (cm, t) = (self.stride(control), self.stride(target));
                for base in (0..self.amplitudes.len()).filter(|i| i & cm != 0 && i & t == 0) {
                    self.amplitudes.swap(base, base | t);
                }
            }
        }
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) {
        for &g in &circuit.gates {
            self.apply(g);
        }
    }
}

/// Real vector normalized and zero-padded to `2^n` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    pub raw: Vec<f64>,
    pub padded: Vec<f64>,
}

impl EncodedVector {
    pub fn new(x: &[f64], n_qubits: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if x.len() > dim {
            return Err(Error::Encoding(format!(
                "vector of length {} does not fit {n_qubits} qubits",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Encoding("vector has non-finite entries".into()));
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Encoding("zero vector cannot be normalized".into()));
        }
        let mut padded: Vec<f64> = x.iter().map(|v| v / norm).collect();
        padded.resize(dim, 0.0);
        Ok(Self {
            raw: x.to_vec(),
            padded,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Ry { target: usize, theta: f64 },
    Cnot { control: usize, target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    /// Gates reversed with rotation angles negated.
    pub fn inverse(&self) -> Circuit {
        let gates = self
            .gates
            .iter()
            .rev()
            .map(|&g| match g {
                Gate::Ry { target, theta } => Gate::Ry { target, theta: -theta },
                cnot => cnot,
            })
            .collect();
        Circuit {
            n_qubits: self.n_qubits,
            gates,
        }
    }

    pub fn ry_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Ry { .. })).count()
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// Multiplexed rotation angles, level by level. `angles[k][j]` rotates qubit
/// `k` when qubits `0..k` read `j` (qubit 0 as the high bit of `j`).
pub fn rotation_tree(amplitudes: &[f64]) -> Vec<Vec<f64>> {
    let n = amplitudes.len().trailing_zeros() as usize;
    let mut levels = Vec::with_capacity(n);
    for k in 0..n {
        let block = amplitudes.len() >> k;
        let half = block / 2;
        let angles = amplitudes
            .chunks(block)
            .map(|b| {
                if k + 1 == n {
                    // the last level carries the signs
                    2.0 * b[1].atan2(b[0])
                } else {
                    let left = b[..half].iter().map(|v| v * v).sum::<f64>().sqrt();
                    let right = b[half..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    2.0 * right.atan2(left)
                }
            })
            .collect();
        levels.push(angles);
    }
    levels
}

/// Decomposes a uniformly controlled `Ry` on `target` with controls
/// `0..target` into `2^target` rotations interleaved with CNOTs.
fn uniformly_controlled_ry(target: usize, alphas: &[f64], gates: &mut Vec<Gate>) {
    let k = target;
    let size = alphas.len();
    debug_assert_eq!(size, 1 << k);
    if k == 0 {
        gates.push(Gate::Ry {
            target,
            theta: alphas[0],
        });
        return;
    }
    for i in 0..size {
        let g = gray(i);
        let theta = alphas
            .iter()
            .enumerate()
            .map(|(j, a)| if (j & g).count_ones() % 2 == 0 { *a } else { -*a })
            .sum::<f64>()
            / size as f64;
        gates.push(Gate::Ry { target, theta });
        let changed = (g ^ gray((i + 1) % size)).trailing_zeros() as usize;
        gates.push(Gate::Cnot {
            control: k - 1 - changed,
            target,
        });
    }
}

/// Circuit `S` with `S|0...0> = sum_i padded[i] |i>`.
pub fn synthesize(encoded: &EncodedVector) -> Circuit {
    let n_qubits = encoded.padded.len().trailing_zeros() as usize;
    let mut gates = Vec::new();
    for (k, alphas) in rotation_tree(&encoded.padded).iter().enumerate() {
        uniformly_controlled_ry(k, alphas, &mut gates);
    }
    Circuit { n_qubits, gates }
}

/// Runs the synthesized circuit for `x` on `|0...0>`.
pub fn encode_state(x: &[f64], n_qubits: usize) -> Result<QuantumState> {
    let circuit = synthesize(&EncodedVector::new(x, n_qubits)?);
    let mut state = QuantumState::zero(n_qubits);
    state.apply_circuit(&circuit);
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Statevector simulation of `S(x')^dagger S(x)`.
    #[default]
    Circuit,
    /// Closed form `(x.x')^2 / (|x|^2 |x'|^2)`.
    Analytic,
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circuit" => Ok(KernelMode::Circuit),
            "analytic" => Ok(KernelMode::Analytic),
            other => Err(Error::config(format!("unknown kernel mode {other:?}"))),
        }
    }
}

/// Per-row preparation reused across all pairs of a Gram matrix.
enum Prepared {
    Circuit { state: QuantumState, inverse: Circuit },
    Analytic(Vec<f64>),
}

impl Prepared {
    fn new(x: &[f64], n_qubits: usize, mode: KernelMode) -> Result<Self> {
        let encoded = EncodedVector::new(x, n_qubits)?;
        Ok(match mode {
            KernelMode::Circuit => {
                let circuit = synthesize(&encoded);
                let mut state = QuantumState::zero(n_qubits);
                state.apply_circuit(&circuit);
                Prepared::Circuit {
                    state,
                    inverse: circuit.inverse(),
                }
            }
            KernelMode::Analytic => Prepared::Analytic(encoded.padded),
        })
    }

    fn overlap(&self, other: &Prepared) -> f64 {
        let v = match (self, other) {
            (Prepared::Circuit { state, .. }, Prepared::Circuit { inverse, .. }) => {
                let mut s = state.clone();
                s.apply_circuit(inverse);
                s.zero_probability()
            }
            (Prepared::Analytic(a), Prepared::Analytic(b)) => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                d * d
            }
            _ => unreachable!("rows prepared in the same mode"),
        };
        v.clamp(0.0, 1.0)
    }
}

pub fn fidelity_kernel(x: &[f64], x_prime: &[f64], n_qubits: usize, mode: KernelMode) -> Result<f64> {
    if mode == KernelMode::Analytic {
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let (nx, ny) = (norm(x), norm(x_prime));
        let dim = 1usize << n_qubits;
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::Encoding("zero vector cannot be normalized".into()));
        }
        if x.len() > dim || x_prime.len() > dim {
            return Err(Error::Encoding(format!("vector does not fit {n_qubits} qubits")));
        }
        let d: f64 = x.iter().zip(x_prime).map(|(a, b)| a * b).sum();
        return Ok((d * d / (nx * ny)).clamp(0.0, 1.0));
    }
    let a = Prepared::new(x, n_qubits, mode)?;
    let b = Prepared::new(x_prime, n_qubits, mode)?;
    Ok(a.overlap(&b))
}

fn prepare_rows(m: &Matrix, n_qubits: usize, mode: KernelMode, what: &str) -> Result<Vec<Prepared>> {
    (0..m.rows())
        .into_par_iter()
        .map(|i| Prepared::new(m.row(i), n_qubits, mode).map_err(|e| Error::Encoding(format!("{what} row {i}: {e}"))))
        .collect()
}

/// Kernel matrix with sample identifiers on both axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramMatrix {
    pub row_ids: Vec<usize>,
    pub col_ids: Vec<usize>,
    pub values: Matrix,
}

impl GramMatrix {
    pub fn is_square(&self) -> bool {
        self.row_ids == self.col_ids
    }

    /// Row-major CSV: header `sample_id,<col ids>`, then `<row id>,<values>`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).at(path)?;
        let mut w = std::io::BufWriter::new(file);
        let mut line = String::from("sample_id");
        for id in &self.col_ids {
            line.push_str(&format!(",{id}"));
        }
        writeln!(w, "{line}").at(path)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            line = id.to_string();
            for v in self.values.row(i) {
                line.push_str(&format!(",{v}"));
            }
            writeln!(w, "{line}").at(path)?;
        }
        w.flush().at(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let parse_id = |s: &str, line: u64| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| Error::format(path, line, format!("bad sample id {s:?}")))
        };
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("sample_id") {
            return Err(Error::format(path, 0, "header must start with sample_id"));
        }
        let col_ids = headers
            .iter()
            .skip(1)
            .map(|s| parse_id(s, 0))
            .collect::<Result<Vec<_>>>()?;
        let mut row_ids = Vec::new();
        let mut data = Vec::new();
        for record in reader.records() {
            let record = record?;
            let offset = record.position().map_or(0, |p| p.byte());
            if record.len() != col_ids.len() + 1 {
                return Err(Error::format(
                    path,
                    offset,
                    format!("expected {} fields, found {}", col_ids.len() + 1, record.len()),
                ));
            }
            row_ids.push(parse_id(&record[0], offset)?);
            for f in record.iter().skip(1) {
                data.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format(path, offset, format!("bad kernel value {f:?}")))?,
                );
            }
        }
        let values = Matrix::from_vec(row_ids.len(), col_ids.len(), data)?;
        Ok(Self {
            row_ids,
            col_ids,
            values,
        })
    }
}

/// Square Gram of `a` (upper triangle computed, mirrored, unit diagonal) or
/// the rectangular cross-kernel `K[i][j] = K(a_i, b_j)` when `b` is given.
/// Row identifiers default to positions.
pub fn gram_matrix(a: &Matrix, b: Option<&Matrix>, n_qubits: usize, mode: KernelMode) -> Result<GramMatrix> {
    let pa = prepare_rows(a, n_qubits, mode, "left")?;
    let n = a.rows();
    match b {
        None => {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let vals: Vec<f64> = pairs.par_iter().map(|&(i, j)| pa[i].overlap(&pa[j])).collect();
            let mut m = Matrix::identity(n);
            for (&(i, j), v) in pairs.iter().zip(vals) {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            Ok(GramMatrix {
                row_ids: (0..n).collect(),
                col_ids: (0..n).collect(),
                values: m,
            })
        }
        Some(b) => {
            if b.cols() != a.cols() {
                return Err(Error::shape(format!(
                    "cross Gram needs equal widths, got {} and {}",
                    a.cols(),
                    b.cols()
                )));
            }
            let pb = prepare_rows(b, n_qubits, mode, "right")?;
            let data: Vec<f64> = (0..n)
                .into_par_iter()
                .flat_map_iter(|i| pb.iter().map(|q| pa[i].overlap(q)).collect::<Vec<_>>())
                .collect();
            Ok(GramMatrix {
                row_ids: (0..n).collect(),
                col_ids: (0..b.rows()).collect(),
                values: Matrix::from_vec(n, b.rows(), data)?,
            })
        }
    }
}
