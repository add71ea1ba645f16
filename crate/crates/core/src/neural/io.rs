//! Plain-text model files.
//!
//! ```text
//! DTXMODEL v1
//! seq_len 1
//! [NORM]
//! t <min> <max>
//! ...
//! [LSTM]
//! w_input 40 13
//! <40 rows of 13 numbers>
//! w_recurrent 40 10
//! ...
//! bias 40
//! <one row>
//! [DENSE0]
//! weights 5 10
//! ...
//! ```
//!
//! Every number is written with 17 significant digits so a save/load round
//! trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DenseParams, LstmParams, Matrix, ModelError, ModelParams, Weights, DENSE_SIZES};
use crate::error::{Error, Result};
use crate::features::{NormStats, FIELD_NAMES};

pub const MAGIC: &str = "DTXMODEL v1";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_row(out: &mut String, row: &[f64]) {
    let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{name} {} {}", m.rows, m.cols);
    for r in 0..m.rows {
        write_row(out, m.row(r));
    }
}

fn write_vector(out: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(out, "{name} {}", v.len());
    write_row(out, v);
}

pub fn model_to_string(params: &ModelParams) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "seq_len {}", params.seq_len);
    out.push_str("[NORM]\n");
    for (i, name) in FIELD_NAMES.iter().enumerate() {
        let _ = writeln!(
            out,
            "{name} {} {}",
            num(params.norm.min[i]),
            num(params.norm.max[i])
        );
    }
    let w = &params.weights;
    out.push_str("[LSTM]\n");
    write_matrix(&mut out, "w_input", &w.lstm.w_input);
    write_matrix(&mut out, "w_recurrent", &w.lstm.w_recurrent);
    write_vector(&mut out, "bias", &w.lstm.bias);
    for (i, d) in w.dense.iter().enumerate() {
        let _ = writeln!(out, "[DENSE{i}]");
        write_matrix(&mut out, "weights", &d.weights);
        write_vector(&mut out, "bias", &d.bias);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> ModelError {
        ModelError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> std::result::Result<&'a str, ModelError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Ok(l);
            }
        }
        self.line += 1;
        Err(self.err("unexpected end of file"))
    }

    fn expect(&mut self, want: &str) -> std::result::Result<(), ModelError> {
        let got = self.next()?;
        if got != want {
            return Err(self.err(format!("expected `{want}`, found `{got}`")));
        }
        Ok(())
    }

    fn numbers(&mut self, n: usize) -> std::result::Result<Vec<f64>, ModelError> {
        let l = self.next()?;
        let vals = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.err(format!("bad number `{t}`")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} numbers, found {}", vals.len())));
        }
        if vals.iter().any(|v| v.is_nan()) {
            return Err(self.err("NaN value"));
        }
        Ok(vals)
    }

    /// A `name dim...` header line.
    fn header(&mut self, name: &str, dims: usize) -> std::result::Result<Vec<usize>, ModelError> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(name) {
            return Err(self.err(format!("expected `{name}` header, found `{l}`")));
        }
        let out = parts
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| self.err(format!("bad dimension `{t}`")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if out.len() != dims {
            return Err(self.err(format!("`{name}` needs {dims} dimension(s)")));
        }
        Ok(out)
    }

    fn matrix(
        &mut self,
        name: &'static str,
        rows: usize,
        cols: usize,
    ) -> std::result::Result<Matrix, ModelError> {
        let d = self.header(name, 2)?;
        if (d[0], d[1]) != (rows, cols) {
            return Err(ModelError::Shape {
                what: name,
                expected: format!("{rows}x{cols}"),
                got: format!("{}x{}", d[0], d[1]),
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.numbers(cols)?);
        }
        Ok(Matrix { rows, cols, data })
    }

    fn vector(
        &mut self,
        name: &'static str,
        len: usize,
    ) -> std::result::Result<Vec<f64>, ModelError> {
        let d = self.header(name, 1)?;
        if d[0] != len {
            return Err(super::shape_err(name, len, d[0]));
        }
        self.numbers(len)
    }
}

pub fn model_from_str(text: &str) -> std::result::Result<ModelParams, ModelError> {
    use super::{GATES, HIDDEN, INPUTS};
    let mut lines = Lines::new(text);
    lines.expect(MAGIC)?;
    let d = lines.header("seq_len", 1)?;
    let seq_len = d[0];
    if seq_len == 0 {
        return Err(lines.err("seq_len must be at least 1"));
    }

    lines.expect("[NORM]")?;
    let mut norm = NormStats::default();
    for (i, name) in FIELD_NAMES.iter().enumerate() {
        let l = lines.next()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != *name {
            return Err(lines.err(format!("expected `{name} <min> <max>`")));
        }
        let parse = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| lines.err(format!("bad number `{t}`")))
        };
        norm.min[i] = parse(parts[1])?;
        norm.max[i] = parse(parts[2])?;
    }

    lines.expect("[LSTM]")?;
    let w_input = lines.matrix("w_input", GATES * HIDDEN, INPUTS)?;
    let w_recurrent = lines.matrix("w_recurrent", GATES * HIDDEN, HIDDEN)?;
    let bias = lines.vector("bias", GATES * HIDDEN)?;

    let mut dense = Vec::with_capacity(DENSE_SIZES.len());
    let mut inputs = HIDDEN;
    for (i, &out) in DENSE_SIZES.iter().enumerate() {
        lines.expect(&format!("[DENSE{i}]"))?;
        let weights = lines.matrix("weights", out, inputs)?;
        let bias = lines.vector("bias", out)?;
        dense.push(DenseParams { weights, bias });
        inputs = out;
    }
    if let Ok(extra) = lines.next() {
        return Err(lines.err(format!("unexpected trailing content `{extra}`")));
    }

    let weights = Weights {
        lstm: LstmParams {
            w_input,
            w_recurrent,
            bias,
        },
        dense,
    };
    weights.check_shapes()?;
    Ok(ModelParams::new(weights, norm, seq_len))
}

pub fn save_model(params: &ModelParams, path: &Path) -> Result<()> {
    params.weights.check_shapes()?;
    fs::write(path, model_to_string(params)).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    model_from_str(&text).map_err(|e| match e {
        ModelError::Parse { line, msg } => Error::parse(path.display().to_string(), line, msg),
        other => Error::Model(other),
    })
}
