//! JSON file formats for operators, POVMs, instruments and kernels.
//!
//! Matrices are arrays of rows whose entries are `[re, im]` pairs; plain
//! numbers are accepted on input as real entries. Floats are written with
//! 17 significant digits so every value survives a round trip bit for bit.

use std::io;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::conservation::ConservationReport;
use crate::error::{Error, Result};
use crate::instrument::Instrument;
use crate::operator::{Operator, C64};
use crate::outcome::{Label, MarkovKernel, OutcomeSpace};
use crate::povm::{Povm, PreorderCertificate};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty JSON with floats at 17 significant digits.
struct Digits17(PrettyFormatter<'static>);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
}

fn from_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Copy, Debug, SerializeDerive, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Complex([f64; 2]),
    Real(f64),
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> Self {
        match e {
            Entry::Complex([re, im]) => C64::new(re, im),
            Entry::Real(re) => C64::new(re, 0.0),
        }
    }
}

/// Row-major matrix literal.
pub type MatrixLiteral = Vec<Vec<Entry>>;

pub fn matrix_literal(op: &Operator) -> MatrixLiteral {
    op.rows().into_iter().map(|row| row.into_iter().map(|z| Entry::Complex([z.re, z.im])).collect()).collect()
}

pub fn operator_from_literal(lit: &MatrixLiteral) -> Result<Operator> {
    let rows: Vec<Vec<C64>> = lit.iter().map(|row| row.iter().map(|&e| e.into()).collect()).collect();
    Operator::from_rows(&rows)
}

fn check_dim(dim: usize, ops: &[Operator]) -> Result<()> {
    match ops.iter().find(|o| o.dim() != dim) {
        Some(o) => Err(Error::DimMismatch { expected: dim, found: o.dim() }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmFile {
    pub labels: Vec<Label>,
    pub dim: usize,
    pub effects: Vec<MatrixLiteral>,
}

impl PovmFile {
    pub fn from_povm(e: &Povm) -> Self {
        Self { labels: e.space().labels().to_vec(), dim: e.dim(), effects: e.effects().iter().map(matrix_literal).collect() }
    }

    pub fn to_povm(&self, tol: f64) -> Result<Povm> {
        let effects = self.effects.iter().map(operator_from_literal).collect::<Result<Vec<_>>>()?;
        check_dim(self.dim, &effects)?;
        Povm::with_tolerance(OutcomeSpace::new(self.labels.clone())?, effects, tol)
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentFile {
    pub labels: Vec<Label>,
    pub dim: usize,
    pub kraus: Vec<Vec<MatrixLiteral>>,
}

impl InstrumentFile {
    pub fn from_instrument(ins: &Instrument) -> Self {
        Self {
            labels: ins.space().labels().to_vec(),
            dim: ins.dim(),
            kraus: (0..ins.len()).map(|i| ins.kraus(i).iter().map(matrix_literal).collect()).collect(),
        }
    }

    pub fn to_instrument(&self, tol: f64) -> Result<Instrument> {
        let kraus = self
            .kraus
            .iter()
            .map(|list| list.iter().map(operator_from_literal).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        for list in &kraus {
            check_dim(self.dim, list)?;
        }
        Instrument::with_tolerance(OutcomeSpace::new(self.labels.clone())?, kraus, tol)
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub source: Vec<Label>,
    pub target: Vec<Label>,
    pub rows: Vec<Vec<f64>>,
}

impl KernelFile {
    pub fn from_kernel(nu: &MarkovKernel) -> Self {
        Self { source: nu.source().labels().to_vec(), target: nu.target().labels().to_vec(), rows: nu.rows() }
    }

    pub fn to_kernel(&self) -> Result<MarkovKernel> {
        MarkovKernel::new(OutcomeSpace::new(self.source.clone())?, OutcomeSpace::new(self.target.clone())?, self.rows.clone())
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
pub struct CertificateFile {
    pub feasible: bool,
    pub residual: f64,
    pub tol: f64,
    pub lp_iterations: usize,
    /// Best kernel found; a witness of the preorder when `feasible`.
    pub kernel: KernelFile,
}

impl CertificateFile {
    pub fn from_certificate(c: &PreorderCertificate, tol: f64) -> Self {
        Self {
            feasible: c.feasible,
            residual: c.residual,
            tol,
            lp_iterations: c.lp_iterations,
            kernel: KernelFile::from_kernel(&c.best_kernel),
        }
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
pub struct ConservationFile {
    pub conserved: bool,
    pub tol: f64,
    pub residual_forward: f64,
    pub residual_backward: f64,
    /// Kernel of `𝓘∗E ⪯ E`.
    pub kernel_forward: KernelFile,
    /// Kernel of `E ⪯ 𝓘∗E`.
    pub kernel_backward: KernelFile,
}

impl ConservationFile {
    pub fn from_report(r: &ConservationReport, tol: f64) -> Self {
        Self {
            conserved: r.conserved,
            tol,
            residual_forward: r.cert_forward.residual,
            residual_backward: r.cert_backward.residual,
            kernel_forward: KernelFile::from_kernel(&r.cert_forward.best_kernel),
            kernel_backward: KernelFile::from_kernel(&r.cert_backward.best_kernel),
        }
    }
}

pub fn povm_to_json(e: &Povm) -> Result<String> {
    to_json(&PovmFile::from_povm(e))
}

pub fn povm_from_json(text: &str, tol: f64) -> Result<Povm> {
    from_json::<PovmFile>(text)?.to_povm(tol)
}

pub fn instrument_to_json(ins: &Instrument) -> Result<String> {
    to_json(&InstrumentFile::from_instrument(ins))
}

pub fn instrument_from_json(text: &str, tol: f64) -> Result<Instrument> {
    from_json::<InstrumentFile>(text)?.to_instrument(tol)
}

pub fn kernel_to_json(nu: &MarkovKernel) -> Result<String> {
    to_json(&KernelFile::from_kernel(nu))
}

pub fn kernel_from_json(text: &str) -> Result<MarkovKernel> {
    from_json::<KernelFile>(text)?.to_kernel()
}
