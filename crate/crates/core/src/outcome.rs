//! Finite outcome spaces and Markov kernels between them.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums within this distance of one are renormalized on construction.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// An outcome label: an integer or string atom, or a tuple of atoms.
///
/// Tuples produced by [`product_space`] are always flat, so
/// `(Ω₁×Ω₂)×Ω₃` and `Ω₁×(Ω₂×Ω₃)` carry identical label lists.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
    Tuple(Vec<Label>),
}

impl Label {
    pub fn str(s: &str) -> Self {
        Label::Str(s.to_owned())
    }

    /// Flattened concatenation of two labels.
    pub fn pair(a: &Label, b: &Label) -> Label {
        let mut parts = a.parts().to_vec();
        parts.extend_from_slice(b.parts());
        Label::Tuple(parts)
    }

    /// Components of a tuple label; an atom is its own single component.
    pub fn parts(&self) -> &[Label] {
        match self {
            Label::Tuple(v) => v,
            atom => std::slice::from_ref(atom),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Label::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(i) => write!(f, "{i}"),
            Label::Str(s) => write!(f, "{s}"),
            Label::Tuple(v) => {
                write!(f, "(")?;
                for (k, l) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl From<i64> for Label {
    fn from(i: i64) -> Self {
        Label::Int(i)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_owned())
    }
}

struct SpaceInner {
    labels: Vec<Label>,
    index: OnceLock<HashMap<Label, usize>>,
    factors: Option<(OutcomeSpace, OutcomeSpace)>,
}

/// A finite, ordered set of distinct labels. Cloning is cheap.
#[derive(Clone)]
pub struct OutcomeSpace {
    inner: Arc<SpaceInner>,
}

impl OutcomeSpace {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSpace("outcome space must be nonempty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate label {l}")));
            }
        }
        let lock = OnceLock::new();
        let _ = lock.set(index);
        Ok(Self { inner: Arc::new(SpaceInner { labels, index: lock, factors: None }) })
    }

    /// Integer labels `0..n`.
    pub fn range(n: usize) -> Self {
        let labels = (0..n as i64).map(Label::Int).collect();
        Self::new(labels).expect("integer labels are distinct")
    }

    pub fn from_strs(names: &[&str]) -> Result<Self> {
        Self::new(names.iter().map(|s| Label::str(s)).collect())
    }

    pub fn len(&self) -> usize {
        self.inner.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.inner.labels
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.inner.labels[i]
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.inner
            .index
            .get_or_init(|| self.inner.labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect())
            .get(label)
            .copied()
    }

    pub fn require(&self, label: &Label) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// The two factors if this space was built by [`product_space`].
    pub fn factors(&self) -> Option<(&OutcomeSpace, &OutcomeSpace)> {
        self.inner.factors.as_ref().map(|(a, b)| (a, b))
    }

    pub fn same_as(&self, other: &OutcomeSpace) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.labels() == other.labels()
    }
}

impl PartialEq for OutcomeSpace {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for OutcomeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 16 {
            f.debug_list().entries(self.labels().iter().map(ToString::to_string)).finish()
        } else {
            write!(f, "OutcomeSpace({} labels)", self.len())
        }
    }
}

/// `s1 × s2` with flattened pair labels in s1-major order. Index of
/// `(i, j)` is `i·|s2| + j`.
pub fn product_space(s1: &OutcomeSpace, s2: &OutcomeSpace) -> OutcomeSpace {
    let mut labels = Vec::with_capacity(s1.len() * s2.len());
    for a in s1.labels() {
        for b in s2.labels() {
            labels.push(Label::pair(a, b));
        }
    }
    OutcomeSpace {
        inner: Arc::new(SpaceInner {
            labels,
            index: OnceLock::new(),
            factors: Some((s1.clone(), s2.clone())),
        }),
    }
}

/// Which factor of a product space to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    First,
    Second,
}

/// Row-stochastic map from `source` labels to probability vectors over
/// `target` labels. Rows are stored densely.
#[derive(Clone, PartialEq)]
pub struct MarkovKernel {
    source: OutcomeSpace,
    target: OutcomeSpace,
    data: Vec<f64>,
}

impl fmt::Debug for MarkovKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkovKernel")
            .field("source", &self.source)
            .field("target", &self.target)
            .field("rows", &self.data.chunks(self.target.len()).collect::<Vec<_>>())
            .finish()
    }
}

impl MarkovKernel {
    pub fn new(source: OutcomeSpace, target: OutcomeSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != source.len() {
            return Err(Error::InvalidKernel(format!(
                "{} rows for {} source labels",
                rows.len(),
                source.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != target.len()) {
            return Err(Error::InvalidKernel(format!(
                "row of length {} for {} target labels",
                r.len(),
                target.len()
            )));
        }
        Self::from_flat(source, target, rows.concat())
    }

    /// Rows concatenated in source order.
    pub fn from_flat(source: OutcomeSpace, target: OutcomeSpace, mut data: Vec<f64>) -> Result<Self> {
        let width = target.len();
        if data.len() != source.len() * width {
            return Err(Error::InvalidKernel("row data has the wrong length".into()));
        }
        for (i, row) in data.chunks_mut(width).enumerate() {
            if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "row {} has entry {x}",
                    source.label(i)
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidKernel(format!(
                    "row {} sums to {sum}",
                    source.label(i)
                )));
            }
            if sum != 1.0 {
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
        Ok(Self { source, target, data })
    }

    pub fn identity(space: &OutcomeSpace) -> Self {
        Self::deterministic(space, space, |i| i)
    }

    /// Kernel sending source index `i` with certainty to target index `f(i)`.
    pub fn deterministic(source: &OutcomeSpace, target: &OutcomeSpace, f: impl Fn(usize) -> usize) -> Self {
        let w = target.len();
        let mut data = vec![0.0; source.len() * w];
        for i in 0..source.len() {
            data[i * w + f(i)] = 1.0;
        }
        Self { source: source.clone(), target: target.clone(), data }
    }

    /// Every source label mapped to the same distribution.
    pub fn constant(source: &OutcomeSpace, target: &OutcomeSpace, dist: &[f64]) -> Result<Self> {
        Self::from_flat(source.clone(), target.clone(), dist.repeat(source.len()))
    }

    pub fn source(&self) -> &OutcomeSpace {
        &self.source
    }

    pub fn target(&self) -> &OutcomeSpace {
        &self.target
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.target.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.target.len() + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.target.len()).map(<[f64]>::to_vec).collect()
    }

    /// Largest entrywise distance to another kernel on the same spaces.
    pub fn max_abs_diff(&self, other: &MarkovKernel) -> Result<f64> {
        if self.source != other.source || self.target != other.target {
            return Err(Error::SpaceMismatch("kernels act between different spaces".into()));
        }
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Pushes a distribution over the source through the kernel.
    pub fn push(&self, dist: &[f64]) -> Vec<f64> {
        assert_eq!(dist.len(), self.source.len());
        let w = self.target.len();
        let mut out = vec![0.0; w];
        for (i, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &k) in out.iter_mut().zip(&self.data[i * w..(i + 1) * w]) {
                *o += p * k;
            }
        }
        out
    }

    pub(crate) fn from_parts_unchecked(source: OutcomeSpace, target: OutcomeSpace, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), source.len() * target.len());
        Self { source, target, data }
    }
}

/// Composite post-processing: `ν³_{ω₃}(·) = Σ_{ω₂} ν¹_{ω₂}(·) ν²_{ω₃}(ω₂)`,
/// i.e. first `nu2`, then `nu1`.
pub fn compose_kernels(nu1: &MarkovKernel, nu2: &MarkovKernel) -> Result<MarkovKernel> {
    if nu1.source != nu2.target {
        return Err(Error::SpaceMismatch(
            "source of the outer kernel differs from the target of the inner kernel".into(),
        ));
    }
    let w = nu1.target.len();
    let mut data = vec![0.0; nu2.source.len() * w];
    for (i3, out) in data.chunks_mut(w).enumerate() {
        for (i2, &p) in nu2.row(i3).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &q) in out.iter_mut().zip(nu1.row(i2)) {
                *o += p * q;
            }
        }
    }
    MarkovKernel::from_flat(nu2.source.clone(), nu1.target.clone(), data)
}

/// Lifts `ν: Ω₃ → Ω₂` to `(Ω₁×Ω₃) → (Ω₁×Ω₂)`, carrying the `Ω₁` component
/// through unchanged: `ν̃_{(ω₁,ω₃)}(B) = ν_{ω₃}(B|_{ω₁})`.
pub fn extend_kernel(nu: &MarkovKernel, omega1: &OutcomeSpace) -> MarkovKernel {
    let source = product_space(omega1, &nu.source);
    let target = product_space(omega1, &nu.target);
    let n1 = omega1.len();
    let n2 = nu.target.len();
    let n3 = nu.source.len();
    let w = n1 * n2;
    let mut data = vec![0.0; n1 * n3 * w];
    for a in 0..n1 {
        for c in 0..n3 {
            let row = &mut data[(a * n3 + c) * w..(a * n3 + c + 1) * w];
            row[a * n2..(a + 1) * n2].copy_from_slice(nu.row(c));
        }
    }
    MarkovKernel::from_parts_unchecked(source, target, data)
}

/// Marginalizes a kernel whose target is a product space onto one factor.
pub fn marginal_kernel(nu: &MarkovKernel, keep: Factor) -> Result<MarkovKernel> {
    let (fa, fb) = nu.target.factors().ok_or(Error::NotProductSpace)?;
    let (na, nb) = (fa.len(), fb.len());
    let kept = match keep {
        Factor::First => fa.clone(),
        Factor::Second => fb.clone(),
    };
    let w = kept.len();
    let mut data = vec![0.0; nu.source.len() * w];
    for i in 0..nu.source.len() {
        let row = nu.row(i);
        let out = &mut data[i * w..(i + 1) * w];
        for a in 0..na {
            for b in 0..nb {
                let p = row[a * nb + b];
                match keep {
                    Factor::First => out[a] += p,
                    Factor::Second => out[b] += p,
                }
            }
        }
    }
    MarkovKernel::from_flat(nu.source.clone(), kept, data)
}
