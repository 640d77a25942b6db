//! Dense complex square matrices and the handful of linear-algebra routines
//! the rest of the crate needs: adjoints, products, a cyclic Jacobi
//! eigensolver for Hermitian matrices, and positivity checks.

use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default Hermiticity tolerance, relative to `max(1, ‖a‖_max)`.
pub const TOL_HERM: f64 = 1e-9;
/// Default positivity tolerance, relative to `max(1, ‖a‖_max)`.
pub const TOL_PSD: f64 = 1e-9;
/// Default trace tolerance for density states.
pub const TOL_TRACE: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dense `dim × dim` complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidOperator("dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidOperator(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        Ok(Self { dim, data })
    }

    /// Builds an operator from rows; every row must have as many entries as
    /// there are rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::InvalidOperator(format!(
                "row of length {} in a {dim}-row matrix",
                bad.len()
            )));
        }
        Self::new(dim, rows.concat())
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "operator dimension must be positive");
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.data[i * dim + i] = ONE;
        }
        out
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            out.data[i * diag.len() + i] = C64::new(d, 0.0);
        }
        out
    }

    pub fn from_complex_diag(diag: &[C64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            out.data[i * diag.len() + i] = d;
        }
        out
    }

    /// `|i⟩⟨j|` in dimension `dim`.
    pub fn ket_bra(i: usize, j: usize, dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        out.data[i * dim + j] = ONE;
        out
    }

    /// `|ψ⟩⟨ψ|` for an (unnormalized) vector ψ.
    pub fn projector(psi: &[C64]) -> Self {
        let dim = psi.len();
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.data[i * dim + j] = psi[i] * psi[j].conj();
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.dim).map(<[C64]>::to_vec).collect()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn real_diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i).re).collect()
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &Operator) {
        assert_eq!(self.dim, other.dim, "dimension mismatch in add_scaled");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matmul");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let b = &other.data[k * n..(k + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Self { dim: n, data: out }
    }

    /// Heisenberg-picture sandwich `K† a K`, evaluated as `K† (K† a†)†` so that
    /// the (typically sparse) Kraus factor is always the left operand.
    pub fn sandwich(k: &Operator, a: &Operator) -> Self {
        let kd = k.adjoint();
        kd.matmul(&kd.matmul(&a.adjoint()).adjoint())
    }

    /// Schrödinger-picture sandwich `K ρ K†`, evaluated as `K (K ρ†)†`.
    pub fn conjugate(k: &Operator, rho: &Operator) -> Self {
        k.matmul(&k.matmul(&rho.adjoint()).adjoint())
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest deviation from Hermiticity, `max |a_ij - conj(a_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol * self.max_abs().max(1.0)
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[i * n + j] == ZERO))
    }

    /// Top-left `keep × keep` block, i.e. `P a P` restricted to the span of
    /// the first `keep` basis vectors.
    pub fn compress(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: keep });
        }
        let mut out = Self::zeros(keep);
        for i in 0..keep {
            for j in 0..keep {
                out.data[i * keep + j] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// Embeds into a larger space as the top-left block.
    pub fn embed(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: dim });
        }
        let mut out = Self::zeros(dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.data[i * dim + j] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// Frobenius inner product `tr(self · other)`.
    pub fn trace_product(&self, other: &Operator) -> C64 {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add");
        Operator {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sub");
        Operator {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

pub fn adjoint(a: &Operator) -> Operator {
    a.adjoint()
}

/// Entrywise uniform distance `max_ij |a_ij - b_ij|`.
pub fn max_abs_diff(a: &Operator, b: &Operator) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimMismatch { expected: a.dim, found: b.dim });
    }
    Ok(a.data.iter().zip(&b.data).fold(0.0, |m, (x, y)| m.max((x - y).norm())))
}

/// Eigen-decomposition of a Hermitian operator: ascending eigenvalues and the
/// matching orthonormal eigenvectors stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Operator,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.dim).map(|i| self.vectors.get(i, k)).collect()
    }

    /// `V f(Λ) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Operator {
        let n = self.vectors.dim;
        let mut out = Operator::zeros(n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors.get(i, k) * w;
                for j in 0..n {
                    out.data[i * n + j] += vik * self.vectors.get(j, k).conj();
                }
            }
        }
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary and then applies a real Givens rotation, so the combined 2×2
/// unitary zeroes `a_pq` exactly. Sweeps run over `p < q` in row-major order
/// until the off-diagonal mass is below machine precision.
pub fn hermitian_eigen(a: &Operator, tol_herm: f64) -> Result<Eigen> {
    let deviation = a.hermiticity_defect();
    if deviation > tol_herm * a.max_abs().max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    let n = a.dim;
    // Symmetrize so the iteration starts from an exactly Hermitian matrix.
    let mut m = a.clone();
    for i in 0..n {
        m.data[i * n + i] = C64::new(a.get(i, i).re, 0.0);
        for j in (i + 1)..n {
            let z = (a.get(i, j) + a.get(j, i).conj()) * 0.5;
            m.data[i * n + j] = z;
            m.data[j * n + i] = z.conj();
        }
    }
    let mut v = Operator::identity(n);
    let frob: f64 = m.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let threshold = f64::EPSILON * frob.max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.data[i * n + j].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.data[p * n + q];
                let b = apq.norm();
                if b == 0.0 {
                    continue;
                }
                let phase = apq / b; // e^{iφ}
                let app = m.data[p * n + p].re;
                let aqq = m.data[q * n + q].re;
                let tau = (aqq - app) / (2.0 * b);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns of U: u_p = c e_p + s e^{-iφ} e_q, u_q = -s e_p + c e^{-iφ} e_q.
                let ph = phase.conj();
                // M <- M U (columns p, q).
                for k in 0..n {
                    let mkp = m.data[k * n + p];
                    let mkq = m.data[k * n + q];
                    m.data[k * n + p] = mkp * c + mkq * ph * s;
                    m.data[k * n + q] = -mkp * s + mkq * ph * c;
                }
                // M <- U† M (rows p, q).
                for k in 0..n {
                    let mpk = m.data[p * n + k];
                    let mqk = m.data[q * n + k];
                    m.data[p * n + k] = mpk * c + mqk * phase * s;
                    m.data[q * n + k] = -mpk * s + mqk * phase * c;
                }
                m.data[p * n + q] = ZERO;
                m.data[q * n + p] = ZERO;
                m.data[p * n + p].im = 0.0;
                m.data[q * n + q].im = 0.0;
                for k in 0..n {
                    let vkp = v.data[k * n + p];
                    let vkq = v.data[k * n + q];
                    v.data[k * n + p] = vkp * c + vkq * ph * s;
                    v.data[k * n + q] = -vkp * s + vkq * ph * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.data[i * n + i].re).collect();
    order.sort_by(|&x, &y| diag[x].total_cmp(&diag[y]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| diag[k]).collect();
    let mut vectors = Operator::zeros(n);
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..n {
            vectors.data[i * n + new_k] = v.data[i * n + old_k];
        }
    }
    Ok(Eigen { values, vectors })
}

/// Positive semidefiniteness: smallest eigenvalue `≥ -tol · max(1, ‖a‖_max)`.
pub fn is_psd(a: &Operator, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(a, tol)? >= -tol * a.max_abs().max(1.0))
}

/// Smallest eigenvalue of a Hermitian operator. Diagonal operators skip the
/// eigensolver.
pub fn min_eigenvalue(a: &Operator, tol_herm: f64) -> Result<f64> {
    if a.is_diagonal() {
        let deviation = a.diag().iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        if deviation > tol_herm * a.max_abs().max(1.0) {
            return Err(Error::NotHermitian { deviation });
        }
        return Ok(a.real_diag().into_iter().fold(f64::INFINITY, f64::min));
    }
    Ok(hermitian_eigen(a, tol_herm)?.values[0])
}

/// Positive square root of a PSD operator; negative eigenvalues within
/// tolerance are clipped to zero.
pub fn psd_sqrt(a: &Operator, tol: f64) -> Result<Operator> {
    if a.is_diagonal() {
        let diag: Vec<f64> = a.real_diag().into_iter().map(|x| x.max(0.0).sqrt()).collect();
        return Ok(Operator::from_diag(&diag));
    }
    let eig = hermitian_eigen(a, tol)?;
    Ok(eig.reconstruct_with(|x| x.max(0.0).sqrt()))
}

/// A normalized, positive density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    op: Operator,
}

impl DensityState {
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerance(op, TOL_HERM, TOL_PSD, TOL_TRACE)
    }

    pub fn with_tolerance(op: Operator, tol_herm: f64, tol_psd: f64, tol_trace: f64) -> Result<Self> {
        if !op.is_hermitian(tol_herm) {
            return Err(Error::NotHermitian { deviation: op.hermiticity_defect() });
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > tol_trace || tr.im.abs() > tol_trace {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let lo = min_eigenvalue(&op, tol_herm)?;
        if lo < -tol_psd {
            return Err(Error::InvalidState(format!("negative eigenvalue {lo:e}")));
        }
        Ok(Self { op })
    }

    /// Unchecked constructor for states produced by trace-preserving updates.
    pub(crate) fn from_normalized(op: Operator) -> Self {
        Self { op }
    }

    /// Number state `|n⟩⟨n|` in a `dim`-level space.
    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidState(format!("level {n} outside dimension {dim}")));
        }
        Ok(Self { op: Operator::ket_bra(n, n, dim) })
    }

    /// Diagonal mixture `Σ p_n |n⟩⟨n|`.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(Operator::from_diag(probs))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::new(Operator::projector(psi).scale(1.0 / norm))
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim
    }

    /// `tr(ρ a)`.
    pub fn expect(&self, a: &Operator) -> C64 {
        self.op.trace_product(a)
    }
}
