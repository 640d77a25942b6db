//! Detector models on a truncated single-mode Fock space.
//!
//! Photon counting removes the counted photons, the quantum counter adds
//! them. Both depend on the coupling strength and the interval only through
//! the product `lambda_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::Instrument;
use crate::operator::{min_eigenvalue, Operator, C64};
use crate::outcome::{Label, OutcomeSpace};
use crate::povm::{Povm, DEFAULT_TOL};
use crate::quadrature::gauss_legendre;

/// Label of the quantum counter's catch-all outcome.
pub const OVERFLOW: &str = "overflow";
/// Label of the E^X residual outcome.
pub const REST: &str = "rest";

/// Quadrature request for the intensity observable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nodes: usize,
    pub x_max: f64,
}

impl GridSpec {
    /// 64 Gauss–Legendre nodes on `[0, max(40, 5·cutoff)]`.
    pub fn default_for(cutoff: usize) -> Self {
        Self { nodes: 64, x_max: f64::max(40.0, 5.0 * cutoff as f64) }
    }

    pub fn realize(&self) -> Result<Grid> {
        let (nodes, weights) = gauss_legendre(self.nodes, 0.0, self.x_max)?;
        Grid::new(nodes, weights)
    }
}

/// Quadrature nodes in `(0, ∞)`, strictly increasing, with positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidParams("grid needs equally many nodes and weights".into()));
        }
        if !nodes.iter().all(|&x| x > 0.0 && x.is_finite()) || !nodes.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidParams("grid nodes must be finite, positive and strictly increasing".into()));
        }
        if !weights.iter().all(|&w| w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidParams("grid weights must be positive".into()));
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda_t: f64,
    pub cutoff: usize,
    pub m_max: usize,
    pub grid: GridSpec,
}

impl ModelParams {
    pub fn new(lambda_t: f64, cutoff: usize, m_max: usize) -> Result<Self> {
        let p = Self { lambda_t, cutoff, m_max, grid: GridSpec::default_for(cutoff) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda_t(self.lambda_t)?;
        if self.grid.nodes == 0 || !(self.grid.x_max > 0.0) || !self.grid.x_max.is_finite() {
            return Err(Error::InvalidParams("grid needs nodes ≥ 1 and x_max > 0".into()));
        }
        Ok(())
    }
}

fn check_lambda_t(lambda_t: f64) -> Result<()> {
    if lambda_t > 0.0 && lambda_t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("lambda_t must be positive and finite, got {lambda_t}")))
    }
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Poisson probability mass at `m` for mean `mu ≥ 0`.
pub fn poisson_pmf(m: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    (m as f64 * mu.ln() - mu - ln_factorial(m)).exp()
}

/// Probability that photon counting registers `m` of `n` photons.
pub fn p_pc(m: usize, n: usize, lambda_t: f64) -> f64 {
    if m > n {
        return 0.0;
    }
    let detect = -(-lambda_t).exp_m1();
    let ln = ln_binomial(n, m) + if m == 0 { 0.0 } else { m as f64 * detect.ln() } - lambda_t * (n - m) as f64;
    ln.exp().min(1.0)
}

/// Probability that the quantum counter registers `m` starting from `n` photons.
pub fn p_qc(m: usize, n: usize, lambda_t: f64) -> f64 {
    let gain = lambda_t.exp_m1();
    let ln = ln_binomial(n + m, m) + if m == 0 { 0.0 } else { m as f64 * gain.ln() } - lambda_t * (n + m + 1) as f64;
    ln.exp().min(1.0)
}

/// Total count law after `k` photon-counting steps.
pub fn p_pc_k(m: usize, n: usize, lambda_t: f64, k: usize) -> f64 {
    p_pc(m, n, lambda_t * k as f64)
}

/// Quantum-counter count law for a classical intensity `x`.
pub fn p_qc_intensity(m: usize, x: f64, lambda_t: f64) -> f64 {
    poisson_pmf(m, lambda_t.exp_m1() * x)
}

pub fn photon_counting_instrument(lambda_t: f64, cutoff: usize) -> Result<Instrument> {
    check_lambda_t(lambda_t)?;
    let dim = cutoff + 1;
    let kraus = (0..=cutoff)
        .map(|m| {
            let mut k = Operator::zeros(dim);
            for n in 0..=cutoff - m {
                k.set(n, n + m, C64::new(p_pc(m, n + m, lambda_t).sqrt(), 0.0));
            }
            vec![k]
        })
        .collect();
    Instrument::new(OutcomeSpace::range(dim), kraus)
}

/// Quantum counter on `cutoff + m_max + 1` Fock levels, outcomes `0..=m_max`
/// followed by [`OVERFLOW`].
pub fn quantum_counter_instrument(lambda_t: f64, cutoff: usize, m_max: usize) -> Result<Instrument> {
    check_lambda_t(lambda_t)?;
    let dim = cutoff + m_max + 1;
    let mut captured = vec![0.0; dim];
    let mut kraus = Vec::with_capacity(m_max + 2);
    for m in 0..=m_max {
        let mut k = Operator::zeros(dim);
        for n in 0..dim - m {
            let p = p_qc(m, n, lambda_t);
            captured[n] += p;
            k.set(n + m, n, C64::new(p.sqrt(), 0.0));
        }
        kraus.push(vec![k]);
    }
    let rest: Vec<f64> = captured.iter().map(|c| (1.0 - c).max(0.0).sqrt()).collect();
    kraus.push(vec![Operator::from_diag(&rest)]);
    let mut labels: Vec<Label> = (0..=m_max as i64).map(Label::Int).collect();
    labels.push(Label::str(OVERFLOW));
    Instrument::new(OutcomeSpace::new(labels)?, kraus)
}

/// Photon number projectors `|n⟩⟨n|`, `n = 0..=cutoff`.
pub fn number_povm(cutoff: usize) -> Povm {
    let dim = cutoff + 1;
    let effects = (0..dim).map(|n| Operator::ket_bra(n, n, dim)).collect();
    Povm::from_parts(OutcomeSpace::range(dim), effects, dim)
}

/// `F_x = Σ_n e^{−x} xⁿ/n! |n⟩⟨n|` on `cutoff + 1` levels.
pub fn poisson_effect(x: f64, cutoff: usize) -> Operator {
    let diag: Vec<f64> = (0..=cutoff).map(|n| poisson_pmf(n, x)).collect();
    Operator::from_diag(&diag)
}

/// Quadrature shadow of the intensity observable: outcome `j` carries
/// `w_j F_{x_j}` and [`REST`] the remainder `I − Σ_j w_j F_{x_j}`.
pub fn x_povm(cutoff: usize, grid: &Grid) -> Result<Povm> {
    let dim = cutoff + 1;
    let mut effects: Vec<Operator> =
        grid.nodes.iter().zip(&grid.weights).map(|(&x, &w)| poisson_effect(x, cutoff).scale(w)).collect();
    let mut rest = Operator::identity(dim);
    for e in &effects {
        rest.add_scaled(-1.0, e);
    }
    let min = min_eigenvalue(&rest, DEFAULT_TOL)?;
    if min < -DEFAULT_TOL {
        return Err(Error::GridDeficient { min_eigenvalue: min });
    }
    effects.push(rest);
    let mut labels: Vec<Label> = (0..grid.len() as i64).map(Label::Int).collect();
    labels.push(Label::str(REST));
    Ok(Povm::from_parts(OutcomeSpace::new(labels)?, effects, dim))
}
