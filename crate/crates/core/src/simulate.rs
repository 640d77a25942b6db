//! Monte Carlo repeated-measurement trajectories and the count statistics
//! `M_k = Σᵢ mᵢ` and `X_k = e^{−λtk} M_k`.
//!
//! Every trajectory owns a ChaCha8 stream seeded from `(master_seed, index)`,
//! so ensembles are reproducible and identical whether or not they run on
//! the rayon pool.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::{Instrument, PROB_FLOOR};
use crate::operator::{DensityState, C64};
use crate::outcome::Label;

/// Largest deviation of a branch probability sum from 1 treated as rounding.
pub const RENORMALIZE_TOL: f64 = 1e-10;
/// Poisson means up to this are sampled by sequential inversion.
const INVERSION_MAX_MEAN: f64 = 30.0;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn indexed_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub outcomes: Vec<Label>,
    /// Probability of the drawn outcome at each step.
    pub probs: Vec<f64>,
    pub final_state: DensityState,
}

/// Draws `k` successive outcomes of `ins` starting from `rho0`.
pub fn sample_trajectory(ins: &Instrument, rho0: &DensityState, k: usize, seed: u64) -> Result<Trajectory> {
    Sampler::new(ins).run(rho0, k, seed)
}

/// An instrument with its effects stored as nonzero-entry lists, which is
/// all that `tr(ρE)` needs.
struct Sampler<'a> {
    ins: &'a Instrument,
    effects: Vec<Vec<(usize, usize, C64)>>,
}

impl<'a> Sampler<'a> {
    fn new(ins: &'a Instrument) -> Self {
        let effects = ins
            .induced_povm()
            .effects()
            .iter()
            .map(|e| {
                let d = e.dim();
                (0..d * d).map(|ix| (ix / d, ix % d, e.data()[ix])).filter(|t| t.2 != C64::new(0.0, 0.0)).collect()
            })
            .collect();
        Self { ins, effects }
    }

    fn run(&self, rho0: &DensityState, k: usize, seed: u64) -> Result<Trajectory> {
        let ins = self.ins;
        if rho0.dim() != ins.dim() {
            return Err(Error::DimMismatch { expected: ins.dim(), found: rho0.dim() });
        }
        let mut rng = rng_for(seed);
        let mut rho = rho0.clone();
        let mut outcomes = Vec::with_capacity(k);
        let mut probs = Vec::with_capacity(k);
        for step in 0..k {
            let r = rho.operator();
            let mut p: Vec<f64> = self
                .effects
                .iter()
                .map(|e| e.iter().map(|&(i, j, v)| v * r.get(j, i)).sum::<C64>().re.max(0.0))
                .collect();
            let total: f64 = p.iter().sum();
            if total < PROB_FLOOR || (total - 1.0).abs() > RENORMALIZE_TOL {
                return Err(Error::DeadEnd { step, total });
            }
            p.iter_mut().for_each(|v| *v /= total);
            let i = inverse_cdf(&p, rng.random::<f64>());
            let branch = ins.branch(i, &rho)?;
            let post = branch.post.ok_or(Error::DeadEnd { step, total: branch.prob })?;
            outcomes.push(ins.space().label(i).clone());
            probs.push(p[i]);
            rho = post;
        }
        Ok(Trajectory { outcomes, probs, final_state: rho })
    }
}

/// First index whose cumulative probability exceeds `u`, skipping empty outcomes.
fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &v) in p.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        acc += v;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Outcome sequences of `n_traj` trajectories with seeds
/// `trajectory_seed(master_seed, i)`; final states are dropped.
pub fn sample_ensemble(
    ins: &Instrument,
    rho0: &DensityState,
    k: usize,
    n_traj: usize,
    master_seed: u64,
) -> Result<Vec<Vec<Label>>> {
    map_ensemble(ins, rho0, k, n_traj, master_seed, |t| Ok(t.outcomes))
}

/// Runs `n_traj` trajectories and maps each through `f`, in index order.
pub fn map_ensemble<T: Send>(
    ins: &Instrument,
    rho0: &DensityState,
    k: usize,
    n_traj: usize,
    master_seed: u64,
    f: impl Fn(Trajectory) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let sampler = Sampler::new(ins);
    indexed_map(n_traj, |i| f(sampler.run(rho0, k, trajectory_seed(master_seed, i as u64))?))
        .into_iter()
        .collect()
}

/// Count carried by an outcome label.
pub fn count_of(label: &Label) -> Result<u64> {
    match label.as_int() {
        Some(m) if m >= 0 => Ok(m as u64),
        _ => Err(Error::InvalidParams(format!("outcome {label} is not a photon count"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    Mk,
    Xk { lambda_t: f64 },
}

impl Statistic {
    /// Value of the statistic for total count `m` after `k` steps.
    pub fn value(&self, m: u64, k: usize) -> f64 {
        match *self {
            Statistic::Mk => m as f64,
            Statistic::Xk { lambda_t } => (-lambda_t * k as f64).exp() * m as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub statistic: Statistic,
    pub k: usize,
    pub n_traj: usize,
    /// `M_k` per trajectory, in trajectory order.
    pub counts: Vec<u64>,
    /// The statistic per trajectory.
    pub values: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Distinct values of `M_k` with their empirical frequencies.
    pub empirical: Vec<(u64, f64)>,
    pub reference: Option<Vec<(u64, f64)>>,
    /// Total-variation distance between the empirical and reference laws of `M_k`.
    pub tv_distance: Option<f64>,
}

impl ConvergenceStats {
    pub fn from_counts(counts: Vec<u64>, k: usize, statistic: Statistic, reference: Option<&[(u64, f64)]>) -> Self {
        let n = counts.len();
        let values: Vec<f64> = counts.iter().map(|&m| statistic.value(m, k)).collect();
        let (mean, variance) = mean_variance(&values);
        let mut freq: BTreeMap<u64, usize> = BTreeMap::new();
        for &m in &counts {
            *freq.entry(m).or_default() += 1;
        }
        let empirical: Vec<(u64, f64)> = freq.into_iter().map(|(m, c)| (m, c as f64 / n as f64)).collect();
        let tv_distance = reference.map(|r| tv_distance(&empirical, r));
        Self {
            statistic,
            k,
            n_traj: n,
            counts,
            values,
            mean,
            variance,
            empirical,
            reference: reference.map(<[_]>::to_vec),
            tv_distance,
        }
    }
}

/// Sample mean and unbiased sample variance.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// `½ Σ |p − q|` over the union of supports.
pub fn tv_distance(p: &[(u64, f64)], q: &[(u64, f64)]) -> f64 {
    let mut all: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &(m, v) in p {
        all.entry(m).or_default().0 += v;
    }
    for &(m, v) in q {
        all.entry(m).or_default().1 += v;
    }
    0.5 * all.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Runs an ensemble through `ins` and aggregates `M_k` or `X_k`.
pub fn ensemble_stats(
    ins: &Instrument,
    rho0: &DensityState,
    k: usize,
    n_traj: usize,
    master_seed: u64,
    statistic: Statistic,
    reference: Option<&[(u64, f64)]>,
) -> Result<ConvergenceStats> {
    if n_traj == 0 || k == 0 {
        return Err(Error::InvalidParams("need k ≥ 1 and n_traj ≥ 1".into()));
    }
    let counts = map_ensemble(ins, rho0, k, n_traj, master_seed, |t| t.outcomes.iter().map(count_of).sum())?;
    Ok(ConvergenceStats::from_counts(counts, k, statistic, reference))
}

/// The two detector models, which map number states to number states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingModel {
    PhotonCounting,
    QuantumCounter,
}

/// Both models send `|n⟩⟨n|` to a mixture of number states, so for a
/// number-diagonal initial state the trajectory is a classical chain on the
/// photon number: photon counting removes `Binomial(n, 1 − e^{−λt})`
/// photons, the quantum counter adds `NegBinomial(n + 1, e^{−λt})` photons.
/// This samples the same law as [`sample_trajectory`] on the untruncated
/// Fock space, which matters once photon numbers outgrow any matrix.
pub fn number_chain(model: CountingModel, lambda_t: f64, n0: u64, k: usize, rng: &mut impl Rng) -> Result<Vec<u64>> {
    if !(lambda_t > 0.0 && lambda_t.is_finite()) {
        return Err(Error::InvalidParams(format!("lambda_t must be positive, got {lambda_t}")));
    }
    let mut n = n0;
    let mut counts = Vec::with_capacity(k);
    for _ in 0..k {
        let m = match model {
            CountingModel::PhotonCounting => {
                let p = -(-lambda_t).exp_m1();
                let m = Binomial::new(n, p).map_err(|e| Error::InvalidParams(e.to_string()))?.sample(rng);
                n -= m;
                m
            }
            CountingModel::QuantumCounter => {
                let scale = lambda_t.exp_m1();
                let rate = Gamma::new((n + 1) as f64, scale).map_err(|e| Error::InvalidParams(e.to_string()))?.sample(rng);
                let m = sample_poisson(rate, rng)?;
                n = n.checked_add(m).ok_or_else(|| Error::InvalidParams("photon number overflow".into()))?;
                m
            }
        };
        counts.push(m);
    }
    Ok(counts)
}

/// Ensemble statistics from [`number_chain`] with the initial photon number
/// drawn from `initial[n]`.
pub fn number_chain_stats(
    model: CountingModel,
    lambda_t: f64,
    initial: &[f64],
    k: usize,
    n_traj: usize,
    master_seed: u64,
    statistic: Statistic,
    reference: Option<&[(u64, f64)]>,
) -> Result<ConvergenceStats> {
    let total: f64 = initial.iter().sum();
    if initial.is_empty() || initial.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::InvalidState("initial photon-number law must be a probability vector".into()));
    }
    if n_traj == 0 || k == 0 {
        return Err(Error::InvalidParams("need k ≥ 1 and n_traj ≥ 1".into()));
    }
    let counts = indexed_map(n_traj, |i| -> Result<u64> {
        let mut rng = rng_for(trajectory_seed(master_seed, i as u64));
        let n0 = inverse_cdf(initial, rng.random::<f64>()) as u64;
        Ok(number_chain(model, lambda_t, n0, k, &mut rng)?.iter().sum())
    })
    .into_iter()
    .collect::<Result<Vec<u64>>>()?;
    Ok(ConvergenceStats::from_counts(counts, k, statistic, reference))
}

/// Poisson draw: sequential inversion for small means, the rand_distr
/// sampler above [`INVERSION_MAX_MEAN`].
pub fn sample_poisson(mean: f64, rng: &mut impl Rng) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParams(format!("Poisson mean must be finite and ≥ 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean <= INVERSION_MAX_MEAN {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut m = 0u64;
        while u >= cdf {
            m += 1;
            p *= mean / m as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                break;
            }
        }
        return Ok(m);
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Independent counts `mᵢ ~ Poisson((e^{λt} − 1) e^{λt(i−1)} x)`, `i = 1..=k`:
/// the quantum counter's count law given the classical intensity `x`.
pub fn classical_product_sampler(x: f64, lambda_t: f64, k: usize, seed: u64) -> Result<Vec<u64>> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParams(format!("intensity must be ≥ 0, got {x}")));
    }
    let mut rng = rng_for(seed);
    let gain = lambda_t.exp_m1();
    (0..k).map(|i| sample_poisson(gain * (lambda_t * i as f64).exp() * x, &mut rng)).collect()
}

/// `n_draws` independent runs of [`classical_product_sampler`], returning `M_k` per draw.
pub fn classical_product_counts(x: f64, lambda_t: f64, k: usize, n_draws: usize, master_seed: u64) -> Result<Vec<u64>> {
    indexed_map(n_draws, |i| -> Result<u64> {
        Ok(classical_product_sampler(x, lambda_t, k, trajectory_seed(master_seed, i as u64))?.iter().sum())
    })
    .into_iter()
    .collect()
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f)
    })
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Histogram bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub density: f64,
}

/// Equal-width histogram of `values` on `[lo, hi)`; values outside are dropped
/// from the counts but not from the density normalization.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<Bin> {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let n = values.len().max(1) as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| Bin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect()
}
