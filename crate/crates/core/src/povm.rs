//! POVMs, classical post-processing, and the decision procedure for the
//! post-processing preorder `E¹ ⪯ E²` ("E¹ is fuzzier than E²").

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{min_eigenvalue, Operator, DensityState};
use crate::outcome::{Label, MarkovKernel, OutcomeSpace};
use crate::simplex::{LinearProgram, Relation};

/// Default tolerance for POVM validity and equality.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Entry components smaller than this in every effect are left out of the LP.
const ZERO_COMPONENT: f64 = 1e-14;
/// Normalized effects closer than this are treated as the same ray.
const RAY_TOL: f64 = 1e-12;

/// A finite-outcome POVM: one positive effect per label, summing to `I`.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    space: OutcomeSpace,
    effects: Vec<Operator>,
    dim: usize,
}

/// One failed POVM condition and how badly it fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NotHermitian { label: String, magnitude: f64 },
    NotPositive { label: String, magnitude: f64 },
    Completeness { magnitude: f64 },
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        match self {
            Violation::NotHermitian { magnitude, .. }
            | Violation::NotPositive { magnitude, .. }
            | Violation::Completeness { magnitude } => *magnitude,
        }
    }
}

impl Povm {
    /// Builds and validates a POVM at [`DEFAULT_TOL`].
    pub fn new(space: OutcomeSpace, effects: Vec<Operator>) -> Result<Self> {
        Self::with_tolerance(space, effects, DEFAULT_TOL)
    }

    pub fn with_tolerance(space: OutcomeSpace, effects: Vec<Operator>, tol: f64) -> Result<Self> {
        let povm = Self::unchecked(space, effects)?;
        let report = povm.validate(tol);
        if let Some(v) = report.first() {
            return Err(Error::InvalidPovm(format!("{v:?}")));
        }
        Ok(povm)
    }

    /// Checks shapes only; use [`Povm::validate`] for the operator conditions.
    pub fn unchecked(space: OutcomeSpace, effects: Vec<Operator>) -> Result<Self> {
        if effects.len() != space.len() {
            return Err(Error::InvalidPovm(format!(
                "{} effects for {} outcomes",
                effects.len(),
                space.len()
            )));
        }
        let dim = effects[0].dim();
        if let Some(e) = effects.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimMismatch { expected: dim, found: e.dim() });
        }
        Ok(Self { space, effects, dim })
    }

    /// The single-outcome POVM `{I}`.
    pub fn trivial(dim: usize) -> Self {
        Self { space: OutcomeSpace::range(1), effects: vec![Operator::identity(dim)], dim }
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn effects(&self) -> &[Operator] {
        &self.effects
    }

    pub fn effect(&self, i: usize) -> &Operator {
        &self.effects[i]
    }

    pub fn effect_of(&self, label: &Label) -> Result<&Operator> {
        Ok(&self.effects[self.space.require(label)?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn total(&self) -> Operator {
        let mut sum = Operator::zeros(self.dim);
        for e in &self.effects {
            sum += e;
        }
        sum
    }

    /// Outcome distribution `tr(ρ E(i))`.
    pub fn probabilities(&self, rho: &DensityState) -> Result<Vec<f64>> {
        if rho.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: rho.dim() });
        }
        Ok(self.effects.iter().map(|e| rho.expect(e).re).collect())
    }

    /// Lists every violated POVM condition at tolerance `tol` (relative to
    /// `max(1, ‖E‖_max)` for the per-effect conditions).
    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        let mut report = Vec::new();
        for (label, e) in self.space.labels().iter().zip(&self.effects) {
            let scale = e.max_abs().max(1.0);
            let defect = e.hermiticity_defect();
            if defect > tol * scale {
                report.push(Violation::NotHermitian { label: label.to_string(), magnitude: defect });
                continue;
            }
            let hermitian = (e + &e.adjoint()).scale(0.5);
            if let Ok(lo) = min_eigenvalue(&hermitian, f64::INFINITY) {
                if lo < -tol * scale {
                    report.push(Violation::NotPositive { label: label.to_string(), magnitude: -lo });
                }
            }
        }
        let gap = crate::operator::max_abs_diff(&self.total(), &Operator::identity(self.dim))
            .expect("effects share the POVM dimension");
        if gap > tol {
            report.push(Violation::Completeness { magnitude: gap });
        }
        report
    }

    /// Largest effect-wise distance to another POVM over the same labels.
    pub fn max_abs_diff(&self, other: &Povm) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch("POVMs have different outcome spaces".into()));
        }
        if self.dim != other.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: other.dim });
        }
        self.effects.iter().zip(&other.effects).try_fold(0.0f64, |m, (a, b)| {
            Ok(m.max(crate::operator::max_abs_diff(a, b)?))
        })
    }

    /// Same effects under new labels (e.g. flattened or permuted names).
    pub fn relabel(&self, space: OutcomeSpace) -> Result<Self> {
        if space.len() != self.space.len() {
            return Err(Error::SpaceMismatch(format!(
                "{} labels for {} effects",
                space.len(),
                self.space.len()
            )));
        }
        Ok(Self { space, effects: self.effects.clone(), dim: self.dim })
    }

    /// Reorders outcomes: the new outcome `k` is the old outcome `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || order.iter().any(|&i| i >= self.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidPovm("not a permutation of the outcomes".into()));
        }
        let labels = order.iter().map(|&i| self.space.label(i).clone()).collect();
        Ok(Self {
            space: OutcomeSpace::new(labels)?,
            effects: order.iter().map(|&i| self.effects[i].clone()).collect(),
            dim: self.dim,
        })
    }

    /// Compresses every effect to the span of the first `keep` basis vectors.
    /// The result is a POVM on that subspace.
    pub fn compress(&self, keep: usize) -> Result<Self> {
        let effects = self.effects.iter().map(|e| e.compress(keep)).collect::<Result<Vec<_>>>()?;
        Ok(Self { space: self.space.clone(), effects, dim: keep })
    }

    pub(crate) fn from_parts(space: OutcomeSpace, effects: Vec<Operator>, dim: usize) -> Self {
        debug_assert_eq!(space.len(), effects.len());
        Self { space, effects, dim }
    }
}

pub fn validate_povm(e: &Povm, tol: f64) -> Vec<Violation> {
    e.validate(tol)
}

/// `E¹(i) = Σ_j ν_j(i) E²(j)`.
pub fn post_process(e2: &Povm, nu: &MarkovKernel) -> Result<Povm> {
    if nu.source() != e2.space() {
        return Err(Error::SpaceMismatch("kernel source is not the POVM outcome space".into()));
    }
    let mut effects = vec![Operator::zeros(e2.dim); nu.target().len()];
    for (j, e) in e2.effects.iter().enumerate() {
        for (i, &p) in nu.row(j).iter().enumerate() {
            if p != 0.0 {
                effects[i].add_scaled(p, e);
            }
        }
    }
    Ok(Povm::from_parts(nu.target().clone(), effects, e2.dim))
}

/// Deterministic post-processing: the effect at `y` is the sum of the effects
/// at every `x` with `f(x) = y`. Output labels appear in order of first
/// occurrence.
pub fn coarse_grain(e: &Povm, f: impl Fn(&Label) -> Label) -> Result<Povm> {
    let images: Vec<Label> = e.space.labels().iter().map(&f).collect();
    let mut order: Vec<Label> = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for l in &images {
        if !seen.contains_key(l) {
            seen.insert(l.clone(), order.len());
            order.push(l.clone());
        }
    }
    let target = OutcomeSpace::new(order)?;
    coarse_grain_into(e, &target, |x| seen[&images[x]])
}

/// Coarse-graining onto a given target space via an index map.
pub fn coarse_grain_into(e: &Povm, target: &OutcomeSpace, f: impl Fn(usize) -> usize) -> Result<Povm> {
    post_process(e, &MarkovKernel::deterministic(&e.space, target, f))
}

/// Outcome of a preorder decision `E¹ ⪯ E²`.
#[derive(Clone, Debug)]
pub struct PreorderCertificate {
    pub feasible: bool,
    /// Post-processing `E²-outcomes → E¹-outcomes`; present iff feasible.
    pub kernel: Option<MarkovKernel>,
    /// Max-abs residual of `E¹(i) - Σ_j ν_j(i) E²(j)` for the best kernel.
    pub residual: f64,
    /// Best kernel found, kept even when it misses the tolerance.
    pub best_kernel: MarkovKernel,
    pub lp_iterations: usize,
}

/// Effects grouped into rays: effects that are positive multiples of one
/// another share a group, and zero effects are set aside.
struct Rays {
    /// Per original outcome: `(group, share)`, or `None` for a zero effect.
    member: Vec<Option<(usize, f64)>>,
    sums: Vec<Operator>,
}

fn l1(e: &Operator) -> f64 {
    e.data().iter().map(|z| z.norm()).sum()
}

fn rays(effects: &[Operator]) -> Rays {
    let mut reps: Vec<Operator> = Vec::new();
    let mut sums: Vec<Operator> = Vec::new();
    let mut raw: Vec<Option<(usize, f64)>> = Vec::with_capacity(effects.len());
    for e in effects {
        let norm = l1(e);
        if norm == 0.0 {
            raw.push(None);
            continue;
        }
        let unit = e.scale(1.0 / norm);
        let found = reps.iter().position(|r| {
            r.data().iter().zip(unit.data()).all(|(a, b)| (a - b).norm() <= RAY_TOL)
        });
        let g = match found {
            Some(g) => {
                sums[g] += e;
                g
            }
            None => {
                reps.push(unit);
                sums.push(e.clone());
                sums.len() - 1
            }
        };
        raw.push(Some((g, norm)));
    }
    let group_norms: Vec<f64> = sums.iter().map(l1).collect();
    let member = raw.into_iter().map(|m| m.map(|(g, n)| (g, n / group_norms[g]))).collect();
    Rays { member, sums }
}

/// Real coordinates `(a ≤ b, re/im)` on which some effect is nonzero.
fn active_components(dim: usize, ops: &[&Operator]) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            for imag in [false, true] {
                let any = ops.iter().any(|op| {
                    let z = op.get(a, b);
                    (if imag { z.im } else { z.re }).abs() > ZERO_COMPONENT
                });
                if any {
                    out.push((a, b, imag));
                }
            }
        }
    }
    out
}

fn component(op: &Operator, (a, b, imag): (usize, usize, bool)) -> f64 {
    let z = op.get(a, b);
    if imag {
        z.im
    } else {
        z.re
    }
}

/// Largest residual `max_i ‖E¹(i) − Σ_j ν_j(i) E²(j)‖_max`.
pub fn post_processing_residual(e1: &Povm, e2: &Povm, nu: &MarkovKernel) -> Result<f64> {
    let approx = post_process(e2, nu)?;
    if approx.space != e1.space {
        return Err(Error::SpaceMismatch("kernel target is not the POVM outcome space".into()));
    }
    approx.max_abs_diff(e1)
}

/// Decides `e1 ⪯ e2` by linear programming.
///
/// Variables are the kernel entries `ν_j(i) ≥ 0` and a slack `t`; rows are
/// the stochasticity equalities plus `|(Σ_j ν_j(i) E²(j) − E¹(i))_c| ≤ t` for
/// every active real coordinate `c` of the upper triangle; the objective is
/// `min t`. Proportional effects on either side are merged first, which
/// leaves the optimum unchanged and shrinks the program. The returned
/// residual is recomputed from the cleaned kernel against the full effects.
pub fn find_post_processing(e1: &Povm, e2: &Povm, tol: f64) -> Result<PreorderCertificate> {
    if e1.dim != e2.dim {
        return Err(Error::DimMismatch { expected: e1.dim, found: e2.dim });
    }
    let targets = rays(&e1.effects);
    let sources = rays(&e2.effects);
    let (ng1, ng2) = (targets.sums.len(), sources.sums.len());
    let ops: Vec<&Operator> = targets.sums.iter().chain(&sources.sums).collect();
    let comps = active_components(e1.dim, &ops);

    let var = |src: usize, tgt: usize| src * ng1 + tgt;
    let t = ng1 * ng2;
    let mut lp = LinearProgram::new(t + 1);
    lp.set_objective(t, 1.0);
    for src in 0..ng2 {
        lp.add_constraint((0..ng1).map(|g| (var(src, g), 1.0)).collect(), Relation::Eq, 1.0);
    }
    for (g, target) in targets.sums.iter().enumerate() {
        for &c in &comps {
            let mut plus: Vec<(usize, f64)> = sources
                .sums
                .iter()
                .enumerate()
                .map(|(src, e)| (var(src, g), component(e, c)))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            let rhs = component(target, c);
            let minus: Vec<(usize, f64)> = plus.iter().map(|&(j, v)| (j, -v)).chain([(t, -1.0)]).collect();
            plus.push((t, -1.0));
            lp.add_constraint(plus, Relation::Le, rhs);
            lp.add_constraint(minus, Relation::Le, -rhs);
        }
    }
    let solution = lp.solve()?;

    let (n1, n2) = (e1.len(), e2.len());
    let mut data = vec![0.0; n2 * n1];
    for j in 0..n2 {
        let row = &mut data[j * n1..(j + 1) * n1];
        match sources.member[j] {
            Some((src, _)) => {
                for (i, slot) in row.iter_mut().enumerate() {
                    if let Some((g, share)) = targets.member[i] {
                        *slot = share * solution.x[var(src, g)];
                    }
                }
            }
            None => {
                // Zero effect: any distribution; send it to the first outcome.
                row[0] = 1.0;
            }
        }
        for v in row.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            row[0] = 1.0;
        }
    }
    let kernel = MarkovKernel::from_flat(e2.space.clone(), e1.space.clone(), data)?;
    let residual = post_processing_residual(e1, e2, &kernel)?;
    let feasible = residual <= tol;
    Ok(PreorderCertificate {
        feasible,
        kernel: feasible.then(|| kernel.clone()),
        residual,
        best_kernel: kernel,
        lp_iterations: solution.iterations,
    })
}

/// Both directions of the preorder.
#[derive(Clone, Debug)]
pub struct Equivalence {
    pub equivalent: bool,
    /// `e1 ⪯ e2`.
    pub cert12: PreorderCertificate,
    /// `e2 ⪯ e1`.
    pub cert21: PreorderCertificate,
}

pub fn check_equivalent(e1: &Povm, e2: &Povm, tol: f64) -> Result<Equivalence> {
    let cert12 = find_post_processing(e1, e2, tol)?;
    let cert21 = find_post_processing(e2, e1, tol)?;
    Ok(Equivalence { equivalent: cert12.feasible && cert21.feasible, cert12, cert21 })
}
