//! Conservation of a POVM by an instrument, the finite approximants of the
//! infinitely repeated measurement, and the kernel chain witnessing that
//! their limit is below every conserved POVM.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::instrument::{compose_povm, explosion_check, Instrument, DEFAULT_EXPLOSION_CAP};
use crate::operator::{max_abs_diff, Operator};
use crate::outcome::{marginal_kernel, product_space, Factor, Label, MarkovKernel, OutcomeSpace};
use crate::povm::{check_equivalent, find_post_processing, post_processing_residual, Povm, PreorderCertificate};

/// Deepest witness chain built by [`minimality_witness`].
pub const WITNESS_MAX_DEPTH: usize = 4;
/// Largest instrument outcome space accepted by [`minimality_witness`].
pub const WITNESS_MAX_OUTCOMES: usize = 12;

#[derive(Clone, Debug)]
pub struct ConservationReport {
    pub conserved: bool,
    /// `𝓘∗E ⪯ E`.
    pub cert_forward: PreorderCertificate,
    /// `E ⪯ 𝓘∗E`.
    pub cert_backward: PreorderCertificate,
    /// `𝓘∗E`.
    pub composed: Povm,
}

/// `Eₙ`: effect at `(m₁,…,mₙ)` is `𝓘_{m₁}(⋯ 𝓘_{mₙ}(I))`.
pub fn finite_composition(ins: &Instrument, n: usize) -> Result<Povm> {
    if n == 0 {
        return Err(Error::InvalidParams("finite composition needs n ≥ 1".into()));
    }
    explosion_check(ins.len(), n, DEFAULT_EXPLOSION_CAP)?;
    let mut acc = ins.induced_povm();
    for _ in 1..n {
        acc = compose_povm(ins, &acc)?;
    }
    Ok(acc)
}

fn prefix(label: &Label) -> Option<Label> {
    match label.parts() {
        [] | [_] => None,
        [single, _] => Some(single.clone()),
        parts => Some(Label::Tuple(parts[..parts.len() - 1].to_vec())),
    }
}

/// Max over atoms `b` of `‖Eₙ(b) − Σ_ω Eₙ₊₁(b, ω)‖_max`.
pub fn kolmogorov_consistency(e_n: &Povm, e_n1: &Povm) -> Result<f64> {
    if e_n.dim() != e_n1.dim() {
        return Err(Error::DimMismatch { expected: e_n.dim(), found: e_n1.dim() });
    }
    let mut sums: Vec<Operator> = vec![Operator::zeros(e_n.dim()); e_n.len()];
    for (label, effect) in e_n1.space().labels().iter().zip(e_n1.effects()) {
        let head = prefix(label).ok_or_else(|| Error::SpaceMismatch(format!("label {label} has no prefix")))?;
        let i = e_n
            .space()
            .index_of(&head)
            .ok_or_else(|| Error::SpaceMismatch(format!("prefix {head} is not an outcome of Eₙ")))?;
        sums[i] += effect;
    }
    let mut worst = 0.0f64;
    for (sum, effect) in sums.iter().zip(e_n.effects()) {
        worst = worst.max(max_abs_diff(sum, effect)?);
    }
    Ok(worst)
}

/// Decides `𝓘∗E ≃ E`.
pub fn conservation_check(ins: &Instrument, e: &Povm, tol: f64) -> Result<ConservationReport> {
    let composed = compose_povm(ins, e)?;
    report(composed, e.clone(), tol)
}

/// As [`conservation_check`], with both `𝓘∗E` and `E` compressed to the
/// leading `keep` basis states before the preorder is decided. Used when the
/// instrument lives on a padded space whose physically relevant block is
/// the leading one.
pub fn conservation_check_block(ins: &Instrument, e: &Povm, keep: usize, tol: f64) -> Result<ConservationReport> {
    let composed = compose_povm(ins, e)?.compress(keep)?;
    report(composed, e.compress(keep)?, tol)
}

fn report(composed: Povm, e: Povm, tol: f64) -> Result<ConservationReport> {
    let cert_forward = find_post_processing(&composed, &e, tol)?;
    let cert_backward = find_post_processing(&e, &composed, tol)?;
    Ok(ConservationReport {
        conserved: cert_forward.feasible && cert_backward.feasible,
        cert_forward,
        cert_backward,
        composed,
    })
}

#[derive(Clone, Debug)]
pub struct InvarianceReport {
    pub first: ConservationReport,
    pub second: ConservationReport,
    /// Residuals of `e1 ⪯ e2` and `e2 ⪯ e1`.
    pub equivalence_residuals: (f64, f64),
    pub verdicts_agree: bool,
}

/// Conservation verdicts for two equivalent POVMs.
pub fn conservation_invariance_check(ins: &Instrument, e1: &Povm, e2: &Povm, tol: f64) -> Result<InvarianceReport> {
    let eq = check_equivalent(e1, e2, tol)?;
    if !eq.equivalent {
        return Err(Error::NotEquivalent(format!(
            "residuals {:e} and {:e} at tol {tol:e}",
            eq.cert12.residual, eq.cert21.residual
        )));
    }
    let first = conservation_check(ins, e1, tol)?;
    let second = conservation_check(ins, e2, tol)?;
    Ok(InvarianceReport {
        verdicts_agree: first.conserved == second.conserved,
        first,
        second,
        equivalence_residuals: (eq.cert12.residual, eq.cert21.residual),
    })
}

/// Kernels `ν̃ᵏ : Ω_X → Ωᵏ×Ω_X` and their marginals `νᵏ : Ω_X → Ωᵏ`.
#[derive(Clone, Debug)]
pub struct WitnessChain {
    pub depth: usize,
    pub kernels: Vec<MarkovKernel>,
    pub marginals: Vec<MarkovKernel>,
    /// `max ‖Σ_x ν̃ᵏ_x(·) F(x) − (𝓘^{∗k}∗F)(·)‖_max` per level.
    pub residuals: Vec<f64>,
    /// `max ‖Σ_x νᵏ_x(·) F(x) − E_k(·)‖_max` per level.
    pub marginal_residuals: Vec<f64>,
    /// `k·tol` per level.
    pub tolerances: Vec<f64>,
}

impl WitnessChain {
    pub fn verified(&self) -> bool {
        self.residuals
            .iter()
            .zip(&self.marginal_residuals)
            .zip(&self.tolerances)
            .all(|((r, m), t)| r <= t && m <= t)
    }
}

/// Builds the witness chain to depth `n`.
pub fn minimality_witness(ins: &Instrument, f: &Povm, n: usize, tol: f64) -> Result<WitnessChain> {
    minimality_witness_with_progress(ins, f, n, tol, |_| {})
}

/// As [`minimality_witness`]; `progress(k)` is called once each level `k` is done.
pub fn minimality_witness_with_progress(
    ins: &Instrument,
    f: &Povm,
    n: usize,
    tol: f64,
    mut progress: impl FnMut(usize),
) -> Result<WitnessChain> {
    if n == 0 || n > WITNESS_MAX_DEPTH {
        return Err(Error::InvalidParams(format!("witness depth must be in 1..={WITNESS_MAX_DEPTH}")));
    }
    if ins.len() > WITNESS_MAX_OUTCOMES {
        return Err(Error::InvalidParams(format!(
            "witness chains take at most {WITNESS_MAX_OUTCOMES} instrument outcomes, got {}",
            ins.len()
        )));
    }
    explosion_check(ins.len(), n, DEFAULT_EXPLOSION_CAP / (f.len() * f.len()).max(1))?;
    let check = conservation_check(ins, f, tol)?;
    if !check.conserved {
        return Err(Error::NotConserved {
            forward: check.cert_forward.residual,
            backward: check.cert_backward.residual,
        });
    }
    let step = check.cert_forward.kernel.expect("feasible certificate carries a kernel");
    let (nx, nw) = (f.len(), ins.len());

    let mut omega_k = ins.space().clone();
    let mut composed = check.composed;
    let mut e_k = ins.induced_povm();
    let mut kernel = step.clone();
    let mut chain = WitnessChain {
        depth: n,
        kernels: Vec::with_capacity(n),
        marginals: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
        marginal_residuals: Vec::with_capacity(n),
        tolerances: Vec::with_capacity(n),
    };
    for k in 1..=n {
        if k > 1 {
            omega_k = product_space(&omega_k, ins.space());
            composed = compose_povm(ins, &composed)?;
            e_k = compose_povm(ins, &e_k)?;
            kernel = extend_chain(&kernel, &step, &omega_k, f.space(), nw, nx)?;
        }
        let marginal = marginal_kernel(&kernel, Factor::First)?;
        chain.residuals.push(post_processing_residual(&composed, f, &kernel)?);
        chain.marginal_residuals.push(post_processing_residual(&e_k, f, &marginal)?);
        chain.tolerances.push(k as f64 * tol);
        chain.kernels.push(kernel.clone());
        chain.marginals.push(marginal);
        progress(k);
    }
    Ok(chain)
}

/// `ν̃ⁿ⁺¹_x(ω⁽ⁿ⁾, ω, x') = Σ_{xₙ} ν̃ⁿ_x(ω⁽ⁿ⁾, xₙ) ν̃¹_{xₙ}(ω, x')`.
fn extend_chain(
    prev: &MarkovKernel,
    step: &MarkovKernel,
    omega_next: &OutcomeSpace,
    fspace: &OutcomeSpace,
    nw: usize,
    nx: usize,
) -> Result<MarkovKernel> {
    let target = product_space(omega_next, fspace);
    let width = target.len();
    let prev_width = prev.target().len();
    let mut data = vec![0.0; nx * width];
    for x in 0..nx {
        let row = &mut data[x * width..(x + 1) * width];
        let prev_row = prev.row(x);
        for (ix, &a) in prev_row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let (history, xn) = (ix / nx, ix % nx);
            let base = history * nw * nx;
            for (jx, &b) in step.row(xn).iter().enumerate() {
                row[base + jx] += a * b;
            }
        }
        debug_assert_eq!(prev_width * nw, width);
    }
    MarkovKernel::from_flat(fspace.clone(), target, data)
}

/// Index map dropping the last component of each `Eₙ₊₁` label, for use as a
/// deterministic marginalization kernel `Ωⁿ⁺¹ → Ωⁿ`.
pub fn marginalization_kernel(e_n: &Povm, e_n1: &Povm) -> Result<MarkovKernel> {
    let index: HashMap<&Label, usize> = e_n.space().labels().iter().enumerate().map(|(i, l)| (l, i)).collect();
    let mut map = Vec::with_capacity(e_n1.len());
    for label in e_n1.space().labels() {
        let head = prefix(label).ok_or_else(|| Error::SpaceMismatch(format!("label {label} has no prefix")))?;
        map.push(*index.get(&head).ok_or_else(|| Error::SpaceMismatch(format!("prefix {head} missing")))?);
    }
    Ok(MarkovKernel::deterministic(e_n1.space(), e_n.space(), |j| map[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::n_fold;
    use crate::models::{number_povm, p_pc, photon_counting_instrument};
    use crate::povm::post_process;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn qubit_projective() -> Instrument {
        Instrument::projective(vec![Operator::ket_bra(0, 0, 2), Operator::ket_bra(1, 1, 2)]).unwrap()
    }

    #[test]
    fn finite_composition_examples() {
        let pc = photon_counting_instrument(LN_2, 3).unwrap();
        assert_eq!(finite_composition(&pc, 1).unwrap(), pc.induced_povm());
        let u = Instrument::identity(3);
        for n in 1..=4 {
            let e = finite_composition(&u, n).unwrap();
            assert_eq!(e.len(), 1);
            assert_eq!(e.effect(0), &Operator::identity(3));
        }
        let e2 = finite_composition(&pc, 2).unwrap();
        let direct = n_fold(&pc, 2).unwrap().induced_povm();
        assert_eq!(e2.space(), direct.space());
        assert!(e2.max_abs_diff(&direct).unwrap() < 1e-15);
        for m1 in 0..=3usize {
            for m2 in 0..=3usize {
                for n in 0..=3usize {
                    let expected = if m1 <= n { p_pc(m2, n - m1, LN_2) * p_pc(m1, n, LN_2) } else { 0.0 };
                    assert_abs_diff_eq!(e2.effect(m1 * 4 + m2).get(n, n).re, expected, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn kolmogorov_examples() {
        let pc = photon_counting_instrument(LN_2, 3).unwrap();
        let e: Vec<Povm> = (1..=3).map(|n| finite_composition(&pc, n).unwrap()).collect();
        assert!(kolmogorov_consistency(&e[0], &e[1]).unwrap() < 1e-12);
        assert!(kolmogorov_consistency(&e[1], &e[2]).unwrap() < 1e-11);

        let mut effects = e[2].effects().to_vec();
        let target = effects.iter().position(|x| x.max_abs() > 0.1).unwrap();
        let norm = effects[target].max_abs();
        effects[target] = effects[target].scale(0.9);
        let corrupted = Povm::unchecked(e[2].space().clone(), effects).unwrap();
        assert!(kolmogorov_consistency(&e[1], &corrupted).unwrap() >= 0.1 * norm - 1e-15);
        assert!(matches!(kolmogorov_consistency(&e[2], &e[1]), Err(Error::SpaceMismatch(_))));
    }

    #[test]
    fn conservation_examples() {
        let en = number_povm(3);
        let rep = conservation_check(&Instrument::identity(4), &en, 1e-9).unwrap();
        assert!(rep.conserved);

        let pc = photon_counting_instrument(LN_2, 4).unwrap();
        let en = number_povm(4);
        let rep = conservation_check(&pc, &en, 1e-8).unwrap();
        assert!(rep.conserved);
        let nu = rep.cert_forward.kernel.unwrap();
        for n in 0..=4usize {
            for m in 0..=4usize {
                for np in 0..=4usize {
                    let expected = if np + m == n { p_pc(m, n, LN_2) } else { 0.0 };
                    assert_abs_diff_eq!(nu.get(n, m * 5 + np), expected, epsilon = 1e-6);
                }
            }
        }
        let back = rep.cert_backward.kernel.unwrap();
        for m in 0..=4usize {
            for np in 0..=4 - m {
                assert_abs_diff_eq!(back.get(m * 5 + np, m + np), 1.0, epsilon = 1e-6);
            }
        }

        let half = Povm::new(OutcomeSpace::range(2), vec![Operator::identity(5).scale(0.5); 2]).unwrap();
        let rep = conservation_check(&pc, &half, 1e-8).unwrap();
        // 𝓘∗E carries the count statistics, which a coin flip cannot reproduce.
        assert!(!rep.conserved);
        assert!(!rep.cert_forward.feasible && rep.cert_backward.feasible);
    }

    #[test]
    fn non_conservation_is_reported_per_direction() {
        // Measuring the number destroys information about a phase-sensitive POVM.
        let plus = Operator::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let minus = Operator::from_real_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        let x = Povm::new(OutcomeSpace::range(2), vec![plus, minus]).unwrap();
        let rep = conservation_check(&qubit_projective(), &x, 1e-8).unwrap();
        assert!(!rep.conserved);
        assert!(!rep.cert_forward.feasible && !rep.cert_backward.feasible);
        assert_abs_diff_eq!(rep.cert_forward.residual, 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.cert_backward.residual, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn invariance_examples() {
        let pc = photon_counting_instrument(LN_2, 3).unwrap();
        let en = number_povm(3);
        let permuted = en.permute(&[2, 0, 3, 1]).unwrap();
        let rep = conservation_invariance_check(&pc, &en, &permuted, 1e-8).unwrap();
        assert!(rep.verdicts_agree && rep.first.conserved);

        // Split the top level in two halves: equivalent, finer labels.
        let refined_space = OutcomeSpace::range(5);
        let refine = MarkovKernel::new(
            en.space().clone(),
            refined_space,
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.5, 0.5],
            ],
        )
        .unwrap();
        let refined = post_process(&en, &refine).unwrap();
        let rep = conservation_invariance_check(&pc, &en, &refined, 1e-8).unwrap();
        assert!(rep.verdicts_agree);

        let coarse = Povm::trivial(4);
        assert!(matches!(
            conservation_invariance_check(&pc, &en, &coarse, 1e-8),
            Err(Error::NotEquivalent(_))
        ));
    }

    #[test]
    fn witness_examples() {
        let u = Instrument::identity(3);
        let f = number_povm(2);
        let chain = minimality_witness(&u, &f, 3, 1e-9).unwrap();
        assert!(chain.verified());
        for k in &chain.kernels {
            assert!(k.rows().iter().flatten().all(|&v| v == 0.0 || v == 1.0));
        }
        assert!(chain.residuals.iter().all(|&r| r == 0.0));

        let pc = photon_counting_instrument(LN_2, 2).unwrap();
        let chain = minimality_witness(&pc, &f, 2, 1e-9).unwrap();
        assert!(chain.verified());
        assert!(chain.marginal_residuals.iter().all(|&r| r < 1e-9));
        let e2 = finite_composition(&pc, 2).unwrap();
        assert!(post_process(&f, &chain.marginals[1]).unwrap().max_abs_diff(&e2).unwrap() < 1e-9);

        let q = qubit_projective();
        let chain = minimality_witness(&q, &q.induced_povm(), 3, 1e-9).unwrap();
        assert!(chain.verified());
        assert!(chain.residuals.iter().chain(&chain.marginal_residuals).all(|&r| r < 1e-9));

        let mut levels = Vec::new();
        minimality_witness_with_progress(&q, &q.induced_povm(), 2, 1e-9, |k| levels.push(k)).unwrap();
        assert_eq!(levels, vec![1, 2]);
    }

    #[test]
    fn witness_requires_conservation() {
        let plus = Operator::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let minus = Operator::from_real_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        let x = Povm::new(OutcomeSpace::range(2), vec![plus, minus]).unwrap();
        assert!(matches!(minimality_witness(&qubit_projective(), &x, 2, 1e-9), Err(Error::NotConserved { .. })));
        assert!(minimality_witness(&qubit_projective(), &x, 5, 1e-9).is_err());
    }

    #[test]
    fn finite_shadows_of_the_infinite_composition() {
        let pc = photon_counting_instrument(0.4, 3).unwrap();
        let q = qubit_projective();
        for ins in [&pc, &q] {
            for n in 1..=3 {
                let en = finite_composition(ins, n).unwrap();
                let next = finite_composition(ins, n + 1).unwrap();
                let shadow = compose_povm(ins, &en).unwrap();
                assert_eq!(shadow.space(), next.space());
                assert!(shadow.max_abs_diff(&next).unwrap() < 1e-11);
                let marg = marginalization_kernel(&en, &next).unwrap();
                assert!(post_processing_residual(&en, &next, &marg).unwrap() < 1e-10);
                let cert = find_post_processing(&en, &next, 1e-10).unwrap();
                assert!(cert.feasible);
            }
        }
    }

    #[test]
    fn conserved_povms_dominate_finite_compositions() {
        let pc = photon_counting_instrument(LN_2, 2).unwrap();
        let f = number_povm(2);
        let tol = 1e-9;
        assert!(conservation_check(&pc, &f, tol).unwrap().conserved);
        for n in 1..=3 {
            let en = finite_composition(&pc, n).unwrap();
            let cert = find_post_processing(&en, &f, n as f64 * tol).unwrap();
            assert!(cert.feasible, "level {n}: residual {}", cert.residual);
        }
    }
}
