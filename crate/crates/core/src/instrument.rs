//! Completely positive instruments in Kraus form.
//!
//! An instrument assigns to every outcome `m` a list of Kraus operators
//! `K_{m,k}`; its Heisenberg action on an outcome set `B` is
//! `𝓘_B(a) = Σ_{m∈B} Σ_k K†_{m,k} a K_{m,k}`, and normalization means
//! `𝓘_Ω(I) = I`. Complete positivity is structural in this form.

use crate::error::{Error, Result};
use crate::operator::{DensityState, Operator};
use crate::outcome::{product_space, Label, OutcomeSpace};
use crate::povm::Povm;

/// Branches with probability at or below this are reported as absent.
pub const PROB_FLOOR: f64 = 1e-14;
/// Largest number of product outcomes `n_fold` will build.
pub const DEFAULT_EXPLOSION_CAP: usize = 2_000_000;
/// Default normalization tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    space: OutcomeSpace,
    kraus: Vec<Vec<Operator>>,
    dim: usize,
}

/// Probability of one outcome and the normalized post-measurement state.
#[derive(Clone, Debug)]
pub struct Branch {
    pub prob: f64,
    pub post: Option<DensityState>,
}

impl Instrument {
    /// Builds an instrument and checks `Σ K†K = I` within [`NORMALIZATION_TOL`].
    pub fn new(space: OutcomeSpace, kraus: Vec<Vec<Operator>>) -> Result<Self> {
        Self::with_tolerance(space, kraus, NORMALIZATION_TOL)
    }

    pub fn with_tolerance(space: OutcomeSpace, kraus: Vec<Vec<Operator>>, tol: f64) -> Result<Self> {
        let ins = Self::unchecked(space, kraus)?;
        let defect = ins.normalization_defect();
        if defect > tol {
            return Err(Error::InvalidInstrument(format!(
                "Σ K†K deviates from the identity by {defect:e}"
            )));
        }
        Ok(ins)
    }

    pub(crate) fn unchecked(space: OutcomeSpace, kraus: Vec<Vec<Operator>>) -> Result<Self> {
        if kraus.len() != space.len() {
            return Err(Error::InvalidInstrument(format!(
                "{} Kraus lists for {} outcomes",
                kraus.len(),
                space.len()
            )));
        }
        if let Some(i) = kraus.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInstrument(format!(
                "outcome {} has no Kraus operators",
                space.label(i)
            )));
        }
        let dim = kraus[0][0].dim();
        if let Some(k) = kraus.iter().flatten().find(|k| k.dim() != dim) {
            return Err(Error::DimMismatch { expected: dim, found: k.dim() });
        }
        Ok(Self { space, kraus, dim })
    }

    /// Single outcome, Kraus operator `I`.
    pub fn identity(dim: usize) -> Self {
        Self::unitary(Operator::identity(dim)).expect("identity is unitary")
    }

    /// Single-outcome instrument `a ↦ U†aU`.
    pub fn unitary(u: Operator) -> Result<Self> {
        Self::new(OutcomeSpace::range(1), vec![vec![u]])
    }

    /// Lüders instrument of a projective measurement: one projector per outcome.
    pub fn projective(projectors: Vec<Operator>) -> Result<Self> {
        let n = projectors.len();
        Self::new(OutcomeSpace::range(n), projectors.into_iter().map(|p| vec![p]).collect())
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn kraus(&self, i: usize) -> &[Operator] {
        &self.kraus[i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    pub fn normalization_defect(&self) -> f64 {
        let mut total = Operator::zeros(self.dim);
        for k in self.kraus.iter().flatten() {
            total += &k.adjoint().matmul(k);
        }
        crate::operator::max_abs_diff(&total, &Operator::identity(self.dim)).expect("same dimension")
    }

    /// Same Kraus data under new labels.
    pub fn relabel(&self, space: OutcomeSpace) -> Result<Self> {
        if space.len() != self.space.len() {
            return Err(Error::SpaceMismatch(format!(
                "{} labels for {} outcomes",
                space.len(),
                self.space.len()
            )));
        }
        Ok(Self { space, kraus: self.kraus.clone(), dim: self.dim })
    }

    /// `𝓘_m(a)` for the outcome at index `i`.
    pub fn heisenberg_outcome(&self, i: usize, a: &Operator) -> Result<Operator> {
        if a.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: a.dim() });
        }
        let mut out = Operator::zeros(self.dim);
        for k in &self.kraus[i] {
            out += &Operator::sandwich(k, a);
        }
        Ok(out)
    }

    /// `𝓘_B(a)` for a set of outcome labels.
    pub fn heisenberg_apply(&self, subset: &[Label], a: &Operator) -> Result<Operator> {
        if a.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: a.dim() });
        }
        let mut out = Operator::zeros(self.dim);
        for label in subset {
            let i = self.space.require(label)?;
            out += &self.heisenberg_outcome(i, a)?;
        }
        Ok(out)
    }

    /// `E(m) = 𝓘_m(I)`.
    pub fn induced_povm(&self) -> Povm {
        let effects = self
            .kraus
            .iter()
            .map(|ks| {
                let mut e = Operator::zeros(self.dim);
                for k in ks {
                    e += &k.adjoint().matmul(k);
                }
                e
            })
            .collect();
        Povm::from_parts(self.space.clone(), effects, self.dim)
    }

    /// Predual action for one outcome: probability `tr(Σ_k K ρ K†)` and the
    /// normalized post-measurement state.
    pub fn schrodinger_branch(&self, label: &Label, rho: &DensityState) -> Result<Branch> {
        let i = self.space.require(label)?;
        self.branch(i, rho)
    }

    pub fn branch(&self, i: usize, rho: &DensityState) -> Result<Branch> {
        if rho.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: rho.dim() });
        }
        let mut out = Operator::zeros(self.dim);
        for k in &self.kraus[i] {
            out += &Operator::conjugate(k, rho.operator());
        }
        let prob = out.trace().re.clamp(0.0, 1.0);
        let post = (prob > PROB_FLOOR).then(|| DensityState::from_normalized(out.scale(1.0 / out.trace().re)));
        Ok(Branch { prob, post })
    }

    /// Kraus operators in the Choi picture: `C_m = Σ_k vec(K) vec(K)†`
    /// (column-stacked), a `d² × d²` PSD matrix.
    pub fn choi_matrix(&self, i: usize) -> Operator {
        let d = self.dim;
        let mut choi = Operator::zeros(d * d);
        for k in &self.kraus[i] {
            let v: Vec<_> = (0..d).flat_map(|col| (0..d).map(move |row| (row, col))).map(|(r, c)| k.get(r, c)).collect();
            choi += &Operator::projector(&v);
        }
        choi
    }
}

/// `𝓘¹ ∗ 𝓘²`: outcome `(m₁, m₂)` carries the Kraus products `K₂ K₁`, so that
/// `𝓘_{(m₁,m₂)}(a) = 𝓘¹_{m₁}(𝓘²_{m₂}(a))`.
pub fn compose(i1: &Instrument, i2: &Instrument) -> Result<Instrument> {
    if i1.dim != i2.dim {
        return Err(Error::DimMismatch { expected: i1.dim, found: i2.dim });
    }
    let space = product_space(&i1.space, &i2.space);
    let kraus = outcome_pairs(i1.len(), i2.len(), |a, b| {
        let mut list = Vec::with_capacity(i1.kraus[a].len() * i2.kraus[b].len());
        for k1 in &i1.kraus[a] {
            for k2 in &i2.kraus[b] {
                list.push(k2.matmul(k1));
            }
        }
        list
    });
    Ok(Instrument { space, kraus, dim: i1.dim })
}

/// `𝓘 ∗ E`: effect at `(m, b)` is `𝓘_m(E(b))`.
pub fn compose_povm(ins: &Instrument, e: &Povm) -> Result<Povm> {
    if ins.dim != e.dim() {
        return Err(Error::DimMismatch { expected: ins.dim, found: e.dim() });
    }
    let space = product_space(&ins.space, e.space());
    let effects = outcome_pairs(ins.len(), e.len(), |m, b| {
        let mut out = Operator::zeros(ins.dim);
        for k in &ins.kraus[m] {
            out += &Operator::sandwich(k, e.effect(b));
        }
        out
    });
    Ok(Povm::from_parts(space, effects, ins.dim))
}

/// Evaluates `f(a, b)` for every pair in `a`-major order. With the
/// `parallel` feature the pairs are computed on the rayon pool; the output
/// order, and so every bit of the result, is the same either way.
fn outcome_pairs<T: Send>(na: usize, nb: usize, f: impl Fn(usize, usize) -> T + Sync) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if na * nb >= 256 {
            return (0..na * nb).into_par_iter().map(|ix| f(ix / nb, ix % nb)).collect();
        }
    }
    (0..na * nb).map(|ix| f(ix / nb, ix % nb)).collect()
}

pub(crate) fn explosion_check(base: usize, n: usize, cap: usize) -> Result<()> {
    let outcomes = (base as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if outcomes > cap as u128 {
        return Err(Error::ExplosionCap { outcomes, cap });
    }
    Ok(())
}

/// `𝓘^{∗n}` as a left fold of [`compose`]; labels are flat n-tuples.
pub fn n_fold(ins: &Instrument, n: usize) -> Result<Instrument> {
    n_fold_with_cap(ins, n, DEFAULT_EXPLOSION_CAP)
}

pub fn n_fold_with_cap(ins: &Instrument, n: usize, cap: usize) -> Result<Instrument> {
    if n == 0 {
        return Err(Error::InvalidParams("n_fold needs n ≥ 1".into()));
    }
    explosion_check(ins.len(), n, cap)?;
    let mut acc = ins.clone();
    for _ in 1..n {
        acc = compose(&acc, ins)?;
    }
    Ok(acc)
}

/// `𝓘^{∗n} ∗ E` without materializing the Kraus products:
/// effects are built right to left, `𝓘_{m₁}(𝓘_{m₂}(⋯ 𝓘_{mₙ}(E(b))))`.
pub fn n_fold_povm(ins: &Instrument, n: usize, e: &Povm, cap: usize) -> Result<Povm> {
    if n == 0 {
        return Ok(e.clone());
    }
    explosion_check(ins.len(), n, cap / e.len().max(1))?;
    let mut acc = compose_povm(ins, e)?;
    for _ in 1..n {
        acc = compose_povm(ins, &acc)?;
    }
    Ok(acc)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::operator::{is_psd, max_abs_diff, C64};
    use crate::outcome::{extend_kernel, MarkovKernel};
    use crate::povm::{post_process, post_processing_residual};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    /// Random instrument: stack the Kraus operators into an isometry by
    /// orthonormalizing `Σ B†B`.
    pub(crate) fn random_instrument(dim: usize, outcomes: usize, kraus_per: usize, raw: &[f64]) -> Instrument {
        let need = outcomes * kraus_per;
        let mut bs = Vec::new();
        for i in 0..need {
            let chunk = &raw[i * 2 * dim * dim..(i + 1) * 2 * dim * dim];
            bs.push(Operator::new(dim, chunk.chunks(2).map(|c| C64::new(c[0], c[1])).collect()).unwrap());
        }
        let mut s = Operator::identity(dim).scale(0.01);
        for b in &bs {
            s += &b.adjoint().matmul(b);
        }
        let eig = crate::operator::hermitian_eigen(&s, 1e-9).unwrap();
        let inv_sqrt = eig.reconstruct_with(|x| 1.0 / x.sqrt());
        let mut kraus: Vec<Vec<Operator>> = bs.chunks(kraus_per).map(|c| c.iter().map(|b| b.matmul(&inv_sqrt)).collect()).collect();
        // Absorb the 0.01·I regularizer into the last outcome.
        kraus.last_mut().unwrap().push(inv_sqrt.scale(0.1));
        Instrument::with_tolerance(OutcomeSpace::range(outcomes), kraus, 1e-9).unwrap()
    }

    fn random_hermitian(dim: usize, raw: &[f64]) -> Operator {
        let a = Operator::new(dim, raw.chunks(2).take(dim * dim).map(|c| C64::new(c[0], c[1])).collect()).unwrap();
        (&a + &a.adjoint()).scale(0.5)
    }

    fn random_state(dim: usize, raw: &[f64]) -> DensityState {
        let a = Operator::new(dim, raw.chunks(2).take(dim * dim).map(|c| C64::new(c[0], c[1])).collect()).unwrap();
        let g = &a.adjoint().matmul(&a) + &Operator::identity(dim).scale(1e-3);
        let tr = g.trace().re;
        DensityState::new(g.scale(1.0 / tr)).unwrap()
    }

    #[test]
    fn heisenberg_examples() {
        let pc = models::photon_counting_instrument(LN_2, 2).unwrap();
        let all: Vec<Label> = pc.space().labels().to_vec();
        let id = pc.heisenberg_apply(&all, &Operator::identity(3)).unwrap();
        assert!(max_abs_diff(&id, &Operator::identity(3)).unwrap() < 1e-12);
        assert_eq!(pc.heisenberg_apply(&[], &Operator::identity(3)).unwrap(), Operator::zeros(3));
        let out = pc.heisenberg_apply(&[Label::Int(1)], &Operator::ket_bra(0, 0, 3)).unwrap();
        assert!(max_abs_diff(&out, &Operator::ket_bra(1, 1, 3).scale(0.5)).unwrap() < 1e-15);
        assert!(matches!(
            pc.heisenberg_apply(&[Label::Int(9)], &Operator::identity(3)),
            Err(Error::UnknownLabel(_))
        ));
        assert!(matches!(
            pc.heisenberg_apply(&all, &Operator::identity(2)),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn induced_povm_examples() {
        let u = Operator::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let ins = Instrument::unitary(u).unwrap();
        assert!(ins.induced_povm().max_abs_diff(&Povm::trivial(2)).unwrap() < 1e-15);

        let pc = models::photon_counting_instrument(0.4, 4).unwrap();
        let e = pc.induced_povm();
        for m in 0..=4 {
            let expected: Vec<f64> = (0..=4).map(|n| models::p_pc(m, n, 0.4)).collect();
            assert!(max_abs_diff(e.effect(m), &Operator::from_diag(&expected)).unwrap() < 1e-14);
        }

        let qc = models::quantum_counter_instrument(LN_2, 2, 12).unwrap();
        let e = qc.induced_povm();
        for m in 0..=12 {
            assert_abs_diff_eq!(e.effect(m).get(0, 0).re, 0.5f64.powi(m as i32 + 1), epsilon = 1e-14);
        }
    }

    #[test]
    fn schrodinger_examples() {
        let u = Operator::from_rows(&[
            vec![C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ])
        .unwrap();
        let ins = Instrument::unitary(u.clone()).unwrap();
        let rho = DensityState::pure(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let b = ins.schrodinger_branch(&Label::Int(0), &rho).unwrap();
        assert_abs_diff_eq!(b.prob, 1.0, epsilon = 1e-15);
        let expected = Operator::conjugate(&u, rho.operator());
        assert!(max_abs_diff(b.post.unwrap().operator(), &expected).unwrap() < 1e-15);

        let pc = models::photon_counting_instrument(LN_2, 2).unwrap();
        let b = pc.schrodinger_branch(&Label::Int(1), &DensityState::fock(1, 3).unwrap()).unwrap();
        assert_abs_diff_eq!(b.prob, 0.5, epsilon = 1e-15);
        assert!(max_abs_diff(b.post.unwrap().operator(), &Operator::ket_bra(0, 0, 3)).unwrap() < 1e-15);
        let b = pc.schrodinger_branch(&Label::Int(1), &DensityState::fock(0, 3).unwrap()).unwrap();
        assert_eq!(b.prob, 0.0);
        assert!(b.post.is_none());
    }

    #[test]
    fn compose_examples() {
        let pc = models::photon_counting_instrument(0.3, 3).unwrap();
        let c = compose(&pc, &Instrument::identity(4)).unwrap();
        assert_eq!(c.len(), pc.len());
        assert!(c.induced_povm().relabel(pc.space().clone()).unwrap().max_abs_diff(&pc.induced_povm()).unwrap() < 1e-15);

        let twice = compose(&pc, &pc).unwrap();
        let e = twice.induced_povm();
        for m1 in 0..=3usize {
            for m2 in 0..=3usize {
                let eff = e.effect(m1 * 4 + m2);
                for n in 0..=3usize {
                    let expected = if m1 <= n { models::p_pc(m2, n - m1, 0.3) * models::p_pc(m1, n, 0.3) } else { 0.0 };
                    assert_abs_diff_eq!(eff.get(n, n).re, expected, epsilon = 1e-15);
                }
            }
        }
        assert!(matches!(compose(&pc, &Instrument::identity(2)), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn compose_povm_examples() {
        let pc = models::photon_counting_instrument(LN_2, 4).unwrap();
        let trivial = compose_povm(&pc, &Povm::trivial(5)).unwrap();
        assert!(trivial.relabel(pc.space().clone()).unwrap().max_abs_diff(&pc.induced_povm()).unwrap() < 1e-15);

        let en = models::number_povm(4);
        let same = compose_povm(&Instrument::identity(5), &en).unwrap();
        assert!(same.relabel(en.space().clone()).unwrap().max_abs_diff(&en).unwrap() < 1e-15);

        let composed = compose_povm(&pc, &en).unwrap();
        for m in 0..=4usize {
            for np in 0..=4usize {
                let eff = composed.effect(m * 5 + np);
                let n = np + m;
                let mut expected = Operator::zeros(5);
                if n <= 4 {
                    expected.set(n, n, C64::new(models::p_pc(m, n, LN_2), 0.0));
                }
                assert!(max_abs_diff(eff, &expected).unwrap() < 1e-15);
            }
        }
    }

    #[test]
    fn n_fold_examples() {
        let pc = models::photon_counting_instrument(0.7, 3).unwrap();
        assert_eq!(n_fold(&pc, 1).unwrap(), pc);
        assert_eq!(n_fold(&pc, 2).unwrap(), compose(&pc, &pc).unwrap());
        let three = n_fold(&pc, 3).unwrap();
        let e = three.induced_povm();
        for m in 0..=3usize {
            for n in 0..=3usize {
                let mut total = 0.0;
                for (i, label) in e.space().labels().iter().enumerate() {
                    let s: i64 = label.parts().iter().map(|p| p.as_int().unwrap()).sum();
                    if s as usize == m {
                        total += e.effect(i).get(n, n).re;
                    }
                }
                assert_abs_diff_eq!(total, models::p_pc_k(m, n, 0.7, 3), epsilon = 1e-14);
            }
        }
        assert!(matches!(n_fold_with_cap(&pc, 3, 63), Err(Error::ExplosionCap { .. })));
        assert!(n_fold(&pc, 0).is_err());
    }

    #[test]
    fn choi_matrices_are_psd() {
        let qc = models::quantum_counter_instrument(0.5, 1, 3).unwrap();
        for i in 0..qc.len() {
            assert!(is_psd(&qc.choi_matrix(i), 1e-10).unwrap());
        }
    }

    fn raw(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn duality_between_pictures(k in raw(2 * 9 * 6), a in raw(18), r in raw(18), m in 0usize..3) {
            let ins = random_instrument(3, 3, 2, &k);
            let a = random_hermitian(3, &a);
            let rho = random_state(3, &r);
            let lhs = rho.expect(&ins.heisenberg_outcome(m, &a).unwrap());
            let b = ins.branch(m, &rho).unwrap();
            let rhs = b.post.map(|p| p.expect(&a) * b.prob).unwrap_or_default();
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }

        #[test]
        fn composition_laws(k1 in raw(2 * 4 * 4), k2 in raw(2 * 4 * 3), k3 in raw(2 * 4 * 2), a in raw(8)) {
            let i1 = random_instrument(2, 2, 2, &k1);
            let i2 = random_instrument(2, 3, 1, &k2);
            let i3 = random_instrument(2, 2, 1, &k3);
            let a = random_hermitian(2, &a);
            let c = compose(&i1, &i2).unwrap();
            for m1 in 0..2 {
                for m2 in 0..3 {
                    let lhs = c.heisenberg_outcome(m1 * 3 + m2, &a).unwrap();
                    let rhs = i1.heisenberg_outcome(m1, &i2.heisenberg_outcome(m2, &a).unwrap()).unwrap();
                    prop_assert!(max_abs_diff(&lhs, &rhs).unwrap() < 1e-12);
                }
            }
            let lhs = c.induced_povm();
            let rhs = compose_povm(&i1, &i2.induced_povm()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
            let left = compose(&c, &i3).unwrap().induced_povm();
            let right = compose(&i1, &compose(&i2, &i3).unwrap()).unwrap().induced_povm();
            prop_assert_eq!(left.space(), right.space());
            prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-12);
        }

        #[test]
        fn integral_exchange(k in raw(2 * 4 * 3), f in prop::collection::vec(-2.0f64..2.0, 3), subset in prop::collection::vec(any::<bool>(), 3)) {
            let ins = random_instrument(2, 3, 1, &k);
            let e = models::number_povm(1);
            let e = crate::povm::post_process(&e, &MarkovKernel::new(e.space().clone(), OutcomeSpace::range(3), vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]]).unwrap()).unwrap();
            let composed = compose_povm(&ins, &e).unwrap();
            let chosen: Vec<usize> = (0..3).filter(|&m| subset[m]).collect();
            let mut lhs = Operator::zeros(2);
            for &m in &chosen {
                for w in 0..3 {
                    lhs.add_scaled(f[w], composed.effect(m * 3 + w));
                }
            }
            let mut weighted = Operator::zeros(2);
            for w in 0..3 {
                weighted.add_scaled(f[w], e.effect(w));
            }
            let labels: Vec<Label> = chosen.iter().map(|&m| ins.space().label(m).clone()).collect();
            let rhs = ins.heisenberg_apply(&labels, &weighted).unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs).unwrap() < 1e-10);
        }

        #[test]
        fn monotonicity_of_composition(k in raw(2 * 9 * 3), rows in prop::collection::vec(0.01f64..1.0, 8)) {
            let ins = random_instrument(3, 3, 1, &k);
            let e3 = models::number_povm(2);
            let e3 = e3.permute(&[2, 0, 1]).unwrap();
            let e3 = crate::povm::post_process(&e3, &MarkovKernel::new(e3.space().clone(), OutcomeSpace::range(4),
                vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.25, 0.75, 0.0], vec![0.0, 0.0, 0.0, 1.0]]).unwrap()).unwrap();
            let nu_rows: Vec<Vec<f64>> = rows.chunks(2).map(|r| { let s = r[0] + r[1]; vec![r[0] / s, r[1] / s] }).collect();
            let nu = MarkovKernel::new(e3.space().clone(), OutcomeSpace::range(2), nu_rows).unwrap();
            let e2 = post_process(&e3, &nu).unwrap();
            let lifted = extend_kernel(&nu, ins.space());
            let c2 = compose_povm(&ins, &e2).unwrap();
            let c3 = compose_povm(&ins, &e3).unwrap();
            prop_assert!(post_processing_residual(&c2, &c3, &lifted).unwrap() < 1e-10);
        }
    }
}
