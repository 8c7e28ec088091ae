//! Generator/encoder, discriminator and classifier objectives with a
//! per-term breakdown.
//!
//! Every term is a batch mean. Class terms that need a pseudo label sum
//! over accepted target samples only but still divide by the target batch
//! size, so an all-rejected batch contributes exactly zero. Terms whose
//! weight is zero are not built at all.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScganError};
use crate::networks::{classifier_graph, discriminator_graph, encoder_graph, generator_graph, Bound, Disc, Group, Network, ParameterSet};
use crate::tape::{Tape, Var, PROB_FLOOR};
use crate::types::{make_domain_key, Domain, LabeledBatch, LossWeights, Mat, PseudoLabel, UnlabeledBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    CeGenTargetStyle,
    CeGenSourceStyle,
    ReconSource,
    ReconTarget,
    SemconSource,
    SemconTarget,
    AdvBinaryG,
    CeDiscRealSource,
    CeDiscRealTarget,
    CeDiscGenSourceStyle,
    CeDiscGenTargetStyle,
    AdvBinaryD,
    CeClassifierSource,
    CeClassifierTargetPseudo,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::CeGenTargetStyle => "ce_gen_target_style",
            Term::CeGenSourceStyle => "ce_gen_source_style",
            Term::ReconSource => "recon_source",
            Term::ReconTarget => "recon_target",
            Term::SemconSource => "semcon_source",
            Term::SemconTarget => "semcon_target",
            Term::AdvBinaryG => "adv_binary_g",
            Term::CeDiscRealSource => "ce_disc_real_source",
            Term::CeDiscRealTarget => "ce_disc_real_target",
            Term::CeDiscGenSourceStyle => "ce_disc_gen_source_style",
            Term::CeDiscGenTargetStyle => "ce_disc_gen_target_style",
            Term::AdvBinaryD => "adv_binary_d",
            Term::CeClassifierSource => "ce_classifier_source",
            Term::CeClassifierTargetPseudo => "ce_classifier_target_pseudo",
        }
    }
}

/// Manhattan distance of two equal-length vectors.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ScganError::shape("l1_distance", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// `-ln max(probs[label], 1e-12)`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(ScganError::LabelOutOfRange {
        label,
        n_classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

pub fn total_objective(l_g: f64, l_d: f64, l_c: f64, gamma: f64) -> f64 {
    l_g + l_d + gamma * l_c
}

/// The four translated batches `x_{s→s}, x_{s→t}, x_{t→s}, x_{t→t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StyledBatches {
    pub ss: Mat,
    pub st: Mat,
    pub ts: Mat,
    pub tt: Mat,
}

/// Renders both batches in both styles with the current `E` and `G`.
pub fn translate(params: &ParameterSet, source: &Mat, target: &Mat) -> Result<StyledBatches> {
    use crate::networks::{encode, generate};
    let (ks, kt) = (make_domain_key(Domain::Source), make_domain_key(Domain::Target));
    let zs = encode(params, source)?;
    let zt = encode(params, target)?;
    Ok(StyledBatches {
        ss: generate(params, &zs, ks)?,
        st: generate(params, &zs, kt)?,
        ts: generate(params, &zt, ks)?,
        tt: generate(params, &zt, kt)?,
    })
}

/// A built objective: its tape, per-term handles and the summed total.
pub struct Objective {
    tape: Tape,
    bound: Bound,
    terms: Vec<(Term, Var)>,
    total: Var,
    /// Accepted pseudo labels in the target batch.
    pub n_accepted: usize,
}

impl Objective {
    pub fn value(&self) -> f64 {
        self.tape.scalar(self.total)
    }

    /// Weighted contribution of `term`; zero for terms that were not built.
    pub fn term(&self, term: Term) -> f64 {
        self.terms
            .iter()
            .find(|(t, _)| *t == term)
            .map_or(0.0, |&(_, v)| self.tape.scalar(v))
    }

    pub fn terms(&self) -> impl Iterator<Item = (Term, f64)> + '_ {
        self.terms.iter().map(|&(t, v)| (t, self.tape.scalar(v)))
    }

    /// First term whose value is not finite.
    pub fn non_finite_term(&self) -> Option<Term> {
        self.terms().find(|(_, v)| !v.is_finite()).map(|(t, _)| t)
    }

    /// Gradient of the total w.r.t. each requested group.
    pub fn gradients(&self, groups: &[Group]) -> Vec<(Group, Network)> {
        self.gradients_from(self.total, groups)
    }

    /// Gradient of the sum of the selected terms only.
    pub fn gradients_of(&mut self, selected: &[Term], groups: &[Group]) -> Vec<(Group, Network)> {
        let vars: Vec<Var> = self.terms.iter().filter(|(t, _)| selected.contains(t)).map(|&(_, v)| v).collect();
        if vars.is_empty() {
            let zero = self.tape.constant(Mat::zeros((1, 1)));
            return self.gradients_from(zero, groups);
        }
        let root = self.tape.sum(&vars);
        self.gradients_from(root, groups)
    }

    fn gradients_from(&self, root: Var, groups: &[Group]) -> Vec<(Group, Network)> {
        let grads = self.tape.backward(root);
        groups.iter().map(|&g| (g, self.bound.gradient(g, &self.tape, &grads))).collect()
    }

    fn finish(tape: Tape, bound: Bound, terms: Vec<(Term, Var)>, n_accepted: usize) -> Objective {
        let mut tape = tape;
        let vars: Vec<Var> = terms.iter().map(|&(_, v)| v).collect();
        let total = tape.sum(&vars);
        Objective {
            tape,
            bound,
            terms,
            total,
            n_accepted,
        }
    }
}

fn check_inputs(params: &ParameterSet, source: &LabeledBatch, target: &UnlabeledBatch, pseudo: &[PseudoLabel]) -> Result<()> {
    let arch = params.architecture();
    if source.is_empty() || target.is_empty() {
        return Err(ScganError::shape("objective batches", "nonempty batches", "empty batch"));
    }
    for (ctx, m) in [("source batch", &source.pixels), ("target batch", &target.pixels)] {
        if m.ncols() != arch.image_len {
            return Err(ScganError::shape(ctx, arch.image_len, m.ncols()));
        }
    }
    if pseudo.len() != target.len() {
        return Err(ScganError::shape("pseudo labels", target.len(), pseudo.len()));
    }
    for &label in source.labels.iter().chain(pseudo.iter().map(|p| &p.class_id)) {
        if label >= arch.n_classes {
            return Err(ScganError::LabelOutOfRange {
                label,
                n_classes: arch.n_classes,
            });
        }
    }
    Ok(())
}

fn pseudo_targets(pseudo: &[PseudoLabel]) -> (Vec<Option<usize>>, usize) {
    let targets: Vec<Option<usize>> = pseudo.iter().map(|p| p.accepted.then_some(p.class_id)).collect();
    let n = targets.iter().filter(|t| t.is_some()).count();
    (targets, n)
}

fn source_targets(source: &LabeledBatch) -> Vec<Option<usize>> {
    source.labels.iter().map(|&l| Some(l)).collect()
}

/// Encoder/generator objective, plus the non-saturating binary generator
/// term weighted by `adv_weight`.
pub fn generator_objective(
    params: &ParameterSet,
    source: &LabeledBatch,
    target: &UnlabeledBatch,
    pseudo: &[PseudoLabel],
    weights: &LossWeights,
    adv_weight: f64,
    trainable: &[Group],
) -> Result<Objective> {
    check_inputs(params, source, target, pseudo)?;
    let (ks, kt) = (make_domain_key(Domain::Source), make_domain_key(Domain::Target));
    let (bs, bt) = (source.len() as f64, target.len() as f64);
    let (targets_t, n_accepted) = pseudo_targets(pseudo);

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, trainable);
    let xs = tape.constant(source.pixels.clone());
    let xt = tape.constant(target.pixels.clone());
    let zs = encoder_graph(&mut tape, &bound, xs);
    let zt = encoder_graph(&mut tape, &bound, xt);
    let x_ss = generator_graph(&mut tape, &bound, zs, ks);
    let x_st = generator_graph(&mut tape, &bound, zs, kt);
    let x_ts = generator_graph(&mut tape, &bound, zt, ks);
    let x_tt = generator_graph(&mut tape, &bound, zt, kt);

    let (d2_real_st, d2_class_st) = discriminator_graph(&mut tape, &bound, Disc::D2, x_st);
    let (d1_real_ts, d1_class_ts) = discriminator_graph(&mut tape, &bound, Disc::D1, x_ts);

    let mut terms = Vec::new();
    let ce = tape.nll(d2_class_st, source_targets(source), bs);
    terms.push((Term::CeGenTargetStyle, ce));
    let ce = tape.nll(d1_class_ts, targets_t, bt);
    terms.push((Term::CeGenSourceStyle, ce));

    if weights.alpha != 0.0 {
        let r = tape.l1(x_ss, xs);
        terms.push((Term::ReconSource, tape.scale(r, weights.alpha)));
        let r = tape.l1(x_tt, xt);
        terms.push((Term::ReconTarget, tape.scale(r, weights.alpha)));
    }
    if weights.beta != 0.0 {
        let z_ss = encoder_graph(&mut tape, &bound, x_ss);
        let z_st = encoder_graph(&mut tape, &bound, x_st);
        let z_ts = encoder_graph(&mut tape, &bound, x_ts);
        let z_tt = encoder_graph(&mut tape, &bound, x_tt);
        let s = tape.l1(z_ss, z_st);
        terms.push((Term::SemconSource, tape.scale(s, weights.beta)));
        let s = tape.l1(z_tt, z_ts);
        terms.push((Term::SemconTarget, tape.scale(s, weights.beta)));
    }
    if adv_weight != 0.0 {
        let a = tape.binary(d1_real_ts, true);
        let b = tape.binary(d2_real_st, true);
        let adv = tape.add(a, b);
        terms.push((Term::AdvBinaryG, tape.scale(adv, adv_weight)));
    }
    Ok(Objective::finish(tape, bound, terms, n_accepted))
}

/// Discriminator objective. The styled batches enter as constants.
pub fn discriminator_objective(
    params: &ParameterSet,
    source: &LabeledBatch,
    target: &UnlabeledBatch,
    pseudo: &[PseudoLabel],
    styled: &StyledBatches,
    adv_weight: f64,
    trainable: &[Group],
) -> Result<Objective> {
    check_inputs(params, source, target, pseudo)?;
    if styled.st.raw_dim() != source.pixels.raw_dim() || styled.ts.raw_dim() != target.pixels.raw_dim() {
        return Err(ScganError::shape(
            "styled batches",
            "same shapes as the real batches",
            "mismatched shapes",
        ));
    }
    let (bs, bt) = (source.len() as f64, target.len() as f64);
    let (targets_t, n_accepted) = pseudo_targets(pseudo);

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, trainable);
    let xs = tape.constant(source.pixels.clone());
    let xt = tape.constant(target.pixels.clone());
    let x_st = tape.constant(styled.st.clone());
    let x_ts = tape.constant(styled.ts.clone());

    let (d1_real_s, d1_class_s) = discriminator_graph(&mut tape, &bound, Disc::D1, xs);
    let (d1_real_ts, d1_class_ts) = discriminator_graph(&mut tape, &bound, Disc::D1, x_ts);
    let (d2_real_t, d2_class_t) = discriminator_graph(&mut tape, &bound, Disc::D2, xt);
    let (d2_real_st, d2_class_st) = discriminator_graph(&mut tape, &bound, Disc::D2, x_st);

    let mut terms = Vec::new();
    let ce = tape.nll(d1_class_s, source_targets(source), bs);
    terms.push((Term::CeDiscRealSource, ce));
    let ce = tape.nll(d2_class_st, source_targets(source), bs);
    terms.push((Term::CeDiscGenTargetStyle, ce));
    let ce = tape.nll(d1_class_ts, targets_t.clone(), bt);
    terms.push((Term::CeDiscGenSourceStyle, ce));
    let ce = tape.nll(d2_class_t, targets_t, bt);
    terms.push((Term::CeDiscRealTarget, ce));

    if adv_weight != 0.0 {
        let parts = [
            tape.binary(d1_real_s, true),
            tape.binary(d1_real_ts, false),
            tape.binary(d2_real_t, true),
            tape.binary(d2_real_st, false),
        ];
        let adv = tape.sum(&parts);
        terms.push((Term::AdvBinaryD, tape.scale(adv, adv_weight)));
    }
    Ok(Objective::finish(tape, bound, terms, n_accepted))
}

/// Classifier objective on `C(E(x))`: true source labels plus accepted
/// target pseudo labels.
pub fn classifier_objective(
    params: &ParameterSet,
    source: &LabeledBatch,
    target: &UnlabeledBatch,
    pseudo: &[PseudoLabel],
    trainable: &[Group],
) -> Result<Objective> {
    check_inputs(params, source, target, pseudo)?;
    let (bs, bt) = (source.len() as f64, target.len() as f64);
    let (targets_t, n_accepted) = pseudo_targets(pseudo);

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, trainable);
    let xs = tape.constant(source.pixels.clone());
    let xt = tape.constant(target.pixels.clone());
    let zs = encoder_graph(&mut tape, &bound, xs);
    let zt = encoder_graph(&mut tape, &bound, xt);
    let ps = classifier_graph(&mut tape, &bound, zs);
    let pt = classifier_graph(&mut tape, &bound, zt);

    let ce_s = tape.nll(ps, source_targets(source), bs);
    let ce_t = tape.nll(pt, targets_t, bt);
    let terms = vec![(Term::CeClassifierSource, ce_s), (Term::CeClassifierTargetPseudo, ce_t)];
    Ok(Objective::finish(tape, bound, terms, n_accepted))
}

/// Source-only cross-entropy `J(C(E(x_s)), y_s)` used for pretraining.
pub fn source_classifier_objective(params: &ParameterSet, source: &LabeledBatch, trainable: &[Group]) -> Result<Objective> {
    let arch = params.architecture();
    if source.is_empty() {
        return Err(ScganError::shape("source batch", "nonempty batch", "empty batch"));
    }
    if source.pixels.ncols() != arch.image_len {
        return Err(ScganError::shape("source batch", arch.image_len, source.pixels.ncols()));
    }
    if let Some(&label) = source.labels.iter().find(|&&l| l >= arch.n_classes) {
        return Err(ScganError::LabelOutOfRange {
            label,
            n_classes: arch.n_classes,
        });
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, trainable);
    let xs = tape.constant(source.pixels.clone());
    let zs = encoder_graph(&mut tape, &bound, xs);
    let ps = classifier_graph(&mut tape, &bound, zs);
    let ce = tape.nll(ps, source_targets(source), source.len() as f64);
    Ok(Objective::finish(tape, bound, vec![(Term::CeClassifierSource, ce)], 0))
}

/// Per-step values of every term; weighted terms hold their weighted contribution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ce_gen_target_style: f64,
    pub ce_gen_source_style: f64,
    pub recon_source: f64,
    pub recon_target: f64,
    pub semcon_source: f64,
    pub semcon_target: f64,
    pub adv_binary_g: f64,
    pub ce_disc_real_source: f64,
    pub ce_disc_real_target: f64,
    pub ce_disc_gen_source_style: f64,
    pub ce_disc_gen_target_style: f64,
    pub adv_binary_d: f64,
    pub ce_classifier_source: f64,
    pub ce_classifier_target_pseudo: f64,
    pub total_g: f64,
    pub total_d: f64,
    pub total_c: f64,
    pub total: f64,
    pub gamma: f64,
    pub n_accepted: usize,
    /// Set when no pseudo label was accepted, so every pseudo-labeled class term is zero.
    pub no_accepted_pseudo_labels: bool,
}

impl LossReport {
    pub fn from_objectives(g: &Objective, d: &Objective, c: &Objective, gamma: f64) -> LossReport {
        let mut r = LossReport {
            total_g: g.value(),
            total_d: d.value(),
            total_c: c.value(),
            gamma,
            n_accepted: c.n_accepted,
            no_accepted_pseudo_labels: c.n_accepted == 0,
            ..LossReport::default()
        };
        r.total = total_objective(r.total_g, r.total_d, r.total_c, gamma);
        for (term, v) in g.terms().chain(d.terms()).chain(c.terms()) {
            *r.field_mut(term) = v;
        }
        r
    }

    fn field_mut(&mut self, term: Term) -> &mut f64 {
        match term {
            Term::CeGenTargetStyle => &mut self.ce_gen_target_style,
            Term::CeGenSourceStyle => &mut self.ce_gen_source_style,
            Term::ReconSource => &mut self.recon_source,
            Term::ReconTarget => &mut self.recon_target,
            Term::SemconSource => &mut self.semcon_source,
            Term::SemconTarget => &mut self.semcon_target,
            Term::AdvBinaryG => &mut self.adv_binary_g,
            Term::CeDiscRealSource => &mut self.ce_disc_real_source,
            Term::CeDiscRealTarget => &mut self.ce_disc_real_target,
            Term::CeDiscGenSourceStyle => &mut self.ce_disc_gen_source_style,
            Term::CeDiscGenTargetStyle => &mut self.ce_disc_gen_target_style,
            Term::AdvBinaryD => &mut self.adv_binary_d,
            Term::CeClassifierSource => &mut self.ce_classifier_source,
            Term::CeClassifierTargetPseudo => &mut self.ce_classifier_target_pseudo,
        }
    }

    /// Every nonnegative term as `(name, value)`.
    pub fn term_values(&self) -> [(&'static str, f64); 14] {
        [
            ("ce_gen_target_style", self.ce_gen_target_style),
            ("ce_gen_source_style", self.ce_gen_source_style),
            ("recon_source", self.recon_source),
            ("recon_target", self.recon_target),
            ("semcon_source", self.semcon_source),
            ("semcon_target", self.semcon_target),
            ("adv_binary_g", self.adv_binary_g),
            ("ce_disc_real_source", self.ce_disc_real_source),
            ("ce_disc_real_target", self.ce_disc_real_target),
            ("ce_disc_gen_source_style", self.ce_disc_gen_source_style),
            ("ce_disc_gen_target_style", self.ce_disc_gen_target_style),
            ("adv_binary_d", self.adv_binary_d),
            ("ce_classifier_source", self.ce_classifier_source),
            ("ce_classifier_target_pseudo", self.ce_classifier_target_pseudo),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.term_values().iter().all(|(_, v)| v.is_finite())
            && [self.total_g, self.total_d, self.total_c, self.total].iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::init_parameters;
    use crate::types::{ImageShape, RunConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> RunConfig {
        RunConfig {
            n_classes: 3,
            latent_dim: 3,
            image_shape: ImageShape::new(1, 1, 2),
            hidden: vec![5],
            ..RunConfig::default()
        }
    }

    fn batches(seed: u64) -> (LabeledBatch, UnlabeledBatch, Vec<PseudoLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = LabeledBatch {
            pixels: Mat::from_shape_fn((4, 2), |_| rng.random()),
            labels: vec![0, 1, 2, 1],
        };
        let target = UnlabeledBatch {
            pixels: Mat::from_shape_fn((3, 2), |_| rng.random()),
        };
        let pseudo = vec![
            PseudoLabel {
                class_id: 2,
                confidence: 0.99,
                accepted: true,
            },
            PseudoLabel {
                class_id: 0,
                confidence: 0.4,
                accepted: false,
            },
            PseudoLabel {
                class_id: 1,
                confidence: 0.97,
                accepted: true,
            },
        ];
        (source, target, pseudo)
    }

    #[test]
    fn l1_and_cross_entropy_values() {
        assert_eq!(l1_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(l1_distance(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 3.0);
        assert!(l1_distance(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        assert!((cross_entropy(&uniform, 3).unwrap() - 2.302585092994046).abs() < 1e-12);
        assert!((cross_entropy(&[0.5, 0.25, 0.25], 1).unwrap() - 1.3862943611198906).abs() < 1e-12);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
        // floor keeps log(0) finite
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn total_composition() {
        assert_eq!(total_objective(1.0, 2.0, 3.0, 1.0), 6.0);
        assert!((total_objective(1.0, 2.0, 3.0, 0.2) - 3.6).abs() < 1e-12);
        assert_eq!(total_objective(1.0, 2.0, 3.0, 0.0), total_objective(1.0, 2.0, 99.0, 0.0));
    }

    #[test]
    fn zero_weights_leave_only_class_terms() {
        let params = init_parameters(&tiny(), 3);
        let (s, t, p) = batches(1);
        let w = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.2,
        };
        let g = generator_objective(&params, &s, &t, &p, &w, 0.0, &[]).unwrap();
        let sum = g.term(Term::CeGenTargetStyle) + g.term(Term::CeGenSourceStyle);
        assert_eq!(g.value(), sum);
        assert_eq!(g.terms().count(), 2);
    }

    #[test]
    fn beta_zero_is_bit_identical_to_deleting_semantic_terms() {
        let params = init_parameters(&tiny(), 4);
        let (s, t, p) = batches(2);
        let w0 = LossWeights {
            beta: 0.0,
            ..LossWeights::DIGITS
        };
        let g0 = generator_objective(&params, &s, &t, &p, &w0, 1.0, &[]).unwrap();
        let g1 = generator_objective(&params, &s, &t, &p, &LossWeights::DIGITS, 1.0, &[]).unwrap();
        let without: f64 = g1
            .terms()
            .filter(|(t, _)| !matches!(t, Term::SemconSource | Term::SemconTarget))
            .fold(None, |acc: Option<f64>, (_, v)| Some(acc.map_or(v, |a| a + v)))
            .unwrap();
        assert_eq!(g0.value().to_bits(), without.to_bits());
        assert_eq!(g0.term(Term::SemconSource), 0.0);
        assert!(g1.term(Term::SemconSource) > 0.0);
    }

    #[test]
    fn discriminator_stop_gradient() {
        let params = init_parameters(&tiny(), 5);
        let (s, t, p) = batches(3);
        let styled = translate(&params, &s.pixels, &t.pixels).unwrap();
        let d = discriminator_objective(&params, &s, &t, &p, &styled, 1.0, &Group::ALL).unwrap();
        for (g, grad) in d.gradients(&Group::ALL) {
            let nonzero = grad.flat().iter().any(|&x| x != 0.0);
            match g {
                Group::Disc1 | Group::Disc2 => assert!(nonzero, "{g:?}"),
                _ => assert!(!nonzero, "{g:?} must get exactly zero gradient"),
            }
        }
    }

    #[test]
    fn no_accepted_labels_reduce_classifier_to_source_term() {
        let params = init_parameters(&tiny(), 6);
        let (s, t, mut p) = batches(4);
        p.iter_mut().for_each(|p| p.accepted = false);
        let c = classifier_objective(&params, &s, &t, &p, &[]).unwrap();
        assert_eq!(c.term(Term::CeClassifierTargetPseudo), 0.0);
        assert_eq!(c.value(), c.term(Term::CeClassifierSource));
        assert_eq!(c.n_accepted, 0);
    }

    #[test]
    fn identity_style_rendering_has_zero_reconstruction() {
        // G ignores z and outputs a constant; inputs equal to that constant reconstruct exactly.
        let mut params = init_parameters(&tiny(), 7);
        for l in &mut params.net_mut(Group::Generator).layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let (mut s, mut t, p) = batches(5);
        s.pixels.fill(0.5);
        t.pixels.fill(0.5);
        let g = generator_objective(&params, &s, &t, &p, &LossWeights::DIGITS, 1.0, &[]).unwrap();
        assert_eq!(g.term(Term::ReconSource), 0.0);
        assert_eq!(g.term(Term::ReconTarget), 0.0);
    }

    #[test]
    fn input_validation() {
        let params = init_parameters(&tiny(), 8);
        let (s, t, p) = batches(6);
        assert!(generator_objective(&params, &s, &t, &p[..2], &LossWeights::DIGITS, 1.0, &[]).is_err());
        let bad = LabeledBatch {
            labels: vec![0, 1, 3, 1],
            ..s.clone()
        };
        assert!(classifier_objective(&params, &bad, &t, &p, &[]).is_err());
    }
}
