//! Independent verification machinery: central finite differences, a
//! gradient comparison rule, and straight-line scalar re-implementations
//! of the three objectives that share no code with [`crate::losses`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, ScganError};
use crate::losses::{self, StyledBatches};
use crate::networks::{init_parameters, Group, ParameterSet};
use crate::types::{ImageShape, LabeledBatch, LossWeights, Mat, PseudoLabel, RunConfig, UnlabeledBatch};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const DEFAULT_ABS_FLOOR: f64 = 1e-8;

/// `(f(p + eps e_i) - f(p - eps e_i)) / 2 eps` for every coordinate.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let up = f(&p);
        p[i] = orig - eps;
        let down = f(&p);
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(ScganError::NonFinite(format!("finite-difference probe at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradComparison {
    pub passed: bool,
    /// Coordinate with the largest `|a - n| / (abs_floor + rel_tol·max(|a|,|n|))`.
    pub worst_index: Option<usize>,
    pub worst_abs_err: f64,
    pub worst_ratio: f64,
}

/// Passes iff `|a_i - n_i| <= abs_floor + rel_tol·max(|a_i|, |n_i|)` for all `i`.
pub fn compare_grads(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_floor: f64) -> Result<GradComparison> {
    if analytic.len() != numeric.len() {
        return Err(ScganError::shape("compare_grads", analytic.len(), numeric.len()));
    }
    let mut worst = GradComparison {
        passed: true,
        worst_index: None,
        worst_abs_err: 0.0,
        worst_ratio: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let err = (a - n).abs();
        let allowed = abs_floor + rel_tol * a.abs().max(n.abs());
        let ratio = err / allowed;
        if err > allowed {
            worst.passed = false;
        }
        if worst.worst_index.is_none() || ratio > worst.worst_ratio {
            worst.worst_index = Some(i);
            worst.worst_abs_err = err;
            worst.worst_ratio = ratio;
        }
    }
    Ok(worst)
}

/// Straight-line transcriptions of the three objectives over plain vectors.
pub mod reference {
    use crate::networks::{Group, Network, ParameterSet};

    const FLOOR: f64 = 1e-12;

    fn layer_stack(net: &Network, input: &[f64]) -> Vec<f64> {
        let mut h = input.to_vec();
        let n_layers = net.layers.len();
        for (li, layer) in net.layers.iter().enumerate() {
            let (fan_in, fan_out) = layer.weight.dim();
            let mut next = vec![0.0; fan_out];
            for (j, out) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..fan_in {
                    acc += h[i] * layer.weight[[i, j]];
                }
                acc += layer.bias[[0, j]];
                *out = if li + 1 < n_layers { acc.tanh() } else { acc };
            }
            h = next;
        }
        h
    }

    fn logistic(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn normalize_exp(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn enc(p: &ParameterSet, x: &[f64]) -> Vec<f64> {
        layer_stack(p.net(Group::Encoder), x)
    }

    pub fn gen(p: &ParameterSet, z: &[f64], key: [f64; 2]) -> Vec<f64> {
        let mut input = z.to_vec();
        input.push(key[0]);
        input.push(key[1]);
        layer_stack(p.net(Group::Generator), &input).into_iter().map(logistic).collect()
    }

    pub fn cls(p: &ParameterSet, z: &[f64]) -> Vec<f64> {
        normalize_exp(&layer_stack(p.net(Group::Classifier), z))
    }

    /// `(real probability, class distribution)`; `first == true` selects D1.
    pub fn disc(p: &ParameterSet, first: bool, x: &[f64]) -> (f64, Vec<f64>) {
        let g = if first { Group::Disc1 } else { Group::Disc2 };
        let out = layer_stack(p.net(g), x);
        (logistic(out[0]), normalize_exp(&out[1..]))
    }

    fn xent(probs: &[f64], y: usize) -> f64 {
        -(probs[y].max(FLOOR)).ln()
    }

    fn manhattan(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += (a[i] - b[i]).abs();
        }
        s
    }

    const KS: [f64; 2] = [1.0, 0.0];
    const KT: [f64; 2] = [0.0, 1.0];

    #[allow(clippy::too_many_arguments)]
    pub fn generator_loss(
        p: &ParameterSet,
        xs: &[Vec<f64>],
        ys: &[usize],
        xt: &[Vec<f64>],
        yt: &[Option<usize>],
        alpha: f64,
        beta: f64,
        adv: f64,
    ) -> f64 {
        let mut src = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z = enc(p, x);
            let x_ss = gen(p, &z, KS);
            let x_st = gen(p, &z, KT);
            let (real_st, class_st) = disc(p, false, &x_st);
            src += xent(&class_st, y);
            src += alpha * manhattan(&x_ss, x);
            src += beta * manhattan(&enc(p, &x_ss), &enc(p, &x_st));
            src += adv * -(real_st.max(FLOOR)).ln();
        }
        let mut tgt = 0.0;
        for (x, y) in xt.iter().zip(yt) {
            let z = enc(p, x);
            let x_tt = gen(p, &z, KT);
            let x_ts = gen(p, &z, KS);
            let (real_ts, class_ts) = disc(p, true, &x_ts);
            if let Some(y) = *y {
                tgt += xent(&class_ts, y);
            }
            tgt += alpha * manhattan(&x_tt, x);
            tgt += beta * manhattan(&enc(p, &x_tt), &enc(p, &x_ts));
            tgt += adv * -(real_ts.max(FLOOR)).ln();
        }
        src / xs.len() as f64 + tgt / xt.len() as f64
    }

    /// `x_st[i]` / `x_ts[i]` are the fixed translated images of `xs[i]` / `xt[i]`.
    #[allow(clippy::too_many_arguments)]
    pub fn discriminator_loss(
        p: &ParameterSet,
        xs: &[Vec<f64>],
        ys: &[usize],
        xt: &[Vec<f64>],
        yt: &[Option<usize>],
        x_st: &[Vec<f64>],
        x_ts: &[Vec<f64>],
        adv: f64,
    ) -> f64 {
        let mut src = 0.0;
        for i in 0..xs.len() {
            let (r_real, c_real) = disc(p, true, &xs[i]);
            let (r_fake, c_fake) = disc(p, false, &x_st[i]);
            src += xent(&c_real, ys[i]) + xent(&c_fake, ys[i]);
            src += adv * (-(r_real.max(FLOOR)).ln() - ((1.0 - r_fake).max(FLOOR)).ln());
        }
        let mut tgt = 0.0;
        for i in 0..xt.len() {
            let (r_fake, c_fake) = disc(p, true, &x_ts[i]);
            let (r_real, c_real) = disc(p, false, &xt[i]);
            if let Some(y) = yt[i] {
                tgt += xent(&c_fake, y) + xent(&c_real, y);
            }
            tgt += adv * (-(r_real.max(FLOOR)).ln() - ((1.0 - r_fake).max(FLOOR)).ln());
        }
        src / xs.len() as f64 + tgt / xt.len() as f64
    }

    pub fn classifier_loss(p: &ParameterSet, xs: &[Vec<f64>], ys: &[usize], xt: &[Vec<f64>], yt: &[Option<usize>]) -> f64 {
        let mut src = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            src += xent(&cls(p, &enc(p, x)), y);
        }
        let mut tgt = 0.0;
        for (x, y) in xt.iter().zip(yt) {
            if let Some(y) = *y {
                tgt += xent(&cls(p, &enc(p, x)), y);
            }
        }
        src / xs.len() as f64 + tgt / xt.len() as f64
    }

    /// Translated images `(x_st, x_ts)` computed independently.
    pub fn translate(p: &ParameterSet, xs: &[Vec<f64>], xt: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let st = xs.iter().map(|x| gen(p, &enc(p, x), KT)).collect();
        let ts = xt.iter().map(|x| gen(p, &enc(p, x), KS)).collect();
        (st, ts)
    }
}

/// Network sizes for the gradient check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradcheckSize {
    Tiny,
    Small,
}

impl std::str::FromStr for GradcheckSize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "TINY" => Ok(GradcheckSize::Tiny),
            "SMALL" => Ok(GradcheckSize::Small),
            _ => Err(format!("unknown gradcheck size {s:?} (expected TINY or SMALL)")),
        }
    }
}

impl GradcheckSize {
    pub fn config(self) -> RunConfig {
        match self {
            GradcheckSize::Tiny => RunConfig {
                n_classes: 2,
                latent_dim: 3,
                image_shape: ImageShape::new(1, 1, 2),
                hidden: vec![6],
                classifier_hidden: vec![4],
                batch_size: 4,
                ..RunConfig::default()
            },
            GradcheckSize::Small => RunConfig {
                n_classes: 3,
                latent_dim: 4,
                image_shape: ImageShape::new(2, 2, 1),
                hidden: vec![8, 8],
                classifier_hidden: vec![6],
                batch_size: 4,
                ..RunConfig::default()
            },
        }
    }
}

/// A seeded fixed problem: parameters, batches and a mixed accept/reject pseudo-label set.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub config: RunConfig,
    pub params: ParameterSet,
    pub source: LabeledBatch,
    pub target: UnlabeledBatch,
    pub pseudo: Vec<PseudoLabel>,
}

impl Fixture {
    pub fn new(config: RunConfig, seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c5);
        let params = init_parameters(&config, seed);
        let (b, d, nc) = (config.batch_size, config.image_shape.len(), config.n_classes);
        let source = LabeledBatch {
            pixels: Mat::from_shape_fn((b, d), |_| rng.random()),
            labels: (0..b).map(|_| rng.random_range(0..nc)).collect(),
        };
        let target = UnlabeledBatch {
            pixels: Mat::from_shape_fn((b, d), |_| rng.random()),
        };
        let pseudo = (0..b)
            .map(|i| PseudoLabel {
                class_id: rng.random_range(0..nc),
                confidence: 0.5,
                accepted: i % 2 == 0 || rng.random_bool(0.5),
            })
            .collect();
        Fixture {
            config,
            params,
            source,
            target,
            pseudo,
        }
    }

    pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
        m.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn pseudo_targets(&self) -> Vec<Option<usize>> {
        self.pseudo.iter().map(|p| p.accepted.then_some(p.class_id)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Loss {
    Generator,
    Discriminator,
    Classifier,
}

impl Loss {
    pub const ALL: [Loss; 3] = [Loss::Generator, Loss::Discriminator, Loss::Classifier];

    pub fn name(self) -> &'static str {
        match self {
            Loss::Generator => "L_G",
            Loss::Discriminator => "L_D",
            Loss::Classifier => "L_c",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckRow {
    pub loss: &'static str,
    pub group: &'static str,
    pub n_params: usize,
    pub comparison: GradComparison,
}

fn objective_value(
    loss: Loss,
    params: &ParameterSet,
    fx: &Fixture,
    styled: &StyledBatches,
    w: &LossWeights,
    adv: f64,
) -> Result<losses::Objective> {
    match loss {
        Loss::Generator => losses::generator_objective(params, &fx.source, &fx.target, &fx.pseudo, w, adv, &Group::ALL),
        Loss::Discriminator => losses::discriminator_objective(params, &fx.source, &fx.target, &fx.pseudo, styled, adv, &Group::ALL),
        Loss::Classifier => losses::classifier_objective(params, &fx.source, &fx.target, &fx.pseudo, &Group::ALL),
    }
}

/// Analytic vs central-difference gradients for every (loss, group) pair.
///
/// The discriminator objective is differentiated with the translated
/// images held fixed, so its gradient w.r.t. `E` and `G` is zero on both
/// sides of the comparison.
pub fn gradcheck(fx: &Fixture, eps: f64, rel_tol: f64, abs_floor: f64) -> Result<Vec<GradcheckRow>> {
    let w = fx.config.loss_weights;
    let adv = fx.config.adv_weight;
    let styled = losses::translate(&fx.params, &fx.source.pixels, &fx.target.pixels)?;
    let mut rows = Vec::new();
    for loss in Loss::ALL {
        let obj = objective_value(loss, &fx.params, fx, &styled, &w, adv)?;
        for (group, grad) in obj.gradients(&Group::ALL) {
            let analytic = grad.flat();
            let base = fx.params.net(group).flat();
            let mut probe = fx.params.clone();
            let numeric = finite_diff_grad(
                |p| {
                    probe.net_mut(group).set_flat(p);
                    objective_value(loss, &probe, fx, &styled, &w, adv)
                        .map(|o| o.value())
                        .unwrap_or(f64::NAN)
                },
                &base,
                eps,
            )?;
            rows.push(GradcheckRow {
                loss: loss.name(),
                group: group.name(),
                n_params: base.len(),
                comparison: compare_grads(&analytic, &numeric, rel_tol, abs_floor)?,
            });
        }
    }
    Ok(rows)
}
