//! The five parametric maps: encoder `E`, key-conditioned generator `G`,
//! classifier `C` and the dual-head discriminators `D1` (source) and `D2`
//! (target).
//!
//! All networks are tanh MLPs. Output activations set the contracts:
//! `E` is linear, `G` ends in a sigmoid so pixels stay in `[0,1]`, `C`
//! ends in a softmax, and each discriminator splits its last layer into a
//! sigmoid real/fake column followed by an `N_c`-way softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScganError};
use crate::tape::{Tape, Var};
use crate::types::{DomainKey, Mat, RunConfig};

/// Parameter groups in declaration (and checkpoint) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Encoder,
    Generator,
    Classifier,
    Disc1,
    Disc2,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Encoder, Group::Generator, Group::Classifier, Group::Disc1, Group::Disc2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Encoder => "E",
            Group::Generator => "G",
            Group::Classifier => "C",
            Group::Disc1 => "D1",
            Group::Disc2 => "D2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disc {
    D1,
    D2,
}

impl Disc {
    pub fn group(self) -> Group {
        match self {
            Disc::D1 => Group::Disc1,
            Disc::D2 => Group::Disc2,
        }
    }
}

/// Layer widths of every network, derived from a [`RunConfig`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub image_len: usize,
    pub latent_dim: usize,
    pub n_classes: usize,
    pub hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
}

impl Architecture {
    pub fn from_config(config: &RunConfig) -> Self {
        Architecture {
            image_len: config.image_shape.len(),
            latent_dim: config.latent_dim,
            n_classes: config.n_classes,
            hidden: config.hidden.clone(),
            classifier_hidden: config.classifier_hidden.clone(),
        }
    }

    pub fn widths(&self, group: Group) -> Vec<usize> {
        let (input, hidden, output) = match group {
            Group::Encoder => (self.image_len, &self.hidden, self.latent_dim),
            Group::Generator => (self.latent_dim + 2, &self.hidden, self.image_len),
            Group::Classifier => (self.latent_dim, &self.classifier_hidden, self.n_classes),
            Group::Disc1 | Group::Disc2 => (self.image_len, &self.hidden, 1 + self.n_classes),
        };
        std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect()
    }

    /// SHA-256 over a canonical description of all layer widths.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"scgan-arch-v1");
        for g in Group::ALL {
            let w: Vec<String> = self.widths(g).iter().map(|w| w.to_string()).collect();
            h.update(format!("{}:{};", g.name(), w.join(",")).as_bytes());
        }
        h.finalize().into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `fan_in × fan_out`.
    pub weight: Mat,
    /// `1 × fan_out`.
    pub bias: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

impl Network {
    fn zeros(widths: &[usize]) -> Self {
        Network {
            layers: widths
                .windows(2)
                .map(|w| Dense {
                    weight: Mat::zeros((w[0], w[1])),
                    bias: Mat::zeros((1, w[1])),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Mat> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "flat parameter length");
        let mut it = values.iter();
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x = *it.next().unwrap();
            }
        }
    }
}

/// All learnable weights plus one momentum buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    arch: Architecture,
    nets: [Network; 5],
    momentum: [Network; 5],
}

/// Seeded fan-in-scaled Gaussian weights (`sd = 1/sqrt(fan_in)`), zero biases.
pub fn init_parameters(config: &RunConfig, seed: u64) -> ParameterSet {
    let arch = Architecture::from_config(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nets = Group::ALL.map(|g| {
        let mut net = Network::zeros(&arch.widths(g));
        for layer in &mut net.layers {
            let fan_in = layer.weight.nrows() as f64;
            let normal = Normal::new(0.0, fan_in.sqrt().recip()).expect("positive sd");
            layer.weight.mapv_inplace(|_| normal.sample(&mut rng));
        }
        net
    });
    let momentum = Group::ALL.map(|g| Network::zeros(&arch.widths(g)));
    ParameterSet { arch, nets, momentum }
}

impl ParameterSet {
    /// Zero-initialized set; useful for hand-built fixtures and loading.
    pub fn zeros(arch: Architecture) -> Self {
        let nets = Group::ALL.map(|g| Network::zeros(&arch.widths(g)));
        let momentum = nets.clone();
        ParameterSet { arch, nets, momentum }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn net(&self, g: Group) -> &Network {
        &self.nets[g.index()]
    }

    pub fn net_mut(&mut self, g: Group) -> &mut Network {
        &mut self.nets[g.index()]
    }

    pub fn momentum(&self, g: Group) -> &Network {
        &self.momentum[g.index()]
    }

    pub fn momentum_mut(&mut self, g: Group) -> &mut Network {
        &mut self.momentum[g.index()]
    }

    /// Weights and momentum buffer of one group, borrowed together.
    pub fn net_and_momentum_mut(&mut self, g: Group) -> (&mut Network, &mut Network) {
        (&mut self.nets[g.index()], &mut self.momentum[g.index()])
    }

    pub fn num_params(&self) -> usize {
        self.nets.iter().map(Network::num_params).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.nets.iter().all(|n| n.tensors().all(|t| t.iter().all(|x| x.is_finite())))
    }

    /// Registers every network on `tape`; groups outside `trainable` enter as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: &[Group]) -> Bound {
        let nets = Group::ALL.map(|g| {
            let learn = trainable.contains(&g);
            let layers = self.nets[g.index()]
                .layers
                .iter()
                .map(|l| {
                    if learn {
                        (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                    } else {
                        (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                    }
                })
                .collect();
            BoundNet { layers }
        });
        Bound { nets }
    }
}

/// Tape handles for one network's `(weight, bias)` pairs.
#[derive(Clone, Debug)]
pub struct BoundNet {
    pub layers: Vec<(Var, Var)>,
}

#[derive(Clone, Debug)]
pub struct Bound {
    nets: [BoundNet; 5],
}

impl Bound {
    pub fn net(&self, g: Group) -> &BoundNet {
        &self.nets[g.index()]
    }

    /// Reads the gradients of one group back into a [`Network`]-shaped container.
    pub fn gradient(&self, g: Group, tape: &Tape, grads: &crate::tape::Grads) -> Network {
        Network {
            layers: self.nets[g.index()]
                .layers
                .iter()
                .map(|&(w, b)| Dense {
                    weight: grads.get(w, tape),
                    bias: grads.get(b, tape),
                })
                .collect(),
        }
    }
}

fn mlp(tape: &mut Tape, net: &BoundNet, x: Var) -> Var {
    let last = net.layers.len() - 1;
    let mut h = x;
    for (i, &(w, b)) in net.layers.iter().enumerate() {
        h = tape.matmul(h, w);
        h = tape.add_row(h, b);
        if i < last {
            h = tape.tanh(h);
        }
    }
    h
}

pub fn encoder_graph(tape: &mut Tape, bound: &Bound, x: Var) -> Var {
    mlp(tape, bound.net(Group::Encoder), x)
}

/// `G(z, k)`: the key is concatenated to `z` before the first layer.
pub fn generator_graph(tape: &mut Tape, bound: &Bound, z: Var, key: DomainKey) -> Var {
    let rows = tape.value(z).nrows();
    let onehot = key.onehot();
    let k = tape.constant(Mat::from_shape_fn((rows, 2), |(_, j)| onehot[j]));
    let input = tape.concat_cols(z, k);
    let logits = mlp(tape, bound.net(Group::Generator), input);
    tape.sigmoid(logits)
}

pub fn classifier_graph(tape: &mut Tape, bound: &Bound, z: Var) -> Var {
    let logits = mlp(tape, bound.net(Group::Classifier), z);
    tape.softmax_rows(logits)
}

/// Returns `(real_prob: B×1, class_probs: B×N_c)`.
pub fn discriminator_graph(tape: &mut Tape, bound: &Bound, which: Disc, x: Var) -> (Var, Var) {
    let out = mlp(tape, bound.net(which.group()), x);
    let width = tape.value(out).ncols();
    let real_logit = tape.slice_cols(out, 0, 1);
    let class_logits = tape.slice_cols(out, 1, width);
    (tape.sigmoid(real_logit), tape.softmax_rows(class_logits))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    pub real_prob: f64,
    pub class_probs: Vec<f64>,
}

fn check_cols(context: &'static str, x: &Mat, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(ScganError::shape(
            context,
            format!("{expected} columns"),
            format!("{} columns", x.ncols()),
        ));
    }
    Ok(())
}

/// `z = E(x)` for a `B × image_len` batch.
pub fn encode(params: &ParameterSet, x: &Mat) -> Result<Mat> {
    check_cols("encode input", x, params.arch.image_len)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, &[]);
    let xv = tape.constant(x.clone());
    let z = encoder_graph(&mut tape, &bound, xv);
    Ok(tape.value(z).clone())
}

/// `x_k = G(z, k)`, pixels in `[0,1]`.
pub fn generate(params: &ParameterSet, z: &Mat, key: DomainKey) -> Result<Mat> {
    check_cols("generate input", z, params.arch.latent_dim)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, &[]);
    let zv = tape.constant(z.clone());
    let x = generator_graph(&mut tape, &bound, zv, key);
    Ok(tape.value(x).clone())
}

/// Class probabilities `C(z)`, one simplex row per code.
pub fn classify(params: &ParameterSet, z: &Mat) -> Result<Mat> {
    check_cols("classify input", z, params.arch.latent_dim)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, &[]);
    let zv = tape.constant(z.clone());
    let p = classifier_graph(&mut tape, &bound, zv);
    Ok(tape.value(p).clone())
}

pub fn discriminate(params: &ParameterSet, which: Disc, x: &Mat) -> Result<Vec<DiscriminatorOutput>> {
    check_cols("discriminate input", x, params.arch.image_len)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, &[]);
    let xv = tape.constant(x.clone());
    let (real, class) = discriminator_graph(&mut tape, &bound, which, xv);
    let (real, class) = (tape.value(real), tape.value(class));
    Ok(real
        .column(0)
        .iter()
        .zip(class.rows())
        .map(|(&r, c)| DiscriminatorOutput {
            real_prob: r,
            class_probs: c.to_vec(),
        })
        .collect())
}

/// Argmax of `C(E(x))` per row, lowest index on ties.
pub fn predict(params: &ParameterSet, x: &Mat) -> Result<Vec<usize>> {
    let probs = classify(params, &encode(params, x)?)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| crate::types::PseudoLabel::from_probs(r.as_slice().unwrap(), 1.0).class_id)
        .collect())
}
