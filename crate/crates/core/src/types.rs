//! Data model shared across the crate: samples, batches, domain keys,
//! latent codes, pseudo labels and run configuration.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScganError};

/// Row-major batch matrix: one sample (or code) per row.
pub type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// Image geometry; pixels are stored flattened in `H×W×C` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape { height, width, channels }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl std::str::FromStr for ImageShape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let dims: Vec<usize> = s
            .split('x')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("bad image shape {s:?}: {e}"))?;
        match dims[..] {
            [h, w, c] => Ok(ImageShape::new(h, w, c)),
            _ => Err(format!("bad image shape {s:?}: expected HxWxC")),
        }
    }
}

/// One image with an optional class label.
///
/// Source samples always carry a label; an absent label implies the
/// target domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pixels: Vec<f64>,
    label: Option<usize>,
    domain: Domain,
}

impl Sample {
    pub fn new(pixels: Vec<f64>, label: Option<usize>, domain: Domain) -> Result<Self> {
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(ScganError::InvalidSample(format!("pixel {i} = {} outside [0,1]", pixels[i])));
        }
        if label.is_none() && domain == Domain::Source {
            return Err(ScganError::InvalidSample("source samples must be labeled".into()));
        }
        Ok(Sample { pixels, label, domain })
    }

    pub fn labeled(pixels: Vec<f64>, label: usize, domain: Domain) -> Result<Self> {
        Sample::new(pixels, Some(label), domain)
    }

    /// An unlabeled target sample, the only kind the adaptation loop sees.
    pub fn unlabeled(pixels: Vec<f64>) -> Result<Self> {
        Sample::new(pixels, None, Domain::Target)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Same pixels with the label removed.
    pub fn without_label(&self) -> Sample {
        Sample {
            pixels: self.pixels.clone(),
            label: None,
            domain: Domain::Target,
        }
    }
}

/// Stacks sample pixels into a batch matrix, checking the image length.
pub fn stack_pixels<'a, I>(samples: I, shape: ImageShape) -> Result<Mat>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut data = Vec::new();
    let mut rows = 0;
    for s in samples {
        if s.pixels.len() != shape.len() {
            return Err(ScganError::shape(
                "sample pixels",
                format!("{} values ({shape})", shape.len()),
                s.pixels.len(),
            ));
        }
        data.extend_from_slice(&s.pixels);
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, shape.len()), data).expect("row-major stack"))
}

/// Labeled minibatch (source domain).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub pixels: Mat,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn from_samples(samples: &[&Sample], shape: ImageShape, n_classes: usize) -> Result<Self> {
        let pixels = stack_pixels(samples.iter().copied(), shape)?;
        let labels = samples
            .iter()
            .map(|s| {
                let label = s
                    .label
                    .ok_or_else(|| ScganError::InvalidSample("unlabeled sample in a labeled batch".into()))?;
                if label >= n_classes {
                    return Err(ScganError::LabelOutOfRange { label, n_classes });
                }
                Ok(label)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledBatch { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Unlabeled minibatch (target domain). Labels are dropped on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledBatch {
    pub pixels: Mat,
}

impl UnlabeledBatch {
    pub fn from_samples(samples: &[&Sample], shape: ImageShape) -> Result<Self> {
        Ok(UnlabeledBatch {
            pixels: stack_pixels(samples.iter().copied(), shape)?,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.nrows() == 0
    }
}

/// One-hot style selector for the generator: `[1,0]` source, `[0,1]` target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainKey([f64; 2]);

impl DomainKey {
    pub fn new(onehot: [f64; 2]) -> Result<Self> {
        match onehot {
            [a, b] if (a == 1.0 && b == 0.0) || (a == 0.0 && b == 1.0) => Ok(DomainKey(onehot)),
            _ => Err(ScganError::InvalidKey(onehot.to_vec())),
        }
    }

    pub fn onehot(&self) -> [f64; 2] {
        self.0
    }

    pub fn domain(&self) -> Domain {
        if self.0[0] == 1.0 {
            Domain::Source
        } else {
            Domain::Target
        }
    }
}

pub fn make_domain_key(domain: Domain) -> DomainKey {
    match domain {
        Domain::Source => DomainKey([1.0, 0.0]),
        Domain::Target => DomainKey([0.0, 1.0]),
    }
}

/// Encoder output `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Splits a code batch into per-row codes.
    pub fn rows(codes: &Mat) -> Vec<LatentCode> {
        codes.rows().into_iter().map(|r| LatentCode(r.to_vec())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub class_id: usize,
    pub confidence: f64,
    pub accepted: bool,
}

impl PseudoLabel {
    /// Argmax (lowest index on ties) with strict `confidence > threshold` acceptance.
    pub fn from_probs(probs: &[f64], threshold: f64) -> PseudoLabel {
        let (class_id, confidence) = probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        PseudoLabel {
            class_id,
            confidence,
            accepted: confidence > threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Pixel reconstruction weight.
    pub alpha: f64,
    /// Semantic-consistency weight.
    pub beta: f64,
    /// Classifier objective weight in the overall total.
    pub gamma: f64,
}

impl LossWeights {
    pub const DIGITS: LossWeights = LossWeights {
        alpha: 10.0,
        beta: 1.0,
        gamma: 0.2,
    };
    pub const OBJECTS: LossWeights = LossWeights {
        alpha: 1.0,
        beta: 1.0,
        gamma: 1.0,
    };
}

/// Resolved configuration of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_classes: usize,
    pub latent_dim: usize,
    pub image_shape: ImageShape,
    /// Hidden widths of the encoder, generator and discriminators.
    pub hidden: Vec<usize>,
    /// Hidden widths of the classifier; empty means a single affine layer.
    pub classifier_hidden: Vec<usize>,
    pub loss_weights: LossWeights,
    /// Weight of the binary real/fake terms; 0 gives the pure class-term variant.
    pub adv_weight: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub pseudo_threshold: f64,
    pub pretrain_steps: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub d_steps: usize,
    pub g_steps: usize,
    pub c_steps: usize,
    /// Checkpoint interval in adaptation steps (0 disables).
    pub checkpoint_every: usize,
    /// Target-accuracy evaluation interval in adaptation steps (0 disables).
    pub eval_every: usize,
}

impl Default for RunConfig {
    /// Digit-style desk configuration.
    fn default() -> Self {
        RunConfig {
            n_classes: 10,
            latent_dim: 16,
            image_shape: ImageShape::new(8, 8, 3),
            hidden: vec![64, 64],
            classifier_hidden: Vec::new(),
            loss_weights: LossWeights::DIGITS,
            adv_weight: 1.0,
            learning_rate: 0.01,
            momentum: 0.9,
            pseudo_threshold: 0.9,
            pretrain_steps: 500,
            train_steps: 500,
            batch_size: 32,
            seed: 0,
            d_steps: 1,
            g_steps: 1,
            c_steps: 1,
            checkpoint_every: 0,
            eval_every: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let violations = validate_config(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ScganError::Config(violations))
        }
    }
}

/// Lists every violated invariant of `config`, naming the offending field.
pub fn validate_config(config: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.n_classes < 2 {
        out.push("n_classes below minimum 2".to_string());
    }
    if config.latent_dim == 0 {
        out.push("latent_dim must be positive".to_string());
    }
    if config.image_shape.is_empty() {
        out.push("image_shape must have positive dimensions".to_string());
    }
    if config.hidden.contains(&0) || config.classifier_hidden.contains(&0) {
        out.push("hidden widths must be positive".to_string());
    }
    let w = config.loss_weights;
    for (name, v) in [
        ("alpha", w.alpha),
        ("beta", w.beta),
        ("gamma", w.gamma),
        ("adv_weight", config.adv_weight),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            out.push(format!("{name} must be finite and nonnegative"));
        }
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        out.push("learning_rate must be positive".to_string());
    }
    if !(0.0..1.0).contains(&config.momentum) {
        out.push("momentum out of [0,1)".to_string());
    }
    if !(config.pseudo_threshold > 0.0 && config.pseudo_threshold <= 1.0) {
        out.push("pseudo_threshold out of (0,1]".to_string());
    }
    if config.batch_size < 2 {
        out.push("batch_size below minimum 2".to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_keys_are_fixed_complementary_one_hots() {
        let ks = make_domain_key(Domain::Source).onehot();
        let kt = make_domain_key(Domain::Target).onehot();
        assert_eq!(ks, [1.0, 0.0]);
        assert_eq!(kt, [0.0, 1.0]);
        assert_eq!([ks[0] + kt[0], ks[1] + kt[1]], [1.0, 1.0]);
        for d in [Domain::Source, Domain::Target] {
            let k = make_domain_key(d);
            assert_eq!(DomainKey::new(k.onehot()).unwrap(), k);
            assert_eq!(k.domain(), d);
        }
    }

    #[test]
    fn invalid_keys_rejected() {
        assert!(DomainKey::new([1.0, 1.0]).is_err());
        assert!(DomainKey::new([0.5, 0.5]).is_err());
        assert!(DomainKey::new([0.0, 0.0]).is_err());
    }

    #[test]
    fn default_digit_config_is_valid() {
        let c = RunConfig::default();
        assert_eq!(
            c.loss_weights,
            LossWeights {
                alpha: 10.0,
                beta: 1.0,
                gamma: 0.2
            }
        );
        assert_eq!(c.momentum, 0.9);
        assert!(validate_config(&c).is_empty());
    }

    #[test]
    fn violations_name_the_field() {
        let c = RunConfig {
            momentum: 1.5,
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&c), vec!["momentum out of [0,1)"]);
        let c = RunConfig {
            batch_size: 1,
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&c), vec!["batch_size below minimum 2"]);
        let c = RunConfig {
            learning_rate: 0.0,
            n_classes: 1,
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&c).len(), 2);
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::labeled(vec![0.0, 1.0], 0, Domain::Source).is_ok());
        assert!(Sample::labeled(vec![1.2], 0, Domain::Source).is_err());
        assert!(Sample::labeled(vec![f64::NAN], 0, Domain::Source).is_err());
        assert!(Sample::new(vec![0.5], None, Domain::Source).is_err());
        let t = Sample::unlabeled(vec![0.5]).unwrap();
        assert_eq!(t.domain(), Domain::Target);
        assert_eq!(t.label(), None);
    }

    #[test]
    fn batches_check_shape_and_labels() {
        let shape = ImageShape::new(1, 1, 2);
        let a = Sample::labeled(vec![0.1, 0.2], 1, Domain::Source).unwrap();
        let b = Sample::labeled(vec![0.3, 0.4], 0, Domain::Source).unwrap();
        let batch = LabeledBatch::from_samples(&[&a, &b], shape, 2).unwrap();
        assert_eq!(batch.pixels.shape(), &[2, 2]);
        assert_eq!(batch.labels, vec![1, 0]);
        assert!(LabeledBatch::from_samples(&[&a], shape, 1).is_err());
        assert!(LabeledBatch::from_samples(&[&a], ImageShape::new(1, 1, 3), 2).is_err());
        let t = Sample::unlabeled(vec![0.0, 0.0]).unwrap();
        assert!(LabeledBatch::from_samples(&[&t], shape, 2).is_err());
    }

    #[test]
    fn pseudo_label_rule() {
        let p = PseudoLabel::from_probs(&[0.97, 0.02, 0.01], 0.95);
        assert_eq!((p.class_id, p.accepted), (0, true));
        assert!(!PseudoLabel::from_probs(&[0.6, 0.4], 0.9).accepted);
        // ties: lowest index, and equality with the threshold is rejected
        let p = PseudoLabel::from_probs(&[0.5, 0.5], 0.5);
        assert_eq!((p.class_id, p.accepted), (0, false));
    }

    #[test]
    fn image_shape_parse() {
        assert_eq!("8x8x3".parse::<ImageShape>().unwrap(), ImageShape::new(8, 8, 3));
        assert!("8x8".parse::<ImageShape>().is_err());
    }
}
