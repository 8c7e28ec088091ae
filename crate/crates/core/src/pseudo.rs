//! Source-only pretraining and confidence-thresholded pseudo labels.

use std::io::Write;
use std::path::Path;

use crate::error::{Result, ScganError};
use crate::losses::source_classifier_objective;
use crate::networks::{classify, encode, predict, Group, ParameterSet};
use crate::optim::apply_all;
use crate::schedule::{BatchSchedule, PRETRAIN_STREAM};
use crate::types::{stack_pixels, LabeledBatch, Mat, PseudoLabel, RunConfig, Sample};

/// `argmax C(E(x))` per row with confidence `max prob`, accepted iff
/// confidence is strictly above `threshold`.
pub fn assign_pseudo_labels(params: &ParameterSet, x: &Mat, threshold: f64) -> Result<Vec<PseudoLabel>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ScganError::Config(vec![format!("pseudo threshold {threshold} out of (0,1]")]));
    }
    let probs = classify(params, &encode(params, x)?)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| PseudoLabel::from_probs(&r.to_vec(), threshold))
        .collect())
}

pub fn accuracy_on(params: &ParameterSet, samples: &[Sample], config: &RunConfig) -> Result<f64> {
    let x = stack_pixels(samples, config.image_shape)?;
    let pred = predict(params, &x)?;
    let hits = pred.iter().zip(samples).filter(|(p, s)| s.label() == Some(**p)).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains `E` and `C` on labeled source data for `config.pretrain_steps`
/// steps; returns the source training accuracy after each epoch (and after
/// the final step when it does not end an epoch).
pub fn pretrain_source(params: &mut ParameterSet, source: &[Sample], config: &RunConfig) -> Result<Vec<f64>> {
    if let Some(i) = source.iter().position(|s| s.label().is_none()) {
        return Err(ScganError::DatasetRecord {
            record: i,
            reason: "unlabeled sample in source data".into(),
        });
    }
    if source.is_empty() {
        return Err(ScganError::Dataset("empty source data".into()));
    }
    let schedule = BatchSchedule::new(source.len(), config.batch_size, config.seed, PRETRAIN_STREAM);
    let groups = [Group::Encoder, Group::Classifier];
    let mut curve = Vec::new();
    for step in 0..config.pretrain_steps as u64 {
        let picked: Vec<&Sample> = schedule.indices(step).into_iter().map(|i| &source[i]).collect();
        let batch = LabeledBatch::from_samples(&picked, config.image_shape, config.n_classes)?;
        let obj = source_classifier_objective(params, &batch, &groups)?;
        if !obj.value().is_finite() {
            return Err(ScganError::NonFinite("pretraining cross-entropy".into()).at_step(step));
        }
        apply_all(params, &obj.gradients(&groups), config.learning_rate, config.momentum).map_err(|e| e.at_step(step))?;
        if schedule.ends_epoch(step) || step + 1 == config.pretrain_steps as u64 {
            curve.push(accuracy_on(params, source, config)?);
        }
    }
    Ok(curve)
}

/// `index,class_id,confidence,accepted` rows for diagnosing pseudo-label drift.
pub fn write_pseudo_labels_csv(path: &Path, labels: &[PseudoLabel]) -> Result<()> {
    let mut out = String::from("index,class_id,confidence,accepted\n");
    for (i, p) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{},{},{}\n", p.class_id, p.confidence, p.accepted));
    }
    let mut f = std::fs::File::create(path).map_err(|e| ScganError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| ScganError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::init_parameters;
    use crate::types::{Domain, ImageShape};

    fn small() -> RunConfig {
        RunConfig {
            n_classes: 3,
            latent_dim: 4,
            image_shape: ImageShape::new(1, 1, 2),
            hidden: vec![8],
            pretrain_steps: 5,
            batch_size: 4,
            ..RunConfig::default()
        }
    }

    fn samples() -> Vec<Sample> {
        (0..12)
            .map(|i| Sample::labeled(vec![i as f64 / 12.0, 0.5], i % 3, Domain::Source).unwrap())
            .collect()
    }

    #[test]
    fn pretraining_touches_only_encoder_and_classifier() {
        let cfg = small();
        let mut params = init_parameters(&cfg, 1);
        let before = params.clone();
        let curve = pretrain_source(&mut params, &samples(), &cfg).unwrap();
        assert_eq!(curve.len(), 2); // epochs of 3 batches: after step 2, then final step 4
        for g in [Group::Generator, Group::Disc1, Group::Disc2] {
            assert_eq!(params.net(g), before.net(g));
            assert_eq!(params.momentum(g), before.momentum(g));
        }
        assert_ne!(params.net(Group::Encoder), before.net(Group::Encoder));
        assert_ne!(params.net(Group::Classifier), before.net(Group::Classifier));
    }

    #[test]
    fn zero_pretrain_steps_is_a_no_op() {
        let cfg = RunConfig {
            pretrain_steps: 0,
            ..small()
        };
        let mut params = init_parameters(&cfg, 2);
        let before = params.clone();
        assert!(pretrain_source(&mut params, &samples(), &cfg).unwrap().is_empty());
        assert_eq!(params, before);
    }

    #[test]
    fn unlabeled_source_rejected() {
        let cfg = small();
        let mut params = init_parameters(&cfg, 3);
        let mut data = samples();
        data.push(Sample::unlabeled(vec![0.1, 0.1]).unwrap());
        assert!(pretrain_source(&mut params, &data, &cfg).is_err());
    }

    #[test]
    fn threshold_domain_and_determinism() {
        let cfg = small();
        let params = init_parameters(&cfg, 4);
        let x = stack_pixels(&samples(), cfg.image_shape).unwrap();
        assert!(assign_pseudo_labels(&params, &x, 0.0).is_err());
        assert!(assign_pseudo_labels(&params, &x, 1.1).is_err());
        let a = assign_pseudo_labels(&params, &x, 0.5).unwrap();
        assert_eq!(a, assign_pseudo_labels(&params, &x, 0.5).unwrap());
        assert!(assign_pseudo_labels(&params, &x, 1.0).unwrap().iter().all(|p| !p.accepted));
    }

    #[test]
    fn csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pl.csv");
        let labels = [PseudoLabel {
            class_id: 2,
            confidence: 0.97,
            accepted: true,
        }];
        write_pseudo_labels_csv(&path, &labels).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "index,class_id,confidence,accepted\n0,2,0.97,true\n"
        );
    }
}
