//! Pretraining followed by the alternating adaptation loop.
//!
//! Each adaptation step: assign pseudo labels, update `D1`/`D2` on the
//! discriminator objective with translated images held fixed, update
//! `E`/`G` on the generator objective, then update `C`/`E` on the
//! γ-weighted classifier objective.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::checkpoint::save_checkpoint;
use crate::data::DomainPair;
use crate::error::{Result, ScganError};
use crate::eval::{target_accuracy, Accuracy};
use crate::losses::{classifier_objective, discriminator_objective, generator_objective, translate, LossReport, Objective, Term};
use crate::networks::{init_parameters, Group, ParameterSet};
use crate::optim::apply_all;
use crate::pseudo::{assign_pseudo_labels, pretrain_source};
use crate::schedule::{BatchSchedule, SOURCE_STREAM, TARGET_STREAM};
use crate::types::{Domain, LabeledBatch, RunConfig, Sample, UnlabeledBatch};

const D_GROUPS: [Group; 2] = [Group::Disc1, Group::Disc2];
const G_GROUPS: [Group; 2] = [Group::Encoder, Group::Generator];
const C_GROUPS: [Group; 2] = [Group::Classifier, Group::Encoder];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParameterSet,
    /// Completed adaptation steps.
    pub step: u64,
    /// Seed of the batch schedule; with `step` it fixes every later batch.
    pub seed: u64,
    pub history: Vec<LossReport>,
}

impl TrainState {
    pub fn new(params: ParameterSet, seed: u64) -> TrainState {
        TrainState {
            params,
            step: 0,
            seed,
            history: Vec::new(),
        }
    }
}

fn ensure_finite(obj: &Objective) -> Result<()> {
    match obj.non_finite_term() {
        Some(t) => Err(ScganError::NonFinite(format!("loss term {}", t.name()))),
        None => Ok(()),
    }
}

/// Runs `n` sub-updates (at least one evaluation for the report) and
/// returns the objective evaluated before the first update.
fn sub_updates<F>(params: &mut ParameterSet, n: usize, groups: &[Group], scale: f64, config: &RunConfig, mut build: F) -> Result<Objective>
where
    F: FnMut(&ParameterSet) -> Result<Objective>,
{
    let first = build(params)?;
    ensure_finite(&first)?;
    for i in 0..n {
        let obj = if i == 0 { None } else { Some(build(params)?) };
        let obj = obj.as_ref().unwrap_or(&first);
        ensure_finite(obj)?;
        let mut grads = obj.gradients(groups);
        if scale != 1.0 {
            for (_, g) in &mut grads {
                g.tensors_mut().for_each(|t| *t *= scale);
            }
        }
        apply_all(params, &grads, config.learning_rate, config.momentum)?;
    }
    Ok(first)
}

fn step_inner(params: &mut ParameterSet, source: &LabeledBatch, target: &UnlabeledBatch, config: &RunConfig) -> Result<LossReport> {
    let pseudo = assign_pseudo_labels(params, &target.pixels, config.pseudo_threshold)?;
    let weights = config.loss_weights;

    let styled = translate(params, &source.pixels, &target.pixels)?;
    let d = sub_updates(params, config.d_steps, &D_GROUPS, 1.0, config, |p| {
        discriminator_objective(p, source, target, &pseudo, &styled, config.adv_weight, &D_GROUPS)
    })?;
    let g = sub_updates(params, config.g_steps, &G_GROUPS, 1.0, config, |p| {
        generator_objective(p, source, target, &pseudo, &weights, config.adv_weight, &G_GROUPS)
    })?;
    let c = sub_updates(params, config.c_steps, &C_GROUPS, weights.gamma, config, |p| {
        classifier_objective(p, source, target, &pseudo, &C_GROUPS)
    })?;
    if !params.all_finite() {
        return Err(ScganError::NonFinite("parameters after update".into()));
    }
    Ok(LossReport::from_objectives(&g, &d, &c, weights.gamma))
}

/// One adaptation step. On any error the parameters are restored to their
/// pre-step values and the step counter is unchanged.
pub fn train_step(state: &mut TrainState, source: &LabeledBatch, target: &UnlabeledBatch, config: &RunConfig) -> Result<LossReport> {
    let snapshot = state.params.clone();
    match step_inner(&mut state.params, source, target, config) {
        Ok(report) => {
            state.step += 1;
            state.history.push(report.clone());
            Ok(report)
        }
        Err(e) => {
            state.params = snapshot;
            Err(e.at_step(state.step))
        }
    }
}

/// The source and target batches of adaptation step `step`.
pub fn batches_for_step(pair: &DomainPair, config: &RunConfig, seed: u64, step: u64) -> Result<(LabeledBatch, UnlabeledBatch)> {
    let s_sched = BatchSchedule::new(pair.source.len(), config.batch_size, seed, SOURCE_STREAM);
    let t_sched = BatchSchedule::new(pair.target.len(), config.batch_size, seed, TARGET_STREAM);
    let s: Vec<&Sample> = s_sched.indices(step).into_iter().map(|i| &pair.source[i]).collect();
    let t: Vec<&Sample> = t_sched.indices(step).into_iter().map(|i| &pair.target[i]).collect();
    Ok((
        LabeledBatch::from_samples(&s, config.image_shape, config.n_classes)?,
        UnlabeledBatch::from_samples(&t, config.image_shape)?,
    ))
}

#[derive(Serialize)]
struct StepRecord<'a> {
    kind: &'static str,
    step: u64,
    wall_time: f64,
    #[serde(flatten)]
    report: &'a LossReport,
}

#[derive(Serialize)]
struct EvalRecord {
    kind: &'static str,
    step: u64,
    wall_time: f64,
    target_accuracy: f64,
}

fn wall_time() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Output locations of a run: `manifest.txt`, `metrics.jsonl`,
/// `checkpoints/step_<k>.ckpt`, `final.ckpt` and `final_metrics.json`.
pub struct RunDir {
    dir: PathBuf,
    metrics: BufWriter<File>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<RunDir> {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| ScganError::io(dir, e))?;
        let path = dir.join("metrics.jsonl");
        let file = File::options()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ScganError::io(&path, e))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            metrics: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn write_line<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let path = self.dir.join("metrics.jsonl");
        let line = serde_json::to_string(record).expect("serializable record");
        writeln!(self.metrics, "{line}").map_err(|e| ScganError::io(&path, e))
    }

    pub fn log_step(&mut self, step: u64, report: &LossReport) -> Result<()> {
        self.write_line(&StepRecord {
            kind: "step",
            step,
            wall_time: wall_time(),
            report,
        })
    }

    pub fn log_eval(&mut self, step: u64, accuracy: f64) -> Result<()> {
        self.write_line(&EvalRecord {
            kind: "eval",
            step,
            wall_time: wall_time(),
            target_accuracy: accuracy,
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush().map_err(|e| ScganError::io(&self.dir, e))
    }
}

/// Flat `key = value` manifest: the resolved config text plus seed,
/// dataset digests and code version.
pub fn write_manifest(path: &Path, resolved_config: &str, seed: u64, pair: Option<&DomainPair>) -> Result<()> {
    let mut s = String::from("# run manifest\n");
    s.push_str(resolved_config);
    if !resolved_config.ends_with('\n') {
        s.push('\n');
    }
    s.push_str(&format!("run_seed = {seed}\n"));
    if let Some(pair) = pair {
        s.push_str(&format!("source_digest = {}\n", pair.digest(Domain::Source)));
        s.push_str(&format!("target_digest = {}\n", pair.digest(Domain::Target)));
        s.push_str(&format!("source_count = {}\n", pair.source.len()));
        s.push_str(&format!("target_count = {}\n", pair.target.len()));
    }
    s.push_str(&format!(
        "code_version = {} {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    ));
    fs::write(path, s).map_err(|e| ScganError::io(path, e))
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub state: TrainState,
    pub pretrain_curve: Vec<f64>,
    /// Pretrain-only model on the target domain, when evaluation labels exist.
    pub source_only: Option<Accuracy>,
    pub final_accuracy: Option<Accuracy>,
}

#[derive(Serialize)]
struct FinalMetrics {
    steps: u64,
    pretrain_curve: Vec<f64>,
    source_only_target_accuracy: Option<f64>,
    target_accuracy: Option<f64>,
    confusion: Option<Vec<Vec<usize>>>,
}

fn check_pair(config: &RunConfig, pair: &DomainPair) -> Result<()> {
    if pair.shape != config.image_shape || pair.n_classes != config.n_classes {
        return Err(ScganError::Config(vec![format!(
            "data ({}, {} classes) does not match config ({}, {} classes)",
            pair.shape, pair.n_classes, config.image_shape, config.n_classes
        )]));
    }
    Ok(())
}

/// Seeded initialization plus source-only pretraining.
pub fn pretrained(config: &RunConfig, pair: &DomainPair) -> Result<(TrainState, Vec<f64>)> {
    config.validate()?;
    check_pair(config, pair)?;
    let mut params = init_parameters(config, config.seed);
    let curve = pretrain_source(&mut params, &pair.source, config)?;
    Ok((TrainState::new(params, config.seed), curve))
}

/// Continues adaptation from `state.step` up to `config.train_steps`.
pub fn adapt(state: &mut TrainState, config: &RunConfig, pair: &DomainPair, mut run: Option<&mut RunDir>) -> Result<()> {
    config.validate()?;
    check_pair(config, pair)?;
    while state.step < config.train_steps as u64 {
        let (s, t) = batches_for_step(pair, config, state.seed, state.step)?;
        let report = train_step(state, &s, &t, config)?;
        if let Some(run) = run.as_deref_mut() {
            run.log_step(state.step, &report)?;
            if config.eval_every > 0 && state.step % config.eval_every as u64 == 0 && pair.target_labels().is_some() {
                run.log_eval(state.step, target_accuracy(&state.params, pair)?.accuracy)?;
            }
            if config.checkpoint_every > 0 && state.step % config.checkpoint_every as u64 == 0 {
                save_checkpoint(state, &run.path().join("checkpoints").join(format!("step_{}.ckpt", state.step)))?;
            }
        }
    }
    if let Some(run) = run {
        run.flush()?;
    }
    Ok(())
}

/// Pretraining, then `config.train_steps` adaptation steps. With a run
/// directory, also writes the manifest, metrics stream and checkpoints.
pub fn fit(config: &RunConfig, pair: &DomainPair, out: Option<(&Path, &str)>) -> Result<FitOutcome> {
    config.validate()?;
    check_pair(config, pair)?;
    let mut run = match out {
        Some((dir, resolved)) => {
            let run = RunDir::create(dir)?;
            write_manifest(&dir.join("manifest.txt"), resolved, config.seed, Some(pair))?;
            Some(run)
        }
        None => None,
    };
    let (mut state, pretrain_curve) = pretrained(config, pair)?;
    let has_labels = pair.target_labels().is_some();
    let source_only = has_labels.then(|| target_accuracy(&state.params, pair)).transpose()?;
    adapt(&mut state, config, pair, run.as_mut())?;
    let final_accuracy = has_labels.then(|| target_accuracy(&state.params, pair)).transpose()?;
    if let Some(run) = &run {
        save_checkpoint(&state, &run.path().join("final.ckpt"))?;
        let metrics = FinalMetrics {
            steps: state.step,
            pretrain_curve: pretrain_curve.clone(),
            source_only_target_accuracy: source_only.as_ref().map(|a| a.accuracy),
            target_accuracy: final_accuracy.as_ref().map(|a| a.accuracy),
            confusion: final_accuracy.as_ref().map(|a| a.confusion.clone()),
        };
        let path = run.path().join("final_metrics.json");
        fs::write(&path, serde_json::to_string_pretty(&metrics).unwrap()).map_err(|e| ScganError::io(&path, e))?;
    }
    Ok(FitOutcome {
        state,
        pretrain_curve,
        source_only,
        final_accuracy,
    })
}

/// Trains `E` and `G` on the α-weighted reconstruction terms alone, on one
/// fixed batch pair. Returns the unweighted `l1(x_ss, x_s)` before every
/// step and after the last one.
pub fn overfit_reconstruction(
    params: &mut ParameterSet,
    source: &LabeledBatch,
    target: &UnlabeledBatch,
    config: &RunConfig,
    steps: usize,
) -> Result<Vec<f64>> {
    let weights = config.loss_weights;
    if !(weights.alpha > 0.0) {
        return Err(ScganError::Config(vec!["reconstruction overfit needs alpha > 0".into()]));
    }
    let mut curve = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let pseudo = assign_pseudo_labels(params, &target.pixels, config.pseudo_threshold)?;
        let mut obj = generator_objective(params, source, target, &pseudo, &weights, config.adv_weight, &G_GROUPS)?;
        curve.push(obj.term(Term::ReconSource) / weights.alpha);
        if i == steps {
            break;
        }
        let grads = obj.gradients_of(&[Term::ReconSource, Term::ReconTarget], &G_GROUPS);
        apply_all(params, &grads, config.learning_rate, config.momentum).map_err(|e| e.at_step(i as u64))?;
    }
    Ok(curve)
}
