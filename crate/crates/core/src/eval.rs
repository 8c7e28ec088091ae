//! Target-domain evaluation, the β ablation harness and file exports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use serde::Serialize;

use crate::data::{stream, DomainPair};
use crate::error::{Result, ScganError};
use crate::networks::{encode, generate, predict, ParameterSet};
use crate::trainer::{adapt, pretrained, TrainState};
use crate::types::{make_domain_key, stack_pixels, Domain, ImageShape, Mat, RunConfig, Sample};

const GRID_STREAM: u64 = 400;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Accuracy {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn accuracy_from_predictions(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<Accuracy> {
    if predicted.len() != truth.len() {
        return Err(ScganError::shape("accuracy", truth.len(), predicted.len()));
    }
    if predicted.is_empty() {
        return Err(ScganError::Dataset("no samples to evaluate".into()));
    }
    let mut confusion = vec![vec![0; n_classes]; n_classes];
    let mut hits = 0;
    for (&p, &t) in predicted.iter().zip(truth) {
        for label in [p, t] {
            if label >= n_classes {
                return Err(ScganError::LabelOutOfRange { label, n_classes });
            }
        }
        confusion[t][p] += 1;
        hits += usize::from(p == t);
    }
    Ok(Accuracy {
        accuracy: hits as f64 / predicted.len() as f64,
        confusion,
    })
}

fn pixels_of(samples: &[Sample], shape: ImageShape) -> Result<Mat> {
    stack_pixels(samples.iter(), shape)
}

/// Accuracy of argmax C(E(x_t)) against the held-out target labels.
pub fn target_accuracy(params: &ParameterSet, pair: &DomainPair) -> Result<Accuracy> {
    let labels = pair.target_labels().ok_or(ScganError::MissingEvalLabels)?;
    let predicted = predict(params, &pixels_of(&pair.target, pair.shape)?)?;
    accuracy_from_predictions(&predicted, labels, pair.n_classes)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub seed: u64,
    pub source_only: f64,
    pub without_semantic: f64,
    pub with_semantic: f64,
    /// Largest |semcon_source| + |semcon_target| seen in the β=0 arm.
    pub without_semantic_max_semcon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub beta: f64,
    pub rows: Vec<AblationRow>,
    pub mean_source_only: f64,
    pub mean_without_semantic: f64,
    pub mean_with_semantic: f64,
}

impl AblationTable {
    pub fn gap(&self) -> f64 {
        self.mean_with_semantic - self.mean_without_semantic
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,source_only,without_semantic,with_semantic\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.seed, r.source_only, r.without_semantic, r.with_semantic).unwrap();
        }
        writeln!(
            s,
            "mean,{},{},{}",
            self.mean_source_only, self.mean_without_semantic, self.mean_with_semantic
        )
        .unwrap();
        s
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn arm(start: &TrainState, config: &RunConfig, pair: &DomainPair) -> Result<TrainState> {
    let mut state = start.clone();
    adapt(&mut state, config, pair, None)?;
    Ok(state)
}

/// Per seed: one pretraining run, then two adaptation arms from the same
/// starting point that differ only in β.
pub fn run_ablation(config: &RunConfig, pair: &DomainPair, seeds: &[u64]) -> Result<AblationTable> {
    if seeds.len() < 3 {
        return Err(ScganError::Config(vec![format!(
            "ablation needs at least 3 seeds, got {}",
            seeds.len()
        )]));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        let with_cfg = RunConfig { seed, ..config.clone() };
        let mut without_cfg = with_cfg.clone();
        without_cfg.loss_weights.beta = 0.0;
        let annotate = |e: ScganError, arm: &str| ScganError::Config(vec![format!("seed {seed}, {arm}: {e}")]);

        let (start, _) = pretrained(&with_cfg, pair).map_err(|e| annotate(e, "pretraining"))?;
        let source_only = target_accuracy(&start.params, pair)?.accuracy;
        let with = arm(&start, &with_cfg, pair).map_err(|e| annotate(e, "with semantic loss"))?;
        let without = arm(&start, &without_cfg, pair).map_err(|e| annotate(e, "without semantic loss"))?;
        rows.push(AblationRow {
            seed,
            source_only,
            without_semantic: target_accuracy(&without.params, pair)?.accuracy,
            with_semantic: target_accuracy(&with.params, pair)?.accuracy,
            without_semantic_max_semcon: without
                .history
                .iter()
                .map(|r| r.semcon_source.abs() + r.semcon_target.abs())
                .fold(0.0, f64::max),
        });
    }
    Ok(AblationTable {
        beta: config.loss_weights.beta,
        mean_source_only: mean(rows.iter().map(|r| r.source_only)),
        mean_without_semantic: mean(rows.iter().map(|r| r.without_semantic)),
        mean_with_semantic: mean(rows.iter().map(|r| r.with_semantic)),
        rows,
    })
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One image as an RGB tile, each pixel repeated `scale` times per axis.
/// One channel renders gray, two render as (c0, c1, 0), three or more use
/// the first three.
pub fn render_tile(pixels: &[f64], shape: ImageShape, scale: u32) -> RgbImage {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let scale = scale.max(1);
    RgbImage::from_fn(w as u32 * scale, h as u32 * scale, |x, y| {
        let (px, py) = ((x / scale) as usize, (y / scale) as usize);
        let at = |ch: usize| pixels[(py * w + px) * c + ch];
        match c {
            1 => Rgb([to_u8(at(0)); 3]),
            2 => Rgb([to_u8(at(0)), to_u8(at(1)), 0]),
            _ => Rgb([to_u8(at(0)), to_u8(at(1)), to_u8(at(2))]),
        }
    })
}

/// Source and target sample indices for each grid row.
pub fn grid_selection(pair: &DomainPair, n_rows: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n_rows == 0 || n_rows > pair.source.len() || n_rows > pair.target.len() {
        return Err(ScganError::Config(vec![format!(
            "grid rows must be in 1..={}",
            pair.source.len().min(pair.target.len())
        )]));
    }
    let mut rng = stream(seed, GRID_STREAM);
    let s = sample(&mut rng, pair.source.len(), n_rows).into_vec();
    let t = sample(&mut rng, pair.target.len(), n_rows).into_vec();
    Ok(s.into_iter().zip(t).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub tile_width: u32,
    pub tile_height: u32,
}

pub const GRID_COLUMNS: [&str; 6] = ["x_s", "x_s->s", "x_s->t", "x_t", "x_t->t", "x_t->s"];

/// The grid as an image. Columns follow [`GRID_COLUMNS`].
pub fn render_image_grid(params: &ParameterSet, pair: &DomainPair, n_rows: usize, seed: u64, scale: u32) -> Result<(RgbImage, GridLayout)> {
    let picks = grid_selection(pair, n_rows, seed)?;
    let shape = pair.shape;
    let xs = stack_pixels(picks.iter().map(|&(i, _)| &pair.source[i]), shape)?;
    let xt = stack_pixels(picks.iter().map(|&(_, j)| &pair.target[j]), shape)?;
    let ks = make_domain_key(Domain::Source);
    let kt = make_domain_key(Domain::Target);
    let zs = encode(params, &xs)?;
    let zt = encode(params, &xt)?;
    let columns = [
        xs.clone(),
        generate(params, &zs, ks)?,
        generate(params, &zs, kt)?,
        xt.clone(),
        generate(params, &zt, kt)?,
        generate(params, &zt, ks)?,
    ];
    let probe = render_tile(&vec![0.0; shape.len()], shape, scale);
    let (tw, th) = probe.dimensions();
    let mut grid = RgbImage::new(tw * 6, th * n_rows as u32);
    for (col, m) in columns.iter().enumerate() {
        for row in 0..n_rows {
            let pixels: Vec<f64> = m.row(row).to_vec();
            let tile = render_tile(&pixels, shape, scale);
            image::imageops::replace(&mut grid, &tile, (col as u32 * tw) as i64, (row as u32 * th) as i64);
        }
    }
    Ok((
        grid,
        GridLayout {
            rows: n_rows,
            tile_width: tw,
            tile_height: th,
        },
    ))
}

/// Writes the six-column translation grid as PNG.
pub fn export_image_grid(
    params: &ParameterSet,
    pair: &DomainPair,
    n_rows: usize,
    seed: u64,
    scale: u32,
    path: &Path,
) -> Result<GridLayout> {
    let (grid, layout) = render_image_grid(params, pair, n_rows, seed, scale)?;
    let mut bytes = Vec::new();
    grid.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| ScganError::Image(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| ScganError::io(path, e))?;
    Ok(layout)
}

/// Mean and the top-`k` principal axes of the rows of `codes`. Each axis is
/// signed so its largest-magnitude component is positive.
pub fn principal_axes(codes: &Mat, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, d) = codes.dim();
    let mean: Vec<f64> = (0..d).map(|j| codes.column(j).sum() / n.max(1) as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in codes.rows() {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    cov /= n.max(2) as f64 - 1.0;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes = order
        .into_iter()
        .take(k)
        .map(|i| {
            let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            v.into_iter().map(|x| x * sign).collect()
        })
        .collect();
    (mean, axes)
}

pub fn project(code: &[f64], mean: &[f64], axis: &[f64]) -> f64 {
    code.iter().zip(mean).zip(axis).map(|((c, m), a)| (c - m) * a).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSummary {
    pub rows: usize,
    pub mean: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
}

/// CSV `domain,label,pc1,pc2,z_0,...` over source then target samples.
/// Target labels come from the evaluation table and are blank without it.
/// With `class_filter`, only samples whose known label is listed are kept.
pub fn export_embeddings(
    params: &ParameterSet,
    pair: &DomainPair,
    class_filter: Option<&[usize]>,
    path: &Path,
) -> Result<EmbeddingSummary> {
    let mut rows: Vec<(Domain, Option<usize>, &Sample)> = pair.source.iter().map(|s| (Domain::Source, s.label(), s)).collect();
    let labels = pair.target_labels();
    for (i, s) in pair.target.iter().enumerate() {
        rows.push((Domain::Target, labels.map(|l| l[i]), s));
    }
    if let Some(keep) = class_filter {
        rows.retain(|(_, l, _)| l.is_some_and(|l| keep.contains(&l)));
    }
    let x = stack_pixels(rows.iter().map(|r| r.2), pair.shape)?;
    let z = encode(params, &x)?;
    let (mean, axes) = principal_axes(&z, 2);
    let d = z.ncols();
    let mut out = String::from("domain,label,pc1,pc2");
    for j in 0..d {
        write!(out, ",z_{j}").unwrap();
    }
    out.push('\n');
    for ((domain, label, _), code) in rows.iter().zip(z.rows()) {
        let code = code.to_vec();
        let pcs: Vec<f64> = (0..2).map(|k| axes.get(k).map_or(0.0, |a| project(&code, &mean, a))).collect();
        write!(
            out,
            "{},{},{},{}",
            domain.name(),
            label.map(|l| l.to_string()).unwrap_or_default(),
            pcs[0],
            pcs[1]
        )
        .unwrap();
        for v in &code {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| ScganError::io(path, e))?;
    Ok(EmbeddingSummary {
        rows: rows.len(),
        mean,
        axes,
    })
}
