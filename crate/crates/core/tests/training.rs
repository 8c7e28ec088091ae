use scgan::config::Experiment;
use scgan::data::{make_two_moons_pair, DomainPair};
use scgan::eval::{export_embeddings, grid_selection, render_image_grid, render_tile, run_ablation, target_accuracy};
use scgan::networks::{encode, generate, init_parameters};
use scgan::trainer::{fit, pretrained};
use scgan::types::{make_domain_key, stack_pixels, Domain, RunConfig};

fn moons(overrides: &[(&str, &str)]) -> (RunConfig, DomainPair) {
    let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let exp = Experiment::resolve("two_moons", None, &ov).unwrap();
    let pair = exp.data.generate(exp.run.seed).unwrap();
    (exp.run, pair)
}

#[test]
fn identical_runs_give_identical_streams() {
    let (cfg, pair) = moons(&[("pretrain_steps", "50"), ("train_steps", "20"), ("n_per_domain", "120")]);
    let a = fit(&cfg, &pair, None).unwrap();
    let b = fit(&cfg, &pair, None).unwrap();
    assert_eq!(a.state.history, b.state.history);
    assert_eq!(a.state.params, b.state.params);
    let c = fit(&RunConfig { seed: 1, ..cfg }, &pair, None).unwrap();
    assert_ne!(a.state.history, c.state.history);
}

#[test]
fn total_loss_falls_over_two_hundred_steps() {
    let (cfg, pair) = moons(&[("train_steps", "200"), ("latent_dim", "8")]);
    let out = fit(&cfg, &pair, None).unwrap();
    let h = &out.state.history;
    assert_eq!(h.len(), 200);
    assert!(h[199].total < h[0].total, "{} -> {}", h[0].total, h[199].total);
}

#[test]
fn ablation_arms_share_pretraining_and_differ_only_in_beta() {
    let (cfg, pair) = moons(&[("pretrain_steps", "60"), ("train_steps", "10"), ("n_per_domain", "100")]);
    let mut zero = cfg.clone();
    zero.loss_weights.beta = 0.0;
    let (a, ca) = pretrained(&cfg, &pair).unwrap();
    let (b, cb) = pretrained(&zero, &pair).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(ca, cb);

    let without = fit(&zero, &pair, None).unwrap();
    assert!(without
        .state
        .history
        .iter()
        .all(|r| r.semcon_source == 0.0 && r.semcon_target == 0.0));
    let with = fit(&cfg, &pair, None).unwrap();
    assert!(with.state.history.iter().any(|r| r.semcon_source > 0.0));

    let table = run_ablation(&cfg, &pair, &[0, 1, 2]).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.iter().all(|r| r.without_semantic_max_semcon == 0.0));
    assert!(run_ablation(&cfg, &pair, &[0, 1]).is_err());
}

#[test]
fn evaluation_leaves_parameters_alone() {
    let (cfg, pair) = moons(&[("n_per_domain", "60")]);
    let params = init_parameters(&cfg, 2);
    let before = params.clone();
    target_accuracy(&params, &pair).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_embeddings(&params, &pair, Some(&[1]), &dir.path().join("e.csv")).unwrap();
    render_image_grid(&params, &pair, 3, 0, 2).unwrap();
    assert_eq!(params, before);
}

#[test]
fn grid_columns_follow_the_translation_order() {
    let (cfg, pair) = moons(&[("n_per_domain", "40")]);
    let params = init_parameters(&cfg, 4);
    let (grid, layout) = render_image_grid(&params, &pair, 3, 9, 2).unwrap();
    assert_eq!(grid.width(), 6 * layout.tile_width);
    let picks = grid_selection(&pair, 3, 9).unwrap();
    for (row, &(i, j)) in picks.iter().enumerate() {
        let xs = stack_pixels([&pair.source[i]], pair.shape).unwrap();
        let xt = stack_pixels([&pair.target[j]], pair.shape).unwrap();
        let zs = encode(&params, &xs).unwrap();
        let zt = encode(&params, &xt).unwrap();
        let expected = [
            xs.row(0).to_vec(),
            generate(&params, &zs, make_domain_key(Domain::Source)).unwrap().row(0).to_vec(),
            generate(&params, &zs, make_domain_key(Domain::Target)).unwrap().row(0).to_vec(),
            xt.row(0).to_vec(),
            generate(&params, &zt, make_domain_key(Domain::Target)).unwrap().row(0).to_vec(),
            generate(&params, &zt, make_domain_key(Domain::Source)).unwrap().row(0).to_vec(),
        ];
        for (col, pixels) in expected.iter().enumerate() {
            let tile = render_tile(pixels, pair.shape, 2);
            let (x0, y0) = (col as u32 * layout.tile_width, row as u32 * layout.tile_height);
            for (x, y, p) in tile.enumerate_pixels() {
                assert_eq!(grid.get_pixel(x0 + x, y0 + y), p, "row {row} col {col}");
            }
        }
    }
}

#[test]
fn embedding_rows_and_projection() {
    let (cfg, pair) = moons(&[("n_per_domain", "50")]);
    let params = init_parameters(&cfg, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    let s = export_embeddings(&params, &pair, None, &path).unwrap();
    assert_eq!(s.rows, 100);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "domain,label,pc1,pc2,z_0,z_1,z_2,z_3,z_4,z_5,z_6,z_7");
    assert_eq!(lines.count(), 100);
    let filtered = export_embeddings(&params, &pair, Some(&[0]), &path).unwrap();
    assert_eq!(filtered.rows, 50);
}

/// Logistic regression on raw pixels, trained on the source domain.
fn linear_probe_target_accuracy(pair: &DomainPair) -> f64 {
    let xs: Vec<&[f64]> = pair.source.iter().map(|s| s.pixels()).collect();
    let ys: Vec<f64> = pair.source.iter().map(|s| s.label().unwrap() as f64).collect();
    let (mut w, mut b) = ([0.0f64; 2], 0.0f64);
    for _ in 0..2000 {
        let (mut gw, mut gb) = ([0.0; 2], 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            let p = 1.0 / (1.0 + (-(w[0] * x[0] + w[1] * x[1] + b)).exp());
            gw[0] += (p - y) * x[0];
            gw[1] += (p - y) * x[1];
            gb += p - y;
        }
        let n = xs.len() as f64;
        w[0] -= 5.0 * gw[0] / n;
        w[1] -= 5.0 * gw[1] / n;
        b -= 5.0 * gb / n;
    }
    let labels = pair.target_labels().unwrap();
    let hits = pair
        .target
        .iter()
        .zip(labels)
        .filter(|(s, &y)| {
            let x = s.pixels();
            usize::from(w[0] * x[0] + w[1] * x[1] + b > 0.0) == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

#[test]
fn rotation_creates_a_monotone_shift_for_a_linear_probe() {
    let mut means = Vec::new();
    for deg in [0.0, 15.0, 30.0, 45.0] {
        let accs: Vec<f64> = (0..5)
            .map(|seed| linear_probe_target_accuracy(&make_two_moons_pair(200, deg, 0.1, seed).unwrap()))
            .collect();
        means.push(accs.iter().sum::<f64>() / 5.0);
    }
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}
