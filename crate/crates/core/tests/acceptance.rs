//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers to run
//! a subset: `cargo test --test acceptance -- 5 6`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solartformer::autodiff::{grad_check, grad_check_coords, Graph, Tensor, TensorError, Var};
use solartformer::data::{encode_cyclic, read_fleet, PipelineConfig, PreparedDataset, DAYS_PER_YEAR, SLOTS_PER_DAY};
use solartformer::metrics::{ccc, kl_divergence, mse, percentage_error, MetricsConfig};
use solartformer::model::{build_causal_mask, load_checkpoint, save_checkpoint, ModelError, SolarTformer, SolarTformerConfig};
use solartformer::synth::{generate_fleet, write_fleet, FleetSpec};
use solartformer::train::{
    ablate, ablation_settings, artifacts, cross_validate, train_final, AblationSetting, AdamWConfig, AdamWState,
    TrainConfig,
};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Final-model epochs for criterion 5; the default training budget.
const LEARN_EPOCHS: usize = 300;
/// Epochs per ablation setting for criterion 6.
const ABLATION_EPOCHS: usize = 100;
/// Epochs per fold for criterion 7.
const CV_EPOCHS: usize = 60;
/// Epochs for the determinism runs of criteria 6 and 8.
const SMOKE_EPOCHS: usize = 1;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn unwrap_tensor(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::InvalidArgument(other.to_string()),
    }
}

// 1 ------------------------------------------------------------------------

fn op_checks() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let a = random(&[2, 3, 4], &mut rng, 1.0);
    let b = random(&[2, 4, 3], &mut rng, 1.0);
    let v = random(&[4], &mut rng, 1.0);
    let same = random(&[2, 3, 4], &mut rng, 1.0);
    // Keep elementwise kinks (relu, abs) away from the probe step.
    let away = Tensor::new(
        vec![3, 4],
        (0..12).map(|i| if i % 2 == 0 { 0.3 + 0.1 * i as f64 } else { -0.4 - 0.05 * i as f64 }).collect(),
    )
    .unwrap();
    let scores = random(&[2, 4, 4], &mut rng, 2.0);
    let mask = build_causal_mask(4).map_err(err)?.tensor().clone();
    let ln_x = random(&[3, 5], &mut rng, 2.0);
    let ln_g = random(&[5], &mut rng, 1.0);
    let ln_b = random(&[5], &mut rng, 1.0);
    let weights = random(&[64], &mut rng, 1.0);

    // Every op output is reduced with a fixed random projection.
    let proj = |g: &mut Graph, out: Var| -> Result<Var, TensorError> {
        let n: usize = g.shape(out).iter().product();
        let w = Tensor::new(g.shape(out).to_vec(), weights.data()[..n].to_vec())?;
        let w = g.constant(w);
        let p = g.mul(out, w)?;
        g.sum(p)
    };
    type Case<'a> = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var, TensorError> + 'a>);
    let cases: Vec<Case> = vec![
        ("matmul", vec![a.clone(), b.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.matmul(x[0], x[1])?;
            proj(g, o)
        })),
        ("add", vec![a.clone(), v.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.add(x[0], x[1])?;
            proj(g, o)
        })),
        ("mul", vec![a.clone(), same.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.mul(x[0], x[1])?;
            proj(g, o)
        })),
        ("scale", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.scale(x[0], -1.7)?;
            proj(g, o)
        })),
        ("relu", vec![away.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.relu(x[0])?;
            proj(g, o)
        })),
        ("abs", vec![away.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.abs(x[0])?;
            proj(g, o)
        })),
        ("square", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.square(x[0])?;
            proj(g, o)
        })),
        ("sum", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let s = g.square(x[0])?;
            g.sum(s)
        })),
        ("mean", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let s = g.square(x[0])?;
            g.mean(s)
        })),
        ("mse", vec![a.clone(), same.clone()], Box::new(|g: &mut Graph, x: &[Var]| g.mse(x[0], x[1]))),
        ("masked_softmax", vec![scores.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.masked_softmax(x[0], &mask)?;
            proj(g, o)
        })),
        ("layer_norm", vec![ln_x.clone(), ln_g.clone(), ln_b.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.layer_norm(x[0], x[1], x[2], 1e-5)?;
            proj(g, o)
        })),
        ("concat", vec![a.clone(), same.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.concat(&[x[0], x[1]], 1)?;
            proj(g, o)
        })),
        ("slice", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.slice(x[0], 2, 1, 2)?;
            proj(g, o)
        })),
        ("tile", vec![v.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let r = g.reshape(x[0], &[1, 4])?;
            let o = g.tile(r, 0, 3)?;
            proj(g, o)
        })),
        ("reshape", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.reshape(x[0], &[6, 4])?;
            proj(g, o)
        })),
        ("permute", vec![a.clone()], Box::new(|g: &mut Graph, x: &[Var]| {
            let o = g.permute(x[0], &[2, 0, 1])?;
            proj(g, o)
        })),
    ];
    let n = cases.len();
    for (name, inputs, f) in cases {
        let r = grad_check(|g, x| f(g, x), &inputs, 1e-6, 1e-4).map_err(err)?;
        ensure(r.passed, format!("op {name}: rel error {:.2e}", r.max_rel_error))?;
    }
    Ok(n)
}

fn criterion_1() -> Outcome {
    let ops = op_checks()?;
    let config = SolarTformerConfig {
        seq_len: 4,
        model_dim: 8,
        heads: 2,
        blocks: 1,
        weather_dim: 3,
        metadata_dim: 2,
        ffn_hidden: 16,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = SolarTformer::new(config, &mut rng).map_err(err)?;
    for t in model.params_mut().tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let w = random(&[2, 4, 3], &mut rng, 1.0);
    let m = random(&[2, 2], &mut rng, 1.0);
    let y = random(&[2, 4], &mut rng, 1.0);
    let inputs = model.params().tensors().to_vec();
    let total: usize = inputs.iter().map(Tensor::len).sum();
    // 120 distinct weights spread over the whole parameter vector.
    let mut flat: Vec<usize> = (0..total).collect();
    for i in 0..120 {
        let j = rng.random_range(i..total);
        flat.swap(i, j);
    }
    let coords: Vec<(usize, usize)> = flat[..120]
        .iter()
        .map(|&k| {
            let mut rest = k;
            let mut i = 0;
            while rest >= inputs[i].len() {
                rest -= inputs[i].len();
                i += 1;
            }
            (i, rest)
        })
        .collect();
    let f = |g: &mut Graph, vars: &[Var]| {
        let (wv, mv, yv) = (g.constant(w.clone()), g.constant(m.clone()), g.constant(y.clone()));
        let out = model.forward(g, vars, wv, mv).map_err(unwrap_tensor)?;
        g.mse(out.prediction, yv)
    };
    // Some weights (the key bias) have an exactly zero gradient, so the step
    // is chosen to keep round-off in the differences near 1e-11.
    let r = grad_check_coords(f, &inputs, &coords, 1e-5, 1e-4).map_err(err)?;
    ensure(r.passed, format!("full model: max rel error {:.2e} at {:?}", r.max_rel_error, r.worst))?;
    Ok(format!(
        "{ops} ops; full model {} weights, max rel error {:.2e} < 1e-4 (max abs {:.1e})",
        r.checked, r.max_rel_error, r.max_abs_error
    ))
}

// 2 ------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let config = SolarTformerConfig::default();
    let (t, dw) = (config.seq_len, config.weather_dim);
    let steps = [0, 1, 47, 94, 95];
    for draw in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + draw);
        let model = SolarTformer::new(config.clone(), &mut rng).map_err(err)?;
        let w = random(&[t, dw], &mut rng, 2.0);
        let m = random(&[config.metadata_dim], &mut rng, 2.0);
        let base = model.predict(&w, &m).map_err(err)?;
        for &j in &steps {
            let mut p = w.clone();
            for k in 0..dw {
                p.data_mut()[j * dw + k] += rng.random_range(0.5..3.0);
            }
            let y = model.predict(&p, &m).map_err(err)?;
            for i in 0..=j {
                ensure(
                    y[i].to_bits() == base[i].to_bits(),
                    format!("draw {draw}: weather step {j} changed prediction {i}"),
                )?;
            }
        }
    }
    Ok(format!("20 draws at T={t}, d=64, h=4, N=2; steps {steps:?} leave earlier outputs bitwise unchanged"))
}

// 3 ------------------------------------------------------------------------

/// Brute-force references computed along different routes from the library.
mod oracle {
    pub fn mse(y: &[f64], p: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..y.len() {
            let d = y[i] - p[i];
            acc += d * d;
        }
        acc / y.len() as f64
    }

    pub fn pe(y: &[f64], p: &[f64]) -> f64 {
        let num: f64 = (0..y.len()).map(|i| (y[i] - p[i]).abs()).sum();
        let den: f64 = y.iter().map(|v| v.abs()).sum();
        num / den * 100.0
    }

    /// Counts bin membership by interval comparison instead of division.
    pub fn kl(y: &[f64], p: &[f64], bins: usize, eps: f64) -> f64 {
        let all: Vec<f64> = y.iter().chain(p).copied().collect();
        let lo = all.iter().cloned().fold(f64::MAX, f64::min);
        let hi = all.iter().cloned().fold(f64::MIN, f64::max);
        if lo == hi {
            return 0.0;
        }
        let w = (hi - lo) / bins as f64;
        let count = |s: &[f64], k: usize| -> f64 {
            let a = lo + k as f64 * w;
            let b = lo + (k + 1) as f64 * w;
            s.iter().filter(|&&v| v >= a && (v < b || k == bins - 1)).count() as f64 / s.len() as f64
        };
        let mut total = 0.0;
        for k in 0..bins {
            let pk = (count(y, k) + eps) / (1.0 + bins as f64 * eps);
            let qk = (count(p, k) + eps) / (1.0 + bins as f64 * eps);
            if pk > 0.0 {
                total += pk * (pk.ln() - qk.ln());
            }
        }
        total
    }

    /// Via raw second moments and the correlation coefficient.
    pub fn ccc(y: &[f64], p: &[f64]) -> f64 {
        let n = y.len() as f64;
        let mx = y.iter().sum::<f64>() / n;
        let my = p.iter().sum::<f64>() / n;
        let sxx = y.iter().map(|a| a * a).sum::<f64>() / n - mx * mx;
        let syy = p.iter().map(|b| b * b).sum::<f64>() / n - my * my;
        let sxy = y.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / n - mx * my;
        let rho = sxy / (sxx * syy).sqrt();
        2.0 * rho * sxx.sqrt() * syy.sqrt() / (sxx + syy + (mx - my).powi(2))
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for pair in 0..100 {
        let n = rng.random_range(2..300);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let p: Vec<f64> = y.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
        let checks = [
            ("mse", mse(&y, &p).map_err(err)?, oracle::mse(&y, &p)),
            ("pe", percentage_error(&y, &p).map_err(err)?, oracle::pe(&y, &p)),
            ("kl", kl_divergence(&y, &p, 50, 1e-10).map_err(err)?, oracle::kl(&y, &p, 50, 1e-10)),
            ("ccc", ccc(&y, &p).map_err(err)?, oracle::ccc(&y, &p)),
        ];
        for (name, got, want) in checks {
            let d = (got - want).abs();
            worst = worst.max(d);
            ensure(d <= 1e-10, format!("pair {pair}: {name} {got} vs oracle {want}"))?;
        }
    }
    let pe = percentage_error(&[0.0, 2.0], &[1.0, 1.0]).map_err(err)?;
    ensure(pe == 100.0, format!("PE worked example gave {pe}"))?;
    let ramp: Vec<f64> = (0..10).map(f64::from).collect();
    let rev: Vec<f64> = ramp.iter().rev().copied().collect();
    let c = ccc(&ramp, &rev).map_err(err)?;
    ensure(c == -1.0, format!("CCC reversed ramp gave {c}"))?;
    // P = [1, 0], Q = [1/2, 1/2]: KL = ln 2.
    let kl = kl_divergence(&[0.0, 0.0], &[0.0, 1.0], 2, 0.0).map_err(err)?;
    ensure(kl == std::f64::consts::LN_2, format!("KL two-bin case gave {kl}"))?;
    Ok(format!(
        "100 pairs within {worst:.1e} of the oracles; PE=100, CCC=-1, KL=ln 2 exact"
    ))
}

// 4 ------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let expected = [(0, 1.0, 0.0), (24, 0.0, 1.0), (48, -1.0, 0.0), (72, 0.0, -1.0)];
    for (slot, c, s) in expected {
        let (gc, gs) = encode_cyclic(slot, SLOTS_PER_DAY).map_err(err)?;
        ensure(
            (gc - c).abs() <= 1e-12 && (gs - s).abs() <= 1e-12,
            format!("slot {slot} -> ({gc}, {gs})"),
        )?;
    }
    let mut worst: f64 = 0.0;
    for (n, period) in [(SLOTS_PER_DAY, SLOTS_PER_DAY), (DAYS_PER_YEAR, DAYS_PER_YEAR)] {
        for i in 0..n {
            let (c, s) = encode_cyclic(i, period).map_err(err)?;
            worst = worst.max((c * c + s * s - 1.0).abs());
        }
    }
    ensure(worst <= 1e-12, format!("unit circle off by {worst:e}"))?;
    Ok(format!("quarter turns exact to 1e-12; max |c²+s²-1| = {worst:.1e} over 96 slots and 365 days"))
}

// 5 ------------------------------------------------------------------------

fn default_dataset(noise: f64) -> Result<PreparedDataset, String> {
    let fleet = FleetSpec { noise_scale: noise, ..Default::default() };
    let (tables, meta) = generate_fleet(&fleet).map_err(err)?;
    PreparedDataset::build(&tables, &meta, 0, 5).map_err(err)
}

fn model_for(ds: &PreparedDataset) -> SolarTformerConfig {
    SolarTformerConfig {
        weather_dim: ds.weather_dim(),
        metadata_dim: ds.metadata_dim(),
        ..Default::default()
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let ds = default_dataset(0.02)?;
    let config = TrainConfig { epochs: LEARN_EPOCHS, ..Default::default() };
    let out = train_final(&ds, &model_for(&ds), &config, &MetricsConfig::default()).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let (pe, base) = (out.report.pe, out.persistence.pe);
    let gain = 1.0 - pe / base;
    let summary = format!(
        "{LEARN_EPOCHS} epochs: test PE {pe:.3}% vs persistence {base:.3}% ({:.1}% better), CCC {:.4}, {secs:.0} s",
        100.0 * gain,
        out.report.ccc
    );
    ensure(gain >= 0.30, format!("{summary}; needs >= 30% better"))?;
    ensure(out.report.ccc > 0.9, format!("{summary}; needs CCC > 0.9"))?;
    ensure(secs < 1800.0, format!("{summary}; over the 30 minute budget"))?;
    Ok(summary)
}

// 6 ------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let ds = default_dataset(0.02)?;
    let base = model_for(&ds);

    let smoke = TrainConfig { epochs: SMOKE_EPOCHS, ..Default::default() };
    let all = ablation_settings();
    let t1 = artifacts::ablation_csv(&ablate(&ds, &base, &smoke, &all).map_err(err)?);
    let t2 = artifacts::ablation_csv(&ablate(&ds, &base, &smoke, &all).map_err(err)?);
    ensure(t1 == t2, "ablation table differs between identical runs")?;
    ensure(t1.lines().count() == 9, "ablation table does not have 8 rows")?;

    // Settings train independently with the same seed and split, so this
    // subset reproduces the corresponding rows of the full grid.
    let picked = [AblationSetting::Blocks(2), AblationSetting::NoAttention, AblationSetting::NoMetadata];
    let config = TrainConfig { epochs: ABLATION_EPOCHS, ..Default::default() };
    let rows = ablate(&ds, &base, &config, &picked).map_err(err)?;
    let (full, no_attn, no_meta) = (rows[0].test_mse, rows[1].test_mse, rows[2].test_mse);
    let summary = format!(
        "{ABLATION_EPOCHS} epochs: test MSE N=2 {full:.5}, no-attention {no_attn:.5} ({:.2}x), no-metadata {no_meta:.5}; 8-row table reproducible",
        no_attn / full
    );
    ensure(no_attn > 3.0 * full, format!("{summary}; needs no-attention > 3x"))?;
    ensure(no_meta > full, format!("{summary}; needs no-metadata > N=2"))?;
    Ok(summary)
}

// 7 ------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let ds = default_dataset(0.1)?;
    let config = TrainConfig { epochs: CV_EPOCHS, ..Default::default() };
    let report = cross_validate(&ds, &model_for(&ds), &config, true).map_err(err)?;
    let unreg = report.run(false).ok_or("missing unregularized run")?;
    let reg = report.run(true).ok_or("missing regularized run")?;
    ensure(unreg.folds.len() == 5 && reg.folds.len() == 5, "expected 5 folds")?;
    let summary = format!(
        "{CV_EPOCHS} epochs/fold, noise 0.1: mean gap regularized {:.5} vs unregularized {:.5}",
        reg.mean_gap(),
        unreg.mean_gap()
    );
    ensure(reg.mean_gap() < unreg.mean_gap(), format!("{summary}; needs regularized < unregularized"))?;
    Ok(summary)
}

// 8 ------------------------------------------------------------------------

fn pipeline_run(root: &std::path::Path) -> Result<[Vec<u8>; 4], String> {
    let data = root.join("data");
    let cfg = PipelineConfig::default();
    let (tables, meta) = generate_fleet(&FleetSpec::default()).map_err(err)?;
    write_fleet(&data, &tables, &meta, &cfg).map_err(err)?;
    let (tables, meta) = read_fleet(&data, &cfg).map_err(err)?;
    let ds = PreparedDataset::build(&tables, &meta, 0, 5).map_err(err)?;
    let path = root.join("dataset.stfc");
    ds.save(&path).map_err(err)?;
    let ds = PreparedDataset::load(&path).map_err(err)?;
    let config = TrainConfig { epochs: 2, ..Default::default() };
    let out = train_final(&ds, &model_for(&ds), &config, &MetricsConfig::default()).map_err(err)?;
    let metrics = serde_json::to_vec_pretty(&(&out.report, &out.persistence)).map_err(err)?;
    let smoke = TrainConfig { epochs: SMOKE_EPOCHS, ..Default::default() };
    let rows = ablate(&ds, &model_for(&ds), &smoke, &ablation_settings()).map_err(err)?;
    Ok([
        std::fs::read(&path).map_err(err)?,
        artifacts::loss_csv(&out.curve).into_bytes(),
        metrics,
        artifacts::ablation_csv(&rows).into_bytes(),
    ])
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let ra = pipeline_run(a.path())?;
    let rb = pipeline_run(b.path())?;
    let names = ["prepared dataset", "loss CSV", "metrics JSON", "ablation CSV"];
    for ((x, y), name) in ra.iter().zip(&rb).zip(names) {
        ensure(x == y, format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "dataset ({} bytes), loss CSV, metrics JSON and ablation CSV byte-identical across two runs",
        ra[0].len()
    ))
}

// 9 ------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let step = |s: &mut AdamWState, theta: f64, g: f64| -> Result<f64, String> {
        let mut p = [Tensor::vector(vec![theta])];
        s.step(&mut p, &[vec![g]]).map_err(err)?;
        Ok(p[0].data()[0])
    };

    let c = AdamWConfig { weight_decay: 0.0, ..Default::default() };
    let mut s = AdamWState::new(c, &[Tensor::vector(vec![1.0])]);
    let first = step(&mut s, 1.0, 1.0)?;
    ensure((first - 0.99).abs() < 1e-9, format!("first step gave {first}"))?;

    // Hand-derived recurrences with non-default settings.
    let c = AdamWConfig { lr: 0.05, beta1: 0.8, beta2: 0.99, eps: 1e-6, weight_decay: 0.03 };
    let grads = [0.7, -0.2, 1.5, 0.0, -3.0];
    let mut s = AdamWState::new(c, &[Tensor::vector(vec![-0.4])]);
    let (mut theta, mut expect, mut m, mut v) = (-0.4, -0.4f64, 0.0f64, 0.0f64);
    let mut worst: f64 = 0.0;
    for (i, &g) in grads.iter().enumerate() {
        let t = i as i32 + 1;
        m = 0.8 * m + 0.2 * g;
        v = 0.99 * v + 0.01 * g * g;
        let update = (m / (1.0 - 0.8f64.powi(t))) / ((v / (1.0 - 0.99f64.powi(t))).sqrt() + 1e-6);
        expect -= 0.05 * (0.03 * expect + update);
        theta = step(&mut s, theta, g)?;
        worst = worst.max((theta - expect).abs());
    }
    ensure(worst <= 1e-12, format!("5-step sequence off by {worst:e}"))?;

    // Constant gradient without decay: bias correction makes every step lr·g/(|g|+ε).
    let c = AdamWConfig { weight_decay: 0.0, ..Default::default() };
    let mut s = AdamWState::new(c, &[Tensor::vector(vec![2.0])]);
    let mut theta = 2.0;
    for _ in 0..10 {
        theta = step(&mut s, theta, 0.5)?;
    }
    let closed = 2.0 - 10.0 * 0.01 * 0.5 / (0.5 + 1e-8);
    ensure((theta - closed).abs() <= 1e-12, format!("constant gradient gave {theta}, closed form {closed}"))?;
    Ok(format!("first step 1.0 -> {first:.10}; 5-step sequence within {worst:.1e}; constant-gradient closed form holds"))
}

// 10 -----------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("model.ckpt");
    let config = SolarTformerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut model = SolarTformer::new(config.clone(), &mut rng).map_err(err)?;
    // Checkpoints store f32; trained models are rounded before saving.
    model.params_mut().round_to_f32();
    save_checkpoint(&path, &model, serde_json::json!({"k": 1})).map_err(err)?;
    let loaded = load_checkpoint(&path).map_err(err)?.model;
    for i in 0..10 {
        let w = random(&[config.seq_len, config.weather_dim], &mut rng, 3.0);
        let m = random(&[config.metadata_dim], &mut rng, 3.0);
        let a = model.predict(&w, &m).map_err(err)?;
        let b = loaded.predict(&w, &m).map_err(err)?;
        ensure(
            a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()),
            format!("input {i}: loaded model differs"),
        )?;
    }
    Ok("10 random inputs bitwise equal after save and load".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", criterion_1),
        ("causality", criterion_2),
        ("metric oracles", criterion_3),
        ("cyclic encoding", criterion_4),
        ("learnability", criterion_5),
        ("ablation ordering", criterion_6),
        ("regularization gap", criterion_7),
        ("determinism", criterion_8),
        ("AdamW conformance", criterion_9),
        ("checkpoint round trip", criterion_10),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n:>2} {name}: PASS ({msg}) [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({msg}) [{secs:.1}s]");
            }
        }
    }
    println!("{failed} criteria failed");
    // Red criteria are reported, not hidden; strict mode turns them into a nonzero exit.
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
