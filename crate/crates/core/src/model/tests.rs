use super::*;
use crate::autodiff::{grad_check_coords, Graph, Tensor, MASK_SENTINEL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> SolarTformerConfig {
    SolarTformerConfig {
        seq_len: 6,
        model_dim: 8,
        heads: 2,
        blocks: 2,
        weather_dim: 3,
        metadata_dim: 2,
        ffn_hidden: 12,
        ..Default::default()
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn randomize(params: &mut ModelParams, rng: &mut ChaCha8Rng, scale: f64) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

fn day_inputs(config: &SolarTformerConfig, rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    (
        random_tensor(&[config.seq_len, config.weather_dim], rng),
        random_tensor(&[config.metadata_dim], rng),
    )
}

#[test]
fn causal_mask_examples() {
    let m = build_causal_mask(3).unwrap();
    let s = MASK_SENTINEL;
    assert_eq!(m.tensor().data(), &[0.0, s, s, 0.0, 0.0, s, 0.0, 0.0, 0.0]);
    assert!(m.is_visible(2, 0));
    assert!(!m.is_visible(0, 1));
    assert_eq!(build_causal_mask(1).unwrap().tensor().data(), &[0.0]);
    assert!(matches!(build_causal_mask(0), Err(ModelError::Config(_))));
}

#[test]
fn mask_is_lower_triangular_for_all_lengths() {
    for len in 1..20 {
        let m = build_causal_mask(len).unwrap();
        for i in 0..len {
            for j in 0..len {
                let v = m.tensor().data()[i * len + j];
                assert_eq!(v, if j <= i { 0.0 } else { MASK_SENTINEL });
            }
        }
    }
}

#[test]
fn default_param_count() {
    // weather 8*64+64, metadata 7*64+64, start token 64, fusion 128*64+64,
    // per block 4*(64*64+64) + 2 norms*2*64 + (64*256+256) + (256*64+64),
    // readout 64+1.
    let block = 4 * 4160 + 256 + 16640 + 16448;
    let expected = 576 + 512 + 64 + 8256 + 2 * block + 65;
    assert_eq!(expected, 109_441);
    let config = SolarTformerConfig::default();
    assert_eq!(config.param_count(), expected);
    let model = SolarTformer::new(config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(model.params().count(), expected);
}

#[test]
fn param_count_tracks_layout_for_other_sizes() {
    for (blocks, d, heads) in [(1, 8, 2), (3, 16, 4), (4, 12, 3)] {
        let config = SolarTformerConfig {
            blocks,
            model_dim: d,
            heads,
            ..small_config()
        };
        assert_eq!(ModelParams::zeros(&config).unwrap().count(), config.param_count());
    }
}

#[test]
fn initialization_follows_scheme() {
    let config = SolarTformerConfig::default();
    let p = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let w = p.get("fusion.weight").unwrap();
    let limit = (6.0f64 / 192.0).sqrt();
    assert!(w.data().iter().all(|v| v.abs() <= limit));
    assert!(w.data().iter().any(|v| v.abs() > 0.5 * limit));
    assert!(p.get("blocks.1.ffn.output.bias").unwrap().data().iter().all(|&v| v == 0.0));
    assert!(p.get("blocks.0.norm_attn.gain").unwrap().data().iter().all(|&v| v == 1.0));
    let start = p.get("start_token").unwrap().data();
    let sd = (start.iter().map(|v| v * v).sum::<f64>() / start.len() as f64).sqrt();
    assert!(sd > 0.005 && sd < 0.05, "start token spread {sd}");
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SolarTformerConfig { heads: 3, ..Default::default() },
        SolarTformerConfig { blocks: 0, ..Default::default() },
        SolarTformerConfig { seq_len: 0, ..Default::default() },
        SolarTformerConfig { layer_norm_eps: 0.0, ..Default::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(ModelError::Config(_))), "{c:?}");
    }
}

#[test]
fn forward_shape_and_input_errors() {
    let config = SolarTformerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    let (w, m) = day_inputs(&config, &mut rng);
    let y = model.predict(&w, &m).unwrap();
    assert_eq!(y.len(), 96);
    assert!(y.iter().all(|v| v.is_finite()));

    let short = Tensor::zeros(&[95, 8]);
    assert!(matches!(model.predict(&short, &m), Err(ModelError::InputShape { .. })));
    let wide = Tensor::zeros(&[1, 96, 9]);
    let meta = Tensor::zeros(&[1, 7]);
    assert!(matches!(model.predict_batch(&wide, &meta), Err(ModelError::InputShape { .. })));
    let w3 = w.clone().reshaped(&[1, 96, 8]).unwrap();
    assert!(matches!(
        model.predict_batch(&w3, &Tensor::zeros(&[2, 7])),
        Err(ModelError::InputShape { .. })
    ));
}

#[test]
fn batch_prediction_matches_per_sample() {
    let config = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    randomize(model.params_mut(), &mut rng, 0.4);
    let w = random_tensor(&[3, 6, 3], &mut rng);
    let m = random_tensor(&[3, 2], &mut rng);
    let batch = model.predict_batch(&w, &m).unwrap();
    for b in 0..3 {
        let wb = Tensor::new(vec![6, 3], w.data()[b * 18..(b + 1) * 18].to_vec()).unwrap();
        let mb = Tensor::vector(m.data()[b * 2..(b + 1) * 2].to_vec());
        let single = model.predict(&wb, &mb).unwrap();
        for (a, s) in batch.data()[b * 6..(b + 1) * 6].iter().zip(&single) {
            assert!((a - s).abs() < 1e-12);
        }
    }
}

/// Perturbing weather step `j` must leave predictions `0..=j` bitwise
/// unchanged in the shifted readout.
fn assert_causal(model: &SolarTformer, w: &Tensor, m: &Tensor) {
    let t = model.config().seq_len;
    let dw = model.config().weather_dim;
    let base = model.predict(w, m).unwrap();
    for j in 0..t {
        let mut p = w.clone();
        for k in 0..dw {
            p.data_mut()[j * dw + k] += 0.5 + k as f64;
        }
        let y = model.predict(&p, m).unwrap();
        for i in 0..=j {
            assert_eq!(y[i].to_bits(), base[i].to_bits(), "step {j} leaked into prediction {i}");
        }
        if j + 1 < t {
            assert!(y[j + 1..].iter().zip(&base[j + 1..]).any(|(a, b)| a != b), "step {j} had no effect");
        }
    }
}

#[test]
fn default_model_is_causal() {
    let config = SolarTformerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    let (w, m) = day_inputs(&config, &mut rng);
    assert_causal(&model, &w, &m);
}

#[test]
fn ablated_models_stay_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for flags in [
        AblationFlags { disable_norm: true, ..Default::default() },
        AblationFlags { disable_skip: true, ..Default::default() },
        AblationFlags { disable_metadata: true, ..Default::default() },
    ] {
        let config = SolarTformerConfig { ablation: flags, ..small_config() };
        let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
        randomize(model.params_mut(), &mut rng, 0.5);
        let (w, m) = day_inputs(&config, &mut rng);
        assert_causal(&model, &w, &m);
    }
}

#[test]
fn first_prediction_ignores_weather() {
    let config = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    randomize(model.params_mut(), &mut rng, 0.5);
    let (_, m) = day_inputs(&config, &mut rng);
    let y0 = model.predict(&Tensor::zeros(&[6, 3]), &m).unwrap()[0];
    for _ in 0..5 {
        let (w, _) = day_inputs(&config, &mut rng);
        assert_eq!(model.predict(&w, &m).unwrap()[0].to_bits(), y0.to_bits());
    }
}

#[test]
fn algorithmic_readout_sees_current_step() {
    let config = SolarTformerConfig {
        readout: ReadoutMode::Algorithmic,
        ..small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    randomize(model.params_mut(), &mut rng, 0.5);
    let (w, m) = day_inputs(&config, &mut rng);
    let base = model.predict(&w, &m).unwrap();
    let mut p = w.clone();
    p.data_mut()[2 * 3] += 1.0;
    let y = model.predict(&p, &m).unwrap();
    assert_eq!(&y[..2], &base[..2]);
    assert_ne!(y[2], base[2]);
}

#[test]
fn metadata_changes_predictions_unless_disabled() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = small_config();
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    randomize(model.params_mut(), &mut rng, 0.5);
    let (w, m1) = day_inputs(&config, &mut rng);
    let m2 = Tensor::vector(m1.data().iter().map(|v| v + 1.0).collect());
    assert_ne!(model.predict(&w, &m1).unwrap(), model.predict(&w, &m2).unwrap());

    let off = SolarTformerConfig {
        ablation: AblationFlags { disable_metadata: true, ..Default::default() },
        ..config
    };
    let model = SolarTformer::from_parts(off, model.params().clone()).unwrap();
    assert_eq!(model.predict(&w, &m1).unwrap(), model.predict(&w, &m2).unwrap());
}

fn block_fixture(config: &SolarTformerConfig) -> (ModelParams, BlockSlots) {
    let params = ModelParams::zeros(config).unwrap();
    let slots = params.layout().blocks[0];
    (params, slots)
}

fn run_block(
    config: &SolarTformerConfig,
    params: &ModelParams,
    slots: &BlockSlots,
    x: &Tensor,
) -> Tensor {
    let mut g = Graph::new();
    let vars: Vec<_> = params.tensors().iter().map(|t| g.constant(t.clone())).collect();
    let xv = g.constant(x.clone());
    let mask = build_causal_mask(x.shape()[1]).unwrap();
    let (out, _) = forward::encoder_block(&mut g, &vars, slots, xv, &mask, config).unwrap();
    g.value(out).clone()
}

#[test]
fn block_without_attention_and_zero_ffn_is_identity() {
    let config = SolarTformerConfig {
        ablation: AblationFlags { disable_attention: true, ..Default::default() },
        ..small_config()
    };
    let (params, slots) = block_fixture(&config);
    let x = random_tensor(&[2, 7, 8], &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(run_block(&config, &params, &slots, &x), x);
}

#[test]
fn block_without_skip_and_zero_weights_emits_output_bias() {
    let config = SolarTformerConfig {
        ablation: AblationFlags { disable_skip: true, ..Default::default() },
        ..small_config()
    };
    let (mut params, slots) = block_fixture(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // Every bias is random, every matrix zero: the output collapses to the
    // last FFN bias on every row.
    for idx in [
        slots.query.bias,
        slots.key.bias,
        slots.value.bias,
        slots.output.bias,
        slots.ffn_in.bias,
        slots.ffn_out.bias,
    ] {
        let n = params.tensors()[idx].len();
        params.tensors_mut()[idx] = random_tensor(&[n], &mut rng);
    }
    let x = random_tensor(&[2, 5, 8], &mut rng);
    let out = run_block(&config, &params, &slots, &x);
    let b2 = params.tensors()[slots.ffn_out.bias].data();
    for row in out.data().chunks(8) {
        for (a, b) in row.iter().zip(b2) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_with_flat_scores_averages_visible_values() {
    // One head, zero query weights so every score is equal, identity value
    // and output projections: row i is the mean of inputs 0..=i.
    let config = SolarTformerConfig { heads: 1, ..small_config() };
    let (mut params, slots) = block_fixture(&config);
    let eye = |d: usize| {
        let mut t = Tensor::zeros(&[d, d]);
        for i in 0..d {
            t.data_mut()[i * d + i] = 1.0;
        }
        t
    };
    params.tensors_mut()[slots.value.weight] = eye(8);
    params.tensors_mut()[slots.output.weight] = eye(8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    params.tensors_mut()[slots.key.weight] = random_tensor(&[8, 8], &mut rng);
    let x = random_tensor(&[1, 5, 8], &mut rng);

    let mut g = Graph::new();
    let vars: Vec<_> = params.tensors().iter().map(|t| g.constant(t.clone())).collect();
    let xv = g.constant(x.clone());
    let mask = build_causal_mask(5).unwrap();
    let (out, w) = forward::multi_head_attention(&mut g, &vars, &slots, xv, &mask, 1).unwrap();
    let out = g.value(out).data();
    for i in 0..5 {
        for k in 0..8 {
            let mean = (0..=i).map(|j| x.data()[j * 8 + k]).sum::<f64>() / (i + 1) as f64;
            assert!((out[i * 8 + k] - mean).abs() < 1e-12);
        }
        let row = &g.value(w).data()[i * 5..(i + 1) * 5];
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row[i + 1..].iter().all(|&v| v == 0.0));
    }

    let full = CausalMask(Tensor::zeros(&[5, 5]));
    let mut g = Graph::new();
    let vars: Vec<_> = params.tensors().iter().map(|t| g.constant(t.clone())).collect();
    let xv = g.constant(x.clone());
    let (out, _) = forward::multi_head_attention(&mut g, &vars, &slots, xv, &full, 1).unwrap();
    for k in 0..8 {
        let mean = (0..5).map(|j| x.data()[j * 8 + k]).sum::<f64>() / 5.0;
        assert!((g.value(out).data()[k] - mean).abs() < 1e-12);
    }
}

#[test]
fn attention_weights_are_causal_distributions() {
    let config = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    randomize(model.params_mut(), &mut rng, 0.7);
    let w = random_tensor(&[2, 6, 3], &mut rng);
    let m = random_tensor(&[2, 2], &mut rng);
    let att = model.attention_weights(&w, &m).unwrap();
    assert_eq!(att.len(), 2);
    for a in att {
        let a = a.unwrap();
        assert_eq!(a.shape(), &[2, 2, 7, 7]);
        for (r, row) in a.data().chunks(7).enumerate() {
            let i = r % 7;
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row[i + 1..].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let config = SolarTformerConfig {
        seq_len: 4,
        model_dim: 8,
        heads: 2,
        blocks: 1,
        weather_dim: 3,
        metadata_dim: 2,
        ffn_hidden: 8,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    randomize(model.params_mut(), &mut rng, 0.5);
    let w = random_tensor(&[2, 4, 3], &mut rng);
    let m = random_tensor(&[2, 2], &mut rng);
    let y = random_tensor(&[2, 4], &mut rng);
    let inputs = model.params().tensors().to_vec();
    let coords: Vec<(usize, usize)> = (0..60)
        .map(|_| {
            let i = rng.random_range(0..inputs.len());
            (i, rng.random_range(0..inputs[i].len()))
        })
        .collect();
    let f = |g: &mut Graph, vars: &[crate::autodiff::Var]| {
        let wv = g.constant(w.clone());
        let mv = g.constant(m.clone());
        let yv = g.constant(y.clone());
        let out = model.forward(g, vars, wv, mv).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => panic!("{other}"),
        })?;
        g.mse(out.prediction, yv)
    };
    let report = grad_check_coords(f, &inputs, &coords, 1e-6, 1e-4).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn forward_rejects_wrong_variable_count() {
    let config = small_config();
    let model = SolarTformer::new(config, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
    let mut g = Graph::new();
    let mut vars = model.register(&mut g, false);
    vars.pop();
    let w = g.constant(Tensor::zeros(&[1, 6, 3]));
    let m = g.constant(Tensor::zeros(&[1, 2]));
    assert!(matches!(model.forward(&mut g, &vars, w, m), Err(ModelError::ParamMismatch(_))));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let config = SolarTformerConfig {
        ablation: AblationFlags { disable_norm: true, ..Default::default() },
        readout: ReadoutMode::Algorithmic,
        ..small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut model = SolarTformer::new(config.clone(), &mut rng).unwrap();
    model.params_mut().round_to_f32();
    let extra = serde_json::json!({"note": "scalers"});
    save_checkpoint(&path, &model, extra.clone()).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.model, model);
    assert_eq!(loaded.extra, extra);
    let (w, m) = day_inputs(&config, &mut rng);
    let a = model.predict(&w, &m).unwrap();
    let b = loaded.model.predict(&w, &m).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn checkpoint_rejects_mismatches() {
    use crate::container::{Container, NamedArray};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = SolarTformer::new(small_config(), &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
    save_checkpoint(&path, &model, serde_json::Value::Null).unwrap();
    let original = Container::read(&path).unwrap();

    let mut c = original.clone();
    c.meta["format_version"] = serde_json::json!(99);
    c.write(&path).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));

    let mut c = original.clone();
    c.kind = "something-else".into();
    c.write(&path).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));

    let mut c = original.clone();
    c.meta["parameters"][0]["shape"] = serde_json::json!([3, 9]);
    c.write(&path).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));

    // Consistent manifest and array, but not what the config implies.
    let mut arrays: Vec<NamedArray> = original.arrays.clone();
    arrays[0].shape = vec![3, 9];
    arrays[0].data = vec![0.0; 27];
    let mut meta = original.meta.clone();
    meta["parameters"][0]["shape"] = serde_json::json!([3, 9]);
    Container::new(&original.kind, meta, arrays).write(&path).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::ParamMismatch(_))));

    assert!(matches!(
        load_checkpoint(&dir.path().join("missing.ckpt")),
        Err(ModelError::Container(_))
    ));
}
