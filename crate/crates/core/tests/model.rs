use proptest::prelude::*;
use workzone_core::model::{
    synthetic_batch, Batch, HistoricalAverage, LinearAr, ModelConfig, ModelParams, Network, Objective, Predictor,
    AR_LOOKBACK, AR_RIDGE,
};
use workzone_core::numerics::Tensor;
use workzone_core::rng::seeded_rng;
use workzone_core::scenario::{generate_scenario, ScenarioConfig, ScenarioRecord};
use workzone_core::spacetime::{build_sample, Sample, SpacetimeConfig};

fn net(config: &ModelConfig, seed: u64) -> Network<f64> {
    Network::new(ModelParams::init(config, &mut seeded_rng(seed, 7)).unwrap())
}

fn record(seed: u64) -> ScenarioRecord {
    generate_scenario("wz00001", &ScenarioConfig::default(), &mut seeded_rng(seed, 1))
}

fn sample(record: &ScenarioRecord) -> Sample {
    build_sample(record, &SpacetimeConfig::default()).unwrap()
}

/// Same scenario with ground truth equal to the historical profile.
fn uncongested(seed: u64) -> Sample {
    let mut r = record(seed);
    r.actual_speed = r.historical_speed.clone();
    sample(&r)
}

fn masked_mae(pred: &[f64], s: &Sample) -> f64 {
    let (mut sum, mut n) = (0.0, 0.0);
    for i in 0..pred.len() {
        if s.mask[i] > 0.0 {
            sum += (pred[i] - s.y_speed[i]).abs() * 80.0;
            n += 1.0;
        }
    }
    sum / n
}

#[test]
fn default_encoder_shapes() {
    let c = ModelConfig::default();
    let n = net(&c, 1);
    let s = sample(&record(4));
    let batch: Batch<f64> = Batch::from_samples(&[&s]).unwrap();
    assert_eq!(n.encode_image(&batch.x).unwrap().shape(), [1, 3072]);
    assert_eq!(n.encode_tabular(&batch.wz).unwrap().shape(), [1, 32]);
    let out = n.predict(&batch).unwrap();
    assert_eq!(out.y_speed.shape(), [1, 16, 96]);
    assert!(n.encode_image(&Tensor::zeros(&[1, 16, 48, 4])).is_err());
    assert!(n.encode_tabular(&Tensor::zeros(&[1, 7])).is_err());
}

#[test]
fn zero_inputs_with_zero_biases() {
    let c = ModelConfig::default();
    let n = net(&c, 2);
    assert!(n.encode_image(&Tensor::zeros(&[1, 16, 96, 4])).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(n.encode_tabular(&Tensor::zeros(&[1, 8])).unwrap().data().iter().all(|&v| v == 0.0));
    let p = n.decode_incident(&Tensor::zeros(&[1, c.fused_len()])).unwrap();
    assert_eq!(p.data(), [0.5, 0.5]);
}

#[test]
fn ablation_identity() {
    let c = ModelConfig::reduced();
    let on = net(&c, 3);
    let mut params = on.params.clone();
    params.config.attention_enabled = false;
    let off = Network::new(params);
    let mut rng = seeded_rng(9, 0);
    let img = Tensor::from_fn(&[2, c.encoded_len()], |_| rng.uniform(-1.0, 1.0));
    let tab = Tensor::from_fn(&[2, c.tabular_dim], |_| rng.uniform(-1.0, 1.0));
    let fused = off.fuse_and_attend(&img, &tab).unwrap();
    for r in 0..2 {
        let row = &fused.data()[r * c.fused_len()..(r + 1) * c.fused_len()];
        assert_eq!(&row[..c.encoded_len()], &img.data()[r * c.encoded_len()..(r + 1) * c.encoded_len()]);
        assert_eq!(&row[c.encoded_len()..], &tab.data()[r * c.tabular_dim..(r + 1) * c.tabular_dim]);
    }
    // the two variants share every other tensor, so they differ only through attention
    let attended = on.fuse_and_attend(&img, &tab).unwrap();
    assert_ne!(attended, fused);
}

#[test]
fn identical_tokens_attend_uniformly() {
    let c = ModelConfig::reduced();
    let n = net(&c, 4);
    let token: Vec<f64> = (0..c.d_model).map(|i| (i as f64 * 0.37).sin()).collect();
    let img = Tensor::new(&[1, c.encoded_len()], token.repeat(c.encoded_len() / c.d_model)).unwrap();
    let tab = Tensor::new(&[1, c.tabular_dim], token.clone()).unwrap();
    let z = n.fuse_and_attend(&img, &tab).unwrap();
    let first = &z.data()[..c.d_model];
    for t in z.data().chunks(c.d_model) {
        for (a, b) in t.iter().zip(first) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_is_deterministic_and_cache_free_predict_agrees() {
    let c = ModelConfig::reduced();
    let batch = synthetic_batch(&c, 11);
    let mut n = net(&c, 5);
    let a = n.predict(&batch).unwrap();
    let b = n.forward(&batch).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, n.predict(&batch).unwrap());
}

#[test]
fn backward_requires_forward() {
    let c = ModelConfig::reduced();
    let mut n = net(&c, 5);
    let err = n.backward(&Tensor::zeros(&[1, 8, 8]), &Tensor::zeros(&[1, 2]));
    assert!(err.is_err());
}

#[test]
fn channel_order_matters() {
    let c = ModelConfig::reduced();
    let n = net(&c, 6);
    let batch = synthetic_batch(&c, 12);
    let mut swapped = batch.clone();
    let ch = c.in_channels;
    for cell in swapped.x.data_mut().chunks_mut(ch) {
        cell.swap(0, 1);
    }
    assert_ne!(n.predict(&batch).unwrap().y_speed, n.predict(&swapped).unwrap().y_speed);
}

#[test]
fn untrained_network_loses_to_historical_average_without_congestion() {
    let s = uncongested(21);
    let ha = HistoricalAverage::fit(&[&s]).unwrap();
    let base = ha.predict_sample(&s).unwrap();
    assert_eq!(masked_mae(&base.y_speed_hat, &s), 0.0);
    let n = net(&ModelConfig::default(), 8);
    let out = n.predict(&Batch::from_samples(&[&s]).unwrap()).unwrap();
    assert!(masked_mae(out.y_speed.data(), &s) > 1.0);
}

#[test]
fn historical_average_on_congested_scenario() {
    let samples: Vec<Sample> = (0..40).map(|i| sample(&record(100 + i))).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let ha = HistoricalAverage::fit(&refs).unwrap();
    assert!((0.0..=1.0).contains(&ha.incident_rate));
    let worst = samples
        .iter()
        .map(|s| masked_mae(&ha.predict_sample(s).unwrap().y_speed_hat, s))
        .fold(0.0, f64::max);
    assert!(worst > 0.0);
}

#[test]
fn linear_ar_constant_series() {
    let mut r = record(31);
    for row in r.historical_speed.iter_mut().chain(r.actual_speed.iter_mut()) {
        row.iter_mut().for_each(|v| *v = 55.0);
    }
    let s = sample(&r);
    let ar = LinearAr::fit(&[&s], AR_LOOKBACK, AR_RIDGE, 80.0).unwrap();
    let out = ar.predict_sample(&s).unwrap();
    assert!(masked_mae(&out.y_speed_hat, &s) < 1e-6, "{}", masked_mae(&out.y_speed_hat, &s));
    let p = out.incident_probability();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn linear_ar_rejects_empty_training_set() {
    assert!(LinearAr::fit(&[], AR_LOOKBACK, AR_RIDGE, 80.0).is_err());
    assert!(HistoricalAverage::fit(&[]).is_err());
}

#[test]
fn baselines_round_trip_through_json() {
    let samples: Vec<Sample> = (0..10).map(|i| sample(&record(200 + i))).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let ar = LinearAr::fit(&refs, AR_LOOKBACK, AR_RIDGE, 80.0).unwrap();
    let back: LinearAr = serde_json::from_str(&serde_json::to_string(&ar).unwrap()).unwrap();
    assert!(back.predict(&samples[0]) == ar.predict(&samples[0]));
}

#[test]
fn objective_matches_hand_computation() {
    // one sample, two active cells, errors of 2 mph (quadratic) and 10 mph (linear)
    let c = ModelConfig { height: 4, width: 4, ..ModelConfig::reduced() };
    let batch = Batch {
        x: Tensor::zeros(&[1, 4, 4, 4]),
        wz: Tensor::zeros(&[1, 8]),
        mask: Tensor::from_fn(&[1, 4, 4], |i| if i < 2 { 1.0 } else { 0.0 }),
        y_speed: Tensor::from_fn(&[1, 4, 4], |i| [0.5, 0.5][..].get(i).copied().unwrap_or(0.0)),
        y_incident: vec![1],
        ..synthetic_batch(&c, 1)
    };
    let out = workzone_core::model::BatchOutput {
        y_speed: Tensor::from_fn(&[1, 4, 4], |i| match i {
            0 => 42.0 / 80.0,
            1 => 30.0 / 80.0,
            _ => 0.9,
        }),
        probs: Tensor::new(&[1, 2], vec![0.75, 0.25]).unwrap(),
    };
    let g = Objective::default().evaluate(&out, &batch).unwrap();
    let huber = (0.5 * 4.0 + 5.0 * (10.0 - 2.5)) / 2.0;
    let ce = -(0.25f64).ln();
    assert!((g.parts.huber - huber).abs() < 1e-9, "{:?}", g.parts);
    assert!((g.parts.cross_entropy - ce).abs() < 1e-12);
    assert!((g.parts.total - (huber + 0.5 * ce)).abs() < 1e-9);
    // masked cells get no gradient
    assert!(g.d_speed.data()[2..].iter().all(|&v| v == 0.0));
    assert!((g.d_logits.data()[1] - 0.5 * (0.25 - 1.0)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn heads_stay_in_range(seed in 0u64..1000, scale in 0.1f64..50.0) {
        let c = ModelConfig::reduced();
        let n = net(&c, seed);
        let mut batch = synthetic_batch(&c, seed);
        batch.x = batch.x.map(|v| v * scale);
        batch.wz = batch.wz.map(|v| v * scale);
        let out = n.predict(&batch).unwrap();
        prop_assert!(out.y_speed.data().iter().all(|&v| v > 0.0 && v < 1.0 && v * 80.0 < 80.0));
        for p in out.probs.data().chunks(2) {
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
