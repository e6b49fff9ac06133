//! Trains one model on a generated corpus and prints test metrics next to
//! the two baselines.
//!
//! cargo run --release -p workzone-core --example train_probe -- [seed] [attention 0|1] [max_epochs]

use workzone_core::eval::{evaluate, EvalConfig};
use workzone_core::model::{
    Batch, HistoricalAverage, LinearAr, ModelConfig, Network, Predictor, AR_LOOKBACK, AR_RIDGE,
};
use workzone_core::scenario::{generate_corpus, ScenarioConfig, Split};
use workzone_core::spacetime::{build_samples, Sample, SpacetimeConfig};
use workzone_core::train::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainingConfig};

fn refs(v: &[Sample]) -> Vec<&Sample> {
    v.iter().collect()
}

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = args.first().copied().unwrap_or(42);
    let attention = args.get(1).copied().unwrap_or(1) == 1;
    let max_epochs = args.get(2).copied().unwrap_or(200) as usize;
    let corpus = generate_corpus(1000, 42, &ScenarioConfig::default()).unwrap();
    let st = SpacetimeConfig::default();
    let load = |s: Split| build_samples(corpus.split(s), &st).unwrap();
    let (tr, va, te) = (load(Split::Train), load(Split::Val), load(Split::Test));
    let model = ModelConfig { attention_enabled: attention, ..ModelConfig::default() };
    let cfg = TrainingConfig { seed, max_epochs, ..TrainingConfig::default() };
    let t0 = std::time::Instant::now();
    let ck_path = std::path::PathBuf::from(format!("/tmp/probe_{seed}_{}.ckpt", attention as u8));
    let params = if let Ok(ck) = load_checkpoint(&ck_path) {
        ck.params
    } else {
        let (params, hist) = train::<f32>(&model, &refs(&tr), &refs(&va), &cfg, st.speed_max).unwrap();
        for e in &hist.epochs {
            println!("{:>3} train {:.4} val {:.4} (huber {:.4} ce {:.4}) {:.1}s", e.epoch, e.train_loss, e.val_loss, e.val_huber, e.val_cross_entropy, e.wall_time_s);
        }
        println!("best epoch {} stop {:?} total {:.0}s", hist.best_epoch, hist.stop_reason, t0.elapsed().as_secs_f64());
        save_checkpoint(&ck_path, &Checkpoint::new(params.clone(), 80.0, None, serde_json::Value::Null)).unwrap();
        params
    };
    let net = Network::new(params);
    let mut speeds = Vec::new();
    let mut probs = Vec::new();
    for chunk in te.chunks(16) {
        let b = Batch::<f32>::from_samples(&refs(chunk)).unwrap();
        for p in net.predict(&b).unwrap().split() {
            speeds.push(p.y_speed_hat.clone());
            probs.push(p.incident_probability());
        }
    }
    let ec = EvalConfig::default();
    let m = evaluate(&te, &speeds, &probs, 80.0, &ec).unwrap();
    let ha = HistoricalAverage::fit(&refs(&tr)).unwrap();
    let ar = LinearAr::fit(&refs(&tr), AR_LOOKBACK, AR_RIDGE, 80.0).unwrap();
    for (name, p) in [("ha", &ha as &dyn Predictor), ("ar", &ar as &dyn Predictor)] {
        let out = p.predict_all(&te).unwrap();
        let e = evaluate(&te, &out.iter().map(|o| o.y_speed_hat.clone()).collect::<Vec<_>>(),
            &out.iter().map(|o| o.incident_probability()).collect::<Vec<_>>(), 80.0, &ec).unwrap();
        println!("{name}: mae {:.3} rmse {:.3} f1 {:.3} queue {:?}", e.speed.mae, e.speed.rmse, e.classification.f1, e.congestion.rmse_queue);
    }
    let ha_out = ha.predict_all(&te).unwrap();
    let (mut cu, mut cc, mut mu, mut mc, mut hu, mut hc) = (0usize, 0usize, 0.0, 0.0, 0.0, 0.0);
    for ((s, p), h) in te.iter().zip(&speeds).zip(&ha_out) {
        let hist = s.historical();
        for i in 0..s.mask.len() {
            if s.mask[i] == 0.0 { continue; }
            let (t, m, b) = (s.y_speed[i] * 80.0, p[i] * 80.0, h.y_speed_hat[i] * 80.0);
            if hist[i] * 80.0 - t > 5.0 { cc += 1; mc += (m - t).abs(); hc += (b - t).abs(); }
            else { cu += 1; mu += (m - t).abs(); hu += (b - t).abs(); }
        }
    }
    println!("uncongested {cu} cells: model {:.3} ha {:.3}; congested {cc} cells: model {:.3} ha {:.3}",
        mu / cu as f64, hu / cu as f64, mc / cc.max(1) as f64, hc / cc.max(1) as f64);
    println!("model: mae {:.3} rmse {:.3} f1 {:.3} queue {:?}", m.speed.mae, m.speed.rmse, m.classification.f1, m.congestion.rmse_queue);
}
