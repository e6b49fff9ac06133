//! Prints sampling statistics of a generated corpus.
//!
//! cargo run --release -p workzone-core --example corpus_audit -- [count] [seed]

use workzone_core::eval::{sample_regions, speed_metrics, EvalConfig};
use workzone_core::scenario::{generate_corpus, ScenarioConfig};
use workzone_core::spacetime::{build_sample, SpacetimeConfig};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let count = args.first().copied().unwrap_or(1000) as usize;
    let seed = args.get(1).copied().unwrap_or(42);
    let config = ScenarioConfig::default();
    let corpus = generate_corpus(count, seed, &config).expect("generate");
    let st = SpacetimeConfig::default();
    let (mut congested, mut incidents, mut hours, mut hist_mae) = (0, 0, 0.0, 0.0);
    let mut congested_incident = 0;
    let mut cell_frac = 0.0;
    let (mut spurious, mut real) = (0, 0);
    for r in &corpus.records {
        let s = build_sample(r, &st).expect("sample");
        let hist = s.historical();
        let (truth, _) = sample_regions(&s, &hist, st.speed_max, &EvalConfig::default()).expect("regions");
        if !truth.is_empty() {
            congested += 1;
            congested_incident += r.incident as usize;
        }
        incidents += r.incident as usize;
        hours += r.event.duration() as f64 / 60.0;
        let mph = |v: &[f64]| v.iter().map(|x| x * 80.0).collect::<Vec<_>>();
        hist_mae += speed_metrics(&mph(&hist), &mph(&s.y_speed), &s.mask).unwrap().mae;
        let drops = r.historical_speed.iter().flatten().zip(r.actual_speed.iter().flatten())
            .filter(|(h, a)| *h - *a > 10.0).count();
        if drops == 0 && !truth.is_empty() { spurious += 1; }
        if drops > 0 { real += 1; }
        cell_frac += drops as f64 / (r.links() * r.bins()) as f64;
    }
    let n = count as f64;
    println!("congested scenarios {:.3}", congested as f64 / n);
    println!("incident rate {:.3} (among congested {:.3})", incidents as f64 / n,
        congested_incident as f64 / congested.max(1) as f64);
    println!("real queues {:.3}, noise-only regions {:.3}", real as f64 / n, spurious as f64 / n);
    println!("mean duration {:.2} h", hours / n);
    println!("mean per-scenario historical MAE {:.3} mph", hist_mae / n);
    println!("mean congested cell fraction {:.3}", cell_frac / n);
}
