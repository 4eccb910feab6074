//! Runs the four ablation arms on the default synthetic profile and prints
//! test macro-F1 per seed plus the median.
//!
//! cargo run --release -p abexrat --example ablation -- [seeds] [noise]

use std::time::Instant;

use abexrat::experiment::{run_ablation, Arm};
use abexrat::synthbench::SynthSpec;
use abexrat::trainer::TrainConfig;

fn main() -> abexrat::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let noise: Option<f64> = std::env::args().nth(2).and_then(|s| s.parse().ok());
    let spec = |seed| {
        let mut spec = SynthSpec::default_profile(seed);
        if let Some(n) = noise {
            spec.noise = n;
        }
        spec
    };
    for arm in [Arm::BASELINE, Arm::WITHOUT_AUGMENT, Arm::WITHOUT_RAT, Arm::FULL] {
        let start = Instant::now();
        let summary = run_ablation(&[arm], 0..seeds, spec, &TrainConfig::default())?.remove(0);
        let shown: Vec<String> = summary.scores.iter().map(|f| format!("{f:.4}")).collect();
        println!(
            "{:>18}: median {:.4}  [{}]  ({:.1}s)",
            arm.name(),
            summary.median,
            shown.join(" "),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
