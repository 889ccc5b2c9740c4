//! Runs both modes over several rng seeds and prints execs-to-first-crash.
//!
//! `cargo run --release -p eyeq-core --example pilot -- <target> <budget> <seeds>`

use eyeq_core::fuzzer::{run_campaign, FuzzConfig, Mode};
use eyeq_core::targets::Target;
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let target: Target = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(Target::StackSize);
    let budget: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2_000_000);
    let n: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5);
    // PILOT_SEEDS=name,name restricts the seed set.
    let only: Option<Vec<String>> = std::env::var("PILOT_SEEDS").ok().map(|v| v.split(',').map(String::from).collect());
    let seeds: Vec<Vec<u8>> = target
        .default_seeds()
        .into_iter()
        .filter(|(name, _)| only.as_ref().is_none_or(|o| o.iter().any(|x| x == name)))
        .map(|s| s.1)
        .collect();
    for mode in [Mode::Annot, Mode::Baseline] {
        let rows: Vec<_> = (0..n)
            .into_par_iter()
            .map(|k| {
                let cfg = FuzzConfig::new(mode, budget, k).stop_after(1);
                let t = std::time::Instant::now();
                let c = run_campaign(&target, &seeds, &cfg).unwrap();
                (k, c.report, t.elapsed())
            })
            .collect();
        let hits = rows.iter().filter(|r| r.1.execs_to_first_crash().is_some()).count();
        println!("{target} {} found {hits}/{n}", mode.as_str());
        for (k, r, t) in rows {
            println!(
                "  seed {k}: crash_at={:?} execs={} corpus={} annot_seeds={} {:.1}s",
                r.execs_to_first_crash(),
                r.total_execs,
                r.corpus_size,
                r.annotation_seeds,
                t.as_secs_f64()
            );
            if std::env::var("PILOT_VERBOSE").is_ok() {
                for c in &r.unique_crashes {
                    println!("    {:?}", String::from_utf8_lossy(&c.input_bytes()));
                }
            }
        }
    }
}
