use framekit::design::{run, SidcoConfig, VariantSpec};
use framekit::frame::coherence;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let budget: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10);
    let t0 = Instant::now();
    let cfg = SidcoConfig {
        max_iterations: iters,
        rng_seed: 0,
        retraction_budget: budget,
        ..Default::default()
    };
    let rep = run(m, n, &VariantSpec::complex(), &cfg).unwrap();
    let s = coherence(&rep.best_frame).unwrap();
    let fp_min = (n * n) as f64 / m as f64;
    println!(
        "({m},{n}) K={iters} B={budget}: mu = {:.4}, FP ratio {:.5}, tightness_gap {:.4}, iters {} retr {} [{:.1}s]",
        rep.best_coherence,
        s.frame_potential / fp_min,
        s.tightness_gap,
        rep.iterations_run,
        rep.retractions_applied,
        t0.elapsed().as_secs_f64()
    );
}
