use framekit::design::{run, SidcoConfig, VariantSpec};
use framekit::frame::{coherence, welch_bound};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let t0 = Instant::now();
    let cfg = SidcoConfig {
        max_iterations: iters,
        rng_seed: 0,
        ..Default::default()
    };
    let rep = run(m, n, &VariantSpec::complex(), &cfg).unwrap();
    let s = coherence(&rep.best_frame).unwrap();
    let fp_min = (n * n) as f64 / m as f64;
    println!(
        "({m},{n}) K={iters}: mu = {:.4} (WB {:.4}), FP = {:.3} vs n^2/m = {:.3} (ratio {:.5}), iters_run = {}, [{:.1}s]",
        rep.best_coherence,
        welch_bound(m, n).unwrap().value,
        s.frame_potential,
        fp_min,
        s.frame_potential / fp_min,
        rep.iterations_run,
        t0.elapsed().as_secs_f64()
    );
}
