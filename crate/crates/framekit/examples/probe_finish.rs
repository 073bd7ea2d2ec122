use framekit::design::{run, run_from, SidcoConfig, VariantSpec};
use framekit::frame::{coherence, polar_retraction};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(120);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let post: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);
    let t0 = Instant::now();
    let cfg = SidcoConfig {
        max_iterations: iters,
        rng_seed: seed,
        convergence_tol: 1e-3,
        retraction_budget: 10_000,
        track_best: false,
        stop_on_stall: false,
        ..Default::default()
    };
    let rep = run(m, n, &VariantSpec::complex(), &cfg).unwrap();
    // finisher: retraction + a few plain descent sweeps
    let tight = polar_retraction(&rep.best_frame, 1.0).unwrap();
    let cfg2 = SidcoConfig {
        max_iterations: post,
        rng_seed: seed ^ 0x9e37,
        convergence_tol: 0.0,
        retraction_budget: 0,
        track_best: false,
        stop_on_stall: false,
        ..Default::default()
    };
    let rep2 = run_from(tight, &VariantSpec::complex(), &cfg2).unwrap();
    let fp_min = (n * n) as f64 / m as f64;
    let s = coherence(&rep2.best_frame).unwrap();
    println!(
        "({m},{n}) K={iters}+{post} seed={seed}: final mu {:.4} ratio {:.5} gap {:.4} [{:.0}s]",
        s.coherence, s.frame_potential / fp_min, s.tightness_gap,
        t0.elapsed().as_secs_f64()
    );
}
