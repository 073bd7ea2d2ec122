use framekit::design::{run, SidcoConfig, VariantSpec};
use framekit::frame::coherence;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(120);
    let tol: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let t0 = Instant::now();
    let cfg = SidcoConfig {
        max_iterations: iters,
        rng_seed: 0,
        convergence_tol: tol,
        retraction_budget: 10_000,
        track_best: false,
        stop_on_stall: false,
        ..Default::default()
    };
    let rep = run(m, n, &VariantSpec::complex(), &cfg).unwrap();
    let fp_min = (n * n) as f64 / m as f64;
    let s = coherence(&rep.best_frame).unwrap();
    println!(
        "({m},{n}) K={iters} tol={tol:.0e}: final mu {:.4} ratio {:.5} gap {:.3} retr {} [{:.0}s]",
        s.coherence, s.frame_potential / fp_min, s.tightness_gap,
        rep.retractions_applied,
        t0.elapsed().as_secs_f64()
    );
}
