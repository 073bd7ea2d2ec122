use framekit::design::{run, SidcoConfig, VariantSpec};
use framekit::frame::{coherence, polar_retraction};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(40);
    let t0 = Instant::now();
    let cfg = SidcoConfig {
        max_iterations: iters,
        rng_seed: 0,
        ..Default::default()
    };
    let rep = run(m, n, &VariantSpec::complex(), &cfg).unwrap();
    let fp_min = (n * n) as f64 / m as f64;
    let s0 = coherence(&rep.best_frame).unwrap();
    let tightened = polar_retraction(&rep.best_frame, 1.0).unwrap();
    let s1 = coherence(&tightened).unwrap();
    println!(
        "({m},{n}) K={iters}: raw mu {:.4} ratio {:.5} | tightened mu {:.4} ratio {:.6} gap {:.2e} [{:.0}s]",
        s0.coherence, s0.frame_potential / fp_min,
        s1.coherence, s1.frame_potential / fp_min, s1.tightness_gap,
        t0.elapsed().as_secs_f64()
    );
}
