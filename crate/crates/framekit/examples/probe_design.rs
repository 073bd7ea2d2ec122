use framekit::design::{run, SidcoConfig, VariantSpec};
use framekit::frame::welch_bound;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(7);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let seeds: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10);
    let wb = welch_bound(m, n).unwrap().value;
    println!("({m},{n}) WB = {wb:.6}");
    let variant = VariantSpec::complex();
    let t0 = Instant::now();
    let mut best = f64::INFINITY;
    for s in 0..seeds {
        let cfg = SidcoConfig {
            max_iterations: iters,
            rng_seed: s as u64,
            ..Default::default()
        };
        let t1 = Instant::now();
        let rep = run(m, n, &variant, &cfg).unwrap();
        best = best.min(rep.best_coherence);
        println!(
            "seed {s}: mu = {:.6} iters = {} retractions = {} skips = {} guards = {} [{:.2}s]",
            rep.best_coherence,
            rep.iterations_run,
            rep.retractions_applied,
            rep.column_skips,
            rep.guard_rejections,
            t1.elapsed().as_secs_f64()
        );
    }
    println!("best = {best:.6}  total {:.2}s", t0.elapsed().as_secs_f64());
}
