use framekit::select::{select_rows, CoherenceOperator, HarmonicConfig};
use framekit::frame::welch_bound;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let source = args.get(1).map(|s| s.as_str()).unwrap_or("fourier");
    let m: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(13);
    let n: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(40);
    let runs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(500);
    let stop: Option<f64> = args.get(5).map(|s| s.parse().unwrap());
    let op = match source {
        "fourier" => CoherenceOperator::fourier(n).unwrap(),
        "hadamard" => CoherenceOperator::hadamard(n).unwrap(),
        _ => panic!("unknown source"),
    };
    let cfg = HarmonicConfig {
        runs,
        rng_seed: 1,
        stop_at: stop,
        ..Default::default()
    };
    let t0 = Instant::now();
    let (pattern, mu) = select_rows(&op, m, &cfg).unwrap();
    println!(
        "{source} ({m},{n}) runs<={runs}: mu = {:.6} (WB {:.6}) pattern {:?} [{:.1}s]",
        mu,
        welch_bound(m, n).unwrap().value,
        pattern.indices,
        t0.elapsed().as_secs_f64()
    );
}
