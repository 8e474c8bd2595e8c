// Scratch micro-benchmark for one refinement-shaped LP.
use std::time::Instant;
use packs::lp::IncrementalHinge;

fn main() {
    let mut state = 12345u64;
    let mut next = move || {
        state ^= state << 13; state ^= state >> 7; state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let n_anom = 100;
    let n_norm = 9900;
    let k = 3;
    let lower = vec![-1e6; k];
    let upper = vec![-1.0, 1e6, 1e6];
    let t0 = Instant::now();
    let mut total_iters = 0usize;
    for _rep in 0..20 {
        let mut s = IncrementalHinge::new(lower.clone(), upper.clone()).unwrap();
        for _ in 0..n_anom {
            let x = 0.4 + 0.1 * next();
            s.push(&[x * x, x, 1.0], 1.0, 1.0).unwrap();
        }
        for _ in 0..n_norm {
            let x = next();
            s.push(&[x * x, x, 1.0], -1.0, 0.01).unwrap();
        }
        let sol = s.solve().unwrap();
        total_iters += sol.iterations;
    }
    println!("20 solves in {:?}, iters total {}", t0.elapsed(), total_iters);
}
