use std::time::Instant;
use vipelab_core::nn::Matrix;

fn main() {
    for (b, h) in [(32usize, 1024usize), (64, 1024), (256, 1024)] {
        let x = Matrix::from_vec(b, h, (0..b * h).map(|i| ((i * 37 % 100) as f64 - 50.0) / 50.0).collect()).unwrap();
        let w = Matrix::from_vec(h, h, (0..h * h).map(|i| ((i * 17 % 100) as f64 - 50.0) / 5000.0).collect()).unwrap();
        let mut acc = 0.0;
        for _ in 0..3 { acc += x.matmul(&w).get(0, 0); }
        let reps = 20;
        let t = Instant::now();
        for _ in 0..reps { acc += x.matmul(&w).get(0, 0); }
        let dt = t.elapsed().as_secs_f64();
        let flops = 2.0 * (b * h * h * reps) as f64;
        println!("B={b:<4} nn {:>7.2} ms  {:.2} GFLOP/s (acc {acc:.2})", dt / reps as f64 * 1e3, flops / dt / 1e9);
        let t = Instant::now();
        for _ in 0..reps { acc += x.matmul_nt(&w).get(0, 0); }
        let dt = t.elapsed().as_secs_f64();
        println!("B={b:<4} nt {:>7.2} ms  {:.2} GFLOP/s (acc {acc:.2})", dt / reps as f64 * 1e3, flops / dt / 1e9);
    }
}
