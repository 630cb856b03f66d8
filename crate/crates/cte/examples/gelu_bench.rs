fn main() {
    let n = 1 << 20;
    let xs: Vec<f64> = (0..n).map(|i| ((i as f64 * 0.1).sin()) * 1.5).collect();
    let mut out = vec![0.0; n];
    let mut cdf = vec![0.0; n];
    cte::numerics::special::gelu_slice(&xs, &mut out, &mut cdf);
    let t = std::time::Instant::now();
    let reps = 300;
    for _ in 0..reps {
        cte::numerics::special::gelu_slice(&xs, &mut out, &mut cdf);
        std::hint::black_box(&out);
    }
    println!("gelu warm: {:.2} ns/elem", t.elapsed().as_secs_f64() / (reps * n) as f64 * 1e9);
}
