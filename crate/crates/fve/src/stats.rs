//! Small estimator utilities shared by the modules and the verification suites.

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n > 0, "empty sample");
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// 95% confidence interval around a mean with the given standard error.
pub fn ci95(mean: f64, stderr: f64) -> (f64, f64) {
    (mean - 1.96 * stderr, mean + 1.96 * stderr)
}

/// Whether two 95% confidence intervals overlap.
pub fn ci95_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    let (la, ua) = ci95(a.0, a.1);
    let (lb, ub) = ci95(b.0, b.1);
    la <= ub && lb <= ua
}

/// Total-variation distance between two probability vectors over the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// FNV-1a over bytes; used for config hashing and output fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
