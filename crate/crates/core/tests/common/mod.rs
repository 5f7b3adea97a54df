//! Reference computations written independently of the library code.
#![allow(dead_code)]

/// Bisection root of `f` on `[lo, hi]` given a sign change.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Positive root of `τ = 1 − exp(−c(τ + ζ))` for `c > 1` or `ζ > 0`.
pub fn scalar_attack_rate(c: f64, zeta: f64) -> f64 {
    bisect(|t| 1.0 - (-c * (t + zeta)).exp() - t, 1e-9, 1.0)
}

/// Minimal root of `q = exp(c(q − 1))` for `c > 1`.
pub fn poisson_extinction(c: f64) -> f64 {
    bisect(|q| (c * (q - 1.0)).exp() - q, 0.0, 1.0 - 1e-9)
}

/// Exact final-size pmf of the single-type Reed–Frost chain with per-pair
/// contact probability `v`, `n` susceptibles and `a` initial infectives, by
/// enumeration over chain states.
pub fn reed_frost_pmf(n: usize, a: usize, v: f64) -> Vec<f64> {
    fn choose(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }
    // state: (susceptibles left, current infectives, infected so far)
    fn walk(s: usize, i: usize, infected: usize, p: f64, v: f64, out: &mut [f64]) {
        if i == 0 || s == 0 {
            out[infected] += p;
            return;
        }
        let hit = 1.0 - (1.0 - v).powi(i as i32);
        for k in 0..=s {
            let pk = choose(s, k) * hit.powi(k as i32) * (1.0 - hit).powi((s - k) as i32);
            if pk > 0.0 {
                walk(s - k, k, infected + k, p * pk, v, out);
            }
        }
    }
    let mut out = vec![0.0; n + 1];
    walk(n, a, 0, 1.0, v, &mut out);
    out
}

/// Largest eigenvalue of a 2×2 matrix with real spectrum.
pub fn spectral_radius_2x2(a: [[f64; 2]; 2]) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    0.5 * (tr + (tr * tr - 4.0 * det).sqrt())
}

/// Scalar asymptotic variance `Ξ / u²` with `Ξ = σ(1−σ) + σ²(τ+ζ)λ` and
/// `u = 1 − μσ`.
pub fn scalar_clt_variance(mu: f64, lambda: f64, zeta: f64) -> f64 {
    let tau = scalar_attack_rate(mu, zeta);
    let s = 1.0 - tau;
    let xi = s * (1.0 - s) + s * s * (tau + zeta) * lambda;
    xi / (1.0 - mu * s).powi(2)
}

pub fn poisson_pmf(k: u64, rate: f64) -> f64 {
    let mut p = (-rate).exp();
    for i in 1..=k {
        p *= rate / i as f64;
    }
    p
}

/// Exact joint final-size pmf of a multitype Reed–Frost chain with fixed
/// contact probabilities `v[l][k]`, indexed by infected counts per type in
/// row-major order over `0..=n_k`.
pub fn multitype_reed_frost_pmf(n: &[usize], a: &[usize], v: &[Vec<f64>]) -> Vec<f64> {
    fn choose(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }
    fn index(x: &[usize], n: &[usize]) -> usize {
        x.iter().zip(n).fold(0, |acc, (xi, ni)| acc * (ni + 1) + xi)
    }
    #[allow(clippy::too_many_arguments)]
    fn walk(s: &[usize], i: &[usize], infected: &[usize], p: f64, n: &[usize], v: &[Vec<f64>], out: &mut [f64]) {
        let m = s.len();
        if i.iter().all(|x| *x == 0) {
            out[index(infected, n)] += p;
            return;
        }
        let hit: Vec<f64> = (0..m)
            .map(|k| 1.0 - (0..m).map(|l| (1.0 - v[l][k]).powi(i[l] as i32)).product::<f64>())
            .collect();
        let mut k = vec![0usize; m];
        loop {
            let pk: f64 = (0..m)
                .map(|t| choose(s[t], k[t]) * hit[t].powi(k[t] as i32) * (1.0 - hit[t]).powi((s[t] - k[t]) as i32))
                .product();
            if pk > 0.0 {
                let s2: Vec<usize> = (0..m).map(|t| s[t] - k[t]).collect();
                let inf2: Vec<usize> = (0..m).map(|t| infected[t] + k[t]).collect();
                walk(&s2, &k, &inf2, p * pk, n, v, out);
            }
            let mut t = 0;
            loop {
                if t == m {
                    return;
                }
                k[t] += 1;
                if k[t] <= s[t] {
                    break;
                }
                k[t] = 0;
                t += 1;
            }
        }
    }
    let size = n.iter().map(|x| x + 1).product();
    let mut out = vec![0.0; size];
    walk(n, a, &vec![0; n.len()], 1.0, n, v, &mut out);
    out
}
