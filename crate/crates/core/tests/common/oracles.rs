//! Independent reference implementations the library is checked against.

use recount_core::Matrix;

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn pairwise_auc(scored: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for &(p, lp) in scored {
        if !lp {
            continue;
        }
        for &(n, ln) in scored {
            if ln {
                continue;
            }
            pairs += 1.0;
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Euclidean projection onto `{a : 0 <= a_i <= c, sum a = 1}` by bisection
/// on the shift.
pub fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let mass = |t: f64| v.iter().map(|x| (x - t).clamp(0.0, c)).sum::<f64>();
    let (mut lo, mut hi) = (
        v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0,
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    v.iter().map(|x| (x - t).clamp(0.0, c)).collect()
}

/// Accelerated projected gradient on `min 1/2 a^T K a`.
pub fn qp_oracle(k: &[Vec<f64>], c: f64) -> f64 {
    let n = k.len();
    let lipschitz: f64 = k.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let objective = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * a[j] * k[i][j];
            }
        }
        0.5 * s
    };
    let mut a = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = a.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * y[j]).sum()).collect();
        let step: Vec<f64> = y.iter().zip(&grad).map(|(yi, g)| yi - g / lipschitz).collect();
        let next = project_capped_simplex(&step, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&a)
            .map(|(x, xp)| x + (t - 1.0) / t_next * (x - xp))
            .collect();
        a = next;
        t = t_next;
    }
    objective(&a)
}

pub fn direct_density(points: &Matrix<f64>, h: &[f64], x: &[f64]) -> f64 {
    let mut sum = 0.0;
    for p in points.iter_rows() {
        let mut prod = 1.0;
        for ((xi, pi), hi) in x.iter().zip(p).zip(h) {
            let z = (xi - pi) / hi;
            prod *= (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * hi);
        }
        sum += prod;
    }
    sum / points.nrows() as f64
}
