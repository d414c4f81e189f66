//! Shared oracle helpers for integration tests: numeric quadrature of
//! densities, KS distances against tabulated CDFs, and a hand-rolled matrix
//! inverse kept independent of the library's linear algebra path.
#![allow(dead_code)]

/// Tabulated CDF on an increasing grid, built by quadrature.
pub struct CdfTable {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
    pub mean: f64,
}

/// Integrate an unnormalized density over [lo, hi] on a log-spaced grid
/// (trapezoid in log space), returning the CDF table and the mean.
pub fn quadrature_cdf(density: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> CdfTable {
    assert!(lo > 0.0 && hi > lo && points >= 1000);
    let t_lo = lo.ln();
    let t_hi = hi.ln();
    let dt = (t_hi - t_lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| (t_lo + dt * i as f64).exp()).collect();
    // g(t) = f(e^t) * e^t so that integral over t matches integral over x.
    let g: Vec<f64> = xs.iter().map(|&x| density(x) * x).collect();
    let mut cdf = vec![0.0; points];
    let mut mean_acc = 0.0;
    for i in 1..points {
        let seg = 0.5 * (g[i - 1] + g[i]) * dt;
        cdf[i] = cdf[i - 1] + seg;
        mean_acc += 0.5 * (g[i - 1] * xs[i - 1] + g[i] * xs[i]) * dt;
    }
    let total = cdf[points - 1];
    assert!(total > 0.0 && total.is_finite());
    for c in cdf.iter_mut() {
        *c /= total;
    }
    CdfTable { xs, cdf, mean: mean_acc / total }
}

impl CdfTable {
    /// CDF value at x by linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let idx = self.xs.partition_point(|&v| v < x);
        let (x0, x1) = (self.xs[idx - 1], self.xs[idx]);
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        c0 + (c1 - c0) * (x - x0) / (x1 - x0)
    }
}

/// Kolmogorov-Smirnov distance of draws against a CDF function.
pub fn ks_distance(draws: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        ks = ks.max(hi.max(lo));
    }
    ks
}

/// Gauss-Jordan inverse with partial pivoting; test-side reference routine.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n);
            let mut r = row.clone();
            r.extend((0..n).map(|j| if j == i { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        assert!(aug[pivot][col].abs() > 1e-300, "singular matrix in oracle");
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = aug[row][col];
                if factor != 0.0 {
                    let (pivot_row, other) = if row < col {
                        let (a, b) = aug.split_at_mut(col);
                        (&b[0], &mut a[row])
                    } else {
                        let (a, b) = aug.split_at_mut(row);
                        (&a[col], &mut b[0])
                    };
                    for k in 0..2 * n {
                        other[k] -= factor * pivot_row[k];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of a sorted slice (matches R type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Complementary error function (Abramowitz-Stegun 7.1.26 style rational
/// approximation refined with one extra term; abs error < 1.5e-7, enough for
/// KS tolerances an order of magnitude looser).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}
