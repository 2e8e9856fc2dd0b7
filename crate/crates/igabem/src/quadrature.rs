//! Quadrature rules on the unit interval.
//!
//! Besides plain Gauss–Legendre rules this provides Gauss rules for the
//! weight `-log(x)` on `(0, 1]`, used for the logarithmic part of the
//! single-layer kernel after the singularity has been isolated.

use nalgebra::{DMatrix, SymmetricEigen};

/// A rule `sum_i w_i f(x_i)` on `[0, 1]`.
///
/// `xc[i]` stores `1 - x[i]` computed without cancellation, which matters
/// when points are mapped close to the right end of tiny elements.
#[derive(Clone, Debug)]
pub struct Rule {
    pub x: Vec<f64>,
    pub xc: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre rule with `n` points on `[0, 1]`.
///
/// Nodes come from Newton iteration on the Legendre three-term recurrence,
/// computed on `[-1, 1]` and symmetrized so that `x[n-1-i] = 1 - x[i]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                let (_, d) = legendre_and_deriv(n, z);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // z is the i-th largest root on [-1, 1].
        xs[n - 1 - i] = 0.5 * z;
        xs[i] = -0.5 * z;
        ws[n - 1 - i] = 0.5 * w;
        ws[i] = 0.5 * w;
    }
    // Map from [-1/2, 1/2] to [0, 1] keeping the mirrored complements exact.
    let x: Vec<f64> = xs.iter().map(|&s| 0.5 + s).collect();
    let xc: Vec<f64> = xs.iter().map(|&s| 0.5 - s).collect();
    Rule { x, xc, w: ws }
}

fn legendre_and_deriv(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss rule with `n` points for `int_0^1 -log(x) f(x) dx`.
///
/// Recurrence coefficients come from the modified Chebyshev algorithm with
/// shifted Legendre modified moments, `int_0^1 -log(x) P_k(2x-1) dx` being
/// `1` for `k = 0` and `(-1)^k / (k (k+1))` otherwise; nodes and weights
/// follow from the Jacobi matrix (Golub–Welsch).
pub fn log_gauss(n: usize) -> Rule {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    let m = 2 * n;
    // Monic shifted Legendre: pi_{k+1} = (x - 1/2) pi_k - b_k pi_{k-1}.
    let a_ref = vec![0.5; m];
    let b_ref: Vec<f64> = (0..m)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                let k = k as f64;
                k * k / (4.0 * (4.0 * k * k - 1.0))
            }
        })
        .collect();
    // Modified moments with respect to the monic polynomials.
    let mut nu = vec![0.0; m];
    let mut lead = 1.0f64;
    for (k, v) in nu.iter_mut().enumerate() {
        if k > 0 {
            // Leading coefficient of P_k(2x-1) is binom(2k, k).
            let kf = k as f64;
            lead *= (2.0 * kf) * (2.0 * kf - 1.0) / (kf * kf);
        }
        let mom = if k == 0 {
            1.0
        } else {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            s / (k as f64 * (k as f64 + 1.0))
        };
        *v = mom / lead;
    }

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut sig_prev = vec![0.0; m + 1];
    let mut sig = nu.clone();
    sig.push(0.0);
    alpha[0] = a_ref[0] + nu[1] / nu[0];
    beta[0] = nu[0];
    for k in 1..n {
        let mut sig_new = vec![0.0; m + 1];
        for l in k..(m - k) {
            sig_new[l] = sig[l + 1] - (alpha[k - 1] - a_ref[l]) * sig[l] - beta[k - 1] * sig_prev[l]
                + b_ref[l] * sig[l - 1];
        }
        alpha[k] = a_ref[k] + sig_new[k + 1] / sig_new[k] - sig[k] / sig[k - 1];
        beta[k] = sig_new[k] / sig[k - 1];
        sig_prev = sig;
        sig = sig_new;
    }

    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k + 1].sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], beta[0] * v0 * v0)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let xc = x.iter().map(|&v| 1.0 - v).collect();
    let w = pts.iter().map(|p| p.1).collect();
    Rule { x, xc, w }
}

/// Gauss–Legendre rule graded towards `x = 0` through `x = y^k`.
///
/// Suitable for integrands behaving like `x^(-a)` with `a < 1` near the
/// origin; the substitution removes the singularity for `a k` integer.
pub fn graded_gauss(n: usize, k: i32) -> Rule {
    let g = gauss_legendre(n);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let y = g.x[i];
        x.push(y.powi(k));
        w.push(g.w[i] * k as f64 * y.powi(k - 1));
    }
    let xc = x.iter().map(|&v| 1.0 - v).collect();
    Rule { x, xc, w }
}
