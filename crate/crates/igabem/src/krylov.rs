//! Preconditioned conjugate gradients and condition numbers.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Outcome of a PCG run.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative preconditioned residual `sqrt(<z, r>) / sqrt(<z_0, r_0>)`
    /// after each iteration, starting with `1`.
    pub history: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub converged: bool,
}

impl SolveReport {
    pub fn cond(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lanczos matrix of a CG run:
/// `T_kk = 1/a_k + b_{k-1}/a_{k-1}`, `T_{k,k+1} = sqrt(b_k)/a_k`.
pub fn lanczos_matrix(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let n = alphas.len();
    let mut t = DMatrix::zeros(n, n);
    for k in 0..n {
        t[(k, k)] = 1.0 / alphas[k] + if k > 0 { betas[k - 1] / alphas[k - 1] } else { 0.0 };
        if k + 1 < n {
            let o = betas[k].sqrt() / alphas[k];
            t[(k, k + 1)] = o;
            t[(k + 1, k)] = o;
        }
    }
    t
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn extreme_eigenvalues(m: DMatrix<f64>) -> (f64, f64) {
    let ev = m.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// PCG from the zero vector, stopping when the preconditioned residual norm
/// has dropped by `tol` or after `max_iter` iterations.
pub fn pcg_run(
    a: impl Fn(&[f64]) -> Vec<f64>,
    m: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = m(&r);
    let mut rz = dot(&r, &z);
    let mut report = SolveReport {
        x: Vec::new(),
        iterations: 0,
        history: vec![1.0],
        alphas: Vec::new(),
        betas: Vec::new(),
        lambda_min: f64::NAN,
        lambda_max: f64::NAN,
        converged: false,
    };
    if rz < 0.0 {
        return Err(Error::Breakdown(0));
    }
    if rz == 0.0 {
        report.x = x;
        report.converged = true;
        return Ok(report);
    }
    let rz0 = rz;
    let mut p = z.clone();
    for k in 0..max_iter {
        let ap = a(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Breakdown(k));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = m(&r);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            return Err(Error::Breakdown(k));
        }
        let beta = rz_new / rz;
        report.alphas.push(alpha);
        report.iterations = k + 1;
        let rel = (rz_new / rz0).sqrt();
        report.history.push(rel);
        rz = rz_new;
        if rel <= tol {
            report.converged = true;
            break;
        }
        report.betas.push(beta);
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if !report.alphas.is_empty() {
        let k = report.alphas.len();
        let (lo, hi) = extreme_eigenvalues(lanczos_matrix(&report.alphas, &report.betas[..k - 1]));
        report.lambda_min = lo;
        report.lambda_max = hi;
    }
    report.x = x;
    Ok(report)
}

/// PCG that fails if the tolerance is not reached within `max_iter`.
pub fn pcg(
    a: impl Fn(&[f64]) -> Vec<f64>,
    m: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let rep = pcg_run(a, m, b, tol, max_iter)?;
    if rep.converged {
        Ok(rep)
    } else {
        Err(Error::NoConvergence(max_iter))
    }
}

/// Extreme eigenvalues of the preconditioned matrix `M A` by Lanczos with
/// full reorthogonalization, started from a seeded random vector.
///
/// Stops when both extreme Ritz values have residual bounds below `tol`
/// relative to their size, when the Krylov space is exhausted, or after
/// `max_steps` steps.
pub fn lanczos_extremes(
    a: impl Fn(&[f64]) -> Vec<f64>,
    m: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    seed: u64,
    max_steps: usize,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut z = m(&r);
    let rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::Breakdown(0));
    }
    let s = 1.0 / rz.sqrt();
    r.iter_mut().for_each(|v| *v *= s);
    z.iter_mut().for_each(|v| *v *= s);
    // Basis in the M-inner product: rs[k] . zs[j] = delta_kj, zs[k] = M rs[k].
    let mut rs = vec![r];
    let mut zs = vec![z];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let steps = max_steps.clamp(1, n);
    let mut range = (f64::NAN, f64::NAN);
    let mut next_check = 10;
    for k in 0..steps {
        let mut v = a(&zs[k]);
        let alpha = dot(&zs[k], &v);
        alphas.push(alpha);
        for _ in 0..2 {
            for j in 0..=k {
                let c = dot(&v, &zs[j]);
                v.iter_mut().zip(&rs[j]).for_each(|(x, y)| *x -= c * y);
            }
        }
        let mut z = m(&v);
        let vz = dot(&v, &z);
        let norm_t = alphas.iter().fold(0f64, |acc, x| acc.max(x.abs()));
        let exhausted = !(vz > (1e-14 * norm_t).powi(2)) || k + 1 == steps;
        let beta = if vz > 0.0 { vz.sqrt() } else { 0.0 };
        if exhausted || k + 1 >= next_check {
            next_check = (k + 6).max((k + 1) * 5 / 4);
            let t = lanczos_tridiagonal(&alphas, &betas);
            let eig = SymmetricEigen::new(t);
            let (mut lo, mut hi) = (0, 0);
            for i in 0..eig.eigenvalues.len() {
                if eig.eigenvalues[i] < eig.eigenvalues[lo] {
                    lo = i;
                }
                if eig.eigenvalues[i] > eig.eigenvalues[hi] {
                    hi = i;
                }
            }
            range = (eig.eigenvalues[lo], eig.eigenvalues[hi]);
            let last = alphas.len() - 1;
            let bound = |i: usize| beta * eig.eigenvectors[(last, i)].abs() / eig.eigenvalues[i].abs();
            if exhausted || (bound(lo) < tol && bound(hi) < tol) {
                return Ok(range);
            }
        }
        betas.push(beta);
        let s = 1.0 / beta;
        v.iter_mut().for_each(|x| *x *= s);
        z.iter_mut().for_each(|x| *x *= s);
        rs.push(v);
        zs.push(z);
    }
    Ok(range)
}

fn lanczos_tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let n = alphas.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    })
}

/// Condition number estimate of the preconditioned matrix: `(lambda_min,
/// lambda_max)` from [`lanczos_extremes`] with at most 1000 steps.
pub fn lanczos_cond(
    a: impl Fn(&[f64]) -> Vec<f64>,
    m: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    lanczos_extremes(a, m, n, seed, 1000, 1e-8)
}

/// Exact extreme eigenvalues of `S^-1 A` through the symmetric form
/// `L^T S^-1 L` with `A = L L^T`.
pub struct ExactCond {
    l: DMatrix<f64>,
}

impl ExactCond {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let ch = a.clone().cholesky().ok_or(Error::NotSpd)?;
        Ok(Self { l: ch.unpack() })
    }

    /// `(lambda_min, lambda_max)` of the preconditioned matrix.
    pub fn eigen_range(&self, m: impl Fn(&[f64]) -> Vec<f64>) -> Result<(f64, f64)> {
        let n = self.l.nrows();
        let mut sl = DMatrix::zeros(n, n);
        for j in 0..n {
            let col: Vec<f64> = self.l.column(j).iter().copied().collect();
            let z = m(&col);
            if z.len() != n {
                return Err(Error::Dimension { expected: n, got: z.len() });
            }
            sl.column_mut(j).copy_from_slice(&z);
        }
        let mut s = self.l.tr_mul(&sl);
        let st = s.transpose();
        s += st;
        s *= 0.5;
        Ok(extreme_eigenvalues(s))
    }
}

/// `(lambda_min, lambda_max)` of `S^-1 A` for a dense preconditioner.
pub fn exact_cond(a: &DMatrix<f64>, s_inv: &DMatrix<f64>) -> Result<(f64, f64)> {
    ExactCond::new(a)?.eigen_range(|v| (s_inv * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec())
}

/// Galerkin energy `2 f.x - x.A x`, equal to `f.x` for the exact discrete
/// solution but less sensitive to the solver tolerance.
pub fn energy(a: &DMatrix<f64>, f: &[f64], x: &[f64]) -> f64 {
    let xv = nalgebra::DVector::from_column_slice(x);
    let ax = a * &xv;
    2.0 * dot(f, x) - dot(x, ax.as_slice())
}

/// Symmetric matrix-vector product.
pub fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let xv = nalgebra::DVector::from_column_slice(x);
    (a * xv).as_slice().to_vec()
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0];
        let id = |v: &[f64]| v.to_vec();
        let rep = pcg(id, id, &b, 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.x, b);
    }

    #[test]
    fn diagonal_solve() {
        let d: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let a = |v: &[f64]| v.iter().zip(&d).map(|(x, y)| x * y).collect::<Vec<_>>();
        let rep = pcg(a, |v: &[f64]| v.to_vec(), &[1.0; 10], 1e-12, 100).unwrap();
        for (i, x) in rep.x.iter().enumerate() {
            assert!((x - 1.0 / (i as f64 + 1.0)).abs() < 1e-10);
        }
        assert!((rep.cond() - 10.0).abs() < 1e-8);
    }

    #[test]
    fn lanczos_estimate_matches_dense() {
        let a = random_spd(100, 7);
        let jac: Vec<f64> = (0..100).map(|i| 1.0 / a[(i, i)]).collect();
        let m = |v: &[f64]| v.iter().zip(&jac).map(|(x, y)| x * y).collect::<Vec<_>>();
        let (lo, hi) = lanczos_cond(|v: &[f64]| matvec(&a, v), m, 100, 1).unwrap();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(jac.clone()));
        let (elo, ehi) = exact_cond(&a, &s).unwrap();
        assert!(((hi / lo) / (ehi / elo) - 1.0).abs() < 0.1);
    }

    #[test]
    fn lanczos_finds_isolated_small_eigenvalue() {
        // One tiny eigenvalue whose residual weight is negligible for CG.
        let mut d: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 / 20.0).collect();
        d[17] = 1e-6;
        let a = |v: &[f64]| v.iter().zip(&d).map(|(x, y)| x * y).collect::<Vec<_>>();
        let (lo, hi) = lanczos_cond(a, |v: &[f64]| v.to_vec(), 200, 3).unwrap();
        assert!((lo - 1e-6).abs() < 1e-12, "{lo}");
        assert!((hi - d[199]).abs() < 1e-8 * hi, "{hi}");
    }

    #[test]
    fn exact_cond_examples() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let (lo, hi) = exact_cond(&a, &DMatrix::identity(2, 2)).unwrap();
        assert!((hi / lo - 4.0).abs() < 1e-14);
        let a = random_spd(20, 3);
        let inv = a.clone().try_inverse().unwrap();
        let (lo, hi) = exact_cond(&a, &inv).unwrap();
        assert!((hi / lo - 1.0).abs() < 1e-10);
    }

    #[test]
    fn energy_error_decreases() {
        let a = random_spd(30, 5);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let exact = a.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        let mut prev = f64::INFINITY;
        for k in 1..30 {
            let rep = pcg_run(|v: &[f64]| matvec(&a, v), |v: &[f64]| v.to_vec(), &b, 0.0, k).unwrap();
            let e = nalgebra::DVector::from_vec(rep.x) - &exact;
            let en = e.dot(&(&a * &e));
            assert!(en <= prev * (1.0 + 1e-12));
            prev = en;
        }
    }
}
