//! B-spline and NURBS bases: evaluation, knot insertion, wrapped spaces and
//! the derivative map between degree `p` and `p - 1`.
//!
//! Indexing follows the full clamped knot array `t` of a [`KnotVector`]:
//! the degree-`q` B-spline `i` lives on `t[i..=i+q+1]`. The degree `p - 1`
//! space used for the weakly-singular equation lives on `t[1..len-1]`, so its
//! function `j` has the knots `t[j+1..=j+p+1]`.
//!
//! Element-local evaluation takes the point as `base + off` with `base` a
//! knot; all knot differences are formed as `(base - t_k) + off`, which keeps
//! full relative accuracy on elements much smaller than their distance to
//! the origin of the parameter interval.

use nalgebra::DMatrix;

use crate::knotline::KnotVector;
use crate::{Error, Result};

/// Index `s` with `t_s <= x < t_{s+1}` among the `n` degree-`p` functions; the
/// right end point maps to the last non-empty span.
pub fn find_span(knots: &[f64], p: usize, x: f64) -> usize {
    let n = knots.len() - p - 1;
    if x >= knots[n] {
        return n - 1;
    }
    if x <= knots[p] {
        return p;
    }
    // First index with t > x, minus one.
    knots[..=n].partition_point(|&t| t <= x) - 1
}

/// Value of the degree-`q` B-spline `i` at `x` (Cox–de Boor).
///
/// Right-continuous; at the right end of the knot array the left limit is
/// returned, so that values at `b` are those of `b-`.
pub fn eval_bspline(knots: &[f64], i: usize, q: usize, x: f64) -> Result<f64> {
    if i + q + 1 >= knots.len() {
        return Err(Error::IndexOutOfRange { index: i, len: knots.len().saturating_sub(q + 1) });
    }
    let u = &knots[i..=i + q + 1];
    let right_end = x >= *knots.last().unwrap();
    let mut nv: Vec<f64> = (0..=q)
        .map(|j| {
            let inside =
                if right_end { u[j] < x && x <= u[j + 1] } else { u[j] <= x && x < u[j + 1] };
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for r in 1..=q {
        for j in 0..=(q - r) {
            let d1 = u[j + r] - u[j];
            let d2 = u[j + r + 1] - u[j + 1];
            let a = if d1 > 0.0 { (x - u[j]) / d1 * nv[j] } else { 0.0 };
            let b = if d2 > 0.0 { (u[j + r + 1] - x) / d2 * nv[j + 1] } else { 0.0 };
            nv[j] = a + b;
        }
    }
    Ok(nv[0])
}

/// Right derivative of the degree-`q` B-spline `i` with the convention
/// `q / 0 := 0`.
pub fn eval_bspline_deriv(knots: &[f64], i: usize, q: usize, x: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::DegreeZeroDerivative);
    }
    if i + q + 1 >= knots.len() {
        return Err(Error::IndexOutOfRange { index: i, len: knots.len().saturating_sub(q + 1) });
    }
    let qf = q as f64;
    let d1 = knots[i + q] - knots[i];
    let d2 = knots[i + q + 1] - knots[i + 1];
    let a = if d1 > 0.0 { qf / d1 * eval_bspline(knots, i, q - 1, x)? } else { 0.0 };
    let b = if d2 > 0.0 { qf / d2 * eval_bspline(knots, i + 1, q - 1, x)? } else { 0.0 };
    Ok(a - b)
}

/// Value of the NURBS `R_i = w_i B_i / sum_k w_k B_k`.
pub fn eval_nurbs(kv: &KnotVector, i: usize, x: f64) -> Result<f64> {
    let p = kv.degree();
    let t = kv.knots();
    let w = kv.weights();
    let s = find_span(t, p, x);
    let mut den = 0.0;
    for k in (s - p)..=s {
        den += w[k] * eval_bspline(t, k, p, x)?;
    }
    Ok(w[i] * eval_bspline(t, i, p, x)? / den)
}

/// Values of the `p + 1` degree-`p` B-splines `span-p..=span` at
/// `x = base + off`.
pub fn basis_values(knots: &[f64], span: usize, p: usize, base: f64, off: f64, out: &mut [f64]) {
    debug_assert!(out.len() > p);
    out[0] = 1.0;
    let mut left = [0.0f64; 8];
    let mut right = [0.0f64; 8];
    for j in 1..=p {
        left[j] = (base - knots[span + 1 - j]) + off;
        right[j] = (knots[span + j] - base) - off;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// Values and first derivatives of the degree-`p` B-splines `span-p..=span`.
pub fn basis_values_derivs(
    knots: &[f64],
    span: usize,
    p: usize,
    base: f64,
    off: f64,
    vals: &mut [f64],
    ders: &mut [f64],
) {
    if p == 0 {
        vals[0] = 1.0;
        ders[0] = 0.0;
        return;
    }
    let mut low = [0.0f64; 8];
    basis_values(knots, span, p - 1, base, off, &mut low);
    let pf = p as f64;
    for k in 0..=p {
        let g = span - p + k;
        let (mut v, mut d) = (0.0, 0.0);
        if k >= 1 {
            let den = knots[g + p] - knots[g];
            let lv = low[k - 1];
            v += ((base - knots[g]) + off) / den * lv;
            d += pf / den * lv;
        }
        if k < p {
            let den = knots[g + p + 1] - knots[g + 1];
            let lv = low[k];
            v += ((knots[g + p + 1] - base) - off) / den * lv;
            d -= pf / den * lv;
        }
        vals[k] = v;
        ders[k] = d;
    }
}

/// Converts B-spline values and derivatives on a span into NURBS values and
/// derivatives with the weights `w[span-p..=span]`.
pub fn rationalize(w: &[f64], vals: &mut [f64], ders: &mut [f64]) {
    let n = w.len();
    let (mut den, mut dden) = (0.0, 0.0);
    for k in 0..n {
        den += w[k] * vals[k];
        dden += w[k] * ders[k];
    }
    for k in 0..n {
        let v = w[k] * vals[k] / den;
        ders[k] = (w[k] * ders[k] - v * dden) / den;
        vals[k] = v;
    }
}

/// Coefficients of the degree-`d` B-splines `mu-d..=mu` in the blossom
/// evaluated at `args` (the polynomial pieces on span `mu`).
pub fn blossom_row(knots: &[f64], mu: usize, d: usize, args: &[f64]) -> Vec<f64> {
    debug_assert_eq!(args.len(), d);
    let mut b = vec![1.0];
    for r in 1..=d {
        let x = args[r - 1];
        let mut nb = vec![0.0; r + 1];
        // Functions g = mu-r+l, l = 0..=r, of degree r.
        for (l, slot) in nb.iter_mut().enumerate() {
            let g = mu + l - r;
            let mut v = 0.0;
            if l >= 1 {
                // B_{g, r-1} is b[l-1].
                v += (x - knots[g]) / (knots[g + r] - knots[g]) * b[l - 1];
            }
            if l < r {
                // B_{g+1, r-1} is b[l].
                v += (knots[g + r + 1] - x) / (knots[g + r + 1] - knots[g + 1]) * b[l];
            }
            *slot = v;
        }
        b = nb;
    }
    b
}

/// Sparse coarse-to-fine coefficient map: `B^c_j = sum_k P[k][j] B^f_k`.
///
/// Row `k` stores the nonzero coarse coefficients starting at column
/// `rows[k].0`.
#[derive(Clone, Debug)]
pub struct Prolongation {
    pub n_coarse: usize,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl Prolongation {
    pub fn n_fine(&self) -> usize {
        self.rows.len()
    }

    /// Fine coefficients of the spline with coarse coefficients `a`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|(j0, r)| r.iter().enumerate().map(|(l, &c)| c * a[j0 + l]).sum()).collect()
    }

    pub fn entry(&self, k: usize, j: usize) -> f64 {
        let (j0, r) = &self.rows[k];
        if j >= *j0 && j < j0 + r.len() {
            r[j - j0]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_fine(), self.n_coarse);
        for (k, (j0, r)) in self.rows.iter().enumerate() {
            for (l, &c) in r.iter().enumerate() {
                m[(k, j0 + l)] = c;
            }
        }
        m
    }
}

/// Checks that the multiset `coarse` is contained in `fine` and that both
/// share their end knots; returns the inserted knots in ascending order.
pub fn inserted_knots(coarse: &[f64], fine: &[f64]) -> Result<Vec<f64>> {
    if coarse.first() != fine.first() || coarse.last() != fine.last() {
        return Err(Error::NotNested);
    }
    let mut out = Vec::new();
    let mut i = 0;
    for &t in fine {
        if i < coarse.len() && coarse[i] == t {
            i += 1;
        } else if i < coarse.len() && coarse[i] < t {
            return Err(Error::NotNested);
        } else {
            out.push(t);
        }
    }
    if i != coarse.len() {
        return Err(Error::NotNested);
    }
    Ok(out)
}

/// Knot insertion matrix by the Oslo algorithm: row `k` holds the blossom of
/// the coarse B-splines at the fine knots `t^f_{k+1..k+p}`.
pub fn prolongation(coarse: &[f64], fine: &[f64], p: usize) -> Result<Prolongation> {
    inserted_knots(coarse, fine)?;
    let nc = coarse.len() - p - 1;
    let nf = fine.len() - p - 1;
    let mut rows = Vec::with_capacity(nf);
    for k in 0..nf {
        let mu = find_span(coarse, p, fine[k]).min(nc - 1);
        rows.push((mu - p, blossom_row(coarse, mu, p, &fine[k + 1..=k + p])));
    }
    Ok(Prolongation { n_coarse: nc, rows })
}

/// Rows `ks` of the Oslo matrix only.
pub fn prolongation_rows(coarse: &[f64], fine: &[f64], p: usize, ks: &[usize]) -> Vec<(usize, Vec<f64>)> {
    let nc = coarse.len() - p - 1;
    ks.iter()
        .map(|&k| {
            let mu = find_span(coarse, p, fine[k]).min(nc - 1);
            (mu - p, blossom_row(coarse, mu, p, &fine[k + 1..=k + p]))
        })
        .collect()
}

/// Single knot insertion (Boehm): returns the matrix mapping old to new
/// coefficients and the new knot array.
pub fn insert_knot(knots: &[f64], p: usize, tn: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = knots.len() - p - 1;
    let k = find_span(knots, p, tn);
    let mut m = DMatrix::zeros(n + 1, n);
    for j in 0..=n {
        if j + p <= k {
            m[(j, j)] = 1.0;
        } else if j <= k {
            let beta = (tn - knots[j]) / (knots[j + p] - knots[j]);
            m[(j, j - 1)] = 1.0 - beta;
            m[(j, j)] = beta;
        } else {
            m[(j, j - 1)] = 1.0;
        }
    }
    let mut nk = knots.to_vec();
    nk.insert(k + 1, tn);
    (m, nk)
}

/// Coarse-to-fine coefficient matrix composed from single insertions in
/// ascending knot order.
pub fn knot_insertion(coarse: &KnotVector, fine: &KnotVector) -> Result<DMatrix<f64>> {
    if coarse.degree() != fine.degree() {
        return Err(Error::NotNested);
    }
    knot_insertion_knots(coarse.knots(), fine.knots(), coarse.degree())
}

/// [`knot_insertion`] on raw knot arrays.
pub fn knot_insertion_knots(coarse: &[f64], fine: &[f64], p: usize) -> Result<DMatrix<f64>> {
    let ins = inserted_knots(coarse, fine)?;
    let n = coarse.len() - p - 1;
    let mut acc = DMatrix::identity(n, n);
    let mut knots = coarse.to_vec();
    for t in ins {
        let (m, nk) = insert_knot(&knots, p, t);
        acc = m * acc;
        knots = nk;
    }
    Ok(acc)
}

/// Fine weights with the same weight function `sum_k w_k B_k`.
pub fn propagate_weights(coarse: &KnotVector, fine: &KnotVector) -> Result<Vec<f64>> {
    if coarse.degree() != fine.degree() {
        return Err(Error::NotNested);
    }
    let pr = prolongation(coarse.knots(), fine.knots(), coarse.degree())?;
    Ok(pr.apply(coarse.weights()))
}

/// Index map between B-splines and the wrapped ansatz space of the
/// hypersingular equation.
///
/// Closed curves: function `0` is `R_0 + R_{N-1}`, function `m` is `R_m` for
/// `1 <= m <= N-2`. Open curves: function `m` is `R_{m+1}`, dropping the two
/// functions that do not vanish at the end points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WrapMap {
    pub n: usize,
    pub closed: bool,
}

impl WrapMap {
    pub fn new(kv: &KnotVector) -> Self {
        Self { n: kv.dim(), closed: kv.closed() }
    }

    pub fn dim(&self) -> usize {
        if self.closed {
            self.n - 1
        } else {
            self.n - 2
        }
    }

    pub fn of_bspline(&self, k: usize) -> Option<usize> {
        if self.closed {
            Some(if k == self.n - 1 { 0 } else { k })
        } else if k == 0 || k == self.n - 1 {
            None
        } else {
            Some(k - 1)
        }
    }

    /// B-splines making up wrapped function `m`.
    pub fn bsplines(&self, m: usize) -> Vec<usize> {
        if self.closed {
            if m == 0 {
                vec![0, self.n - 1]
            } else {
                vec![m]
            }
        } else {
            vec![m + 1]
        }
    }
}

/// Wrapped NURBS basis of a knot vector.
#[derive(Clone, Debug)]
pub struct WrappedBasis {
    pub kv: KnotVector,
    pub map: WrapMap,
}

pub fn wrap_basis(kv: &KnotVector) -> WrappedBasis {
    WrappedBasis { kv: kv.clone(), map: WrapMap::new(kv) }
}

impl WrappedBasis {
    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn eval(&self, m: usize, x: f64) -> Result<f64> {
        let mut s = 0.0;
        for k in self.map.bsplines(m) {
            s += eval_nurbs(&self.kv, k, x)?;
        }
        Ok(s)
    }
}

/// Column-compressed sparse matrix.
#[derive(Clone, Debug)]
pub struct SparseCols {
    pub nrows: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
}

impl SparseCols {
    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                y[r] += v * x[c];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols());
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Parameter derivatives of the wrapped degree-`p` B-splines expressed in the
/// degree-`p - 1` B-splines: `B_k' = c1 Y_{k-1} - c2 Y_k`.
pub fn derivative_matrix(kv: &KnotVector) -> Result<SparseCols> {
    if !kv.is_polynomial() {
        return Err(Error::Rational);
    }
    let p = kv.degree();
    let t = kv.knots();
    let n = kv.dim();
    let map = WrapMap::new(kv);
    let pf = p as f64;
    let mut cols = vec![Vec::new(); map.dim()];
    for k in 0..n {
        let Some(m) = map.of_bspline(k) else { continue };
        let d1 = t[k + p] - t[k];
        let d2 = t[k + p + 1] - t[k + 1];
        if k >= 1 && d1 > 0.0 {
            cols[m].push((k - 1, pf / d1));
        }
        if k + 1 < n && d2 > 0.0 {
            cols[m].push((k, -pf / d2));
        }
    }
    for c in &mut cols {
        c.sort_by_key(|e| e.0);
    }
    Ok(SparseCols { nrows: n - 1, cols })
}

/// Knot array of the degree `p - 1` space.
pub fn lower_knots(kv: &KnotVector) -> &[f64] {
    let t = kv.knots();
    &t[1..t.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_and_one_examples() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(eval_bspline(&t, 0, 0, 0.5).unwrap(), 1.0);
        assert_eq!(eval_bspline(&[-1.0, 0.0, 1.0, 2.0], 1, 0, 1.0).unwrap(), 0.0);
        assert_eq!(eval_bspline(&t, 0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(eval_bspline(&t, 0, 1, 0.5).unwrap(), 0.5);
        assert_eq!(eval_bspline_deriv(&t, 0, 1, 0.5).unwrap(), 1.0);
        assert_eq!(eval_bspline_deriv(&t, 0, 1, 1.5).unwrap(), -1.0);
        assert_eq!(eval_bspline_deriv(&t, 0, 0, 0.5), Err(Error::DegreeZeroDerivative));
    }

    #[test]
    fn quadratic_uniform_value() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert!((eval_bspline(&t, 0, 2, 1.5).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn local_values_match_recursion() {
        let kv = KnotVector::polynomial(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![4, 1, 2, 3, 4], 3, false)
            .unwrap();
        let t = kv.knots();
        for (j, &s) in kv.element_spans().iter().enumerate() {
            let (a, b) = kv.element(j);
            for &x in &[0.0, 0.3, 0.9] {
                let u = a + (b - a) * x;
                let mut v = [0.0; 4];
                let mut d = [0.0; 4];
                basis_values_derivs(t, s, 3, a, (b - a) * x, &mut v, &mut d);
                for k in 0..4 {
                    let e = eval_bspline(t, s - 3 + k, 3, u).unwrap();
                    let de = eval_bspline_deriv(t, s - 3 + k, 3, u).unwrap();
                    assert!((v[k] - e).abs() < 1e-14);
                    assert!((d[k] - de).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hat_insertion_midpoint() {
        let kv = KnotVector::uniform(1, 2, 1, false).unwrap();
        let f = kv.bisect(&[0]).unwrap();
        let m = knot_insertion(&kv, &f).unwrap();
        // The hat at 1/2 gains coefficient 1/2 on the new hat at 1/4.
        assert_eq!(m[(1, 1)], 0.5);
        assert_eq!(m[(2, 1)], 1.0);
        assert_eq!(m[(3, 2)], 1.0);
    }

    #[test]
    fn oslo_matches_boehm() {
        let kv = KnotVector::polynomial(vec![0.0, 0.25, 0.5, 1.0], vec![3, 1, 2, 3], 2, true).unwrap();
        let f = kv.refine(&[1, 2], 1.0).unwrap().fine.bisect(&[0, 3]).unwrap();
        let f = KnotVector::polynomial(f.nodes().to_vec(), {
            let mut m = f.mult().to_vec();
            m[2] = 2;
            m
        }, 2, true)
        .unwrap();
        let a = knot_insertion(&kv, &f).unwrap();
        let b = prolongation(kv.knots(), f.knots(), 2).unwrap().to_dense();
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn derivative_matrix_p1_open() {
        let kv = KnotVector::uniform(1, 4, 1, false).unwrap();
        let d = derivative_matrix(&kv).unwrap();
        assert_eq!(d.ncols(), 3);
        assert_eq!(d.nrows, 4);
        assert_eq!(d.cols[0], vec![(0, 4.0), (1, -4.0)]);
    }

    #[test]
    fn derivative_columns_integrate_to_zero() {
        // Open curve: the retained functions vanish at both ends, so the
        // integral of each derivative is zero.
        let kv = KnotVector::polynomial(vec![0.0, 0.125, 0.5, 0.75, 1.0], vec![4, 1, 3, 2, 4], 3, false).unwrap();
        let d = derivative_matrix(&kv).unwrap();
        let (p, t) = (kv.degree(), kv.knots());
        let integral = |r: usize| (t[r + 1 + p] - t[r + 1]) / p as f64;
        for col in &d.cols {
            let s: f64 = col.iter().map(|&(r, v)| v * integral(r)).sum();
            assert!(s.abs() < 1e-13, "{s}");
        }
    }

    #[test]
    fn derivative_matrix_closed_annihilates_constants() {
        let kv = KnotVector::polynomial(vec![0.0, 0.25, 0.5, 1.0], vec![3, 1, 2, 3], 2, true).unwrap();
        let d = derivative_matrix(&kv).unwrap();
        let y = d.apply(&vec![1.0; d.ncols()]);
        assert!(y.iter().all(|v| v.abs() < 1e-13));
        let rational = kv.with_weights(vec![1.0, 2.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(derivative_matrix(&rational).unwrap_err(), Error::Rational);
    }

    #[test]
    fn wrap_dimensions() {
        let kv = KnotVector::uniform(2, 5, 1, true).unwrap();
        assert_eq!(wrap_basis(&kv).dim(), kv.dim() - 1);
        let kv = KnotVector::uniform(2, 5, 1, false).unwrap();
        assert_eq!(wrap_basis(&kv).dim(), kv.dim() - 2);
    }
}
