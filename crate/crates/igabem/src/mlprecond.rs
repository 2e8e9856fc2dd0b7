//! Local multilevel diagonal additive Schwarz preconditioners.
//!
//! For a hierarchy of nested knot vectors the preconditioner is
//!
//! ```text
//! S^-1 = sum_l sum_{i in I_l} phi_{l,i} <A_l phi_{l,i}, phi_{l,i}>^-1 phi_{l,i}^T
//! ```
//!
//! with `phi_{l,i}` expressed in finest-level coefficients. `I_0` holds every
//! index and `I_l` (`l >= 1`) the functions whose support contains a node
//! that is new on level `l`. For the hypersingular operator the `phi_{l,i}`
//! are the wrapped NURBS; for the weakly-singular operator they are the
//! derivatives of the wrapped degree-`p` B-splines, completed by the
//! constant function through `<V 1, 1>^-1 1 1^T`.
//!
//! Every basis function gets a global id that is shared across levels as
//! long as its local knot vector does not change. Restriction and
//! prolongation then touch only the changed functions, so an apply costs
//! `O(N_L + sum_l |I_l|)` operations.

use nalgebra::{DMatrix, DVector};

use crate::basis::{derivative_matrix, knot_insertion_knots, lower_knots, prolongation_rows, WrapMap};
use crate::knotline::{Hierarchy, KnotVector};
use crate::{Error, Result};

/// Which operator the preconditioner is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    /// Hypersingular operator on the wrapped NURBS.
    W,
    /// Weakly-singular operator on the degree `p - 1` B-splines.
    V,
}

/// Discrete space of one level: B-splines on `knots`, optionally weighted
/// and wrapped.
#[derive(Clone, Debug)]
struct Space {
    knots: Vec<f64>,
    deg: usize,
    weights: Option<Vec<f64>>,
    map: Option<WrapMap>,
}

impl Space {
    fn x_space(kv: &KnotVector) -> Self {
        Self {
            knots: kv.knots().to_vec(),
            deg: kv.degree(),
            weights: (!kv.is_polynomial()).then(|| kv.weights().to_vec()),
            map: Some(WrapMap::new(kv)),
        }
    }

    fn y_space(kv: &KnotVector) -> Self {
        Self { knots: lower_knots(kv).to_vec(), deg: kv.degree() - 1, weights: None, map: None }
    }

    fn n_bsplines(&self) -> usize {
        self.knots.len() - self.deg - 1
    }

    fn dim(&self) -> usize {
        self.map.map_or(self.n_bsplines(), |m| m.dim())
    }

    fn bsplines(&self, m: usize) -> Vec<usize> {
        self.map.map_or(vec![m], |w| w.bsplines(m))
    }

    fn of_bspline(&self, k: usize) -> Option<usize> {
        self.map.map_or(Some(k), |w| w.of_bspline(k))
    }

    fn window(&self, k: usize) -> &[f64] {
        &self.knots[k..=k + self.deg + 1]
    }

    fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    /// Whether the closed support of function `m` contains a node in `z`.
    fn touches(&self, m: usize, z: &[f64]) -> bool {
        self.bsplines(m).iter().any(|&k| {
            let (a, b) = (self.knots[k], self.knots[k + self.deg + 1]);
            let i = z.partition_point(|&v| v < a);
            i < z.len() && z[i] <= b
        })
    }
}

/// Fine B-splines with the same local knot vector as a coarse one.
fn kept_bsplines(c: &Space, f: &Space) -> Vec<Option<usize>> {
    let (nc, nf) = (c.n_bsplines(), f.n_bsplines());
    let mut out = vec![None; nf];
    let (mut j, mut k) = (0, 0);
    while j < nc && k < nf {
        let ord = c
            .window(j)
            .iter()
            .zip(f.window(k))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal);
        match ord {
            std::cmp::Ordering::Equal => {
                out[k] = Some(j);
                j += 1;
                k += 1;
            }
            std::cmp::Ordering::Less => j += 1,
            std::cmp::Ordering::Greater => k += 1,
        }
    }
    out
}

/// Fine functions that coincide with a coarse function.
fn kept_functions(c: &Space, f: &Space) -> Vec<Option<usize>> {
    let kb = kept_bsplines(c, f);
    (0..f.dim())
        .map(|m| {
            let bs = f.bsplines(m);
            let mut target = None;
            for &k in &bs {
                let cm = c.of_bspline(kb[k]?)?;
                if target.is_some_and(|t| t != cm) {
                    return None;
                }
                target = Some(cm);
            }
            let t = target?;
            (c.bsplines(t).len() == bs.len()).then_some(t)
        })
        .collect()
}

/// Coarse coefficients of new fine function `m`: `phi^c_j = sum_m c phi^f_m`.
fn fine_row(c: &Space, f: &Space, m: usize) -> Vec<(usize, f64)> {
    let k0 = f.bsplines(m)[0];
    let (j0, row) = prolongation_rows(&c.knots, &f.knots, c.deg, &[k0]).pop().unwrap();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (l, &v) in row.iter().enumerate() {
        let j = j0 + l;
        if v == 0.0 {
            continue;
        }
        let Some(cm) = c.of_bspline(j) else { continue };
        let v = v * c.weight(j) / f.weight(k0);
        match out.iter_mut().find(|e| e.0 == cm) {
            Some(e) => e.1 += v,
            None => out.push((cm, v)),
        }
    }
    out
}

/// Dense `P` with `phi^c_j = sum_m P[m][j] phi^f_m`.
fn dense_prolongation(c: &Space, f: &Space) -> Result<DMatrix<f64>> {
    let pb = knot_insertion_knots(&c.knots, &f.knots, c.deg)?;
    let mut p = DMatrix::zeros(f.dim(), c.dim());
    for m in 0..f.dim() {
        let k0 = f.bsplines(m)[0];
        for j in 0..c.n_bsplines() {
            if let Some(cm) = c.of_bspline(j) {
                p[(m, cm)] += pb[(k0, j)] * c.weight(j) / f.weight(k0);
            }
        }
    }
    Ok(p)
}

#[derive(Clone, Debug)]
struct Level {
    /// Prolongation rows into this level: new gid and coarse gids.
    rows: Vec<(usize, Vec<(usize, f64)>)>,
    /// Local directions in gids and their inverse diagonal entries.
    locals: Vec<(Vec<(usize, f64)>, f64)>,
}

/// Multilevel additive Schwarz preconditioner of the finest level.
#[derive(Clone, Debug)]
pub struct MlPreconditioner {
    op: Operator,
    levels: Vec<Level>,
    fine_gids: Vec<usize>,
    n_gids: usize,
    /// `<V 1, 1>` for the weakly-singular operator.
    c_one: Option<f64>,
}

/// Index sets `I_l` in the level numbering of the wrapped degree-`p` space.
pub fn local_index_sets(h: &Hierarchy) -> Vec<Vec<usize>> {
    (0..h.len())
        .map(|l| {
            let s = Space::x_space(h.level(l));
            if l == 0 {
                (0..s.dim()).collect()
            } else {
                let z = h.new_nodes(l);
                (0..s.dim()).filter(|&m| s.touches(m, z)).collect()
            }
        })
        .collect()
}

/// Local direction `i` of level `kv`: for `W` the unit vector, for `V` the
/// derivative coefficients in the degree `p - 1` B-splines.
pub fn local_direction(op: Operator, kv: &KnotVector, i: usize) -> Result<Vec<(usize, f64)>> {
    match op {
        Operator::W => Ok(vec![(i, 1.0)]),
        Operator::V => Ok(derivative_matrix(kv)?.cols.swap_remove(i)),
    }
}

/// `<A phi_i, phi_i>` for every index in `idx`, read off a level matrix.
pub fn level_diagonal(op: Operator, kv: &KnotVector, a: &DMatrix<f64>, idx: &[usize]) -> Result<Vec<f64>> {
    match op {
        Operator::W => Ok(idx.iter().map(|&i| a[(i, i)]).collect()),
        Operator::V => {
            let d = derivative_matrix(kv)?;
            Ok(idx
                .iter()
                .map(|&i| {
                    let col = &d.cols[i];
                    let mut s = 0.0;
                    for &(r, u) in col {
                        for &(c, v) in col {
                            s += u * a[(r, c)] * v;
                        }
                    }
                    s
                })
                .collect())
        }
    }
}

impl MlPreconditioner {
    /// Builds the preconditioner. `diag(l, i)` returns `<A_l phi_i, phi_i>`
    /// for `i` in `I_l`; `c_one` is `<V 1, 1>` (ignored for `W`).
    pub fn build(
        h: &Hierarchy,
        op: Operator,
        mut diag: impl FnMut(usize, &[usize]) -> Result<Vec<f64>>,
        c_one: f64,
    ) -> Result<Self> {
        let space = |kv: &KnotVector| match op {
            Operator::W => Space::x_space(kv),
            Operator::V => Space::y_space(kv),
        };
        let sets = local_index_sets(h);
        let mut spaces = space(h.level(0));
        let mut gids: Vec<usize> = (0..spaces.dim()).collect();
        let mut n_gids = gids.len();
        let mut levels = Vec::with_capacity(h.len());
        for l in 0..h.len() {
            let kv = h.level(l);
            let mut rows = Vec::new();
            if l > 0 {
                let fine = space(kv);
                let kept = kept_functions(&spaces, &fine);
                let mut fg = vec![0; fine.dim()];
                for m in 0..fine.dim() {
                    match kept[m] {
                        Some(cm) => fg[m] = gids[cm],
                        None => {
                            fg[m] = n_gids;
                            n_gids += 1;
                            let row = fine_row(&spaces, &fine, m);
                            rows.push((fg[m], row.into_iter().map(|(j, v)| (gids[j], v)).collect()));
                        }
                    }
                }
                spaces = fine;
                gids = fg;
            }
            let idx = &sets[l];
            let dv = diag(l, idx)?;
            if dv.len() != idx.len() {
                return Err(Error::Dimension { expected: idx.len(), got: dv.len() });
            }
            let dmat = match op {
                Operator::V => Some(derivative_matrix(kv)?),
                Operator::W => None,
            };
            let mut locals = Vec::with_capacity(idx.len());
            for (&i, &d) in idx.iter().zip(&dv) {
                if !(d > 0.0) {
                    return Err(Error::NonPositiveDiagonal { index: i, value: d });
                }
                let dir: Vec<(usize, f64)> = match &dmat {
                    None => vec![(gids[i], 1.0)],
                    Some(dm) => dm.cols[i].iter().map(|&(r, v)| (gids[r], v)).collect(),
                };
                locals.push((dir, 1.0 / d));
            }
            levels.push(Level { rows, locals });
        }
        let c_one = match op {
            Operator::V if !(c_one > 0.0) => return Err(Error::NonPositiveDiagonal { index: 0, value: c_one }),
            Operator::V => Some(c_one),
            Operator::W => None,
        };
        Ok(Self { op, levels, fine_gids: gids, n_gids, c_one })
    }

    /// Builds from the Galerkin matrices of all levels.
    pub fn from_matrices(h: &Hierarchy, op: Operator, mats: &[DMatrix<f64>]) -> Result<Self> {
        if mats.len() != h.len() {
            return Err(Error::Dimension { expected: h.len(), got: mats.len() });
        }
        let c_one = mats.last().map_or(0.0, |m| m.sum());
        Self::build(h, op, |l, idx| level_diagonal(op, h.level(l), &mats[l], idx), c_one)
    }

    pub fn operator(&self) -> Operator {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.fine_gids.len()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Sizes `|I_l|`.
    pub fn local_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.locals.len()).collect()
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.apply_counted(r).map(|(z, _)| z)
    }

    /// Apply together with the number of multiply-adds performed.
    pub fn apply_counted(&self, r: &[f64]) -> Result<(Vec<f64>, u64)> {
        let n = self.dim();
        if r.len() != n {
            return Err(Error::Dimension { expected: n, got: r.len() });
        }
        let mut ops = 0u64;
        let mut rv = vec![0.0; self.n_gids];
        for (m, &g) in self.fine_gids.iter().enumerate() {
            rv[g] = r[m];
        }
        // Restriction and local solves, finest level first.
        let mut z: Vec<Vec<f64>> = vec![Vec::new(); self.levels.len()];
        for (l, lev) in self.levels.iter().enumerate().rev() {
            z[l] = lev
                .locals
                .iter()
                .map(|(dir, d)| {
                    ops += dir.len() as u64 + 1;
                    d * dir.iter().map(|&(g, v)| v * rv[g]).sum::<f64>()
                })
                .collect();
            for (k, row) in &lev.rows {
                for &(j, c) in row {
                    rv[j] += c * rv[*k];
                }
                ops += row.len() as u64;
            }
        }
        // Prolongation and accumulation, coarsest level first.
        let mut x = vec![0.0; self.n_gids];
        for (l, lev) in self.levels.iter().enumerate() {
            for (k, row) in &lev.rows {
                x[*k] = row.iter().map(|&(j, c)| c * x[j]).sum();
                ops += row.len() as u64;
            }
            for ((dir, _), zi) in lev.locals.iter().zip(&z[l]) {
                for &(g, v) in dir {
                    x[g] += zi * v;
                }
                ops += dir.len() as u64;
            }
        }
        let mut out: Vec<f64> = self.fine_gids.iter().map(|&g| x[g]).collect();
        ops += n as u64;
        if let Some(c) = self.c_one {
            let s = r.iter().sum::<f64>() / c;
            out.iter_mut().for_each(|v| *v += s);
            ops += 2 * n as u64;
        }
        Ok((out, ops))
    }

    /// The preconditioner as a dense matrix, column by column.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let z = self.apply(&e)?;
            e[j] = 0.0;
            m.set_column(j, &DVector::from_vec(z));
        }
        Ok(m)
    }
}

/// The preconditioner assembled from explicit matrix products: level-to-level
/// maps composed from single knot insertions, local directions as dense
/// columns and the diagonal of `A_l` on them.
pub fn dense_oracle(h: &Hierarchy, op: Operator, mats: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let space = |kv: &KnotVector| match op {
        Operator::W => Space::x_space(kv),
        Operator::V => Space::y_space(kv),
    };
    let nl = h.len();
    let n = space(h.finest()).dim();
    // id_{l -> L}
    let mut ids = vec![DMatrix::identity(n, n); nl];
    for l in (0..nl.saturating_sub(1)).rev() {
        let p = dense_prolongation(&space(h.level(l)), &space(h.level(l + 1)))?;
        ids[l] = &ids[l + 1] * p;
    }
    let sets = local_index_sets(h);
    let mut s = DMatrix::zeros(n, n);
    for l in 0..nl {
        let kv = h.level(l);
        let dim_l = space(kv).dim();
        let mut cols = DMatrix::zeros(dim_l, sets[l].len());
        for (c, &i) in sets[l].iter().enumerate() {
            for (r, v) in local_direction(op, kv, i)? {
                cols[(r, c)] = v;
            }
        }
        let a_loc = cols.transpose() * &mats[l] * &cols;
        let dinv = DMatrix::from_diagonal(&a_loc.diagonal().map(|d| 1.0 / d));
        let g = &ids[l] * &cols;
        s += &g * dinv * g.transpose();
    }
    if op == Operator::V {
        let c = mats[nl - 1].sum();
        s.add_scalar_mut(1.0 / c);
    }
    Ok(s)
}

/// Jacobi preconditioner `diag(A)^-1 r`.
pub fn apply_diag(a: &DMatrix<f64>, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != a.nrows() {
        return Err(Error::Dimension { expected: a.nrows(), got: r.len() });
    }
    (0..r.len())
        .map(|i| {
            let d = a[(i, i)];
            if d == 0.0 {
                Err(Error::NonPositiveDiagonal { index: i, value: d })
            } else {
                Ok(r[i] / d)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knotline::KnotVector;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * n as f64
    }

    fn hierarchy(closed: bool, p: usize) -> Hierarchy {
        let kv = KnotVector::uniform(p, 4, 1, closed).unwrap();
        let mut h = Hierarchy::new(kv);
        for marks in [vec![0usize], vec![1, 2], vec![0]] {
            let f = h.finest().bisect(&marks).unwrap();
            h.push(f).unwrap();
        }
        h
    }

    fn mats(h: &Hierarchy, op: Operator) -> Vec<DMatrix<f64>> {
        h.levels()
            .iter()
            .enumerate()
            .map(|(l, kv)| {
                let n = match op {
                    Operator::W => WrapMap::new(kv).dim(),
                    Operator::V => kv.dim() - 1,
                };
                spd(n, l as u64)
            })
            .collect()
    }

    #[test]
    fn single_level_is_jacobi() {
        let kv = KnotVector::uniform(2, 6, 1, false).unwrap();
        let h = Hierarchy::new(kv);
        let a = mats(&h, Operator::W);
        let pc = MlPreconditioner::from_matrices(&h, Operator::W, &a).unwrap();
        let r: Vec<f64> = (0..pc.dim()).map(|i| i as f64 + 1.0).collect();
        let z = pc.apply(&r).unwrap();
        let zd = apply_diag(&a[0], &r).unwrap();
        for (u, v) in z.iter().zip(&zd) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_matches_oracle() {
        for closed in [false, true] {
            for p in [1, 2, 3] {
                for op in [Operator::W, Operator::V] {
                    if op == Operator::V && p < 2 {
                        continue;
                    }
                    let h = hierarchy(closed, p);
                    let a = mats(&h, op);
                    let pc = MlPreconditioner::from_matrices(&h, op, &a).unwrap();
                    let d = pc.to_dense().unwrap();
                    let o = dense_oracle(&h, op, &a).unwrap();
                    let err = (&d - &o).amax() / o.amax();
                    assert!(err < 1e-13, "closed={closed} p={p} {op:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn one_bisection_selects_functions_around_the_new_node() {
        let kv = KnotVector::uniform(2, 8, 1, false).unwrap();
        let mut h = Hierarchy::new(kv);
        let f = h.finest().bisect(&[3]).unwrap();
        h.push(f).unwrap();
        let sets = local_index_sets(&h);
        assert_eq!(sets[0].len(), WrapMap::new(h.level(0)).dim());
        // The new simple knot 7/16 lies in the closed support of p + 2
        // fine B-splines.
        assert_eq!(sets[1], vec![2, 3, 4, 5]);
    }
}
