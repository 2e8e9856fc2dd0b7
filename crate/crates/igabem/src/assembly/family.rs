//! Local function families evaluated on one element.

use crate::basis::{basis_values, basis_values_derivs, lower_knots, rationalize, WrapMap};
use crate::geometry::{Eval, Pt};

use super::Mesh;

/// Marks a local function that is not part of the global space.
pub const DROPPED: usize = usize::MAX;

/// Functions supported on an element, already multiplied by whatever
/// Jacobian the integral needs.
pub trait Family: Sync {
    fn nloc(&self) -> usize;
    /// Global indices of the local functions of element `e`.
    fn indices(&self, e: usize, out: &mut [usize]);
    fn eval(&self, e: usize, pt: Pt, ev: &Eval, out: &mut [f64]);
}

/// Degree `p - 1` B-splines times the speed `|g'|`.
pub struct YJac<'a> {
    mesh: &'a Mesh<'a>,
}

impl<'a> YJac<'a> {
    pub fn new(mesh: &'a Mesh<'a>) -> Self {
        Self { mesh }
    }
}

impl Family for YJac<'_> {
    fn nloc(&self) -> usize {
        self.mesh.kv.degree()
    }

    fn indices(&self, e: usize, out: &mut [usize]) {
        let s = self.mesh.elems[e].span;
        let p = self.mesh.kv.degree();
        for (k, o) in out.iter_mut().enumerate().take(p) {
            *o = s - p + k;
        }
    }

    fn eval(&self, e: usize, pt: Pt, ev: &Eval, out: &mut [f64]) {
        let s = self.mesh.elems[e].span;
        let p = self.mesh.kv.degree();
        basis_values(lower_knots(self.mesh.kv), s - 1, p - 1, pt.base, pt.off, out);
        let sp = ev.speed();
        for v in out.iter_mut().take(p) {
            *v *= sp;
        }
    }
}

fn wrapped_indices(mesh: &Mesh, map: &WrapMap, e: usize, out: &mut [usize]) {
    let s = mesh.elems[e].span;
    let p = mesh.kv.degree();
    for (k, o) in out.iter_mut().enumerate().take(p + 1) {
        *o = map.of_bspline(s - p + k).unwrap_or(DROPPED);
    }
}

fn nurbs_values(mesh: &Mesh, e: usize, pt: Pt, vals: &mut [f64], ders: &mut [f64]) {
    let kv = mesh.kv;
    let s = mesh.elems[e].span;
    let p = kv.degree();
    basis_values_derivs(kv.knots(), s, p, pt.base, pt.off, vals, ders);
    if !kv.is_polynomial() {
        rationalize(&kv.weights()[s - p..=s], &mut vals[..=p], &mut ders[..=p]);
    }
}

/// Parameter derivatives of the wrapped NURBS.
pub struct XDeriv<'a> {
    mesh: &'a Mesh<'a>,
    map: WrapMap,
}

impl<'a> XDeriv<'a> {
    pub fn new(mesh: &'a Mesh<'a>) -> Self {
        Self { mesh, map: WrapMap::new(mesh.kv) }
    }
}

impl Family for XDeriv<'_> {
    fn nloc(&self) -> usize {
        self.mesh.kv.degree() + 1
    }

    fn indices(&self, e: usize, out: &mut [usize]) {
        wrapped_indices(self.mesh, &self.map, e, out);
    }

    fn eval(&self, e: usize, pt: Pt, _: &Eval, out: &mut [f64]) {
        let mut vals = [0.0; 8];
        nurbs_values(self.mesh, e, pt, &mut vals, out);
    }
}

/// Wrapped NURBS times the speed.
pub struct XJac<'a> {
    mesh: &'a Mesh<'a>,
    map: WrapMap,
}

impl<'a> XJac<'a> {
    pub fn new(mesh: &'a Mesh<'a>) -> Self {
        Self { mesh, map: WrapMap::new(mesh.kv) }
    }
}

impl Family for XJac<'_> {
    fn nloc(&self) -> usize {
        self.mesh.kv.degree() + 1
    }

    fn indices(&self, e: usize, out: &mut [usize]) {
        wrapped_indices(self.mesh, &self.map, e, out);
    }

    fn eval(&self, e: usize, pt: Pt, ev: &Eval, out: &mut [f64]) {
        let mut ders = [0.0; 8];
        nurbs_values(self.mesh, e, pt, out, &mut ders);
        let sp = ev.speed();
        for v in out.iter_mut().take(self.nloc()) {
            *v *= sp;
        }
    }
}

/// A single scalar density given by a closure.
pub struct Scalar<F> {
    f: F,
}

impl<F: Fn(usize, Pt, &Eval) -> f64 + Sync> Scalar<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F: Fn(usize, Pt, &Eval) -> f64 + Sync> Family for Scalar<F> {
    fn nloc(&self) -> usize {
        1
    }

    fn indices(&self, _: usize, out: &mut [usize]) {
        out[0] = 0;
    }

    fn eval(&self, e: usize, pt: Pt, ev: &Eval, out: &mut [f64]) {
        out[0] = (self.f)(e, pt, ev);
    }
}

/// The density `sum_i c_i phi_i` of a family with coefficient vector `c`.
pub struct Coefficients<'a> {
    fam: &'a dyn Family,
    coef: &'a [f64],
}

impl<'a> Coefficients<'a> {
    pub fn new(fam: &'a dyn Family, coef: &'a [f64]) -> Self {
        Self { fam, coef }
    }
}

impl Family for Coefficients<'_> {
    fn nloc(&self) -> usize {
        1
    }

    fn indices(&self, _: usize, out: &mut [usize]) {
        out[0] = 0;
    }

    fn eval(&self, e: usize, pt: Pt, ev: &Eval, out: &mut [f64]) {
        let n = self.fam.nloc();
        let mut idx = [0usize; 8];
        let mut v = [0.0; 8];
        self.fam.indices(e, &mut idx[..n]);
        self.fam.eval(e, pt, ev, &mut v[..n]);
        out[0] = (0..n).filter(|&k| idx[k] != DROPPED).map(|k| self.coef[idx[k]] * v[k]).sum();
    }
}
