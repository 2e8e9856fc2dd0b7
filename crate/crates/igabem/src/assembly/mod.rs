//! Galerkin matrices, right-hand sides and potential evaluations.
//!
//! All integrals are written in the parameter domain. The single-layer
//! kernel is `G(x, y) = -log|x - y| / (2 pi)`. The double-layer kernel is
//! `K(x, y) = (x - y) . n_y / (2 pi |x - y|^2)` and its adjoint
//! `K'(x, y) = (y - x) . n_x / (2 pi |x - y|^2)`; with outward normals this
//! gives `K 1 = -1/2` on smooth parts of a closed curve.
//!
//! * `V[i][j] = int int G B_i(s) |g'(s)| B_j(t) |g'(t)| ds dt` on the degree
//!   `p - 1` B-splines.
//! * `W[i][j] = int int G R_i'(s) R_j'(t) ds dt` on the wrapped NURBS
//!   (Maue's formula with the Jacobians cancelled), plus `<R_i, 1><R_j, 1>`
//!   on closed curves.

mod data;
mod engine;
mod family;
mod potential;

use nalgebra::{DMatrix, DVector};

use crate::basis::WrapMap;
use crate::geometry::{Curve, Eval, Pt, V2};
use crate::knotline::KnotVector;
use crate::quadrature::Rule;
use crate::{Error, Result};

pub use data::{
    data_rule, l2_project, pacman_gradient, pacman_normal_derivative, pacman_potential, PiecewisePoly,
};
pub use engine::{kernel_at, Ctx, Kernel, Side};
pub use family::{Coefficients, Family, Scalar, XDeriv, XJac, YJac, DROPPED};
pub use potential::{eval_potentials, SamplePoint};

/// Quadrature parameters.
///
/// `n_g` is the Gauss order of the regular parts of touching element pairs;
/// separated pairs use `n_g / 2`, `3 n_g / 8` or `n_g / 4` points per
/// direction depending on their separation. `n_s` is the order of the
/// logarithmic Gauss rules. Pairs closer than `near` times their larger
/// arclength are bisected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub n_g: usize,
    pub n_s: usize,
    pub near: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { n_g: 16, n_s: 16, near: 2.0 }
    }
}

impl QuadratureSpec {
    pub fn with_order(n: usize) -> Self {
        Self { n_g: n, n_s: n, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_g < 2 {
            return Err(Error::QuadratureOrder(self.n_g));
        }
        if self.n_s < 2 {
            return Err(Error::QuadratureOrder(self.n_s));
        }
        if !(self.near > 0.0) {
            return Err(Error::Invalid("near-field threshold must be positive".into()));
        }
        Ok(())
    }
}

/// One element of the discretization.
#[derive(Clone, Copy, Debug)]
pub struct Elem {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    /// Knot span of the element in the discretization knot array.
    pub span: usize,
    /// Span of the curve containing the element.
    pub gspan: usize,
    /// Curve point at the parameter midpoint.
    pub mid: V2,
    /// Arclength.
    pub len: f64,
}

impl Elem {
    /// Parameter point at local coordinate `x`, anchored at the nearer end.
    #[inline]
    pub fn pt(&self, x: f64) -> Pt {
        if x <= 0.5 {
            Pt { span: self.gspan, base: self.a, off: self.h * x }
        } else {
            Pt { span: self.gspan, base: self.b, off: -self.h * (1.0 - x) }
        }
    }
}

/// A discretization knot vector on a curve.
#[derive(Clone, Debug)]
pub struct Mesh<'a> {
    pub curve: &'a Curve,
    pub kv: &'a KnotVector,
    pub elems: Vec<Elem>,
}

impl<'a> Mesh<'a> {
    pub fn new(curve: &'a Curve, kv: &'a KnotVector) -> Result<Self> {
        if kv.interval() != curve.interval() || kv.closed() != curve.closed() {
            return Err(Error::Invalid("knot vector does not fit the curve".into()));
        }
        for z in curve.breakpoints() {
            if kv.nodes().binary_search_by(|v| v.total_cmp(z)).is_err() {
                return Err(Error::Invalid(format!("curve breakpoint {z} is not a node")));
            }
        }
        let g = crate::quadrature::gauss_legendre(8);
        let elems = kv
            .element_spans()
            .into_iter()
            .enumerate()
            .map(|(j, span)| {
                let (a, b) = kv.element(j);
                let gspan = curve.span_of_element(a);
                let mut e = Elem { a, b, h: b - a, span, gspan, mid: [0.0; 2], len: 0.0 };
                e.mid = curve.eval(e.pt(0.5)).x;
                e.len = (0..g.len()).map(|i| g.w[i] * e.h * curve.eval(e.pt(g.x[i])).speed()).sum();
                e
            })
            .collect();
        Ok(Self { curve, kv, elems })
    }

    pub fn n_elements(&self) -> usize {
        self.elems.len()
    }

    #[inline]
    pub fn eval(&self, pt: Pt) -> Eval {
        self.curve.eval(pt)
    }

    /// If elements `i != j` share a vertex, returns them ordered so that the
    /// end of the first is the start of the second.
    pub fn adjacent(&self, i: usize, j: usize) -> Option<(usize, usize)> {
        let n = self.elems.len();
        if i + 1 == j {
            Some((i, j))
        } else if j + 1 == i {
            Some((j, i))
        } else if self.kv.closed() && n > 2 && i == n - 1 && j == 0 {
            Some((i, j))
        } else if self.kv.closed() && n > 2 && j == n - 1 && i == 0 {
            Some((j, i))
        } else {
            None
        }
    }

    /// Arclength of the whole curve.
    pub fn length(&self) -> f64 {
        self.elems.iter().map(|e| e.len).sum()
    }
}

pub(crate) fn gauss(n: usize) -> Rule {
    crate::quadrature::gauss_legendre(n.max(1))
}

/// Single-layer Galerkin matrix on the degree `p - 1` B-splines of `kv`.
pub fn assemble_v(curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<DMatrix<f64>> {
    if !kv.is_polynomial() {
        return Err(Error::Rational);
    }
    let mesh = Mesh::new(curve, kv)?;
    let ctx = Ctx::new(&mesh, quad)?;
    let fam = YJac::new(&mesh);
    Ok(ctx.assemble_symmetric(Kernel::Log, &fam, kv.dim() - 1))
}

/// Hypersingular Galerkin matrix on the wrapped NURBS of `kv`, without
/// stabilization.
pub fn assemble_w_unstabilized(
    curve: &Curve,
    kv: &KnotVector,
    quad: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    let mesh = Mesh::new(curve, kv)?;
    let ctx = Ctx::new(&mesh, quad)?;
    let fam = XDeriv::new(&mesh);
    Ok(ctx.assemble_symmetric(Kernel::Log, &fam, WrapMap::new(kv).dim()))
}

/// `<R_i, 1>` for the wrapped NURBS.
pub fn basis_integrals(curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<DVector<f64>> {
    let mesh = Mesh::new(curve, kv)?;
    let fam = XJac::new(&mesh);
    let one = |_: usize, _: Pt, _: &Eval| 1.0;
    Ok(load_vector(&mesh, &fam, WrapMap::new(kv).dim(), quad.n_g, &one))
}

/// Hypersingular Galerkin matrix, stabilized by `<R_i, 1><R_j, 1>` on closed
/// curves.
pub fn assemble_w(curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<DMatrix<f64>> {
    let mut w = assemble_w_unstabilized(curve, kv, quad)?;
    if kv.closed() {
        let c = basis_integrals(curve, kv, quad)?;
        w += &c * c.transpose();
    }
    Ok(w)
}

/// `int f(t) phi_j(t) dt` for a test family (whose values already contain
/// the Jacobian if wanted), by Gauss quadrature of order `n` per element.
pub fn load_vector(
    mesh: &Mesh,
    fam: &dyn Family,
    dim: usize,
    n: usize,
    f: &(dyn Fn(usize, Pt, &Eval) -> f64 + Sync),
) -> DVector<f64> {
    let g = gauss(n);
    let nl = fam.nloc();
    let mut out = DVector::zeros(dim);
    let mut vals = vec![0.0; nl];
    let mut idx = vec![0; nl];
    for (e, el) in mesh.elems.iter().enumerate() {
        fam.indices(e, &mut idx);
        for q in 0..g.len() {
            let pt = el.pt(g.x[q]);
            let ev = mesh.eval(pt);
            fam.eval(e, pt, &ev, &mut vals);
            let fw = f(e, pt, &ev) * g.w[q] * el.h;
            for k in 0..nl {
                if idx[k] != DROPPED {
                    out[idx[k]] += fw * vals[k];
                }
            }
        }
    }
    out
}

/// Right-hand side `<f, R_j>` with `f = 1` on the slit.
pub fn rhs_hyper_slit(curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<DVector<f64>> {
    basis_integrals(curve, kv, quad)
}

/// Right-hand side `<g, B_j>` with `g(x) = -x_1 / 2` on the slit.
pub fn rhs_weak_slit(curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<DVector<f64>> {
    let mesh = Mesh::new(curve, kv)?;
    let fam = YJac::new(&mesh);
    let g = |_: usize, _: Pt, ev: &Eval| -0.5 * ev.x[0];
    Ok(load_vector(&mesh, &fam, kv.dim() - 1, quad.n_g, &g))
}

/// Right-hand side `<(1/2 - K') phi_l, R_j>` of the hypersingular pacman
/// problem, where `phi_l` is the elementwise projection of the normal
/// derivative of the harmonic function `P`.
pub fn rhs_hyper_pacman(
    curve: &Curve,
    kv: &KnotVector,
    quad: &QuadratureSpec,
    phi_l: &PiecewisePoly,
) -> Result<DVector<f64>> {
    let mesh = Mesh::new(curve, kv)?;
    let ctx = Ctx::new(&mesh, quad)?;
    let test = XJac::new(&mesh);
    let dim = WrapMap::new(kv).dim();
    let dens = Scalar::new(|e: usize, pt: Pt, ev: &Eval| phi_l.eval_pt(&mesh, e, pt) * ev.speed());
    let half = |e: usize, pt: Pt, _: &Eval| 0.5 * phi_l.eval_pt(&mesh, e, pt);
    let mut f = load_vector(&mesh, &test, dim, quad.n_g, &half);
    let k = ctx.assemble_rhs(Kernel::AdjointDoubleLayer, &test, &dens, dim, None);
    f -= k;
    Ok(f)
}

/// Right-hand side `<(1/2 + K) P, B_j>` of the weakly-singular pacman
/// problem.
pub fn rhs_weak_pacman(curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<DVector<f64>> {
    let mesh = Mesh::new(curve, kv)?;
    let ctx = Ctx::new(&mesh, quad)?;
    let test = YJac::new(&mesh);
    let dim = kv.dim() - 1;
    let dens = Scalar::new(|_: usize, pt: Pt, ev: &Eval| trace_p(curve, pt, ev) * ev.speed());
    let half = |_: usize, pt: Pt, ev: &Eval| 0.5 * trace_p(curve, pt, ev);
    let mut g = load_vector(&mesh, &test, dim, quad.n_g, &half);
    // P vanishes on the straight edges.
    let skip: Vec<bool> = mesh.elems.iter().map(|e| curve.line_of_span(e.gspan).is_some()).collect();
    g += ctx.assemble_rhs(Kernel::DoubleLayer, &test, &dens, dim, Some(&skip));
    Ok(g)
}

/// Trace of the pacman function, exactly zero on the straight edges.
pub fn trace_p(curve: &Curve, pt: Pt, ev: &Eval) -> f64 {
    if curve.line_of_span(pt.span).is_some() {
        0.0
    } else {
        pacman_potential(ev.x)
    }
}
