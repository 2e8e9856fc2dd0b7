//! Element-pair quadrature.
//!
//! Identical and touching pairs are integrated in Duffy coordinates with the
//! logarithm of the Duffy radius split off and handled by log-weighted Gauss
//! rules. Close pairs are bisected until they are separated; separated pairs
//! use tensor Gauss rules whose order drops with the separation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::geometry::{dot, norm, Curve, Eval, Pt, V2};
use crate::quadrature::{log_gauss, Rule};
use crate::Result;

use super::family::{Family, DROPPED};
use super::{gauss, Mesh, QuadratureSpec};

pub(crate) const INV_2PI: f64 = 0.5 / std::f64::consts::PI;
const MAX_DEPTH: usize = 40;
const CHUNK: usize = 64;

/// Boundary integral kernels, `x` being the test point and `y` the
/// integration point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// `-log|x - y| / (2 pi)`.
    Log,
    /// `(x - y) . n_y / (2 pi |x - y|^2)`.
    DoubleLayer,
    /// `(y - x) . n_x / (2 pi |x - y|^2)`.
    AdjointDoubleLayer,
}

/// An evaluated point on an element.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Node {
    pub pt: Pt,
    pub ev: Eval,
    pub nrm: V2,
    pub line: Option<usize>,
}

struct Tier {
    rule: Rule,
    nodes: Vec<Vec<Node>>,
}

/// Quadrature context of a mesh.
pub struct Ctx<'m> {
    pub mesh: &'m Mesh<'m>,
    pub spec: QuadratureSpec,
    pub(crate) gl: Rule,
    pub(crate) lg: Rule,
    pub(crate) near_rule: Rule,
    tiers: Vec<Tier>,
    mids: Vec<Node>,
}

/// Family values cached at the far-field nodes.
pub struct Side<'a> {
    pub fam: &'a dyn Family,
    vals: Vec<Vec<Vec<f64>>>,
    idx: Vec<Vec<usize>>,
}

impl<'a> Side<'a> {
    pub fn new(ctx: &Ctx, fam: &'a dyn Family) -> Self {
        let nl = fam.nloc();
        let vals = ctx
            .tiers
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .enumerate()
                    .map(|(e, ns)| {
                        let mut v = vec![0.0; ns.len() * nl];
                        for (q, n) in ns.iter().enumerate() {
                            fam.eval(e, n.pt, &n.ev, &mut v[q * nl..(q + 1) * nl]);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let idx = (0..ctx.mesh.n_elements())
            .map(|e| {
                let mut i = vec![0; nl];
                fam.indices(e, &mut i);
                i
            })
            .collect();
        Self { fam, vals, idx }
    }

    pub fn indices(&self, e: usize) -> &[usize] {
        &self.idx[e]
    }

    /// Cached values at the nodes of far-field tier `t` on element `e`.
    pub(crate) fn cached(&self, t: usize, e: usize) -> &[f64] {
        &self.vals[t][e]
    }
}

#[inline]
pub(crate) fn kernel_value(kern: Kernel, d: V2, x: &Node, y: &Node) -> f64 {
    match kern {
        Kernel::Log => -INV_2PI * 0.5 * dot(d, d).ln(),
        Kernel::DoubleLayer => {
            if x.line.is_some() && x.line == y.line {
                0.0
            } else {
                INV_2PI * dot(d, y.nrm) / dot(d, d)
            }
        }
        Kernel::AdjointDoubleLayer => {
            if x.line.is_some() && x.line == y.line {
                0.0
            } else {
                -INV_2PI * dot(d, x.nrm) / dot(d, d)
            }
        }
    }
}

/// Kernel value at the curve points `x` (target) and `y` (source).
pub fn kernel_at(curve: &Curve, kern: Kernel, x: Pt, y: Pt) -> f64 {
    let node = |pt: Pt| {
        let ev = curve.eval(pt);
        Node { pt, ev, nrm: curve.normal(&ev), line: curve.line_of_span(pt.span) }
    };
    let (nx, ny) = (node(x), node(y));
    let dt = (x.base - y.base) + (x.off - y.off);
    kernel_value(kern, curve.chord(x, &nx.ev, y, &ny.ev, dt), &nx, &ny)
}

impl<'m> Ctx<'m> {
    pub fn new(mesh: &'m Mesh<'m>, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let n_g = spec.n_g;
        let orders = [(n_g / 2).max(2), (3 * n_g / 8).max(2), (n_g / 4).max(2)];
        let mut ctx = Self {
            mesh,
            spec: *spec,
            gl: gauss(n_g),
            lg: log_gauss(spec.n_s),
            near_rule: gauss(orders[0]),
            tiers: Vec::new(),
            mids: Vec::new(),
        };
        ctx.tiers = orders
            .iter()
            .map(|&n| {
                let rule = gauss(n);
                let nodes = (0..mesh.n_elements())
                    .map(|e| (0..rule.len()).map(|q| ctx.node(e, rule.x[q])).collect())
                    .collect();
                Tier { rule, nodes }
            })
            .collect();
        ctx.mids = (0..mesh.n_elements()).map(|e| ctx.node(e, 0.5)).collect();
        Ok(ctx)
    }

    #[inline]
    pub(crate) fn node_at(&self, pt: Pt) -> Node {
        let c = self.mesh.curve;
        let ev = c.eval(pt);
        Node { pt, ev, nrm: c.normal(&ev), line: c.line_of_span(pt.span) }
    }

    #[inline]
    pub(crate) fn node(&self, e: usize, x: f64) -> Node {
        self.node_at(self.mesh.elems[e].pt(x))
    }

    /// `gamma(x) - gamma(y)` for points on arbitrary elements.
    #[inline]
    pub(crate) fn chord(&self, x: &Node, y: &Node) -> V2 {
        let dt = (x.pt.base - y.pt.base) + (x.pt.off - y.pt.off);
        self.mesh.curve.chord(x.pt, &x.ev, y.pt, &y.ev, dt)
    }

    /// Distance over size of two pieces of elements.
    fn separation(&self, x: &Node, lx: f64, y: &Node, ly: f64) -> f64 {
        norm(self.chord(x, y)) / lx.max(ly)
    }

    pub(crate) fn far_tier(&self, ratio: f64) -> Option<usize> {
        if ratio < self.spec.near {
            None
        } else if ratio < 4.0 {
            Some(0)
        } else if ratio < 10.0 {
            Some(1)
        } else {
            Some(2)
        }
    }

    pub(crate) fn tier_nodes(&self, t: usize, e: usize) -> (&Rule, &[Node]) {
        (&self.tiers[t].rule, &self.tiers[t].nodes[e])
    }

    pub(crate) fn elem_ratio(&self, ea: usize, eb: usize) -> f64 {
        let (a, b) = (&self.mesh.elems[ea], &self.mesh.elems[eb]);
        self.separation(&self.mids[ea], a.len, &self.mids[eb], b.len)
    }

    pub(crate) fn mid_node(&self, e: usize) -> &Node {
        &self.mids[e]
    }

    /// Local matrix `out[i * nb + j] = int int k(x, y) a_i(x) b_j(y)` for
    /// test element `ea` and integration element `eb`.
    pub fn local(&self, kern: Kernel, a: &Side, b: &Side, ea: usize, eb: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if ea == eb {
            self.identical(kern, a, b, ea, out);
        } else if let Some((first, _)) = self.mesh.adjacent(ea, eb) {
            self.adjacent(kern, a, b, ea, eb, first == eb, out);
        } else {
            let ratio = self.elem_ratio(ea, eb);
            match self.far_tier(ratio) {
                Some(t) => self.far(kern, a, b, ea, eb, t, out),
                None => self.near(kern, a, b, ea, eb, [0.0, 1.0, 0.0, 1.0], 0, out),
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn accumulate(
        &self,
        a: &Side,
        b: &Side,
        ea: usize,
        eb: usize,
        x: &Node,
        y: &Node,
        w: f64,
        out: &mut [f64],
    ) {
        let (na, nb) = (a.fam.nloc(), b.fam.nloc());
        let mut fa = [0.0; 8];
        let mut fb = [0.0; 8];
        a.fam.eval(ea, x.pt, &x.ev, &mut fa[..na]);
        b.fam.eval(eb, y.pt, &y.ev, &mut fb[..nb]);
        for i in 0..na {
            let wi = w * fa[i];
            for j in 0..nb {
                out[i * nb + j] += wi * fb[j];
            }
        }
    }

    fn identical(&self, kern: Kernel, a: &Side, b: &Side, e: usize, out: &mut [f64]) {
        let el = &self.mesh.elems[e];
        let h = el.h;
        let (gl, lg) = (&self.gl, &self.lg);
        for tri in 0..2 {
            // tri 0: x = u, y = u (1 - w); tri 1: y = u, x = u (1 - w).
            let place = |u: f64, w: f64| -> (Node, Node, V2) {
                let (xl, yl, s) = if tri == 0 { (u, u * (1.0 - w), 1.0) } else { (u * (1.0 - w), u, -1.0) };
                let x = self.node(e, xl);
                let y = self.node(e, yl);
                let d = self.mesh.curve.chord(x.pt, &x.ev, y.pt, &y.ev, s * h * u * w);
                (x, y, d)
            };
            for iu in 0..gl.len() {
                let u = gl.x[iu];
                for iw in 0..gl.len() {
                    let w = gl.x[iw];
                    let (x, y, d) = place(u, w);
                    let k = match kern {
                        Kernel::Log => -INV_2PI * ((norm(d) / (h * u * w)).ln() + h.ln()),
                        _ => kernel_value(kern, d, &x, &y),
                    };
                    self.accumulate(a, b, e, e, &x, &y, k * gl.w[iu] * gl.w[iw] * u * h * h, out);
                }
            }
            if kern == Kernel::Log {
                // -log(u) and -log(w) parts.
                for iu in 0..lg.len() {
                    for iw in 0..gl.len() {
                        let (u, w) = (lg.x[iu], gl.x[iw]);
                        let (x, y, _) = place(u, w);
                        self.accumulate(a, b, e, e, &x, &y, INV_2PI * lg.w[iu] * gl.w[iw] * u * h * h, out);
                        let (u, w) = (gl.x[iw], lg.x[iu]);
                        let (x, y, _) = place(u, w);
                        self.accumulate(a, b, e, e, &x, &y, INV_2PI * gl.w[iw] * lg.w[iu] * u * h * h, out);
                    }
                }
            }
        }
    }

    /// Touching pair; `swap` means `eb` precedes `ea` along the curve.
    #[allow(clippy::too_many_arguments)]
    fn adjacent(&self, kern: Kernel, a: &Side, b: &Side, ea: usize, eb: usize, swap: bool, out: &mut [f64]) {
        let (e1, e2) = if swap { (eb, ea) } else { (ea, eb) };
        let (p, q) = (&self.mesh.elems[e1], &self.mesh.elems[e2]);
        let seam = p.b != q.a;
        let (gl, lg) = (&self.gl, &self.lg);
        let hh = p.h * q.h;
        // s = p.b - p.h x on the first, t = q.a + q.h y on the second.
        let place = |x: f64, y: f64| -> (Node, Node, V2) {
            let s = self.node_at(Pt { span: p.gspan, base: p.b, off: -p.h * x });
            let t = self.node_at(Pt { span: q.gspan, base: q.a, off: q.h * y });
            let d = if seam {
                [s.ev.x[0] - t.ev.x[0], s.ev.x[1] - t.ev.x[1]]
            } else {
                self.mesh.curve.chord(s.pt, &s.ev, t.pt, &t.ev, -(p.h * x + q.h * y))
            };
            if swap {
                (t, s, [-d[0], -d[1]])
            } else {
                (s, t, d)
            }
        };
        for tri in 0..2 {
            let coords = |u: f64, v: f64| if tri == 0 { (u, u * v) } else { (u * v, u) };
            for iu in 0..gl.len() {
                let u = gl.x[iu];
                for iv in 0..gl.len() {
                    let (x, y) = coords(u, gl.x[iv]);
                    let (nx, ny, d) = place(x, y);
                    let k = match kern {
                        Kernel::Log => -INV_2PI * (norm(d) / u).ln(),
                        _ => kernel_value(kern, d, &nx, &ny),
                    };
                    self.accumulate(a, b, ea, eb, &nx, &ny, k * gl.w[iu] * gl.w[iv] * u * hh, out);
                }
            }
            if kern == Kernel::Log {
                for iu in 0..lg.len() {
                    let u = lg.x[iu];
                    for iv in 0..gl.len() {
                        let (x, y) = coords(u, gl.x[iv]);
                        let (nx, ny, _) = place(x, y);
                        self.accumulate(a, b, ea, eb, &nx, &ny, INV_2PI * lg.w[iu] * gl.w[iv] * u * hh, out);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn near(&self, kern: Kernel, a: &Side, b: &Side, ea: usize, eb: usize, r: [f64; 4], depth: usize, out: &mut [f64]) {
        let (pa, pb) = (&self.mesh.elems[ea], &self.mesh.elems[eb]);
        let la = (r[1] - r[0]) * pa.len;
        let lb = (r[3] - r[2]) * pb.len;
        let xm = self.node(ea, 0.5 * (r[0] + r[1]));
        let ym = self.node(eb, 0.5 * (r[2] + r[3]));
        if depth >= MAX_DEPTH || self.separation(&xm, la, &ym, lb) >= self.spec.near {
            let g = &self.near_rule;
            let (ha, hb) = ((r[1] - r[0]) * pa.h, (r[3] - r[2]) * pb.h);
            for i in 0..g.len() {
                let x = self.node(ea, r[0] + (r[1] - r[0]) * g.x[i]);
                for j in 0..g.len() {
                    let y = self.node(eb, r[2] + (r[3] - r[2]) * g.x[j]);
                    let k = kernel_value(kern, self.chord(&x, &y), &x, &y);
                    self.accumulate(a, b, ea, eb, &x, &y, k * g.w[i] * g.w[j] * ha * hb, out);
                }
            }
            return;
        }
        if la >= lb {
            let m = 0.5 * (r[0] + r[1]);
            self.near(kern, a, b, ea, eb, [r[0], m, r[2], r[3]], depth + 1, out);
            self.near(kern, a, b, ea, eb, [m, r[1], r[2], r[3]], depth + 1, out);
        } else {
            let m = 0.5 * (r[2] + r[3]);
            self.near(kern, a, b, ea, eb, [r[0], r[1], r[2], m], depth + 1, out);
            self.near(kern, a, b, ea, eb, [r[0], r[1], m, r[3]], depth + 1, out);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn far(&self, kern: Kernel, a: &Side, b: &Side, ea: usize, eb: usize, t: usize, out: &mut [f64]) {
        let tier = &self.tiers[t];
        let (na, nb) = (a.fam.nloc(), b.fam.nloc());
        let (va, vb) = (&a.vals[t][ea], &b.vals[t][eb]);
        let (xs, ys) = (&tier.nodes[ea], &tier.nodes[eb]);
        let w = &tier.rule.w;
        let hh = self.mesh.elems[ea].h * self.mesh.elems[eb].h;
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                let k = kernel_value(kern, self.chord(x, y), x, y) * w[i] * w[j] * hh;
                for r in 0..na {
                    let kr = k * va[i * na + r];
                    for c in 0..nb {
                        out[r * nb + c] += kr * vb[j * nb + c];
                    }
                }
            }
        }
    }

    /// Symmetric Galerkin matrix of a symmetric kernel on one family.
    pub fn assemble_symmetric(&self, kern: Kernel, fam: &dyn Family, dim: usize) -> DMatrix<f64> {
        let side = Side::new(self, fam);
        let n = self.mesh.n_elements();
        let nl = fam.nloc();
        let bs = nl * nl;
        let mut g = DMatrix::zeros(dim, dim);
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let blocks: Vec<Vec<f64>> = (start..end)
                .into_par_iter()
                .map(|ea| {
                    let mut buf = vec![0.0; (n - ea) * bs];
                    for eb in ea..n {
                        let o = (eb - ea) * bs;
                        self.local(kern, &side, &side, ea, eb, &mut buf[o..o + bs]);
                    }
                    buf
                })
                .collect();
            for (ea, buf) in (start..end).zip(blocks) {
                let ia = side.indices(ea);
                for eb in ea..n {
                    let ib = side.indices(eb);
                    let m = &buf[(eb - ea) * bs..(eb - ea + 1) * bs];
                    for r in 0..nl {
                        if ia[r] == DROPPED {
                            continue;
                        }
                        for c in 0..nl {
                            if ib[c] == DROPPED {
                                continue;
                            }
                            if ea == eb {
                                g[(ia[r], ib[c])] += 0.5 * (m[r * nl + c] + m[c * nl + r]);
                            } else {
                                g[(ia[r], ib[c])] += m[r * nl + c];
                                g[(ib[c], ia[r])] += m[r * nl + c];
                            }
                        }
                    }
                }
            }
            start = end;
        }
        g
    }

    /// `int int k(x, y) phi_i(x) rho(y)` for a test family and a scalar
    /// density. Elements flagged in `skip` are left out of the density.
    pub fn assemble_rhs(
        &self,
        kern: Kernel,
        test: &dyn Family,
        dens: &dyn Family,
        dim: usize,
        skip: Option<&[bool]>,
    ) -> DVector<f64> {
        let ts = Side::new(self, test);
        let ds = Side::new(self, dens);
        let n = self.mesh.n_elements();
        let na = test.nloc();
        let nb = dens.nloc();
        let locals: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|ea| {
                let mut acc = vec![0.0; na * nb];
                let mut buf = vec![0.0; na * nb];
                for eb in 0..n {
                    if skip.is_some_and(|s| s[eb]) {
                        continue;
                    }
                    self.local(kern, &ts, &ds, ea, eb, &mut buf);
                    acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                }
                acc
            })
            .collect();
        let mut f = DVector::zeros(dim);
        for (ea, acc) in locals.iter().enumerate() {
            for (r, &i) in ts.indices(ea).iter().enumerate() {
                if i != DROPPED {
                    f[i] += (0..nb).map(|c| acc[r * nb + c]).sum::<f64>();
                }
            }
        }
        f
    }
}
