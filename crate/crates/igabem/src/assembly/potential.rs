//! Potentials of a density at points on the curve.

use rayon::prelude::*;

use crate::geometry::norm;

use super::engine::{kernel_value, Ctx, Kernel, Node, Side, INV_2PI};

const MAX_DEPTH: usize = 50;

/// Point at local coordinate `xi` of element `e`; `xic` is `1 - xi`.
#[derive(Clone, Copy, Debug)]
pub struct SamplePoint {
    pub e: usize,
    pub xi: f64,
    pub xic: f64,
}

impl SamplePoint {
    pub fn new(e: usize, xi: f64) -> Self {
        Self { e, xi, xic: 1.0 - xi }
    }
}

/// `int k(x, y) rho(y) dy` at each point, where the scalar density `rho`
/// (one local function, already in the parameter measure) is given by `dens`.
pub fn eval_potentials(ctx: &Ctx, kern: Kernel, dens: &Side, pts: &[SamplePoint]) -> Vec<f64> {
    assert_eq!(dens.fam.nloc(), 1, "potentials need a scalar density");
    pts.par_iter().map(|sp| potential(ctx, kern, dens, sp)).collect()
}

fn density(dens: &Side, e: usize, y: &Node) -> f64 {
    let mut v = [0.0];
    dens.fam.eval(e, y.pt, &y.ev, &mut v);
    v[0]
}

fn potential(ctx: &Ctx, kern: Kernel, dens: &Side, sp: &SamplePoint) -> f64 {
    let mesh = ctx.mesh;
    let x = ctx.node(sp.e, sp.xi);
    let mut total = 0.0;
    for (eb, elb) in mesh.elems.iter().enumerate() {
        if eb == sp.e {
            total += own_element(ctx, kern, dens, sp, &x);
            continue;
        }
        let ratio = norm(ctx.chord(&x, ctx.mid_node(eb))) / elb.len;
        match ctx.far_tier(ratio) {
            Some(t) if mesh.adjacent(sp.e, eb).is_none() => {
                let (rule, nodes) = ctx.tier_nodes(t, eb);
                let vals = dens.cached(t, eb);
                for (q, y) in nodes.iter().enumerate() {
                    total += kernel(kern, ctx, &x, y) * vals[q] * rule.w[q] * elb.h;
                }
            }
            _ => total += bisect(ctx, kern, dens, &x, eb, 0.0, 1.0, 0),
        }
    }
    total
}

#[inline]
fn kernel(kern: Kernel, ctx: &Ctx, x: &Node, y: &Node) -> f64 {
    kernel_value(kern, ctx.chord(x, y), x, y)
}

#[allow(clippy::too_many_arguments)]
fn bisect(ctx: &Ctx, kern: Kernel, dens: &Side, x: &Node, eb: usize, y0: f64, y1: f64, depth: usize) -> f64 {
    let elb = &ctx.mesh.elems[eb];
    let len = (y1 - y0) * elb.len;
    let ym = ctx.node(eb, 0.5 * (y0 + y1));
    if depth >= MAX_DEPTH || norm(ctx.chord(x, &ym)) >= ctx.spec.near * len {
        let g = &ctx.near_rule;
        let h = (y1 - y0) * elb.h;
        let mut s = 0.0;
        for q in 0..g.len() {
            let y = ctx.node(eb, y0 + (y1 - y0) * g.x[q]);
            s += kernel(kern, ctx, x, &y) * density(dens, eb, &y) * g.w[q] * h;
        }
        return s;
    }
    let m = 0.5 * (y0 + y1);
    bisect(ctx, kern, dens, x, eb, y0, m, depth + 1) + bisect(ctx, kern, dens, x, eb, m, y1, depth + 1)
}

/// The element containing the point, split there; the logarithm of the
/// distance is integrated by a log-weighted rule.
fn own_element(ctx: &Ctx, kern: Kernel, dens: &Side, sp: &SamplePoint, x: &Node) -> f64 {
    let el = &ctx.mesh.elems[sp.e];
    let curve = ctx.mesh.curve;
    let (gl, lg) = (&ctx.gl, &ctx.lg);
    let mut total = 0.0;
    // Left piece y = xi (1 - u), right piece y = xi + xic u; x - y = +-l u.
    for (len_loc, sign) in [(sp.xi, 1.0), (sp.xic, -1.0)] {
        if len_loc <= 0.0 {
            continue;
        }
        let l = len_loc * el.h;
        let at = |u: f64| -> Node {
            let yl = if sign > 0.0 { sp.xi * (1.0 - u) } else { sp.xi + sp.xic * u };
            ctx.node(sp.e, yl)
        };
        for q in 0..gl.len() {
            let u = gl.x[q];
            let y = at(u);
            let d = curve.chord(x.pt, &x.ev, y.pt, &y.ev, sign * l * u);
            let rho = density(dens, sp.e, &y);
            let k = match kern {
                Kernel::Log => -INV_2PI * ((norm(d) / (l * u)).ln() + l.ln()),
                _ => kernel_value(kern, d, x, &y),
            };
            total += k * rho * gl.w[q] * l;
        }
        if kern == Kernel::Log {
            for q in 0..lg.len() {
                let y = at(lg.x[q]);
                total += INV_2PI * density(dens, sp.e, &y) * lg.w[q] * l;
            }
        }
    }
    total
}
