//! NURBS boundary curves.
//!
//! Each non-empty knot span of the curve is converted to rational power form
//! twice, once in the distance `tau` from the left end of the span and once in
//! the distance `sigma` from the right end. Points are evaluated in the form
//! anchored at the nearer end, and differences of two points on one span are
//! computed from divided differences, so chords between nearby points keep
//! their relative accuracy even for elements many orders of magnitude below
//! the span length.

use std::f64::consts::PI;

use crate::basis::blossom_row;
use crate::knotline::KnotVector;
use crate::Result;

pub type V2 = [f64; 2];

#[inline]
pub fn norm(v: V2) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
pub fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// A parameter point `base + off` on span `span` (an index into the spans of
/// the curve). `base` is a knot of the discretization.
#[derive(Clone, Copy, Debug)]
pub struct Pt {
    pub span: usize,
    pub base: f64,
    pub off: f64,
}

/// Point and parameter derivative.
#[derive(Clone, Copy, Debug)]
pub struct Eval {
    pub x: V2,
    pub d: V2,
}

impl Eval {
    pub fn speed(&self) -> f64 {
        norm(self.d)
    }
}

#[derive(Clone, Debug)]
struct SpanForm {
    a: f64,
    b: f64,
    // Power-form coefficients of the homogeneous numerator and denominator,
    // anchored at the left ([0]) and at the right ([1]) end.
    num: [Vec<V2>; 2],
    den: [Vec<f64>; 2],
    // Cross terms num_k den_l - num_l den_k for k > l, per anchor.
    cross: [Vec<(usize, usize, V2)>; 2],
    // Constant parameter velocity of an affine span.
    velocity: Option<V2>,
    // Spans on a common straight line share an id.
    line: Option<usize>,
}

impl SpanForm {
    fn eval_form(&self, side: usize, u: f64) -> (V2, V2, f64, f64) {
        let (n, c) = (&self.num[side], &self.den[side]);
        let mut nv = [0.0; 2];
        let mut nd = [0.0; 2];
        let mut w = 0.0;
        let mut wd = 0.0;
        for k in (0..n.len()).rev() {
            nd = [nd[0] * u + nv[0], nd[1] * u + nv[1]];
            nv = [nv[0] * u + n[k][0], nv[1] * u + n[k][1]];
            wd = wd * u + w;
            w = w * u + c[k];
        }
        (nv, nd, w, wd)
    }
}

#[derive(Clone, Debug)]
pub struct Curve {
    kv: KnotVector,
    ctrl: Vec<V2>,
    orient: f64,
    spans: Vec<SpanForm>,
    name: &'static str,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Curve {
    /// Curve from control points and a knot vector carrying the weights.
    /// `orient = 1` gives the normal `(t_y, -t_x) / |t|`, which is outward
    /// for counterclockwise closed curves.
    pub fn new(kv: KnotVector, ctrl: Vec<V2>, orient: f64, name: &'static str) -> Self {
        assert_eq!(kv.dim(), ctrl.len());
        let d = kv.degree();
        let t = kv.knots();
        let w = kv.weights();
        let mut spans = Vec::new();
        let mut segs = Vec::new();
        for (j, s) in kv.element_spans().into_iter().enumerate() {
            let (a, b) = kv.element(j);
            // Bezier points of the homogeneous curve.
            let mut bez_n = vec![[0.0; 2]; d + 1];
            let mut bez_w = vec![0.0; d + 1];
            for i in 0..=d {
                let mut args = vec![a; d - i];
                args.extend(std::iter::repeat(b).take(i));
                let row = blossom_row(t, s, d, &args);
                for (l, &c) in row.iter().enumerate() {
                    let g = s - d + l;
                    bez_n[i][0] += c * w[g] * ctrl[g][0];
                    bez_n[i][1] += c * w[g] * ctrl[g][1];
                    bez_w[i] += c * w[g];
                }
            }
            let q: Vec<V2> = (0..=d).map(|i| [bez_n[i][0] / bez_w[i], bez_n[i][1] / bez_w[i]]).collect();
            let dir = sub(q[d], q[0]);
            let len = norm(dir);
            let straight = len > 0.0
                && q.iter().all(|&qi| {
                    let w = sub(qi, q[0]);
                    (dir[0] * w[1] - dir[1] * w[0]).abs() <= 1e-14 * len * len
                });
            segs.push(straight.then_some((q[0], q[d])));
            let mut num = [Vec::new(), Vec::new()];
            let mut den = [Vec::new(), Vec::new()];
            for side in 0..2 {
                let bn: Vec<V2> =
                    if side == 0 { bez_n.clone() } else { bez_n.iter().rev().copied().collect() };
                let bw: Vec<f64> =
                    if side == 0 { bez_w.clone() } else { bez_w.iter().rev().copied().collect() };
                for m in 0..=d {
                    let mut cn = [0.0; 2];
                    let mut cw = 0.0;
                    for i in 0..=m {
                        let sgn = if (m - i) % 2 == 0 { 1.0 } else { -1.0 };
                        let f = sgn * binom(m, i);
                        cn[0] += f * bn[i][0];
                        cn[1] += f * bn[i][1];
                        cw += f * bw[i];
                    }
                    let bm = binom(d, m);
                    num[side].push([bm * cn[0], bm * cn[1]]);
                    den[side].push(bm * cw);
                }
            }
            let mut cross = [Vec::new(), Vec::new()];
            for side in 0..2 {
                for k in 0..=d {
                    for l in 0..k {
                        let e = [
                            num[side][k][0] * den[side][l] - num[side][l][0] * den[side][k],
                            num[side][k][1] * den[side][l] - num[side][l][1] * den[side][k],
                        ];
                        if e != [0.0, 0.0] {
                            cross[side].push((k, l, e));
                        }
                    }
                }
            }
            let h = b - a;
            let affine = (1..=d).all(|m| den[0][m].abs() <= 1e-15 * den[0][0].abs())
                && (2..=d).all(|m| norm(num[0][m]) <= 1e-15 * norm(num[0][1]));
            let velocity =
                affine.then(|| [num[0][1][0] / (den[0][0] * h), num[0][1][1] / (den[0][0] * h)]);
            spans.push(SpanForm { a, b, num, den, cross, velocity, line: None });
        }
        // Group straight spans by their supporting line.
        let mut lines: Vec<(V2, V2)> = Vec::new();
        for (sp, seg) in spans.iter_mut().zip(&segs) {
            let Some((p0, p1)) = *seg else { continue };
            let dir = sub(p1, p0);
            let len = norm(dir);
            let u = [dir[0] / len, dir[1] / len];
            let on = |o: V2, v: V2, q: V2| {
                let w = sub(q, o);
                (v[0] * w[1] - v[1] * w[0]).abs() <= 1e-13 * (1.0 + norm(w))
            };
            let id = match lines.iter().position(|&(o, v)| on(o, v, p0) && on(o, v, p1)) {
                Some(i) => i,
                None => {
                    lines.push((p0, u));
                    lines.len() - 1
                }
            };
            sp.line = Some(id);
        }
        Self { kv, ctrl, orient, spans, name }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.kv
    }

    pub fn control_points(&self) -> &[V2] {
        &self.ctrl
    }

    pub fn closed(&self) -> bool {
        self.kv.closed()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.kv.interval()
    }

    /// Breakpoints of the curve; every discretization must contain them.
    pub fn breakpoints(&self) -> &[f64] {
        self.kv.nodes()
    }

    /// Span index of the element `[a, b]` of a discretization.
    pub fn span_of_element(&self, a: f64) -> usize {
        // Spans are stored per element of the curve knot vector.
        self.kv.element_of(a)
    }

    /// Identifier of the straight line carrying span `j`, if any.
    pub fn line_of_span(&self, j: usize) -> Option<usize> {
        self.spans[j].line
    }

    pub fn n_spans(&self) -> usize {
        self.spans.len()
    }

    fn local(&self, pt: Pt) -> (usize, f64, f64) {
        let sp = &self.spans[pt.span];
        let h = sp.b - sp.a;
        let tau = ((pt.base - sp.a) + pt.off) / h;
        if tau <= 0.5 {
            (0, tau, 1.0 / h)
        } else {
            (1, ((sp.b - pt.base) - pt.off) / h, -1.0 / h)
        }
    }

    /// Point and parameter derivative.
    pub fn eval(&self, pt: Pt) -> Eval {
        let (side, u, scale) = self.local(pt);
        let (n, nd, w, wd) = self.spans[pt.span].eval_form(side, u);
        let x = [n[0] / w, n[1] / w];
        let d = [scale * (nd[0] - x[0] * wd) / w, scale * (nd[1] - x[1] * wd) / w];
        Eval { x, d }
    }

    /// Point at a plain parameter value.
    pub fn point(&self, t: f64) -> Eval {
        let j = self.kv.element_of(t);
        let a = self.spans[j].a;
        self.eval(Pt { span: j, base: a, off: t - a })
    }

    /// Unit normal at an evaluated point.
    pub fn normal(&self, e: &Eval) -> V2 {
        let s = e.speed();
        [self.orient * e.d[1] / s, -self.orient * e.d[0] / s]
    }

    /// `gamma(p1) - gamma(p2)`, where `dt` is the parameter difference
    /// `t1 - t2` when both points lie on one span.
    pub fn chord(&self, p1: Pt, e1: &Eval, p2: Pt, e2: &Eval, dt: f64) -> V2 {
        if p1.span != p2.span {
            return sub(e1.x, e2.x);
        }
        let sp = &self.spans[p1.span];
        if let Some(v) = sp.velocity {
            return [v[0] * dt, v[1] * dt];
        }
        let h = sp.b - sp.a;
        let t1 = ((p1.base - sp.a) + p1.off) / h;
        let t2 = ((p2.base - sp.a) + p2.off) / h;
        let (side, u1, u2, du) = if t1 + t2 <= 1.0 {
            (0, t1, t2, dt / h)
        } else {
            (1, ((sp.b - p1.base) - p1.off) / h, ((sp.b - p2.base) - p2.off) / h, -dt / h)
        };
        let (_, _, w1, _) = sp.eval_form(side, u1);
        let (_, _, w2, _) = sp.eval_form(side, u2);
        let mut acc = [0.0; 2];
        for &(k, l, e) in &sp.cross[side] {
            // (u1 u2)^l * sum_{m < k-l} u1^m u2^(k-l-1-m)
            let q = k - l;
            let mut s = 0.0;
            for m in 0..q {
                s += u1.powi(m as i32) * u2.powi((q - 1 - m) as i32);
            }
            let f = (u1 * u2).powi(l as i32) * s;
            acc[0] += e[0] * f;
            acc[1] += e[1] * f;
        }
        let f = du / (w1 * w2);
        [acc[0] * f, acc[1] * f]
    }

    /// Arclength of `[t0, t1]` by composite Gauss quadrature.
    pub fn arclength(&self, t0: f64, t1: f64, n: usize) -> f64 {
        let g = crate::quadrature::gauss_legendre(n);
        let mut total = 0.0;
        for (j, sp) in self.spans.iter().enumerate() {
            let a = sp.a.max(t0);
            let b = sp.b.min(t1);
            if b <= a {
                continue;
            }
            for i in 0..g.len() {
                let e = self.eval(Pt { span: j, base: a, off: (b - a) * g.x[i] });
                total += g.w[i] * (b - a) * e.speed();
            }
        }
        total
    }
}

/// Radius of the pacman disc.
pub const PACMAN_RADIUS: f64 = 0.1;
/// Corner exponent of the pacman domain.
pub const PACMAN_TAU: f64 = 4.0 / 7.0;

/// Pacman: the disc sector `r < 1/10`, `|beta| < 7 pi / 8`, traversed
/// counterclockwise starting at the reentrant corner in the origin.
///
/// Two straight radial edges (each linear in the parameter on `[0, 1/4]` and
/// `[3/4, 1]`) and four circular arcs of angle `7 pi / 16`, each an exact
/// rational quadratic on one of the knot intervals of length `1/8`.
pub fn pacman() -> Curve {
    let r = PACMAN_RADIUS;
    let half = PI / (2.0 * PACMAN_TAU);
    let dir = |beta: f64| [beta.cos(), beta.sin()];
    let scale = |v: V2, s: f64| [v[0] * s, v[1] * s];
    let a = scale(dir(-half), r);
    let b = scale(dir(half), r);
    let delta = 2.0 * half / 4.0;
    let wm = (delta / 2.0).cos();
    let mut ctrl = vec![[0.0, 0.0], scale(a, 0.25), scale(a, 0.75), a];
    let mut weights = vec![1.0; 4];
    for k in 0..4 {
        let b0 = -half + k as f64 * delta;
        ctrl.push(scale(dir(b0 + delta / 2.0), r / wm));
        weights.push(wm);
        ctrl.push(scale(dir(b0 + delta), r));
        weights.push(1.0);
    }
    // The last arc ends in B, already pushed.
    ctrl.extend([scale(b, 0.75), scale(b, 0.25), [0.0, 0.0]]);
    weights.extend([1.0, 1.0, 1.0]);
    let nodes: Vec<f64> = (0..=8).map(|j| j as f64 / 8.0).collect();
    let mult = vec![3, 1, 2, 2, 2, 2, 2, 1, 3];
    let kv = KnotVector::new(nodes, mult, 2, true, weights).expect("valid pacman knots");
    Curve::new(kv, ctrl, 1.0, "pacman")
}

/// The slit `[-1, 1] x {0}` with `gamma(t) = (2t - 1, 0)` and normal `(0, 1)`.
pub fn slit() -> Curve {
    let kv = KnotVector::polynomial(vec![0.0, 1.0], vec![2, 2], 1, false).expect("valid slit knots");
    Curve::new(kv, vec![[-1.0, 0.0], [1.0, 0.0]], -1.0, "slit")
}

/// Straight open segment from `p0` to `p1`.
pub fn segment(p0: V2, p1: V2) -> Curve {
    let kv = KnotVector::polynomial(vec![0.0, 1.0], vec![2, 2], 1, false).expect("valid knots");
    Curve::new(kv, vec![p0, p1], -1.0, "segment")
}

/// Circle of radius `r` around the origin, counterclockwise, as four exact
/// quarter arcs.
pub fn circle(r: f64) -> Curve {
    let w = (PI / 4.0).cos();
    let mut ctrl = Vec::new();
    let mut weights = Vec::new();
    for k in 0..4 {
        let b0 = k as f64 * PI / 2.0;
        ctrl.push([r * b0.cos(), r * b0.sin()]);
        weights.push(1.0);
        let m = b0 + PI / 4.0;
        ctrl.push([r / w * m.cos(), r / w * m.sin()]);
        weights.push(w);
    }
    ctrl.push([r, 0.0]);
    weights.push(1.0);
    let nodes = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let kv = KnotVector::new(nodes, vec![3, 2, 2, 2, 3], 2, true, weights).expect("valid circle");
    Curve::new(kv, ctrl, 1.0, "circle")
}

/// Initial discretization knots for the pacman: the curve breakpoints with
/// degree `p` end multiplicities and the interior multiplicities of the curve
/// (clamped to `p`). For `p = 2` the curve weights are carried over.
pub fn pacman_knots(p: usize) -> Result<KnotVector> {
    let c = pacman();
    let g = c.knot_vector();
    if p == g.degree() {
        return Ok(g.clone());
    }
    let n = g.n_elements();
    let mult: Vec<usize> = g
        .mult()
        .iter()
        .enumerate()
        .map(|(j, &m)| if j == 0 || j == n { p + 1 } else { m.min(p) })
        .collect();
    KnotVector::polynomial(g.nodes().to_vec(), mult, p, true)
}

/// Initial discretization knots for the slit: four uniform elements.
pub fn slit_knots(p: usize) -> Result<KnotVector> {
    KnotVector::uniform(p, 4, 1, false)
}
