//! Data of the pacman problems and elementwise L2 projection.

use nalgebra::{DMatrix, DVector};

use crate::geometry::{Curve, Eval, Pt, V2, PACMAN_TAU};
use crate::quadrature::{graded_gauss, Rule};

use super::{gauss, Mesh};

/// `P = r^tau cos(tau beta)` in polar coordinates around the origin,
/// `beta` in `(-pi, pi]`.
pub fn pacman_potential(x: V2) -> f64 {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return 0.0;
    }
    r.powf(PACMAN_TAU) * (PACMAN_TAU * x[1].atan2(x[0])).cos()
}

pub fn pacman_gradient(x: V2) -> V2 {
    let r = x[0].hypot(x[1]);
    let b = x[1].atan2(x[0]);
    let t = PACMAN_TAU;
    let s = t * r.powf(t - 1.0);
    [s * ((t - 1.0) * b).cos(), -s * ((t - 1.0) * b).sin()]
}

/// Normal derivative of `P` at a curve point.
pub fn pacman_normal_derivative(curve: &Curve, ev: &Eval) -> f64 {
    let g = pacman_gradient(ev.x);
    let n = curve.normal(ev);
    g[0] * n[0] + g[1] * n[1]
}

/// Shifted Legendre polynomials `L_0..=L_deg` on `[0, 1]`.
fn legendre(deg: usize, x: f64, out: &mut [f64]) {
    let z = 2.0 * x - 1.0;
    out[0] = 1.0;
    if deg >= 1 {
        out[1] = z;
    }
    for k in 2..=deg {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * z * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// Piecewise polynomial in local element coordinates, Legendre coefficients
/// per element.
#[derive(Clone, Debug)]
pub struct PiecewisePoly {
    pub degree: usize,
    pub coef: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    pub fn eval(&self, e: usize, x: f64) -> f64 {
        let mut l = [0.0; 16];
        legendre(self.degree, x, &mut l);
        self.coef[e].iter().zip(&l).map(|(c, v)| c * v).sum()
    }

    pub fn eval_pt(&self, mesh: &Mesh, e: usize, pt: Pt) -> f64 {
        let el = &mesh.elems[e];
        let x = ((pt.base - el.a) + pt.off) / el.h;
        self.eval(e, x)
    }
}

/// Quadrature nodes for an element, graded towards an end where the data
/// blows up. Returns pairs (point, weight in the parameter measure).
pub fn data_rule(mesh: &Mesh, e: usize, singular: &[f64], n: usize) -> Vec<(Pt, f64)> {
    let el = &mesh.elems[e];
    let left = singular.contains(&el.a);
    let right = singular.contains(&el.b);
    let r: Rule = if left || right { graded_gauss(n, 7) } else { gauss(n) };
    (0..r.len())
        .map(|q| {
            let pt = if left {
                Pt { span: el.gspan, base: el.a, off: el.h * r.x[q] }
            } else if right {
                Pt { span: el.gspan, base: el.b, off: -el.h * r.x[q] }
            } else {
                el.pt(r.x[q])
            };
            (pt, r.w[q] * el.h)
        })
        .collect()
}

/// Elementwise L2 projection in the arclength measure onto polynomials of
/// degree `deg` in the local coordinate. Elements touching a parameter in
/// `singular` use graded quadrature there.
pub fn l2_project(
    mesh: &Mesh,
    deg: usize,
    singular: &[f64],
    f: impl Fn(usize, Pt, &Eval) -> f64,
) -> PiecewisePoly {
    let n = 16.max(2 * deg + 2);
    let mut coef = Vec::with_capacity(mesh.n_elements());
    let mut l = [0.0; 16];
    for e in 0..mesh.n_elements() {
        let el = &mesh.elems[e];
        let mut m = DMatrix::zeros(deg + 1, deg + 1);
        let mut b = DVector::zeros(deg + 1);
        for (pt, w) in data_rule(mesh, e, singular, n) {
            let ev = mesh.eval(pt);
            let x = ((pt.base - el.a) + pt.off) / el.h;
            legendre(deg, x, &mut l);
            let ws = w * ev.speed();
            let fv = f(e, pt, &ev);
            for i in 0..=deg {
                b[i] += ws * fv * l[i];
                for j in 0..=deg {
                    m[(i, j)] += ws * l[i] * l[j];
                }
            }
        }
        let c = m.cholesky().expect("mass matrix is SPD").solve(&b);
        coef.push(c.iter().copied().collect());
    }
    PiecewisePoly { degree: deg, coef }
}
