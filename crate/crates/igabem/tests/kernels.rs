//! Kernel limits and Galerkin energies against the spectrum of the circle.

use std::f64::consts::PI;

use igabem::assembly::{
    assemble_v, assemble_w, kernel_at, load_vector, Kernel, Mesh, QuadratureSpec, XJac, YJac,
};
use igabem::basis::WrapMap;
use igabem::geometry::{circle, Curve, Eval, Pt};
use igabem::knotline::KnotVector;

fn parabola() -> Curve {
    let kv = KnotVector::polynomial(vec![0.0, 1.0], vec![3, 3], 2, false).unwrap();
    Curve::new(kv, vec![[-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], 1.0, "parabola")
}

#[test]
fn double_layer_diagonal_limit() {
    let c = parabola();
    for &t in &[0.2, 0.5, 0.7] {
        let y = Pt { span: 0, base: t, off: 0.0 };
        let ev = c.eval(y);
        let n = c.normal(&ev);
        // gamma'' = 2 (P0 - 2 P1 + P2) = (0, -4)
        let curv = -4.0 * n[1] / (ev.d[0] * ev.d[0] + ev.d[1] * ev.d[1]);
        let limit = curv / (4.0 * PI);
        for &kern in &[Kernel::DoubleLayer, Kernel::AdjointDoubleLayer] {
            let mut prev = f64::INFINITY;
            for k in 2..=12 {
                let delta = 10f64.powi(-k);
                let x = Pt { span: 0, base: t, off: delta };
                let err = (kernel_at(&c, kern, x, y) - limit).abs();
                // First order convergence until rounding in the normal
                // component of the chord (relative size 1e-16 / delta) takes over.
                if k <= 4 {
                    assert!(err <= prev * 0.2, "{kern:?} t={t} delta={delta}: {err}");
                }
                assert!(err < 2.0 * delta + 1e-15 / delta, "{kern:?} t={t} delta={delta}: {err}");
                prev = err;
            }
        }
    }
}

#[test]
fn double_layer_on_circle_is_constant() {
    let r = 0.7;
    let c = circle(r);
    for &(s, t) in &[(0.1, 0.6), (0.3, 0.30001), (0.9, 0.05)] {
        let pt = |u: f64| {
            let j = c.knot_vector().element_of(u);
            Pt { span: j, base: c.breakpoints()[j], off: u - c.breakpoints()[j] }
        };
        let k = kernel_at(&c, Kernel::DoubleLayer, pt(s), pt(t));
        assert!((k + 1.0 / (4.0 * PI * r)).abs() < 1e-10, "{k}");
    }
}

fn cos_load(mesh: &Mesh, fam: &dyn igabem::assembly::Family, dim: usize, n: usize) -> nalgebra::DVector<f64> {
    let f = move |_: usize, _: Pt, ev: &Eval| (n as f64 * ev.x[1].atan2(ev.x[0])).cos();
    load_vector(mesh, fam, dim, 24, &f)
}

/// `W cos(n theta) = n / (2 r) cos(n theta)` and `V cos(n theta) = r / (2 n)
/// cos(n theta)` on the circle of radius `r`; the Galerkin projections in the
/// energy norms converge to `n pi / 2` and `pi r^2 / (2 n)`.
#[test]
fn circle_eigenfunction_energies() {
    let r = 0.5;
    let c = circle(r);
    let quad = QuadratureSpec::default();
    let kv = c.knot_vector().bisect(&[0, 1, 2, 3]).unwrap();
    let kv = kv.bisect(&(0..8).collect::<Vec<_>>()).unwrap();
    let kv = kv.bisect(&(0..16).collect::<Vec<_>>()).unwrap();
    let kv = kv.bisect(&(0..32).collect::<Vec<_>>()).unwrap();
    let mesh = Mesh::new(&c, &kv).unwrap();
    let w = assemble_w(&c, &kv, &quad).unwrap();
    let dim = WrapMap::new(&kv).dim();
    for n in 1..=3 {
        let lam = n as f64 / (2.0 * r);
        let b = cos_load(&mesh, &XJac::new(&mesh), dim, n) * lam;
        let x = w.clone().cholesky().unwrap().solve(&b);
        let e = x.dot(&b);
        let exact = n as f64 * PI / 2.0;
        assert!(((e - exact) / exact).abs() < 1e-5, "W n={n}: {e} vs {exact}");
        assert!(e <= exact * (1.0 + 1e-12));
    }

    let kvp = KnotVector::uniform(2, 64, 1, true).unwrap();
    let mesh = Mesh::new(&c, &kvp).unwrap();
    let v = assemble_v(&c, &kvp, &quad).unwrap();
    for n in 1..=3 {
        let lam = r / (2.0 * n as f64);
        let b = cos_load(&mesh, &YJac::new(&mesh), kvp.dim() - 1, n) * lam;
        let x = v.clone().cholesky().unwrap().solve(&b);
        let e = x.dot(&b);
        let exact = PI * r * r / (2.0 * n as f64);
        assert!(((e - exact) / exact).abs() < 1e-5, "V n={n}: {e} vs {exact}");
    }
}
