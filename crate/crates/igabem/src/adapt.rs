//! Error indicators, Dörfler marking and the adaptive loop.
//!
//! Hypersingular problems use `eta(z)^2 = |h^(1/2) (f - W U)|^2` on the
//! patch of `z` (plus the data term `|h^(1/2) (phi - phi_l)|^2` on the
//! pacman), weakly-singular problems `eta(z)^2 = |h^(1/2) d/ds (g - V Phi)|^2`.
//! Here `h` is the element arclength. Both residuals are smooth inside each
//! element; they are sampled at 8 Gauss points, replaced by their degree-7
//! interpolant in the local coordinate and integrated with 16 Gauss points.
//! `W U` is evaluated as `-d/ds V(U')`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    self, data_rule, eval_potentials, l2_project, pacman_normal_derivative, trace_p, Coefficients, Ctx,
    Kernel, Mesh, PiecewisePoly, QuadratureSpec, SamplePoint, Scalar, Side, XDeriv, YJac,
};
use crate::basis::WrapMap;
use crate::geometry::{self, Curve, Eval, Pt};
use crate::knotline::{mesh_ratio, Hierarchy, KnotVector};
use crate::krylov::{self, ExactCond};
use crate::mlprecond::{level_diagonal, local_index_sets, MlPreconditioner, Operator};
use crate::quadrature::{gauss_legendre, Rule};
use crate::{Error, Result};

/// The four model problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    HyperPacman,
    WeakPacman,
    HyperSlit,
    WeakSlit,
}

impl Problem {
    pub const ALL: [Problem; 4] = [Problem::HyperPacman, Problem::WeakPacman, Problem::HyperSlit, Problem::WeakSlit];

    pub fn name(self) -> &'static str {
        match self {
            Problem::HyperPacman => "hyper-pacman",
            Problem::WeakPacman => "weak-pacman",
            Problem::HyperSlit => "hyper-slit",
            Problem::WeakSlit => "weak-slit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Degree `p` of the knot vectors.
    pub fn degree(self) -> usize {
        match self {
            Problem::HyperPacman => 2,
            Problem::WeakPacman => 3,
            Problem::HyperSlit => 1,
            Problem::WeakSlit => 2,
        }
    }

    pub fn operator(self) -> Operator {
        match self {
            Problem::HyperPacman | Problem::HyperSlit => Operator::W,
            Problem::WeakPacman | Problem::WeakSlit => Operator::V,
        }
    }

    pub fn curve(self) -> Curve {
        match self {
            Problem::HyperPacman | Problem::WeakPacman => geometry::pacman(),
            Problem::HyperSlit | Problem::WeakSlit => geometry::slit(),
        }
    }

    pub fn initial_knots(self) -> Result<KnotVector> {
        match self {
            Problem::HyperPacman | Problem::WeakPacman => geometry::pacman_knots(self.degree()),
            Problem::HyperSlit | Problem::WeakSlit => geometry::slit_knots(self.degree()),
        }
    }

    fn is_pacman(self) -> bool {
        matches!(self, Problem::HyperPacman | Problem::WeakPacman)
    }

    /// Parameters where the data is singular.
    fn singular_params(self) -> &'static [f64] {
        if self.is_pacman() {
            &[0.0, 1.0]
        } else {
            &[]
        }
    }
}

/// Per-node indicators on the marking nodes of a knot vector.
#[derive(Clone, Debug)]
pub struct IndicatorField {
    /// Node indices (see [`KnotVector::marking_nodes`]).
    pub nodes: Vec<usize>,
    /// `eta(z)^2` per node.
    pub eta2: Vec<f64>,
    /// Element contributions, each counted in both patches it belongs to.
    pub element_eta2: Vec<f64>,
}

impl IndicatorField {
    fn from_elements(kv: &KnotVector, element_eta2: Vec<f64>) -> Self {
        let nodes: Vec<usize> = kv.marking_nodes().collect();
        let eta2 = nodes.iter().map(|&j| kv.node_patch(j).iter().map(|&e| element_eta2[e]).sum()).collect();
        Self { nodes, eta2, element_eta2 }
    }

    /// `eta = (sum_z eta(z)^2)^(1/2)`.
    pub fn total(&self) -> f64 {
        self.eta2.iter().sum::<f64>().sqrt()
    }
}

/// Dörfler marking: positions into `eta2` of a minimal set carrying the
/// fraction `theta` of the total, largest first (ties by position).
pub fn doerfler_mark(eta2: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Invalid("theta must satisfy 0<theta<=1".into()));
    }
    let mut order: Vec<usize> = (0..eta2.len()).collect();
    order.sort_by(|&a, &b| eta2[b].total_cmp(&eta2[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| eta2[i]).sum();
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    let goal = theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= goal {
            break;
        }
        acc += eta2[i];
        out.push(i);
    }
    Ok(out)
}

/// Lagrange interpolation from the 8-point to the 16-point Gauss rule.
struct Interp {
    src: Rule,
    dst: Rule,
    val: DMatrix<f64>,
    der: DMatrix<f64>,
}

impl Interp {
    fn new() -> Self {
        let src = gauss_legendre(8);
        let dst = gauss_legendre(16);
        let (m, n) = (dst.len(), src.len());
        let mut val = DMatrix::zeros(m, n);
        let mut der = DMatrix::zeros(m, n);
        let xs = &src.x;
        for (k, &x) in dst.x.iter().enumerate() {
            for i in 0..n {
                let den: f64 = (0..n).filter(|&j| j != i).map(|j| xs[i] - xs[j]).product();
                let num: f64 = (0..n).filter(|&j| j != i).map(|j| x - xs[j]).product();
                val[(k, i)] = num / den;
                let mut d = 0.0;
                for l in (0..n).filter(|&l| l != i) {
                    d += (0..n).filter(|&j| j != i && j != l).map(|j| x - xs[j]).product::<f64>();
                }
                der[(k, i)] = d / den;
            }
        }
        Self { src, dst, val, der }
    }

    fn samples(&self, n_elem: usize) -> Vec<SamplePoint> {
        (0..n_elem)
            .flat_map(|e| (0..self.src.len()).map(move |q| (e, q)))
            .map(|(e, q)| SamplePoint { e, xi: self.src.x[q], xic: self.src.xc[q] })
            .collect()
    }

    fn values(&self, s: &[f64]) -> DVector<f64> {
        &self.val * DVector::from_column_slice(s)
    }

    fn derivs(&self, s: &[f64]) -> DVector<f64> {
        &self.der * DVector::from_column_slice(s)
    }
}

/// Data computed for one level besides the solution.
pub struct LevelData {
    pub phi_l: Option<PiecewisePoly>,
}

/// Galerkin system of a level.
pub fn system(problem: Problem, curve: &Curve, kv: &KnotVector, quad: &QuadratureSpec) -> Result<(DMatrix<f64>, DVector<f64>, LevelData)> {
    let mut data = LevelData { phi_l: None };
    let (a, b) = match problem {
        Problem::HyperPacman => {
            let mesh = Mesh::new(curve, kv)?;
            let phi = |_: usize, _: Pt, ev: &Eval| pacman_normal_derivative(curve, ev);
            let pl = l2_project(&mesh, kv.degree(), problem.singular_params(), phi);
            let f = assembly::rhs_hyper_pacman(curve, kv, quad, &pl)?;
            data.phi_l = Some(pl);
            (assembly::assemble_w(curve, kv, quad)?, f)
        }
        Problem::HyperSlit => (assembly::assemble_w(curve, kv, quad)?, assembly::rhs_hyper_slit(curve, kv, quad)?),
        Problem::WeakPacman => (assembly::assemble_v(curve, kv, quad)?, assembly::rhs_weak_pacman(curve, kv, quad)?),
        Problem::WeakSlit => (assembly::assemble_v(curve, kv, quad)?, assembly::rhs_weak_slit(curve, kv, quad)?),
    };
    Ok((a, b, data))
}

/// Element-wise squared norms `|T| int_T r^2 ds` of the residual.
pub fn estimate(
    problem: Problem,
    curve: &Curve,
    kv: &KnotVector,
    quad: &QuadratureSpec,
    x: &[f64],
    data: &LevelData,
) -> Result<IndicatorField> {
    let mesh = Mesh::new(curve, kv)?;
    let ctx = Ctx::new(&mesh, quad)?;
    let it = Interp::new();
    let n = mesh.n_elements();
    let pts = it.samples(n);
    let m = it.src.len();
    let mut elem = vec![0.0; n];
    match problem.operator() {
        Operator::W => {
            let fam = XDeriv::new(&mesh);
            let du = Coefficients::new(&fam, x);
            let side = Side::new(&ctx, &du);
            let vu = eval_potentials(&ctx, Kernel::Log, &side, &pts);
            let kphi = match &data.phi_l {
                Some(pl) => {
                    let dens = Scalar::new(|e: usize, pt: Pt, ev: &Eval| pl.eval_pt(&mesh, e, pt) * ev.speed());
                    let side = Side::new(&ctx, &dens);
                    Some(eval_potentials(&ctx, Kernel::AdjointDoubleLayer, &side, &pts))
                }
                None => None,
            };
            for (e, el) in mesh.elems.iter().enumerate() {
                let dv = it.derivs(&vu[e * m..(e + 1) * m]);
                let kv_vals = kphi.as_ref().map(|k| it.values(&k[e * m..(e + 1) * m]));
                let mut s = 0.0;
                for q in 0..it.dst.len() {
                    let pt = el.pt(it.dst.x[q]);
                    let sp = mesh.eval(pt).speed();
                    let wu = -dv[q] / (el.h * sp);
                    let f = match (&data.phi_l, &kv_vals) {
                        (Some(pl), Some(k)) => 0.5 * pl.eval(e, it.dst.x[q]) - k[q],
                        _ => 1.0,
                    };
                    s += it.dst.w[q] * el.h * sp * (f - wu).powi(2);
                }
                elem[e] = el.len * s;
            }
            if let Some(pl) = &data.phi_l {
                for (e, el) in mesh.elems.iter().enumerate() {
                    let mut s = 0.0;
                    for (pt, w) in data_rule(&mesh, e, problem.singular_params(), 16) {
                        let ev = mesh.eval(pt);
                        let d = pacman_normal_derivative(curve, &ev) - pl.eval_pt(&mesh, e, pt);
                        s += w * ev.speed() * d * d;
                    }
                    elem[e] += el.len * s;
                }
            }
        }
        Operator::V => {
            let fam = YJac::new(&mesh);
            let phi = Coefficients::new(&fam, x);
            let side = Side::new(&ctx, &phi);
            let vphi = eval_potentials(&ctx, Kernel::Log, &side, &pts);
            let g: Vec<f64> = match problem {
                Problem::WeakPacman => {
                    let dens = Scalar::new(|_: usize, pt: Pt, ev: &Eval| trace_p(curve, pt, ev) * ev.speed());
                    let side = Side::new(&ctx, &dens);
                    let k = eval_potentials(&ctx, Kernel::DoubleLayer, &side, &pts);
                    pts.iter()
                        .zip(k)
                        .map(|(sp, k)| {
                            let pt = mesh.elems[sp.e].pt(sp.xi);
                            0.5 * trace_p(curve, pt, &mesh.eval(pt)) + k
                        })
                        .collect()
                }
                _ => pts.iter().map(|sp| -0.5 * mesh.eval(mesh.elems[sp.e].pt(sp.xi)).x[0]).collect(),
            };
            let r: Vec<f64> = g.iter().zip(&vphi).map(|(a, b)| a - b).collect();
            for (e, el) in mesh.elems.iter().enumerate() {
                let dr = it.derivs(&r[e * m..(e + 1) * m]);
                let mut s = 0.0;
                for q in 0..it.dst.len() {
                    let sp = mesh.eval(el.pt(it.dst.x[q])).speed();
                    let ds = dr[q] / (el.h * sp);
                    s += it.dst.w[q] * el.h * sp * ds * ds;
                }
                elem[e] = el.len * s;
            }
        }
    }
    Ok(IndicatorField::from_elements(kv, elem))
}

/// Which preconditioned solves to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondChoice {
    Diag,
    Mlas,
    Both,
    None,
}

impl PrecondChoice {
    fn diag(self) -> bool {
        matches!(self, PrecondChoice::Diag | PrecondChoice::Both)
    }

    fn mlas(self) -> bool {
        matches!(self, PrecondChoice::Mlas | PrecondChoice::Both)
    }
}

/// How condition numbers were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CondMethod {
    Exact,
    Lanczos,
}

impl CondMethod {
    pub fn name(self) -> &'static str {
        match self {
            CondMethod::Exact => "exact",
            CondMethod::Lanczos => "lanczos",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoopConfig {
    pub theta: f64,
    pub max_dofs: usize,
    pub precond: PrecondChoice,
    pub tol: f64,
    /// Tolerance of the solve whose result enters the estimator and the
    /// energy. The reported iteration counts use `tol`.
    pub estimate_tol: f64,
    pub seed: u64,
    pub quad: QuadratureSpec,
    /// Largest dimension for dense eigenvalue computations.
    pub exact_limit: usize,
    /// Number of random vectors for the apply timing.
    pub timing_vectors: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            theta: 0.9,
            max_dofs: 2000,
            precond: PrecondChoice::Both,
            tol: 1e-8,
            estimate_tol: 1e-12,
            seed: 0,
            quad: QuadratureSpec::default(),
            exact_limit: 2000,
            timing_vectors: 100,
        }
    }
}

/// One row of the adaptive run.
#[derive(Clone, Debug)]
pub struct LevelRecord {
    pub level: usize,
    /// Number of knots `N`.
    pub n: usize,
    /// Dimension of the Galerkin system.
    pub dim: usize,
    pub kappa: f64,
    pub eta: f64,
    /// `2 f.x - x.A x`.
    pub energy: f64,
    pub cond_diag: Option<f64>,
    pub cond_mlas: Option<f64>,
    pub iters_diag: Option<usize>,
    pub iters_mlas: Option<usize>,
    /// Mean wall time of one preconditioner apply.
    pub apply_ns: Option<f64>,
    /// Multiply-adds of one preconditioner apply.
    pub apply_ops: Option<u64>,
    pub cond_method: CondMethod,
    /// Lanczos estimates, also when exact values are reported.
    pub lanczos_diag: Option<f64>,
    pub lanczos_mlas: Option<f64>,
    /// Positions into `indicators.nodes` of the Dörfler set.
    pub marked: Vec<usize>,
    pub indicators: IndicatorField,
    /// Largest and smallest total of the preconditioner's index sets.
    pub local_count: usize,
}

/// Output of [`adaptive_loop`].
pub struct AdaptiveRun {
    pub problem: Problem,
    pub hierarchy: Hierarchy,
    pub kappa0: f64,
    pub records: Vec<LevelRecord>,
    /// Set when the estimator vanished before the budget was reached.
    pub converged_early: bool,
}

/// Number of knots `N`: the sum of the multiplicities after the first node.
pub fn knot_count(kv: &KnotVector) -> usize {
    kv.mult()[1..].iter().sum()
}

/// Runs the adaptive algorithm until `N >= max_dofs`. `progress` receives
/// every finished record.
pub fn adaptive_loop(problem: Problem, cfg: &LoopConfig, mut progress: impl FnMut(&LevelRecord)) -> Result<AdaptiveRun> {
    if !(cfg.theta > 0.0 && cfg.theta <= 1.0) {
        return Err(Error::Invalid("theta must satisfy 0<theta<=1".into()));
    }
    let curve = problem.curve();
    let kv0 = problem.initial_knots()?;
    let kappa0 = mesh_ratio(&kv0);
    let op = problem.operator();
    let mut h = Hierarchy::new(kv0);
    let mut diags: Vec<Vec<f64>> = Vec::new();
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    loop {
        let level = h.len() - 1;
        let kv = h.finest().clone();
        let (a, f, data) = system(problem, &curve, &kv, &cfg.quad)?;
        let dim = a.nrows();
        let sets = local_index_sets(&h);
        diags.push(level_diagonal(op, &kv, &a, &sets[level])?);
        let av = |v: &[f64]| krylov::matvec(&a, v);
        let max_iter = 10 * dim + 100;
        let fs = f.as_slice();

        let mut rec = LevelRecord {
            level,
            n: knot_count(&kv),
            dim,
            kappa: mesh_ratio(&kv),
            eta: f64::NAN,
            energy: f64::NAN,
            cond_diag: None,
            cond_mlas: None,
            iters_diag: None,
            iters_mlas: None,
            apply_ns: None,
            apply_ops: None,
            cond_method: if dim <= cfg.exact_limit { CondMethod::Exact } else { CondMethod::Lanczos },
            lanczos_diag: None,
            lanczos_mlas: None,
            marked: Vec::new(),
            indicators: IndicatorField { nodes: Vec::new(), eta2: Vec::new(), element_eta2: Vec::new() },
            local_count: sets[level].len(),
        };
        let exact = if rec.cond_method == CondMethod::Exact && (cfg.precond.diag() || cfg.precond.mlas()) {
            Some(ExactCond::new(&a)?)
        } else {
            None
        };
        let mut solution: Option<Vec<f64>> = None;
        let dg: Vec<f64> = (0..dim).map(|i| 1.0 / a[(i, i)]).collect();
        let jacobi = |v: &[f64]| v.iter().zip(&dg).map(|(x, d)| x * d).collect::<Vec<_>>();
        let mut mlas: Option<MlPreconditioner> = None;
        if cfg.precond.diag() {
            let m = jacobi;
            let rep = krylov::pcg(av, m, fs, cfg.tol, max_iter)?;
            rec.iters_diag = Some(rep.iterations);
            let (lo, hi) = krylov::lanczos_cond(av, m, dim, cfg.seed)?;
            rec.lanczos_diag = Some(hi / lo);
            rec.cond_diag = Some(match &exact {
                Some(ex) => {
                    let (lo, hi) = ex.eigen_range(m)?;
                    hi / lo
                }
                None => hi / lo,
            });
            solution = Some(rep.x);
        }
        if cfg.precond.mlas() {
            let c_one = a.sum();
            let pc = MlPreconditioner::build(&h, op, |l, _| Ok(diags[l].clone()), c_one)?;
            let m = |v: &[f64]| pc.apply(v).expect("dimension checked");
            let rep = krylov::pcg(av, m, fs, cfg.tol, max_iter)?;
            rec.iters_mlas = Some(rep.iterations);
            let (lo, hi) = krylov::lanczos_cond(av, m, dim, cfg.seed)?;
            rec.lanczos_mlas = Some(hi / lo);
            rec.cond_mlas = Some(match &exact {
                Some(ex) => {
                    let (lo, hi) = ex.eigen_range(m)?;
                    hi / lo
                }
                None => hi / lo,
            });
            let vecs: Vec<Vec<f64>> =
                (0..cfg.timing_vectors).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let t0 = Instant::now();
            let mut ops = 0;
            for v in &vecs {
                let (z, o) = pc.apply_counted(v)?;
                std::hint::black_box(z);
                ops = o;
            }
            if !vecs.is_empty() {
                rec.apply_ns = Some(t0.elapsed().as_nanos() as f64 / vecs.len() as f64);
                rec.apply_ops = Some(ops);
            }
            solution = Some(rep.x);
            mlas = Some(pc);
        }
        let tight = cfg.estimate_tol.min(cfg.tol);
        let x = match (solution, &mlas) {
            (Some(x), _) if tight >= cfg.tol => x,
            (_, Some(pc)) => krylov::pcg(av, |v: &[f64]| pc.apply(v).expect("dimension checked"), fs, tight, max_iter)?.x,
            _ => krylov::pcg(av, jacobi, fs, tight, max_iter)?.x,
        };
        rec.energy = krylov::energy(&a, fs, &x);
        let ind = estimate(problem, &curve, &kv, &cfg.quad, &x, &data)?;
        rec.eta = ind.total();
        let done = rec.n >= cfg.max_dofs;
        if !done && rec.eta > 0.0 {
            rec.marked = doerfler_mark(&ind.eta2, cfg.theta)?;
        }
        rec.indicators = ind;
        progress(&rec);
        let stop = done || rec.eta == 0.0;
        let marked_nodes: Vec<usize> = rec.marked.iter().map(|&i| rec.indicators.nodes[i]).collect();
        let converged_early = !done && rec.eta == 0.0;
        records.push(rec);
        if stop {
            return Ok(AdaptiveRun { problem, hierarchy: h, kappa0, records, converged_early });
        }
        let r = kv.refine(&marked_nodes, kappa0)?;
        h.push_refinement(r);
    }
}

/// Dimension of the Galerkin system of a problem on `kv`.
pub fn system_dim(problem: Problem, kv: &KnotVector) -> usize {
    match problem.operator() {
        Operator::W => WrapMap::new(kv).dim(),
        Operator::V => kv.dim() - 1,
    }
}
