//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always shown.

use std::f64::consts::PI;
use std::time::Instant;

use igabem::adapt::{adaptive_loop, AdaptiveRun, LoopConfig, Problem};
use igabem::assembly::{assemble_v, assemble_w, assemble_w_unstabilized, QuadratureSpec};
use igabem::basis::{
    eval_bspline, eval_bspline_deriv, eval_nurbs, prolongation, propagate_weights, WrapMap,
};
use igabem::geometry::{pacman, pacman_knots, segment, slit, slit_knots};
use igabem::knotline::{mesh_ratio, Hierarchy, KnotVector};
use igabem::krylov::symmetric_eigenvalues;
use igabem::mlprecond::{dense_oracle, MlPreconditioner, Operator};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(id: usize, name: &str, t: Instant, o: &Outcome) {
    println!(
        "criterion {id} [{name}]: {} ({:.1} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64(),
        o.detail
    );
}

fn quadrature_oracle() -> Outcome {
    let quad = QuadratureSpec::default();
    let one = KnotVector::polynomial(vec![0.0, 1.0], vec![2, 2], 1, false).unwrap();
    let v1 = assemble_v(&segment([0.0, 0.0], [1.0, 0.0]), &one, &quad).unwrap()[(0, 0)];
    let e1 = (v1 - 3.0 / (4.0 * PI)).abs();
    let v2 = assemble_v(&slit(), &one, &quad).unwrap()[(0, 0)];
    let e2 = (v2 + 2.0 / PI * (2f64.ln() - 1.5)).abs();
    outcome(e1 < 1e-8 && e2 < 1e-8, format!("unit element error {e1:.1e}, slit error {e2:.1e}"))
}

fn random_knots(rng: &mut ChaCha8Rng) -> KnotVector {
    let p = rng.gen_range(1..=4);
    let mut inner: Vec<u32> = (1..64).collect();
    inner.shuffle(rng);
    inner.truncate(rng.gen_range(0..10));
    inner.sort();
    let mut nodes = vec![0.0];
    nodes.extend(inner.iter().map(|&i| i as f64 / 64.0));
    nodes.push(1.0);
    let mut mult = vec![p + 1];
    mult.extend(inner.iter().map(|_| rng.gen_range(1..=p)));
    mult.push(p + 1);
    let dim: usize = mult[1..].iter().sum();
    let closed = rng.gen_bool(0.5);
    let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.3..3.0)).collect();
    if closed {
        w[dim - 1] = w[0];
    }
    KnotVector::new(nodes, mult, p, closed, w).unwrap()
}

fn random_refinement(kv: &KnotVector, rng: &mut ChaCha8Rng) -> KnotVector {
    let p = kv.degree();
    let mut pairs: Vec<(f64, usize)> = kv.nodes().iter().copied().zip(kv.mult().iter().copied()).collect();
    let last = pairs.len() - 1;
    for pair in pairs[1..last].iter_mut() {
        if pair.1 < p && rng.gen_bool(0.3) {
            pair.1 += 1;
        }
    }
    for _ in 0..rng.gen_range(1..6) {
        let z = rng.gen_range(1u32..128) as f64 / 128.0;
        if !pairs.iter().any(|q| q.0 == z) {
            pairs.push((z, 1));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, mult) = pairs.into_iter().unzip();
    kv.refined_to(nodes, mult).unwrap()
}

fn spline_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 200;
    let (mut pu, mut ins, mut wt, mut der) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..cases {
        let kv = random_knots(&mut rng);
        let p = kv.degree();
        let t = kv.knots();
        let xs: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..=1.0)).chain([0.0, 1.0]).collect();
        for &x in &xs {
            let b: f64 = (0..kv.dim()).map(|i| eval_bspline(t, i, p, x).unwrap()).sum();
            let r: f64 = (0..kv.dim()).map(|i| eval_nurbs(&kv, i, x).unwrap()).sum();
            pu = pu.max((b - 1.0).abs()).max((r - 1.0).abs());
        }

        let fine = random_refinement(&kv, &mut rng);
        let c: Vec<f64> = (0..kv.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wc: Vec<f64> = c.iter().zip(kv.weights()).map(|(a, w)| a * w).collect();
        let pr = prolongation(t, fine.knots(), p).unwrap();
        let cf: Vec<f64> = pr.apply(&wc).iter().zip(fine.weights()).map(|(a, w)| a / w).collect();
        let spline = |kv: &KnotVector, c: &[f64], x: f64| -> f64 {
            (0..kv.dim()).map(|i| c[i] * eval_nurbs(kv, i, x).unwrap()).sum()
        };
        let wf = |kv: &KnotVector, x: f64| -> f64 {
            (0..kv.dim()).map(|i| kv.weights()[i] * eval_bspline(kv.knots(), i, p, x).unwrap()).sum()
        };
        let w = propagate_weights(&kv, &fine).unwrap();
        wt = wt.max((w[0] - fine.weights()[0]).abs()).max((w[w.len() - 1] - fine.weights()[w.len() - 1]).abs());
        for &x in &xs {
            ins = ins.max((spline(&kv, &c, x) - spline(&fine, &cf, x)).abs());
            wt = wt.max((wf(&kv, x) - wf(&fine, x)).abs());
        }

        let e = rng.gen_range(0..kv.n_elements());
        let (a, b) = kv.element(e);
        let x = a + rng.gen_range(0.1..0.9) * (b - a);
        let h = 1e-6 * (b - a);
        for i in 0..kv.dim() {
            let d = eval_bspline_deriv(t, i, p, x).unwrap();
            let fd = (eval_bspline(t, i, p, x + h).unwrap() - eval_bspline(t, i, p, x - h).unwrap()) / (2.0 * h);
            der = der.max((d - fd).abs() / (1.0 + d.abs()));
        }
    }
    outcome(
        pu < 1e-13 && ins < 1e-12 && wt < 1e-12 && der < 1e-6,
        format!(
            "{cases} cases: partition {pu:.1e}, insertion {ins:.1e}, weights {wt:.1e}, derivative {der:.1e}"
        ),
    )
}

fn system_size(op: Operator, kv: &KnotVector) -> usize {
    match op {
        Operator::W => WrapMap::new(kv).dim(),
        Operator::V => kv.dim() - 1,
    }
}

fn random_hierarchy(op: Operator, seed: u64, max_dim: usize) -> Hierarchy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kv = match (op, seed % 3) {
        (Operator::W, 0) => pacman_knots(2).unwrap(),
        (Operator::V, 0) => pacman_knots(3).unwrap(),
        (_, 1) => slit_knots(if op == Operator::V { 2 } else { rng.gen_range(1..=3) }).unwrap(),
        _ => KnotVector::uniform(rng.gen_range(2..=3), 6, 1, rng.gen_bool(0.5)).unwrap(),
    };
    let kappa0 = mesh_ratio(&kv);
    let mut h = Hierarchy::new(kv);
    loop {
        let kv = h.finest();
        let nodes: Vec<usize> = kv.marking_nodes().filter(|_| rng.gen_bool(0.3)).collect();
        if nodes.is_empty() {
            continue;
        }
        let r = kv.refine(&nodes, kappa0).unwrap();
        if system_size(op, &r.fine) > max_dim {
            return h;
        }
        h.push_refinement(r);
    }
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * n as f64
}

fn preconditioner_correctness() -> Outcome {
    let mut worst = 0f64;
    let mut asym = 0f64;
    let mut min_eig = f64::INFINITY;
    let mut count = 0;
    let mut max_levels = 0;
    for op in [Operator::W, Operator::V] {
        for seed in 0..6 {
            let h = random_hierarchy(op, seed, 300);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mats: Vec<DMatrix<f64>> = h.levels().iter().map(|kv| random_spd(system_size(op, kv), &mut rng)).collect();
            let pc = MlPreconditioner::from_matrices(&h, op, &mats).unwrap();
            let fast = pc.to_dense().unwrap();
            let oracle = dense_oracle(&h, op, &mats).unwrap();
            worst = worst.max((&fast - &oracle).amax() / oracle.amax());
            asym = asym.max((&fast - fast.transpose()).amax() / fast.amax());
            let sym = (&fast + fast.transpose()) * 0.5;
            let ev = symmetric_eigenvalues(sym);
            min_eig = min_eig.min(ev[0] / ev[ev.len() - 1]);
            count += 1;
            max_levels = max_levels.max(h.len());
        }
    }
    outcome(
        worst <= 1e-12 && asym <= 1e-12 && min_eig > 0.0,
        format!(
            "{count} hierarchies (up to {max_levels} levels): apply vs oracle {worst:.1e}, asymmetry {asym:.1e}, \
             min eigenvalue ratio {min_eig:.1e}"
        ),
    )
}

fn matrix_structure() -> Outcome {
    let quad = QuadratureSpec::default();
    let mut ok = true;
    let mut notes = Vec::new();
    let asym = |a: &DMatrix<f64>| (a - a.transpose()).amax() / a.amax();

    let c = pacman();
    let kv = pacman_knots(2).unwrap();
    let kv = kv.bisect(&(0..kv.n_elements()).collect::<Vec<_>>()).unwrap();
    let kv = kv.bisect(&(0..kv.n_elements()).collect::<Vec<_>>()).unwrap();
    let wu = assemble_w_unstabilized(&c, &kv, &quad).unwrap();
    let rows = (0..wu.nrows()).map(|i| wu.row(i).sum().abs()).fold(0.0, f64::max);
    ok &= rows <= 1e-10;
    let w = assemble_w(&c, &kv, &quad).unwrap();
    let w_spd = w.clone().cholesky().is_some() && symmetric_eigenvalues(w.clone())[0] > 0.0;
    ok &= w_spd && asym(&wu) <= 1e-10 && asym(&w) <= 1e-10;
    notes.push(format!("pacman W (N={}): row sums {rows:.1e}, asymmetry {:.1e}, SPD {w_spd}", kv.dim(), asym(&w)));

    let kv3 = pacman_knots(3).unwrap();
    let kv3 = kv3.bisect(&(0..kv3.n_elements()).collect::<Vec<_>>()).unwrap();
    let kv3 = kv3.bisect(&(0..kv3.n_elements()).collect::<Vec<_>>()).unwrap();
    let v = assemble_v(&c, &kv3, &quad).unwrap();
    let v_spd = v.clone().cholesky().is_some() && symmetric_eigenvalues(v.clone())[0] > 0.0;
    ok &= v_spd && asym(&v) <= 1e-10;
    notes.push(format!("pacman V (N={}): asymmetry {:.1e}, SPD {v_spd}", kv3.dim(), asym(&v)));

    let s = slit();
    let ks = KnotVector::uniform(2, 64, 1, false).unwrap();
    let vs = assemble_v(&s, &ks, &quad).unwrap();
    let ws = assemble_w(&s, &ks, &quad).unwrap();
    let s_spd = vs.clone().cholesky().is_some() && ws.clone().cholesky().is_some();
    ok &= s_spd && asym(&vs) <= 1e-10 && asym(&ws) <= 1e-10;
    notes.push(format!("slit V, W (N={}): SPD {s_spd}", ks.dim()));
    outcome(ok, notes.join("; "))
}

struct Runs {
    runs: Vec<AdaptiveRun>,
    seconds: f64,
}

fn adaptive_runs() -> Runs {
    let t = Instant::now();
    let cfg = LoopConfig::default();
    let runs = Problem::ALL
        .iter()
        .map(|&p| adaptive_loop(p, &cfg, |_| {}).unwrap_or_else(|e| panic!("{}: {e}", p.name())))
        .collect();
    Runs { runs, seconds: t.elapsed().as_secs_f64() }
}

fn run_of(runs: &Runs, p: Problem) -> &AdaptiveRun {
    runs.runs.iter().find(|r| r.problem == p).unwrap()
}

fn energy_convergence(runs: &Runs) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (p, target) in [(Problem::HyperSlit, PI), (Problem::WeakSlit, PI / 4.0)] {
        let recs = &run_of(runs, p).records;
        let e: Vec<f64> = recs.iter().map(|r| r.energy).collect();
        let monotone = e.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
        let last = recs.last().unwrap();
        let gap = (target - last.energy).abs() / target;
        let pass = monotone && gap < 1e-3 && last.n >= 1000;
        ok &= pass;
        notes.push(format!("{}: monotone {monotone}, gap {gap:.1e} at N={}", p.name(), last.n));
    }
    outcome(ok, notes.join("; "))
}

fn optimality(runs: &Runs) -> Outcome {
    let mut ok = runs.seconds <= 900.0;
    let mut notes = Vec::new();
    for run in &runs.runs {
        let recs = &run.records;
        let first = recs.iter().find(|r| r.n >= 200).unwrap();
        let last = recs.last().unwrap();
        let m_ratio = last.cond_mlas.unwrap() / first.cond_mlas.unwrap();
        let mut pass = m_ratio <= 2.0 && last.n >= 2000;
        let near = recs.iter().min_by_key(|r| r.n.abs_diff(200)).unwrap();
        let d_ratio = last.cond_diag.unwrap() / near.cond_diag.unwrap();
        if matches!(run.problem, Problem::HyperSlit | Problem::WeakSlit) {
            pass &= d_ratio >= 5.0;
        }
        let it_small = recs.iter().filter(|r| r.n <= 500).filter_map(|r| r.iters_mlas).max().unwrap();
        let it_large = recs.iter().filter(|r| r.n > 500).filter_map(|r| r.iters_mlas).max().unwrap();
        pass &= it_large <= it_small + 5;
        ok &= pass;
        notes.push(format!(
            "{}: mlas {m_ratio:.2}x, diag {d_ratio:.1}x, iters {it_small}->{it_large}",
            run.problem.name()
        ));
    }
    notes.push(format!("runs {:.0} s", runs.seconds));
    outcome(ok, notes.join("; "))
}

fn lanczos_accuracy(runs: &Runs) -> Outcome {
    let mut worst = 0f64;
    let mut count = 0;
    for run in &runs.runs {
        for r in run.records.iter().filter(|r| r.n <= 500) {
            for (est, exact) in [(r.lanczos_diag, r.cond_diag), (r.lanczos_mlas, r.cond_mlas)] {
                let (Some(est), Some(exact)) = (est, exact) else { continue };
                worst = worst.max((est - exact).abs() / exact);
                count += 1;
            }
        }
    }
    outcome(count > 0 && worst <= 0.1, format!("{count} comparisons, worst relative deviation {worst:.2e}"))
}

fn algorithm_compliance(runs: &Runs, theta: f64) -> Outcome {
    let mut ok = true;
    let mut kappa_worst = 0f64;
    let mut marks = 0;
    for run in &runs.runs {
        for r in &run.records {
            kappa_worst = kappa_worst.max(r.kappa / run.kappa0);
            ok &= r.kappa <= 2.0 * run.kappa0;
            if r.marked.is_empty() {
                continue;
            }
            marks += 1;
            let eta2 = &r.indicators.eta2;
            let total: f64 = eta2.iter().sum();
            let sum: f64 = r.marked.iter().map(|&i| eta2[i]).sum();
            let smallest = r.marked.iter().map(|&i| eta2[i]).fold(f64::INFINITY, f64::min);
            ok &= sum >= theta * total && sum - smallest < theta * total;
        }
    }
    outcome(ok, format!("max kappa/kappa0 {kappa_worst:.3}, {marks} marked sets checked"))
}

/// Graded random hierarchy grown until the finest level has `n_max` knots.
fn synthetic_hierarchy(n_max: usize, seed: u64) -> Vec<KnotVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kv0 = KnotVector::uniform(2, 16, 1, false).unwrap();
    let kappa0 = mesh_ratio(&kv0);
    let mut levels = vec![kv0];
    loop {
        let kv = levels.last().unwrap();
        if kv.dim() >= n_max {
            return levels;
        }
        let n = kv.n_elements();
        let mut nodes: Vec<usize> = kv.marking_nodes().filter(|_| rng.gen_bool(0.35)).collect();
        nodes.extend([0, n]);
        nodes.sort();
        nodes.dedup();
        levels.push(kv.refine(&nodes, kappa0).unwrap().fine);
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0.ln(), a.1 + p.1.ln()));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|p| (p.0.ln() - mx) * (p.1.ln() - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
    num / den
}

fn linear_complexity() -> Outcome {
    let targets = [1_000usize, 3_000, 10_000, 30_000, 100_000];
    let mut ok = true;
    let mut notes = Vec::new();
    for op in [Operator::W, Operator::V] {
        let all = synthetic_hierarchy(*targets.last().unwrap(), 11);
        let mut ops_pts = Vec::new();
        let mut time_pts = Vec::new();
        for &t in &targets {
            let l = all.iter().position(|kv| kv.dim() >= t).unwrap();
            let mut h = Hierarchy::new(all[0].clone());
            for kv in &all[1..=l] {
                h.push(kv.clone()).unwrap();
            }
            let pc = MlPreconditioner::build(&h, op, |_, idx| Ok(vec![1.0; idx.len()]), 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
            let r: Vec<f64> = (0..pc.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, ops) = pc.apply_counted(&r).unwrap();
            let reps = (2_000_000 / pc.dim()).max(3);
            let t0 = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(pc.apply(&r).unwrap());
            }
            let dt = t0.elapsed().as_secs_f64() / reps as f64;
            let n = h.finest().dim() as f64;
            ops_pts.push((n, ops as f64));
            time_pts.push((n, dt));
        }
        let s_ops = slope(&ops_pts);
        let s_time = slope(&time_pts);
        ok &= (0.9..=1.1).contains(&s_ops);
        notes.push(format!("{op:?}: ops slope {s_ops:.3}, wall-time slope {s_time:.3}"));
    }
    outcome(ok, notes.join("; "))
}

fn main() {
    let mut results = Vec::new();
    let mut check = |id: usize, name: &str, limit: Option<f64>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        if let Some(s) = limit {
            let el = t.elapsed().as_secs_f64();
            if el > s {
                o.pass = false;
                o.detail.push_str(&format!("; exceeded {s} s"));
            }
        }
        report(id, name, t, &o);
        results.push(o.pass);
    };
    check(1, "quadrature oracle", Some(1.0), &mut quadrature_oracle);
    check(2, "spline suite", Some(10.0), &mut spline_suite);
    check(3, "preconditioner correctness", Some(30.0), &mut preconditioner_correctness);
    check(4, "matrix structure", Some(60.0), &mut matrix_structure);
    let runs = adaptive_runs();
    check(5, "energy convergence", None, &mut || energy_convergence(&runs));
    check(6, "optimality trend", None, &mut || optimality(&runs));
    check(7, "lanczos vs dense", None, &mut || lanczos_accuracy(&runs));
    check(8, "linear complexity", None, &mut linear_complexity);
    check(9, "algorithm compliance", None, &mut || algorithm_compliance(&runs, LoopConfig::default().theta));
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
