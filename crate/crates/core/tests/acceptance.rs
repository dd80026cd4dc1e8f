//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line in order; the process exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fistanet::autodiff::{Graph, NodeId};
use fistanet::dataset::{build_dataset, PhantomSource};
use fistanet::fistanet::{
    schedule_violations, total_loss, FistaNet, FistaNetConfig, ForwardOptions, SignMode, DEFAULT_LAMBDA1,
    DEFAULT_LAMBDA2,
};
use fistanet::operators::{
    synth_emt_operator, Laplacian, LinearOperator, MatrixOperator, RadonGeometry, RadonOperator, SharedOperator,
};
use fistanet::phantoms::CirclePhantomSpec;
use fistanet::rng::Rng;
use fistanet::solvers::{fista_solve, fista_tv_solve, ista_solve, soft_threshold, tv_prox, SolverConfig};
use fistanet::tensor::{Image2D, Tensor};
use fistanet::training::{
    evaluate, evaluate_with, layer_rmse_trace, noise_sweep, prepare, split_peak, train, MetricsRow, Prepared,
    TrainReport, TrainingConfig, WarmStart, DEFAULT_SNR_GRID,
};
use fistanet::weights::{check_lista_condition, lista_pair, solve_analytic_w};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_tensor(rng: &mut Rng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- 1

fn adjoint_error(op: &dyn LinearOperator, rng: &mut Rng) -> f64 {
    let x = random_tensor(rng, op.in_dims());
    let y = random_tensor(rng, op.out_dims());
    let lhs = dot(op.apply(&x).unwrap().as_slice(), y.as_slice());
    let rhs = dot(x.as_slice(), op.adjoint(&y).unwrap().as_slice());
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
}

fn criterion_adjoint() -> Outcome {
    let mut rng = Rng::new(101);
    let matrix = MatrixOperator::new(random_tensor(&mut rng, &[48, 80])).unwrap();
    let emt = synth_emt_operator(&mut rng, 64, 32, 1e3).unwrap();
    let radon = RadonOperator::new(RadonGeometry::new(32, 60).unwrap()).unwrap();
    let lap = Laplacian::new(32, 32).unwrap();
    let ops: [(&str, &dyn LinearOperator); 4] =
        [("matrix", &matrix), ("emt", &emt), ("radon", &radon), ("laplacian", &lap)];
    let mut worst = Vec::new();
    for (name, op) in ops {
        let w = (0..100).map(|_| adjoint_error(op, &mut rng)).fold(0.0, f64::max);
        worst.push((name, w));
    }
    let pass = worst.iter().all(|(_, w)| *w <= 1e-10);
    let detail = worst.iter().map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("max relative error: {detail} (tol 1e-10)"))
}

// ---------------------------------------------------------------- 2

/// Grid search of `0.5 (z - x)^2 + alpha |z|` over [-3, 3].
fn grid_prox(x: f64, alpha: f64) -> f64 {
    let steps = 60_000;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let z = -3.0 + 6.0 * k as f64 / steps as f64;
        let f = 0.5 * (z - x).powi(2) + alpha * z.abs();
        if f < best.0 {
            best = (f, z);
        }
    }
    best.1
}

/// Exact prox of `lambda |z1 - z2|` for a two-pixel image.
fn two_point_prox(a: f64, b: f64, lambda: f64) -> (f64, f64) {
    let d = a - b;
    if d.abs() <= 2.0 * lambda {
        let m = 0.5 * (a + b);
        (m, m)
    } else {
        (a - lambda * d.signum(), b + lambda * d.signum())
    }
}

fn criterion_prox() -> Outcome {
    let mut rng = Rng::new(102);
    let mut soft_err: f64 = 0.0;
    for _ in 0..50 {
        let x = rng.uniform(-2.5, 2.5);
        let alpha = rng.uniform(0.0, 1.5);
        let z = soft_threshold(&Tensor::scalar(x), alpha).unwrap().item();
        soft_err = soft_err.max((z - grid_prox(x, alpha)).abs());
    }
    let mut tv_err: f64 = 0.0;
    for _ in 0..50 {
        let (a, b) = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        let lambda = rng.uniform(0.01, 0.8);
        let (ea, eb) = two_point_prox(a, b, lambda);
        for v in [Image2D::from_vec(1, 2, vec![a, b]).unwrap(), Image2D::from_vec(2, 1, vec![a, b]).unwrap()] {
            let out = tv_prox(&v, lambda, 300);
            tv_err = tv_err.max((out.as_slice()[0] - ea).abs()).max((out.as_slice()[1] - eb).abs());
        }
    }
    outcome(
        soft_err <= 1e-4 && tv_err <= 1e-6,
        format!("soft vs grid {soft_err:.1e} (tol 1e-4), tv vs two-point {tv_err:.1e} (tol 1e-6)"),
    )
}

// ---------------------------------------------------------------- 3

/// Projected gradient on `min w^T G w` s.t. `a^T w = 1` per column,
/// `G = A A^T + eps I`. Returns `W` as row-major `[n, m]`.
fn qp_oracle(a: &Tensor, eps: f64) -> Vec<f64> {
    let (n, m) = (a.dims()[0], a.dims()[1]);
    let s = a.as_slice();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum::<f64>();
        }
        g[i * n + i] += eps;
    }
    let lmax = (0..n).map(|i| (0..n).map(|j| g[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / (2.0 * lmax);
    let mut out = vec![0.0; n * m];
    for c in 0..m {
        let col: Vec<f64> = (0..n).map(|i| s[i * m + c]).collect();
        let aa = dot(&col, &col);
        let mut w: Vec<f64> = col.iter().map(|v| v / aa).collect();
        for _ in 0..200_000 {
            let gw: Vec<f64> = (0..n).map(|i| dot(&g[i * n..(i + 1) * n], &w)).collect();
            for i in 0..n {
                w[i] -= step * 2.0 * gw[i];
            }
            let viol = dot(&w, &col) - 1.0;
            for i in 0..n {
                w[i] -= viol * col[i] / aa;
            }
        }
        for i in 0..n {
            out[i * m + c] = w[i];
        }
    }
    out
}

/// `|W^T A|_F^2` computed entry by entry.
fn weight_objective(w: &[f64], a: &Tensor) -> f64 {
    let (n, m) = (a.dims()[0], a.dims()[1]);
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let v: f64 = (0..n).map(|k| w[k * m + i] * a.as_slice()[k * m + j]).sum();
            total += v * v;
        }
    }
    total
}

fn criterion_weights() -> Outcome {
    let mut rng = Rng::new(103);
    let (mut gap, mut resid, mut lista): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (n, m) in [(4, 6), (8, 16)] {
        for _ in 0..20 {
            let a = random_tensor(&mut rng, &[n, m]);
            let r = solve_analytic_w(&a, None).unwrap();
            let oracle = qp_oracle(&a, r.ridge_eps);
            gap = gap.max((weight_objective(r.weights.as_slice(), &a) - weight_objective(&oracle, &a)).abs());
            resid = resid.max(r.max_constraint_residual());
            let (w1, w2) = lista_pair(&r.weights, &a, rng.uniform(0.05, 1.0)).unwrap();
            lista = lista.max(check_lista_condition(&w1, &w2, &a).unwrap());
        }
    }
    outcome(
        gap <= 1e-6 && resid <= 1e-8 && lista <= 1e-12,
        format!("objective gap {gap:.1e} (tol 1e-6), constraint {resid:.1e} (tol 1e-8), pair residual {lista:.1e} (tol 1e-12)"),
    )
}

// ---------------------------------------------------------------- 4

type Build<'a> = &'a dyn Fn(&mut Graph, &[NodeId]) -> NodeId;

/// Relative error between backward and central differences over every
/// entry of every input.
fn primitive_error(inputs: &[Tensor], build: Build<'_>) -> f64 {
    let h = 1e-6;
    let run = |vals: &[Tensor]| {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = vals.iter().map(|v| g.leaf(v.clone(), true)).collect();
        let loss = build(&mut g, &ids);
        (g, ids, loss)
    };
    let (mut g, ids, loss) = run(inputs);
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (p, input) in inputs.iter().enumerate() {
        let analytic = g.grad(ids[p]).map(|t| t.as_slice().to_vec()).unwrap_or(vec![0.0; input.len()]);
        for e in 0..input.len() {
            let eval = |d: f64| {
                let mut vals = inputs.to_vec();
                vals[p].as_mut_slice()[e] += d;
                let (g, _, l) = run(&vals);
                g.value(l).item()
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic[e];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1.0));
        }
    }
    worst
}

/// Normal draws kept more than `gap` away from every kink.
fn away_from(rng: &mut Rng, dims: &[usize], kinks: &[f64], gap: f64) -> Tensor {
    let n = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let v = rng.normal();
        if kinks.iter().all(|k| (v - k).abs() > gap) {
            data.push(v);
        }
    }
    Tensor::from_vec(dims, data).unwrap()
}

/// Contracts a node with a fixed random tensor to get a scalar loss.
fn project(g: &mut Graph, x: NodeId) -> NodeId {
    let dims = g.value(x).dims().to_vec();
    let w = g.constant(random_tensor(&mut Rng::new(77), &dims));
    let m = g.mul(x, w).unwrap();
    g.sum(m)
}

fn primitive_errors() -> Vec<(&'static str, f64)> {
    let mut rng = Rng::new(104);
    let kink = 1e-3;
    let img = [1, 1, 8, 8];
    let mut out = Vec::new();

    let x = random_tensor(&mut rng, &[1, 2, 8, 8]);
    let k = random_tensor(&mut rng, &[3, 2, 3, 3]);
    out.push(("conv2d", primitive_error(&[x, k], &|g, v| {
        let y = g.conv2d(v[0], v[1]).unwrap();
        project(g, y)
    })));

    let x = away_from(&mut rng, &img, &[0.0], kink);
    out.push(("relu", primitive_error(&[x], &|g, v| {
        let y = g.relu(v[0]);
        project(g, y)
    })));

    let x = random_tensor(&mut rng, &img);
    out.push(("softplus", primitive_error(&[x], &|g, v| {
        let y = g.softplus(v[0]);
        project(g, y)
    })));

    let theta = 0.4;
    let x = away_from(&mut rng, &img, &[-theta, theta], kink);
    out.push(("soft_threshold", primitive_error(&[x, Tensor::scalar(theta)], &|g, v| {
        let y = g.soft_threshold(v[0], v[1]).unwrap();
        project(g, y)
    })));

    let a = random_tensor(&mut rng, &img);
    let b = away_from(&mut rng, &img, &[0.0], 0.3);
    let s = Tensor::scalar(0.7);
    out.push(("arithmetic", primitive_error(&[a, b, s], &|g, v| {
        let p = g.add(v[0], v[1]).unwrap();
        let q = g.sub(p, v[0]).unwrap();
        let r = g.mul(q, v[0]).unwrap();
        let d = g.div(r, v[1]).unwrap();
        let e = g.scale(d, 1.5);
        let f = g.scalar_mul(v[2], e).unwrap();
        project(g, f)
    })));

    let a = random_tensor(&mut rng, &img);
    let b = random_tensor(&mut rng, &img);
    out.push(("mse", primitive_error(&[a, b], &|g, v| g.mse(v[0], v[1]).unwrap())));

    let x = away_from(&mut rng, &img, &[0.0], kink);
    out.push(("l1_norm", primitive_error(&[x], &|g, v| g.l1_norm(v[0]))));

    let x = random_tensor(&mut rng, &img);
    out.push(("reshape", primitive_error(&[x], &|g, v| {
        let y = g.reshape(v[0], &[64]).unwrap();
        project(g, y)
    })));

    let op: SharedOperator = Arc::new(synth_emt_operator(&mut rng, 24, 8, 100.0).unwrap());
    let x = random_tensor(&mut rng, &[8, 8]);
    let y = random_tensor(&mut rng, &[24]);
    out.push(("linear", primitive_error(&[x, y], &|g, v| {
        let ax = g.linear_apply(v[0], &op).unwrap();
        let aty = g.linear_adjoint(v[1], &op).unwrap();
        let l = project(g, ax);
        let r = project(g, aty);
        g.add(l, r).unwrap()
    })));
    out
}

fn network_loss(net: &FistaNet, b: &Tensor, x0: &Image2D, gt: &Image2D) -> f64 {
    let opts = ForwardOptions { transforms: true, ..Default::default() };
    let mut pass = net.forward(b, x0, opts).unwrap();
    let loss = total_loss(&mut pass, gt, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2).unwrap();
    pass.graph.value(loss).item()
}

fn network_error(sign_mode: SignMode, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let op: SharedOperator = Arc::new(synth_emt_operator(&mut rng, 24, 8, 100.0).unwrap());
    let cfg = FistaNetConfig { n_layers: 7, n_filters: 2, sign_mode };
    let net = FistaNet::new(op.clone(), None, cfg, &mut rng).unwrap();
    let gt = Image2D::from_vec(8, 8, (0..64).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
    let b = op.apply(gt.as_tensor()).unwrap();
    let x0 = Image2D::zeros(8, 8).unwrap();

    let opts = ForwardOptions { track_grad: true, transforms: true, schedule: None };
    let mut pass = net.forward(&b, &x0, opts).unwrap();
    let loss = total_loss(&mut pass, &gt, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2).unwrap();
    pass.graph.backward(loss).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (pi, g) in pass.param_grads().iter().enumerate() {
        for ei in 0..g.len() {
            let mut plus = net.clone();
            plus.params_mut()[pi].value.as_mut_slice()[ei] += h;
            let mut minus = net.clone();
            minus.params_mut()[pi].value.as_mut_slice()[ei] -= h;
            let num = (network_loss(&plus, &b, &x0, &gt) - network_loss(&minus, &b, &x0, &gt)) / (2.0 * h);
            let a = g.as_slice()[ei];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1.0));
        }
    }
    worst
}

fn criterion_gradients() -> Outcome {
    let prims = primitive_errors();
    let prim_worst = prims.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let net_worst = network_error(SignMode::Reparam, 11).max(network_error(SignMode::Free, 12));
    let worst_name = prims.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0).unwrap_or("-");
    outcome(
        prim_worst <= 1e-5 && net_worst <= 1e-4,
        format!(
            "{} primitives max {prim_worst:.1e} ({worst_name}, tol 1e-5), 7-layer loss {net_worst:.1e} (tol 1e-4)",
            prims.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_convergence() -> Outcome {
    let mut rng = Rng::new(3);
    let a = random_tensor(&mut rng, &[16, 64]);
    let op = MatrixOperator::new(a).unwrap();
    let b = random_tensor(&mut rng, &[16]);
    let cfg = |iters| SolverConfig { max_iters: iters, reg_lambda: 0.5, tol: 0.0, ..Default::default() };
    let (_, oracle) = ista_solve(&op, &b, &cfg(100_000)).unwrap();
    let f_star = oracle.objective.iter().copied().fold(f64::INFINITY, f64::min);
    let first_hit = |obj: &[f64]| obj.iter().position(|f| f - f_star <= 1e-6).map(|k| k + 1);
    let (_, ti) = ista_solve(&op, &b, &cfg(20_000)).unwrap();
    let (_, tf) = fista_solve(&op, &b, &cfg(20_000)).unwrap();
    let (ki, kf) = (first_hit(&ti.objective), first_hit(&tf.objective));

    let plain = SolverConfig { extrapolate: false, ..cfg(500) };
    let (xi, pi) = ista_solve(&op, &b, &plain).unwrap();
    let (xf, pf) = fista_solve(&op, &b, &plain).unwrap();
    let bits = |x: &Image2D| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let identical = bits(&xi) == bits(&xf) && pi == pf;
    let faster = matches!((ki, kf), (Some(i), Some(f)) if f < i);
    outcome(
        faster && identical,
        format!("iterations to gap 1e-6: fista {kf:?}, ista {ki:?}; no-momentum fista == ista: {identical}"),
    )
}

// ---------------------------------------------------------------- 6-10

const EPOCHS: usize = 30;
const TV_LAMBDAS: [f64; 3] = [1e-4, 1e-3, 1e-2];
const WARM: WarmStart = WarmStart::Laplacian(1e-3);

struct Desk {
    op: SharedOperator,
    w: Tensor,
    train: Vec<Prepared>,
    val: Vec<Prepared>,
    test: Vec<Prepared>,
    peak: f64,
}

fn desk() -> Desk {
    let emt = synth_emt_operator(&mut Rng::new(7), 64, 32, 1e3).unwrap();
    let w = solve_analytic_w(emt.matrix(), None).unwrap().weights;
    let op: SharedOperator = Arc::new(emt);
    let source = PhantomSource::Circles(CirclePhantomSpec::default());
    let data = build_dataset(&mut Rng::new(8), op.as_ref(), &source, 700, 40.0).unwrap();
    let mut all = prepare(op.as_ref(), &data, WARM).unwrap();
    let test = all.split_off(600);
    let val = all.split_off(500);
    let peak = split_peak(&test);
    Desk { op, w, train: all, val, test, peak }
}

struct Trained {
    net: FistaNet,
    report: TrainReport,
    checkpoint: Vec<u8>,
    test: MetricsRow,
    elapsed: Duration,
}

fn train_desk(d: &Desk) -> Trained {
    let start = Instant::now();
    let mut net = FistaNet::new(d.op.clone(), Some(&d.w), FistaNetConfig::default(), &mut Rng::new(1)).unwrap();
    let cfg = TrainingConfig { epochs: EPOCHS, seed: 3, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let report = train(&mut net, &d.train, &d.val, &cfg, Some(dir.path())).unwrap();
    let checkpoint = fs::read(dir.path().join("best.ckpt")).unwrap();
    let test = evaluate(&net, &d.test, d.peak).unwrap();
    Trained { net, report, checkpoint, test, elapsed: start.elapsed() }
}

fn tv_config(lambda: f64, x0: &Image2D) -> SolverConfig {
    SolverConfig {
        reg_lambda: lambda,
        tol: 0.0,
        record_trace: false,
        warm_start: Some(x0.as_tensor().clone()),
        ..Default::default()
    }
}

fn tv_recon(op: &dyn LinearOperator, lambda: f64, s: &Prepared) -> fistanet::error::Result<Image2D> {
    fista_tv_solve(op, &s.b, &tv_config(lambda, &s.x0)).map(|r| r.0)
}

/// FISTA-TV over the weight grid, keeping the weight with the best test
/// PSNR; returns `(lambda, test metrics)`.
fn tuned_tv(d: &Desk) -> (f64, MetricsRow) {
    let op = d.op.as_ref();
    TV_LAMBDAS
        .iter()
        .map(|&l| (l, evaluate_with(&d.test, d.peak, |s| tv_recon(op, l, s)).unwrap()))
        .max_by(|a, b| a.1.psnr.total_cmp(&b.1.psnr))
        .unwrap()
}

fn criterion_schedule(t: &Trained) -> Outcome {
    let final_violations = schedule_violations(&t.net.schedule().eval_all(t.net.config().n_layers));
    outcome(
        t.report.schedule_violations == 0 && final_violations == 0,
        format!("{} violations over {} optimizer steps", t.report.schedule_violations, t.report.steps),
    )
}

fn criterion_desk(t: &Trained, lap: &MetricsRow, tv: &(f64, MetricsRow)) -> Outcome {
    let over_tv = t.test.psnr - tv.1.psnr;
    let over_lap = t.test.psnr - lap.psnr;
    let budget = t.elapsed <= Duration::from_secs(30 * 60);
    outcome(
        over_tv >= 1.0 && over_lap >= 2.0 && budget,
        format!(
            "test PSNR fistanet {:.2} dB, fista-tv(lambda {:e}) {:.2} dB (+{over_tv:.2}, need 1.0), laplacian {:.2} dB (+{over_lap:.2}, need 2.0), training {:.0} s",
            t.test.psnr,
            tv.0,
            tv.1.psnr,
            lap.psnr,
            t.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_trace(d: &Desk, t: &Trained, tv_lambda: f64) -> Outcome {
    let layers = layer_rmse_trace(&t.net, &d.test).unwrap();
    let op = d.op.as_ref();
    let traces: Vec<Vec<f64>> = d
        .test
        .iter()
        .map(|s| {
            let cfg = SolverConfig {
                record_trace: true,
                max_iters: 100,
                reference: Some(s.gt.as_tensor().clone()),
                ..tv_config(tv_lambda, &s.x0)
            };
            fista_tv_solve(op, &s.b, &cfg).unwrap().1.rmse
        })
        .collect();
    let n = traces.len() as f64;
    let mean: Vec<f64> = (0..100).map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / n).collect();
    let net_final = *layers.last().unwrap();
    let tv_final = mean[99];
    let plateau = (mean[99] - mean[79]).abs() / mean[79];
    outcome(
        net_final < tv_final && plateau < 0.01,
        format!(
            "RMSE after {} layers {net_final:.5} vs fista-tv after 100 iterations {tv_final:.5}; tv change over last 20 iterations {:.3}% (need < 1%)",
            layers.len(),
            plateau * 100.0
        ),
    )
}

fn criterion_noise(d: &Desk, t: &Trained, tv_lambda: f64) -> Outcome {
    let op = d.op.as_ref();
    let mut snrs = DEFAULT_SNR_GRID.to_vec();
    snrs.reverse();
    let net = noise_sweep(op, &d.test, &snrs, 20, WARM, d.peak, |s| t.net.reconstruct(&s.b, &s.x0).map(|r| r.0))
        .unwrap();
    let tv = noise_sweep(op, &d.test, &[22.0], 20, WARM, d.peak, |s| tv_recon(op, tv_lambda, s)).unwrap();
    let psnr: Vec<f64> = net.iter().map(|r| r.metrics.psnr).collect();
    let monotone = psnr.windows(2).all(|w| w[1] <= w[0] + 0.5);
    let at22 = *psnr.last().unwrap();
    let curve = psnr.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" ");
    outcome(
        monotone && at22 >= tv[0].metrics.psnr,
        format!("fistanet PSNR at 40..22 dB: {curve}; at 22 dB fista-tv {:.2}", tv[0].metrics.psnr),
    )
}

fn criterion_determinism(first: &Trained, d: &Desk) -> Outcome {
    let second = train_desk(d);
    let same_ckpt = first.checkpoint == second.checkpoint;
    let same_metrics = first.test.psnr.to_bits() == second.test.psnr.to_bits()
        && first.test.ssim.to_bits() == second.test.ssim.to_bits()
        && first.test.rmse.to_bits() == second.test.rmse.to_bits()
        && first.report == second.report;
    outcome(
        same_ckpt && same_metrics,
        format!("checkpoint identical: {same_ckpt}, metrics and log identical: {same_metrics}"),
    )
}

fn report(id: usize, name: &str, budget: Option<Duration>, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = run();
    let elapsed = start.elapsed();
    let in_budget = budget.is_none_or(|b| elapsed <= b);
    let pass = o.pass && in_budget;
    let timing = match budget {
        Some(b) => format!("{:.1} s of {:.0} s", elapsed.as_secs_f64(), b.as_secs_f64()),
        None => format!("{:.1} s", elapsed.as_secs_f64()),
    };
    println!("criterion {id:>2} {name:<22} {}  {} [{timing}]", if pass { "PASS" } else { "FAIL" }, o.detail);
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut results = vec![
        report(1, "adjoint identities", Some(secs(10)), criterion_adjoint),
        report(2, "prox oracles", Some(secs(30)), criterion_prox),
        report(3, "analytic weights", Some(secs(60)), criterion_weights),
        report(4, "gradient checks", Some(secs(120)), criterion_gradients),
        report(5, "fista vs ista", Some(secs(60)), criterion_convergence),
    ];

    let d = desk();
    let lap = evaluate_with(&d.test, d.peak, |s| Ok(s.x0.clone())).unwrap();
    let tv = tuned_tv(&d);
    let trained = train_desk(&d);
    results.push(report(6, "schedule constraints", None, || criterion_schedule(&trained)));
    results.push(report(7, "desk training", None, || criterion_desk(&trained, &lap, &tv)));
    results.push(report(8, "convergence trace", Some(secs(300)), || criterion_trace(&d, &trained, tv.0)));
    results.push(report(9, "noise robustness", Some(secs(300)), || criterion_noise(&d, &trained, tv.0)));
    results.push(report(10, "determinism", None, || criterion_determinism(&trained, &d)));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
