use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fistanet::dataset::{build_dataset, load_dataset, save_dataset, PhantomSource};
use fistanet::fistanet::{load_checkpoint, FistaNet, FistaNetConfig};
use fistanet::ftns::{read_tensor, write_tensor};
use fistanet::operators::{
    dense_matrix, fbp_reconstruct, synth_emt_operator, MatrixOperator, RadonGeometry, RadonOperator,
    SharedOperator, Sinogram,
};
use fistanet::phantoms::CirclePhantomSpec;
use fistanet::rng::Rng;
use fistanet::solvers::{
    default_lipschitz, fista_solve, fista_tv_solve, ista_solve, laplacian_init, SolverConfig, StepSize,
};
use fistanet::tensor::{Image2D, Tensor};
use fistanet::training::{
    evaluate, evaluate_with, metrics, noise_sweep, prepare, rmse, split_peak, train, MetricsRow, Prepared,
    TrainingConfig, WarmStart, DEFAULT_SNR_GRID,
};
use fistanet::weights::{solve_analytic_w, WeightMode};

use crate::config::{Init, Problem, RunConfig, Solver};
use crate::{pgm, CliError};

pub const PROBLEM_FILE: &str = "problem.txt";
pub const OPERATOR_FILE: &str = "operator.ftns";
pub const GEOMETRY_FILE: &str = "geometry.txt";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Stream indices derived from the run seed.
const OPERATOR_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 10;
const SWEEP_STREAM: u64 = 20;

type Result<T> = std::result::Result<T, CliError>;

pub struct LoadedProblem {
    pub kind: Problem,
    pub op: SharedOperator,
    pub matrix: Option<Tensor>,
    pub geometry: Option<RadonGeometry>,
}

fn build_problem(cfg: &RunConfig) -> Result<LoadedProblem> {
    match cfg.problem {
        Problem::EmtSynth => {
            let mut rng = Rng::derive(cfg.seed, OPERATOR_STREAM);
            let m = synth_emt_operator(&mut rng, cfg.n_meas, cfg.image_size, cfg.condition)?;
            Ok(LoadedProblem {
                kind: Problem::EmtSynth,
                matrix: Some(m.matrix().clone()),
                op: Arc::new(m),
                geometry: None,
            })
        }
        Problem::CtRadon => {
            let g = if cfg.n_detectors == 0 {
                RadonGeometry::new(cfg.image_size, cfg.n_views)?
            } else {
                RadonGeometry::with_detectors(cfg.image_size, cfg.n_views, cfg.n_detectors, 1.0)?
            };
            Ok(LoadedProblem {
                kind: Problem::CtRadon,
                op: Arc::new(RadonOperator::new(g.clone())?),
                matrix: None,
                geometry: Some(g),
            })
        }
    }
}

fn save_problem(dir: &Path, p: &LoadedProblem) -> Result<()> {
    fs::write(dir.join(PROBLEM_FILE), format!("{}\n", p.kind.name()))?;
    if let Some(m) = &p.matrix {
        write_tensor(dir.join(OPERATOR_FILE), m)?;
    }
    if let Some(g) = &p.geometry {
        fs::write(dir.join(GEOMETRY_FILE), g.to_text())?;
    }
    Ok(())
}

pub fn load_problem(dir: &Path) -> Result<LoadedProblem> {
    let kind_text = fs::read_to_string(dir.join(PROBLEM_FILE))
        .map_err(|e| CliError(format!("no dataset in {} ({e}); run gen-data first", dir.display())))?;
    let kind: Problem = kind_text.trim().parse().map_err(CliError)?;
    match kind {
        Problem::EmtSynth => {
            let m = read_tensor(dir.join(OPERATOR_FILE))?;
            let n = m.dims().get(1).copied().unwrap_or(0);
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(CliError(format!("operator has {n} columns, not a square image")));
            }
            let op = MatrixOperator::new(m.clone())?.with_input_dims(&[side, side])?;
            Ok(LoadedProblem {
                kind,
                op: Arc::new(op),
                matrix: Some(m),
                geometry: None,
            })
        }
        Problem::CtRadon => {
            let g = RadonGeometry::from_text(&fs::read_to_string(dir.join(GEOMETRY_FILE))?)?;
            Ok(LoadedProblem {
                kind,
                op: Arc::new(RadonOperator::new(g.clone())?),
                matrix: None,
                geometry: Some(g),
            })
        }
    }
}

fn warm_start(cfg: &RunConfig, kind: Problem) -> WarmStart {
    match (cfg.init, kind) {
        (Init::Auto, Problem::EmtSynth) | (Init::Laplacian, _) => WarmStart::Laplacian(cfg.lambda0),
        (Init::Auto, Problem::CtRadon) | (Init::Adjoint, _) => WarmStart::Adjoint,
        (Init::Zero, _) => WarmStart::Zero,
    }
}

fn warm_name(w: WarmStart) -> &'static str {
    match w {
        WarmStart::Zero => "zero",
        WarmStart::Laplacian(_) => "laplacian",
        WarmStart::Adjoint => "adjoint",
    }
}

fn weights_path(cfg: &RunConfig) -> PathBuf {
    if cfg.weights.is_empty() {
        cfg.data_dir.join("weights.ftns")
    } else {
        PathBuf::from(&cfg.weights)
    }
}

fn report_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".report.txt");
    PathBuf::from(s)
}

fn operator_matrix(p: &LoadedProblem) -> Result<Tensor> {
    match &p.matrix {
        Some(m) => Ok(m.clone()),
        None => Ok(dense_matrix(p.op.as_ref())?),
    }
}

fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<fistanet::dataset::DatasetSample>> {
    let dir = cfg.data_dir.join(split);
    load_dataset(&dir).map_err(|e| CliError(format!("cannot load {}: {e}", dir.display())))
}

pub fn gen_data(cfg: &RunConfig) -> Result<String> {
    let p = build_problem(cfg)?;
    fs::create_dir_all(&cfg.data_dir)?;
    save_problem(&cfg.data_dir, &p)?;
    let source = match p.kind {
        Problem::EmtSynth => PhantomSource::Circles(CirclePhantomSpec::default()),
        Problem::CtRadon => PhantomSource::Ellipses { min: 3, max: 6 },
    };
    let mut summary = String::new();
    writeln!(summary, "problem: {}", p.kind.name()).expect("string");
    match &p.geometry {
        Some(g) => writeln!(
            summary,
            "geometry: {}x{} image, {} views, {} detectors",
            g.image_size, g.image_size, g.n_views, g.n_detectors
        ),
        None => writeln!(
            summary,
            "operator: {} measurements, {}x{} image, target condition {}",
            cfg.n_meas, cfg.image_size, cfg.image_size, cfg.condition
        ),
    }
    .expect("string");
    for (i, (split, n)) in SPLITS.iter().zip([cfg.n_train, cfg.n_val, cfg.n_test]).enumerate() {
        if n == 0 {
            continue;
        }
        let mut rng = Rng::derive(cfg.seed, SPLIT_STREAM + i as u64);
        let samples = build_dataset(&mut rng, p.op.as_ref(), &source, n, cfg.snr_db)?;
        save_dataset(cfg.data_dir.join(split), &samples)?;
        writeln!(summary, "{split}: {n} samples at {} dB SNR", cfg.snr_db).expect("string");
    }
    writeln!(summary, "written to {}", cfg.data_dir.display()).expect("string");
    Ok(summary)
}

pub fn weights(cfg: &RunConfig) -> Result<String> {
    let p = load_problem(&cfg.data_dir)?;
    let a = operator_matrix(&p)?;
    let path = weights_path(cfg);
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let summary = match cfg.mode {
        WeightMode::Analytic => {
            let rep = solve_analytic_w(&a, None)?;
            write_tensor(&path, &rep.weights)?;
            fs::write(report_path(&path), format!("mode=analytic\n{}", rep.to_text()))?;
            format!(
                "analytic weights {}x{}, max constraint residual {:e}\n",
                a.dims()[0],
                a.dims()[1],
                rep.max_constraint_residual()
            )
        }
        WeightMode::Physical => {
            write_tensor(&path, &a)?;
            fs::write(report_path(&path), "mode=physical\n")?;
            format!("physical weights (W = A) {}x{}\n", a.dims()[0], a.dims()[1])
        }
    };
    Ok(format!("{summary}written to {}\n", path.display()))
}

fn load_or_compute_weights(cfg: &RunConfig, p: &LoadedProblem) -> Result<Tensor> {
    let path = weights_path(cfg);
    if path.exists() {
        return Ok(read_tensor(&path)?);
    }
    Ok(solve_analytic_w(&operator_matrix(p)?, None)?.weights)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<String> {
    let p = load_problem(&cfg.data_dir)?;
    let warm = warm_start(cfg, p.kind);
    let tr = prepare(p.op.as_ref(), &load_split(cfg, "train")?, warm)?;
    let va = prepare(p.op.as_ref(), &load_split(cfg, "val")?, warm)?;
    let w = match cfg.mode {
        WeightMode::Analytic => Some(load_or_compute_weights(cfg, &p)?),
        WeightMode::Physical => None,
    };
    let model_cfg = FistaNetConfig {
        n_layers: cfg.layers,
        n_filters: cfg.nf,
        sign_mode: cfg.sign_mode,
    };
    let mut net = FistaNet::new(p.op.clone(), w.as_ref(), model_cfg, &mut Rng::derive(cfg.seed, MODEL_STREAM))?;
    let run = cfg.out_dir.join(cfg.run_dir_name());
    fs::create_dir_all(&run)?;
    fs::write(run.join("config.txt"), cfg.to_text())?;
    if let Some(w) = &w {
        write_tensor(run.join("weights.ftns"), w)?;
    }
    let tcfg = TrainingConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch,
        lr1: cfg.lr1,
        lr2: cfg.lr2,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        seed: cfg.seed,
        verbose: true,
        ..Default::default()
    };
    let report = train(&mut net, &tr, &va, &tcfg, Some(&run))?;
    Ok(format!(
        "run directory: {}\nparameters: {}\nbest epoch {}: val psnr {:.3} dB, ssim {:.4}, rmse {:.5}\nschedule violations: {}\n",
        run.display(),
        net.count_parameters(),
        report.best_epoch,
        report.best_val.psnr,
        report.best_val.ssim,
        report.best_val.rmse,
        report.schedule_violations
    ))
}

fn load_model(cfg: &RunConfig, p: &LoadedProblem) -> Result<FistaNet> {
    if cfg.checkpoint.is_empty() {
        return Err(CliError("a checkpoint is required (checkpoint=<path>)".into()));
    }
    let path = PathBuf::from(&cfg.checkpoint);
    let ck = load_checkpoint(&path).map_err(|e| CliError(format!("cannot load checkpoint {}: {e}", path.display())))?;
    let w = match ck.meta.weight_mode {
        WeightMode::Analytic => {
            let beside = path.with_file_name("weights.ftns");
            let wp = if beside.exists() { beside } else { weights_path(cfg) };
            Some(read_tensor(&wp).map_err(|e| CliError(format!("cannot load weights {}: {e}", wp.display())))?)
        }
        WeightMode::Physical => None,
    };
    let mut net = FistaNet::from_parts(p.op.clone(), w.as_ref(), ck.meta.config, ck.params)
        .map_err(|e| CliError(format!("checkpoint does not match the dataset: {e}")))?;
    if cfg.infer_layers > 0 {
        net.set_n_layers(cfg.infer_layers)?;
    }
    Ok(net)
}

fn classic_config(cfg: &RunConfig, mu: f64, s: &Prepared, trace: bool) -> SolverConfig {
    SolverConfig {
        max_iters: cfg.max_iters,
        step_size: StepSize::Fixed(mu),
        reg_lambda: cfg.reg_lambda,
        record_trace: trace,
        warm_start: Some(s.x0.as_tensor().clone()),
        reference: Some(s.gt.as_tensor().clone()),
        ..Default::default()
    }
}

fn write_image(dir: &Path, stem: &str, img: &Image2D) -> Result<()> {
    write_tensor(dir.join(format!("{stem}.ftns")), img.as_tensor())?;
    pgm::write(dir.join(format!("{stem}.pgm")), img)?;
    Ok(())
}

pub fn solve(cfg: &RunConfig) -> Result<String> {
    let p = load_problem(&cfg.data_dir)?;
    let mut test = load_split(cfg, "test")?;
    if cfg.n_solve > 0 {
        test.truncate(cfg.n_solve);
    }
    let prepared = prepare(p.op.as_ref(), &test, warm_start(cfg, p.kind))?;
    let dir = cfg.out_dir.join(format!("solve-{}", cfg.solver.name()));
    fs::create_dir_all(&dir)?;
    let net = match cfg.solver {
        Solver::FistaNet => Some(load_model(cfg, &p)?),
        _ => None,
    };
    if cfg.solver == Solver::Fbp && p.geometry.is_none() {
        return Err(CliError("fbp needs a ct-radon dataset".into()));
    }
    let mu = match cfg.solver {
        Solver::Ista | Solver::Fista | Solver::FistaTv => 1.0 / default_lipschitz(p.op.as_ref()),
        _ => 0.0,
    };
    let peak = split_peak(&prepared);
    let mut table = String::from("sample,psnr,ssim,rmse\n");
    let mut rows = Vec::with_capacity(prepared.len());
    for (i, s) in prepared.iter().enumerate() {
        let stem = format!("sample_{i}");
        let x = match cfg.solver {
            Solver::Fbp => {
                let g = p.geometry.as_ref().expect("checked above");
                let sino = Sinogram::new(g.clone(), s.b.clone().reshape(&g.sinogram_dims())?)?;
                fbp_reconstruct(g, &sino)?
            }
            Solver::Laplacian => laplacian_init(p.op.as_ref(), &s.b, cfg.lambda0)?,
            Solver::Ista | Solver::Fista | Solver::FistaTv => {
                let sc = classic_config(cfg, mu, s, true);
                let (x, trace) = match cfg.solver {
                    Solver::Ista => ista_solve(p.op.as_ref(), &s.b, &sc)?,
                    Solver::Fista => fista_solve(p.op.as_ref(), &s.b, &sc)?,
                    _ => fista_tv_solve(p.op.as_ref(), &s.b, &sc)?,
                };
                trace.write_csv(dir.join(format!("{stem}_trace.csv")))?;
                x
            }
            Solver::FistaNet => {
                let net = net.as_ref().expect("loaded above");
                let (x, layers) = net.reconstruct(&s.b, &s.x0)?;
                let mut trace = String::from("layer,rmse\n");
                for (k, img) in layers.iter().enumerate() {
                    write_image(&dir, &format!("{stem}_layer_{}", k + 1), img)?;
                    writeln!(trace, "{},{}", k + 1, rmse(img, &s.gt)?).expect("string");
                }
                fs::write(dir.join(format!("{stem}_trace.csv")), trace)?;
                x
            }
        };
        write_image(&dir, &stem, &x)?;
        let m = metrics(&x, &s.gt, peak)?;
        writeln!(table, "{i},{},{},{}", m.psnr, m.ssim, m.rmse).expect("string");
        rows.push(m);
    }
    fs::write(dir.join("metrics.csv"), table)?;
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(format!(
        "{}: {} samples, mean psnr {:.3} dB, ssim {:.4}, rmse {:.5}\nwritten to {}\n",
        cfg.solver.name(),
        rows.len(),
        mean(|m| m.psnr),
        mean(|m| m.ssim),
        mean(|m| m.rmse),
        dir.display()
    ))
}

pub fn eval(cfg: &RunConfig) -> Result<String> {
    let p = load_problem(&cfg.data_dir)?;
    let net = load_model(cfg, &p)?;
    let warm = warm_start(cfg, p.kind);
    let test = prepare(p.op.as_ref(), &load_split(cfg, "test")?, warm)?;
    let peak = split_peak(&test);
    let mu = 1.0 / default_lipschitz(p.op.as_ref());
    let op = p.op.as_ref();
    let tv = |s: &Prepared| fista_tv_solve(op, &s.b, &classic_config(cfg, mu, s, false)).map(|r| r.0);
    let fnet = |s: &Prepared| net.reconstruct(&s.b, &s.x0).map(|r| r.0);

    let rows = [
        (warm_name(warm), evaluate_with(&test, peak, |s| Ok(s.x0.clone()))?, 0),
        ("fista-tv", evaluate_with(&test, peak, tv)?, 0),
        ("fistanet", evaluate(&net, &test, peak)?, net.count_parameters()),
    ];
    let dir = cfg.out_dir.join("eval");
    fs::create_dir_all(&dir)?;
    let mut table = String::from("method,psnr,ssim,rmse,n_params\n");
    let mut summary = String::new();
    for (name, m, n) in &rows {
        writeln!(table, "{name},{},{},{},{n}", m.psnr, m.ssim, m.rmse).expect("string");
        writeln!(summary, "{name:<10} psnr {:>7.3} dB  ssim {:.4}  rmse {:.5}", m.psnr, m.ssim, m.rmse).expect("string");
    }
    fs::write(dir.join("metrics.csv"), table)?;

    if cfg.sweep {
        let seed = Rng::derive_seed(cfg.seed, SWEEP_STREAM);
        let a = noise_sweep(op, &test, &DEFAULT_SNR_GRID, seed, warm, peak, fnet)?;
        let b = noise_sweep(op, &test, &DEFAULT_SNR_GRID, seed, warm, peak, tv)?;
        let mut csv = String::from(
            "snr_db,fistanet_psnr,fistanet_ssim,fistanet_rmse,fista_tv_psnr,fista_tv_ssim,fista_tv_rmse\n",
        );
        for (x, y) in a.iter().zip(&b) {
            let (m, t) = (x.metrics, y.metrics);
            writeln!(csv, "{},{},{},{},{},{},{}", x.snr_db, m.psnr, m.ssim, m.rmse, t.psnr, t.ssim, t.rmse)
                .expect("string");
        }
        fs::write(dir.join("sweep.csv"), csv)?;
        writeln!(summary, "noise sweep over {} SNR levels written", a.len()).expect("string");
    }
    writeln!(summary, "written to {}", dir.display()).expect("string");
    Ok(summary)
}
