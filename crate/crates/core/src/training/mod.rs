//! End-to-end training of the unrolled network and the evaluation loops
//! built on it.

mod adam;
mod metrics;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use metrics::{gaussian_taps, metrics, psnr, rmse, ssim, MetricsRow, PSNR_CAP_DB, SSIM_SIGMA, SSIM_WINDOW};

use crate::dataset::DatasetSample;
use crate::error::{invalid, Error, Result};
use crate::fistanet::{
    save_checkpoint, schedule_violations, total_loss, CheckpointMeta, FistaNet, FistaNetConfig, ForwardOptions,
    CONV_PARAMS, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2,
};
use crate::operators::{LinearOperator, SharedOperator};
use crate::phantoms::add_noise_snr;
use crate::rng::Rng;
use crate::solvers::laplacian_init;
use crate::tensor::{Image2D, Tensor};

/// Test-set SNR grid of the noise sweep, in dB.
pub const DEFAULT_SNR_GRID: [f64; 7] = [22.0, 25.0, 28.0, 31.0, 34.0, 37.0, 40.0];
/// Unroll depths compared by [`layer_study`].
pub const DEFAULT_LAYER_COUNTS: [usize; 5] = [5, 6, 7, 8, 9];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate of the convolution kernels.
    pub lr1: f64,
    /// Learning rate of the six schedule scalars.
    pub lr2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    /// Save `epoch_<e>.ckpt` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Validate every this many epochs (and always after the last).
    pub eval_every: usize,
    /// Print one progress line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr1: 1e-3,
            lr2: 1e-2,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            seed: 0,
            checkpoint_every: 0,
            eval_every: 1,
            verbose: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        for (name, lr) in [("lr1", self.lr1), ("lr2", self.lr2)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {lr}")));
            }
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid(format!("{name} must be >= 0, got {l}")));
            }
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be >= 1"));
        }
        Ok(())
    }
}

/// How the network's starting image is computed from a measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WarmStart {
    Zero,
    /// Laplacian-regularised least squares with this weight.
    Laplacian(f64),
    /// Back-projection `A^T b`.
    Adjoint,
}

impl WarmStart {
    pub fn compute(&self, op: &dyn LinearOperator, b: &Tensor) -> Result<Image2D> {
        match *self {
            WarmStart::Zero => {
                let d = op.in_dims();
                Image2D::from_tensor(Tensor::zeros(d)?)
            }
            WarmStart::Laplacian(lambda0) => laplacian_init(op, b, lambda0),
            WarmStart::Adjoint => Image2D::from_tensor(op.adjoint(b)?),
        }
    }
}

/// A measurement with its starting image and ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub b: Tensor,
    pub x0: Image2D,
    pub gt: Image2D,
}

pub fn prepare(op: &dyn LinearOperator, samples: &[DatasetSample], warm: WarmStart) -> Result<Vec<Prepared>> {
    samples
        .par_iter()
        .map(|s| {
            Ok(Prepared {
                b: s.measurement.clone(),
                x0: warm.compute(op, &s.measurement)?,
                gt: s.ground_truth.clone(),
            })
        })
        .collect()
}

/// `max - min` over every ground-truth pixel; the PSNR peak of a split.
pub fn split_peak(samples: &[Prepared]) -> f64 {
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        let t = s.gt.as_tensor();
        (lo.min(t.min()), hi.max(t.max()))
    });
    hi - lo
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent on epochs without validation.
    pub val: Option<MetricsRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    /// Mean loss of every mini-batch, in order.
    pub batch_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: MetricsRow,
    pub steps: u64,
    /// Schedule constraint violations summed over every optimizer step.
    pub schedule_violations: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_rmse,val_psnr,val_ssim\n");
        for e in &self.log {
            match e.val {
                Some(m) => writeln!(s, "{},{},{},{},{}", e.epoch, e.train_loss, m.rmse, m.psnr, m.ssim),
                None => writeln!(s, "{},{},,,", e.epoch, e.train_loss),
            }
            .expect("writing to a string");
        }
        s
    }
}

fn checkpoint_meta(net: &FistaNet) -> CheckpointMeta {
    CheckpointMeta {
        config: net.config().clone(),
        weight_mode: net.weight_mode(),
    }
}

/// Loss and parameter gradients of one sample.
fn sample_gradient(net: &FistaNet, s: &Prepared, cfg: &TrainingConfig) -> Result<(f64, Vec<Tensor>)> {
    let opts = ForwardOptions {
        track_grad: true,
        transforms: true,
        schedule: None,
    };
    let mut pass = net.forward(&s.b, &s.x0, opts)?;
    let loss = total_loss(&mut pass, &s.gt, cfg.lambda1, cfg.lambda2)?;
    let value = pass.graph.value(loss).item();
    pass.graph.backward(loss)?;
    Ok((value, pass.param_grads()))
}

/// Mean loss and gradient of a mini-batch. Samples run in parallel; the
/// reduction follows sample order so the result is thread-count invariant.
fn batch_gradient(net: &FistaNet, batch: &[&Prepared], cfg: &TrainingConfig) -> Result<(f64, Vec<Tensor>)> {
    let per: Vec<(f64, Vec<Tensor>)> =
        batch.par_iter().map(|s| sample_gradient(net, s, cfg)).collect::<Result<_>>()?;
    let inv = 1.0 / batch.len() as f64;
    let mut iter = per.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(g) {
            for (a, v) in acc.as_mut_slice().iter_mut().zip(gi.as_slice()) {
                *a += v;
            }
        }
    }
    for g in &mut grads {
        for v in g.as_mut_slice() {
            *v *= inv;
        }
    }
    Ok((loss * inv, grads))
}

/// Trains `net` in place with Adam on mini-batches of `train_set`,
/// validating on `val_set`. The parameters with the best validation PSNR
/// are restored at the end and, with `out_dir`, written to `best.ckpt`
/// alongside `train_log.csv`.
pub fn train(
    net: &mut FistaNet,
    train_set: &[Prepared],
    val_set: &[Prepared],
    cfg: &TrainingConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    let peak = split_peak(val_set);
    if !(peak > 0.0) {
        return Err(invalid("validation ground truth is constant; PSNR peak undefined"));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let groups = (0..net.params().len()).map(|i| usize::from(!CONV_PARAMS.contains(&i))).collect();
    let mut adam = AdamState::new(net.params(), groups, vec![cfg.lr1, cfg.lr2])?;
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        log: Vec::with_capacity(cfg.epochs),
        batch_losses: Vec::new(),
        best_epoch: 0,
        best_val: MetricsRow::default(),
        steps: 0,
        schedule_violations: 0,
    };
    let mut best_params = net.params().to_vec();
    let mut best_psnr = f64::NEG_INFINITY;
    let n_layers = net.config().n_layers;

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Prepared> = chunk.iter().map(|i| &train_set[*i]).collect();
            let (loss, grads) = batch_gradient(net, &batch, cfg)?;
            if !loss.is_finite() || grads.iter().any(|g| g.as_slice().iter().any(|v| !v.is_finite())) {
                return Err(Error::NanLoss {
                    epoch,
                    batch: bi + 1,
                    loss,
                });
            }
            let grads: Vec<Option<Tensor>> = grads.into_iter().map(Some).collect();
            adam.step(net.params_mut(), &grads)?;
            net.project_schedule();
            report.schedule_violations += schedule_violations(&net.schedule().eval_all(n_layers));
            report.batch_losses.push(loss);
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let val = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let m = evaluate(net, val_set, peak)?;
            if m.psnr > best_psnr {
                best_psnr = m.psnr;
                best_params = net.params().to_vec();
                report.best_epoch = epoch;
                report.best_val = m;
            }
            Some(m)
        } else {
            None
        };
        if cfg.verbose {
            match val {
                Some(m) => eprintln!(
                    "epoch {epoch:>3}  loss {train_loss:.6e}  val rmse {:.5}  psnr {:.3}  ssim {:.4}",
                    m.rmse, m.psnr, m.ssim
                ),
                None => eprintln!("epoch {epoch:>3}  loss {train_loss:.6e}"),
            }
        }
        report.log.push(EpochLog {
            epoch,
            train_loss,
            val,
        });
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(dir.join(format!("epoch_{epoch}.ckpt")), net.params(), &checkpoint_meta(net))?;
            }
        }
    }

    for (p, b) in net.params_mut().iter_mut().zip(best_params) {
        *p = b;
    }
    report.steps = adam.steps();
    if let Some(dir) = out_dir {
        save_checkpoint(dir.join("best.ckpt"), net.params(), &checkpoint_meta(net))?;
        fs::write(dir.join("train_log.csv"), report.to_csv())?;
    }
    Ok(report)
}

/// Mean metrics of `recon` over a split, reduced in sample order.
pub fn evaluate_with<F>(samples: &[Prepared], peak: f64, recon: F) -> Result<MetricsRow>
where
    F: Fn(&Prepared) -> Result<Image2D> + Sync,
{
    if samples.is_empty() {
        return Err(invalid("cannot evaluate an empty split"));
    }
    let rows: Vec<MetricsRow> =
        samples.par_iter().map(|s| metrics(&recon(s)?, &s.gt, peak)).collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let sum = rows.iter().fold(MetricsRow::default(), |a, r| MetricsRow {
        rmse: a.rmse + r.rmse,
        psnr: a.psnr + r.psnr,
        ssim: a.ssim + r.ssim,
    });
    Ok(MetricsRow {
        rmse: sum.rmse / n,
        psnr: sum.psnr / n,
        ssim: sum.ssim / n,
    })
}

pub fn evaluate(net: &FistaNet, samples: &[Prepared], peak: f64) -> Result<MetricsRow> {
    evaluate_with(samples, peak, |s| net.reconstruct(&s.b, &s.x0).map(|(x, _)| x))
}

/// Mean per-layer RMSE of the network's intermediate images.
pub fn layer_rmse_trace(net: &FistaNet, samples: &[Prepared]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(invalid("cannot trace an empty split"));
    }
    let per: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let (_, layers) = net.reconstruct(&s.b, &s.x0)?;
            layers.iter().map(|x| rmse(x, &s.gt)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mut mean = vec![0.0; per[0].len()];
    for row in &per {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    Ok(mean.into_iter().map(|v| v / n).collect())
}

/// Rebuilds each sample's measurement as `A x_gt` plus fresh noise at the
/// given SNR, with a recomputed starting image. Sample `i` draws its noise
/// from a stream derived from `seed` and `i`.
pub fn renoise(
    op: &dyn LinearOperator,
    samples: &[Prepared],
    snr_db: f64,
    seed: u64,
    warm: WarmStart,
) -> Result<Vec<Prepared>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let clean = op.apply(s.gt.as_tensor())?;
            let b = add_noise_snr(&mut Rng::derive(seed, i as u64), &clean, snr_db)?;
            let x0 = warm.compute(op, &b)?;
            Ok(Prepared {
                b,
                x0,
                gt: s.gt.clone(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub metrics: MetricsRow,
}

/// Metrics of `recon` on the split re-noised at every SNR of the grid.
#[allow(clippy::too_many_arguments)]
pub fn noise_sweep<F>(
    op: &dyn LinearOperator,
    samples: &[Prepared],
    snrs: &[f64],
    seed: u64,
    warm: WarmStart,
    peak: f64,
    recon: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(&Prepared) -> Result<Image2D> + Sync,
{
    snrs.iter()
        .map(|&snr_db| {
            let noisy = renoise(op, samples, snr_db, seed, warm)?;
            Ok(SweepRow {
                snr_db,
                metrics: evaluate_with(&noisy, peak, &recon)?,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("snr_db,psnr,ssim,rmse\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.snr_db, r.metrics.psnr, r.metrics.ssim, r.metrics.rmse).expect("string");
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRow {
    pub n_layers: usize,
    pub val: MetricsRow,
}

/// Trains one fresh model per unroll depth and reports its best
/// validation metrics.
pub fn layer_study(
    op: &SharedOperator,
    w_tilde: Option<&Tensor>,
    base: &FistaNetConfig,
    train_set: &[Prepared],
    val_set: &[Prepared],
    cfg: &TrainingConfig,
    counts: &[usize],
) -> Result<Vec<LayerRow>> {
    counts
        .iter()
        .map(|&n_layers| {
            if n_layers == 0 {
                return Err(invalid("layer counts must be >= 1"));
            }
            let model_cfg = FistaNetConfig {
                n_layers,
                ..base.clone()
            };
            let mut net = FistaNet::new(op.clone(), w_tilde, model_cfg, &mut Rng::new(cfg.seed))?;
            let report = train(&mut net, train_set, val_set, cfg, None)?;
            Ok(LayerRow {
                n_layers,
                val: report.best_val,
            })
        })
        .collect()
}
