//! Training pairs `(b, x_gt)` and their on-disk layout.
//!
//! A dataset directory holds `manifest.txt` plus one FTNS file per
//! measurement (`sample_<i>_b.ftns`) and per ground truth
//! (`sample_<i>_x.ftns`). The manifest starts with `count <n>` followed by
//! one line per sample:
//!
//! ```text
//! <i> sample_<i>_b.ftns sample_<i>_x.ftns n_objects=<k> snr_db=<v> seed=<s>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{format_err, invalid, Result};
use crate::ftns::{read_tensor, write_tensor};
use crate::operators::LinearOperator;
use crate::phantoms::{add_noise_snr, gen_circle_phantom, gen_ellipse_phantom, CirclePhantomSpec};
use crate::rng::Rng;
use crate::tensor::{Image2D, Tensor};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct SampleMeta {
    pub n_objects: usize,
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSample {
    pub measurement: Tensor,
    pub ground_truth: Image2D,
    pub meta: SampleMeta,
}

#[derive(Clone, Debug)]
pub enum PhantomSource {
    Circles(CirclePhantomSpec),
    /// Ellipse count drawn uniformly from the inclusive range.
    Ellipses { min: usize, max: usize },
}

impl PhantomSource {
    fn generate(&self, rng: &mut Rng, size: usize) -> Result<(Image2D, usize)> {
        match self {
            PhantomSource::Circles(spec) => gen_circle_phantom(rng, spec, size),
            PhantomSource::Ellipses { min, max } => {
                let n = min + rng.below(max - min + 1);
                Ok((gen_ellipse_phantom(rng, n, size)?, n))
            }
        }
    }
}

/// Generates `n_samples` independent pairs. Sample `i` draws from its own
/// stream derived from a master seed taken from `rng`, so the result does
/// not depend on evaluation order.
pub fn build_dataset(
    rng: &mut Rng,
    op: &dyn LinearOperator,
    source: &PhantomSource,
    n_samples: usize,
    snr_db: f64,
) -> Result<Vec<DatasetSample>> {
    if n_samples == 0 {
        return Err(invalid("dataset needs at least one sample"));
    }
    let size = match op.in_dims() {
        [h, w] if h == w => *h,
        d => return Err(invalid(format!("operator input {d:?} is not a square image"))),
    };
    if let PhantomSource::Ellipses { min, max } = source {
        if min > max {
            return Err(invalid("ellipse count range is empty"));
        }
    }
    let master = rng.next_u64();
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let seed = Rng::derive_seed(master, i as u64);
            let mut srng = Rng::new(seed);
            let (x, n_objects) = source.generate(&mut srng, size)?;
            let clean = op.apply(x.as_tensor())?;
            let measurement = add_noise_snr(&mut srng, &clean, snr_db)?;
            Ok(DatasetSample {
                measurement,
                ground_truth: x,
                meta: SampleMeta {
                    n_objects,
                    snr_db,
                    seed,
                },
            })
        })
        .collect()
}

fn b_name(i: usize) -> String {
    format!("sample_{i}_b.ftns")
}

fn x_name(i: usize) -> String {
    format!("sample_{i}_x.ftns")
}

pub fn save_dataset(dir: impl AsRef<Path>, samples: &[DatasetSample]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = format!("count {}\n", samples.len());
    for (i, s) in samples.iter().enumerate() {
        write_tensor(dir.join(b_name(i)), &s.measurement)?;
        write_tensor(dir.join(x_name(i)), s.ground_truth.as_tensor())?;
        writeln!(
            manifest,
            "{i} {} {} n_objects={} snr_db={} seed={}",
            b_name(i),
            x_name(i),
            s.meta.n_objects,
            s.meta.snr_db,
            s.meta.seed
        )
        .unwrap();
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

fn field<'a>(tok: Option<&'a str>, key: &str, line: &str) -> Result<&'a str> {
    tok.and_then(|t| t.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
        .ok_or_else(|| format_err(format!("manifest line `{line}` lacks `{key}=`")))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<DatasetSample>> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        format_err(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("count "))
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| format_err("manifest must start with `count <n>`"))?;

    let mut samples = Vec::with_capacity(count);
    for (expected, line) in lines.enumerate() {
        let mut tok = line.split_whitespace();
        let idx: usize = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format_err(format!("bad manifest line `{line}`")))?;
        if idx != expected {
            return Err(format_err(format!("manifest index {idx}, expected {expected}")));
        }
        let b_file = tok.next().ok_or_else(|| format_err("missing measurement file"))?;
        let x_file = tok.next().ok_or_else(|| format_err("missing ground-truth file"))?;
        let n_objects = field(tok.next(), "n_objects", line)?
            .parse()
            .map_err(|_| format_err("bad n_objects"))?;
        let snr_db = field(tok.next(), "snr_db", line)?
            .parse()
            .map_err(|_| format_err("bad snr_db"))?;
        let seed = field(tok.next(), "seed", line)?
            .parse()
            .map_err(|_| format_err("bad seed"))?;
        samples.push(DatasetSample {
            measurement: read_tensor(dir.join(b_file))?,
            ground_truth: Image2D::from_tensor(read_tensor(dir.join(x_file))?)?,
            meta: SampleMeta {
                n_objects,
                snr_db,
                seed,
            },
        });
    }
    if samples.len() != count {
        return Err(format_err(format!(
            "manifest declares {count} samples but lists {}",
            samples.len()
        )));
    }
    Ok(samples)
}

/// `max - min` over every ground-truth pixel of a split.
pub fn dynamic_range(samples: &[DatasetSample]) -> f64 {
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        let t = s.ground_truth.as_tensor();
        (lo.min(t.min()), hi.max(t.max()))
    });
    hi - lo
}
