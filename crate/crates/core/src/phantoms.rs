//! Synthetic ground truth and measurement noise.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::tensor::{Image2D, Tensor};

/// Object counts used for training, validation and the first test set.
pub const TRAIN_OBJECT_COUNTS: [usize; 3] = [1, 2, 4];
/// Object count reserved for the generalization test set.
pub const GENERALIZATION_OBJECT_COUNT: usize = 3;

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CirclePhantomSpec {
    /// Allowed object counts; each phantom draws one uniformly.
    pub n_objects: Vec<usize>,
    /// Radius range as a fraction of the image side.
    pub radius_range: (f64, f64),
    /// Open interval of disc values (conductivity, S/m).
    pub value_range: (f64, f64),
    pub allow_overlap: bool,
}

impl Default for CirclePhantomSpec {
    fn default() -> Self {
        Self {
            n_objects: TRAIN_OBJECT_COUNTS.to_vec(),
            radius_range: (0.08, 0.18),
            value_range: (0.05, 0.5),
            allow_overlap: false,
        }
    }
}

impl CirclePhantomSpec {
    pub fn generalization() -> Self {
        Self {
            n_objects: vec![GENERALIZATION_OBJECT_COUNT],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_objects.is_empty() {
            return Err(invalid("circle phantom needs at least one allowed object count"));
        }
        let (rlo, rhi) = self.radius_range;
        if !(rlo > 0.0 && rhi >= rlo && rhi < 0.5) {
            return Err(invalid(format!("bad radius range {:?}", self.radius_range)));
        }
        let (vlo, vhi) = self.value_range;
        if !(vlo.is_finite() && vhi.is_finite() && vhi > vlo) {
            return Err(invalid(format!("bad value range {:?}", self.value_range)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Disc {
    cx: f64,
    cy: f64,
    r: f64,
}

/// Random non-overlapping (unless allowed) discs on a zero background,
/// all inside the inscribed sensing disc. Returns the image and the number
/// of objects drawn.
pub fn gen_circle_phantom(
    rng: &mut Rng,
    spec: &CirclePhantomSpec,
    size: usize,
) -> Result<(Image2D, usize)> {
    if size < 16 {
        return Err(invalid(format!("circle phantoms need size >= 16, got {size}")));
    }
    spec.validate()?;
    let count = spec.n_objects[rng.below(spec.n_objects.len())];
    let centre = (size as f64 - 1.0) / 2.0;
    // Keep every disc one pixel clear of the outermost pixel centres.
    let sensing = centre - 1.0;

    let mut discs: Vec<Disc> = Vec::with_capacity(count);
    let mut attempts = 0;
    while discs.len() < count {
        if attempts >= MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::PlacementFailure {
                objects: count,
                attempts,
            });
        }
        attempts += 1;
        let r = rng.uniform(spec.radius_range.0, spec.radius_range.1) * size as f64;
        let max_offset = sensing - r;
        if max_offset <= 0.0 {
            continue;
        }
        // Uniform over the disc of admissible centres.
        let rho = max_offset * rng.next_f64().sqrt();
        let phi = 2.0 * PI * rng.next_f64();
        let cand = Disc {
            cx: centre + rho * phi.cos(),
            cy: centre + rho * phi.sin(),
            r,
        };
        let clear = spec.allow_overlap
            || discs.iter().all(|d| {
                let dist = ((d.cx - cand.cx).powi(2) + (d.cy - cand.cy).powi(2)).sqrt();
                dist > d.r + cand.r + 1.0
            });
        if clear {
            discs.push(cand);
        }
    }

    let mut values = vec![0.0; size * size];
    for d in &discs {
        let value = rng.uniform_open(spec.value_range.0, spec.value_range.1);
        for i in 0..size {
            for j in 0..size {
                let dist2 = (j as f64 - d.cx).powi(2) + (i as f64 - d.cy).powi(2);
                if dist2 <= d.r * d.r {
                    values[i * size + j] = value;
                }
            }
        }
    }
    Ok((Image2D::from_vec(size, size, values)?, count))
}

/// Sum of random ellipses clipped to `[0, 1]`. The first ellipse is a large
/// low-contrast "body"; the rest are smaller inserts.
pub fn gen_ellipse_phantom(rng: &mut Rng, n_ellipses: usize, size: usize) -> Result<Image2D> {
    if size < 32 {
        return Err(invalid(format!("ellipse phantoms need size >= 32, got {size}")));
    }
    let s = size as f64;
    let centre = (s - 1.0) / 2.0;
    let mut values = vec![0.0; size * size];
    for e in 0..n_ellipses {
        let (a, b, cx, cy, value) = if e == 0 {
            (
                rng.uniform(0.30, 0.42) * s,
                rng.uniform(0.22, 0.36) * s,
                centre + rng.uniform(-0.04, 0.04) * s,
                centre + rng.uniform(-0.04, 0.04) * s,
                rng.uniform(0.2, 0.4),
            )
        } else {
            (
                rng.uniform(0.03, 0.14) * s,
                rng.uniform(0.03, 0.14) * s,
                centre + rng.uniform(-0.25, 0.25) * s,
                centre + rng.uniform(-0.25, 0.25) * s,
                rng.uniform(-0.15, 0.5),
            )
        };
        let phi = rng.uniform(0.0, PI);
        let (sn, cs) = phi.sin_cos();
        for i in 0..size {
            for j in 0..size {
                let dx = j as f64 - cx;
                let dy = i as f64 - cy;
                let u = (dx * cs + dy * sn) / a;
                let v = (-dx * sn + dy * cs) / b;
                if u * u + v * v <= 1.0 {
                    values[i * size + j] += value;
                }
            }
        }
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    Image2D::from_vec(size, size, values)
}

/// `b + e` with white Gaussian `e` scaled so that `10 log10(|b|^2 / |e|^2)`
/// equals `snr_db` exactly. An infinite SNR returns `b` unchanged.
pub fn add_noise_snr(rng: &mut Rng, b: &Tensor, snr_db: f64) -> Result<Tensor> {
    if snr_db == f64::INFINITY {
        return Ok(b.clone());
    }
    if !snr_db.is_finite() {
        return Err(invalid(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let signal = b.norm();
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let raw: Vec<f64> = (0..b.len()).map(|_| rng.normal()).collect();
    let raw = Tensor::from_vec(b.dims(), raw)?;
    let target = signal / 10f64.powf(snr_db / 20.0);
    let noise = raw.scale(target / raw.norm());
    b.add(&noise)
}

/// Realised SNR of `noisy` relative to `clean`, in dB.
pub fn realized_snr_db(clean: &Tensor, noisy: &Tensor) -> Result<f64> {
    let noise = noisy.sub(clean)?;
    Ok(10.0 * (clean.dot(clean)? / noise.dot(&noise)?).log10())
}
