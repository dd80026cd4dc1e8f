//! Parallel-beam Radon transform, its exact adjoint, and filtered back
//! projection.
//!
//! Projection is pixel driven: each pixel centre is projected onto the
//! detector axis and its value split between the two nearest bins with
//! linear interpolation weights. The adjoint reuses the very same weights.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{format_err, invalid, Result};
use crate::operators::LinearOperator;
use crate::tensor::{Image2D, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct RadonGeometry {
    pub image_size: usize,
    pub n_views: usize,
    pub n_detectors: usize,
    /// Bin width in pixel units.
    pub detector_spacing: f64,
}

impl RadonGeometry {
    /// Geometry with unit detector spacing and the minimal detector count
    /// covering the image diagonal.
    pub fn new(image_size: usize, n_views: usize) -> Result<Self> {
        let n_detectors = min_detectors(image_size, 1.0);
        Self::with_detectors(image_size, n_views, n_detectors, 1.0)
    }

    pub fn with_detectors(
        image_size: usize,
        n_views: usize,
        n_detectors: usize,
        detector_spacing: f64,
    ) -> Result<Self> {
        let g = Self {
            image_size,
            n_views,
            n_detectors,
            detector_spacing,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 1 {
            return Err(invalid("radon image_size must be at least 1"));
        }
        if self.n_views < 1 {
            return Err(invalid("radon geometry needs at least one view"));
        }
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(invalid("detector spacing must be positive"));
        }
        let need = min_detectors(self.image_size, self.detector_spacing);
        if self.n_detectors < need {
            return Err(invalid(format!(
                "{} detectors do not cover a {}-pixel image (need {need})",
                self.n_detectors, self.image_size
            )));
        }
        Ok(())
    }

    /// View angles, evenly spaced over `[0, pi)`.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_views)
            .map(|v| PI * v as f64 / self.n_views as f64)
            .collect()
    }

    pub fn sinogram_dims(&self) -> [usize; 2] {
        [self.n_views, self.n_detectors]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "image_size={}", self.image_size).unwrap();
        writeln!(s, "n_views={}", self.n_views).unwrap();
        writeln!(s, "n_detectors={}", self.n_detectors).unwrap();
        writeln!(s, "detector_spacing={}", self.detector_spacing).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut size = None;
        let mut views = None;
        let mut dets = None;
        let mut spacing = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(format!("bad geometry line `{line}`")))?;
            let v = v.trim();
            let bad = || format_err(format!("bad value for {k}: `{v}`"));
            match k.trim() {
                "image_size" => size = Some(v.parse::<usize>().map_err(|_| bad())?),
                "n_views" => views = Some(v.parse::<usize>().map_err(|_| bad())?),
                "n_detectors" => dets = Some(v.parse::<usize>().map_err(|_| bad())?),
                "detector_spacing" => spacing = Some(v.parse::<f64>().map_err(|_| bad())?),
                other => return Err(format_err(format!("unknown geometry key `{other}`"))),
            }
        }
        let missing = |k: &str| format_err(format!("geometry is missing `{k}`"));
        Self::with_detectors(
            size.ok_or_else(|| missing("image_size"))?,
            views.ok_or_else(|| missing("n_views"))?,
            dets.ok_or_else(|| missing("n_detectors"))?,
            spacing.ok_or_else(|| missing("detector_spacing"))?,
        )
    }
}

/// Smallest detector count whose span covers every pixel centre at every angle.
fn min_detectors(image_size: usize, spacing: f64) -> usize {
    let by_diag = (image_size as f64 * std::f64::consts::SQRT_2 / spacing).ceil() as usize;
    let by_centres = ((image_size as f64 - 1.0) * std::f64::consts::SQRT_2 / spacing).ceil() as usize + 1;
    by_diag.max(by_centres)
}

#[derive(Clone, Debug)]
pub struct Sinogram {
    pub geometry: RadonGeometry,
    pub values: Tensor,
}

impl Sinogram {
    pub fn new(geometry: RadonGeometry, values: Tensor) -> Result<Self> {
        values.ensure_shape(&geometry.sinogram_dims())?;
        Ok(Self { geometry, values })
    }
}

/// The Radon transform as a [`LinearOperator`] from `[n, n]` images to
/// `[n_views, n_detectors]` sinograms.
#[derive(Clone, Debug)]
pub struct RadonOperator {
    geometry: RadonGeometry,
    trig: Vec<(f64, f64)>,
    in_dims: [usize; 2],
    out_dims: [usize; 2],
}

impl RadonOperator {
    pub fn new(geometry: RadonGeometry) -> Result<Self> {
        geometry.validate()?;
        let trig = geometry.angles().iter().map(|a| (a.cos(), a.sin())).collect();
        let n = geometry.image_size;
        Ok(Self {
            in_dims: [n, n],
            out_dims: geometry.sinogram_dims(),
            geometry,
            trig,
        })
    }

    pub fn geometry(&self) -> &RadonGeometry {
        &self.geometry
    }

    /// Detector bin and interpolation fraction of pixel `(i, j)` in a view.
    /// The pixel feeds bin `k` with weight `(1 - frac) / spacing` and bin
    /// `k + 1` with weight `frac / spacing`.
    #[inline(always)]
    fn footprint(&self, (cos, sin): (f64, f64), i: usize, j: usize) -> (isize, f64) {
        let g = &self.geometry;
        let c = (g.image_size as f64 - 1.0) * 0.5;
        let x = j as f64 - c;
        let y = c - i as f64;
        let u = (x * cos + y * sin) / g.detector_spacing + (g.n_detectors as f64 - 1.0) * 0.5;
        let k = u.floor();
        (k as isize, u - k)
    }

    /// Applies `f(bin, weight)` over the (at most two) bins fed by pixel `(i, j)`.
    #[inline(always)]
    fn for_each_weight(&self, cs: (f64, f64), i: usize, j: usize, mut f: impl FnMut(usize, f64)) {
        let (k, frac) = self.footprint(cs, i, j);
        let nd = self.geometry.n_detectors as isize;
        let inv = 1.0 / self.geometry.detector_spacing;
        if k >= 0 && k < nd {
            f(k as usize, (1.0 - frac) * inv);
        }
        if k + 1 >= 0 && k + 1 < nd {
            f((k + 1) as usize, frac * inv);
        }
    }
}

impl LinearOperator for RadonOperator {
    fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.geometry.image_size;
        let nd = self.geometry.n_detectors;
        out.fill(0.0);
        for (v, &cs) in self.trig.iter().enumerate() {
            let row = &mut out[v * nd..(v + 1) * nd];
            for i in 0..n {
                for j in 0..n {
                    let p = x[i * n + j];
                    if p == 0.0 {
                        continue;
                    }
                    self.for_each_weight(cs, i, j, |bin, w| row[bin] += w * p);
                }
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let n = self.geometry.image_size;
        let nd = self.geometry.n_detectors;
        out.fill(0.0);
        for (v, &cs) in self.trig.iter().enumerate() {
            let row = &y[v * nd..(v + 1) * nd];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    self.for_each_weight(cs, i, j, |bin, w| acc += w * row[bin]);
                    out[i * n + j] += acc;
                }
            }
        }
    }
}

pub fn radon_apply(geometry: &RadonGeometry, x: &Image2D) -> Result<Sinogram> {
    let op = RadonOperator::new(geometry.clone())?;
    let values = op.apply(x.as_tensor())?;
    Sinogram::new(geometry.clone(), values)
}

pub fn radon_adjoint(geometry: &RadonGeometry, s: &Sinogram) -> Result<Image2D> {
    s.values.ensure_shape(&geometry.sinogram_dims())?;
    let op = RadonOperator::new(geometry.clone())?;
    Image2D::from_tensor(op.adjoint(&s.values)?)
}

/// Frequency response of the Ram-Lak ramp, built from its band-limited
/// spatial kernel `h[0] = 1/4`, `h[odd n] = -1/(pi n)^2`, scaled by 2.
fn ramp_response(len: usize) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for n in (1..len / 2).step_by(2) {
        let v = -1.0 / (PI * n as f64).powi(2);
        kernel[n].re = v;
        kernel[len - n].re = v;
    }
    if (len / 2) % 2 == 1 {
        kernel[len / 2].re = -1.0 / (PI * (len / 2) as f64).powi(2);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut kernel);
    kernel.iter().map(|c| 2.0 * c.re).collect()
}

/// Ramp-filtered backprojection scaled by `pi / (2 n_views)`.
pub fn fbp_reconstruct(geometry: &RadonGeometry, s: &Sinogram) -> Result<Image2D> {
    if geometry.n_views < 2 {
        return Err(invalid("filtered back projection needs at least two views"));
    }
    s.values.ensure_shape(&geometry.sinogram_dims())?;
    let nd = geometry.n_detectors;
    let padded = (2 * nd).next_power_of_two();
    let response = ramp_response(padded);

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(padded);
    let inv = planner.plan_fft_inverse(padded);
    let mut filtered = vec![0.0; geometry.n_views * nd];
    let mut buf = vec![Complex::new(0.0, 0.0); padded];
    for (v, row) in s.values.as_slice().chunks_exact(nd).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &p) in buf.iter_mut().zip(row) {
            b.re = p;
        }
        fwd.process(&mut buf);
        for (b, &r) in buf.iter_mut().zip(&response) {
            *b *= r;
        }
        inv.process(&mut buf);
        let out = &mut filtered[v * nd..(v + 1) * nd];
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re / padded as f64;
        }
    }

    let op = RadonOperator::new(geometry.clone())?;
    let mut img = vec![0.0; op.in_len()];
    op.adjoint_into(&filtered, &mut img);
    // The adjoint carries a 1/spacing factor that the continuous filter
    // convolution integral (dt = spacing) cancels.
    let scale = PI / (2.0 * geometry.n_views as f64);
    img.iter_mut().for_each(|v| *v *= scale);
    Image2D::from_vec(geometry.image_size, geometry.image_size, img)
}
