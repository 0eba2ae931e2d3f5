//! Peak descriptions and their rendering into continuous spectra.
//!
//! A class is a short list of discrete `(position, intensity)` peaks. A
//! spectrum is produced by placing a Gaussian of standard deviation `width`
//! (in datapoints) at every peak and summing them on the integer grid
//! `0..n_datapoints`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::uniform;

/// Upper bound on a varied peak intensity: ideal height 1.0 plus the largest
/// allowed relative change.
pub const MAX_VARIED_INTENSITY: f64 = 1.05;

/// Distance, in widths, beyond which `exp(-d^2 / 2w^2)` underflows to exactly
/// zero in `f64`. Skipping those grid points leaves every sum bit-identical
/// to evaluating the whole vector.
const UNDERFLOW_SIGMAS: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: f64,
    pub intensity: f64,
}

impl Peak {
    pub fn new(position: f64, intensity: f64) -> Self {
        Peak {
            position,
            intensity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassFingerprint {
    pub class_id: u32,
    /// Sorted ascending by position.
    pub peaks: Vec<Peak>,
}

impl ClassFingerprint {
    pub fn new(class_id: u32, mut peaks: Vec<Peak>) -> Self {
        sort_peaks(&mut peaks);
        ClassFingerprint { class_id, peaks }
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.peaks.iter().map(|p| p.position)
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.peaks.iter().map(|p| p.intensity)
    }

    /// Checks the invariants of an ideal (unvaried) fingerprint.
    pub fn check_ideal(
        &self,
        n_datapoints: usize,
        border_margin: f64,
        peak_range: (usize, usize),
    ) -> Result<()> {
        let id = self.class_id;
        let count = self.peaks.len();
        if count < peak_range.0 || count > peak_range.1 {
            return Err(Error::Validation(format!(
                "class {id}: {count} peaks outside [{}, {}]",
                peak_range.0, peak_range.1
            )));
        }
        let hi = n_datapoints as f64 - border_margin - 1.0;
        for p in &self.peaks {
            if !(p.position >= border_margin && p.position <= hi) {
                return Err(Error::Validation(format!(
                    "class {id}: peak at {} outside border margin [{border_margin}, {hi}]",
                    p.position
                )));
            }
            if !(p.intensity > 0.0 && p.intensity <= 1.0) {
                return Err(Error::Validation(format!(
                    "class {id}: peak intensity {} outside (0, 1]",
                    p.intensity
                )));
            }
        }
        if self.peaks.windows(2).any(|w| w[0].position > w[1].position) {
            return Err(Error::Validation(format!(
                "class {id}: peaks not sorted by position"
            )));
        }
        if count > 0 && !self.peaks.iter().any(|p| p.intensity == 1.0) {
            return Err(Error::Validation(format!(
                "class {id}: tallest peak is not normalized to 1.0"
            )));
        }
        Ok(())
    }
}

fn sort_peaks(peaks: &mut [Peak]) {
    peaks.sort_by(|a, b| a.position.total_cmp(&b.position));
}

/// How the per-peak intensity change of a training variant is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityMode {
    /// `intensity * (1 + u)`
    #[default]
    Multiplicative,
    /// `intensity + u`
    Additive,
}

/// Magnitudes of the random variations applied to training samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationConfig {
    pub max_shift: f64,
    pub max_intensity_delta: f64,
    /// Inclusive range of Gaussian widths (standard deviations).
    pub width_range: (f64, f64),
    #[serde(default)]
    pub intensity_mode: IntensityMode,
}

impl VariationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_shift >= 0.0 && self.max_shift.is_finite()) {
            return Err(Error::Parameter(format!(
                "max_shift must be >= 0, got {}",
                self.max_shift
            )));
        }
        if !(0.0..1.0).contains(&self.max_intensity_delta) {
            return Err(Error::Parameter(format!(
                "max_intensity_delta must be in [0, 1), got {}",
                self.max_intensity_delta
            )));
        }
        let (lo, hi) = self.width_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Parameter(format!(
                "width_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// The deterministic 3x3 grid of alterations used for test samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestGridConfig {
    pub grid_shift: f64,
    pub grid_intensity_delta: f64,
    pub test_width: f64,
}

impl TestGridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_shift >= 0.0 && self.grid_shift.is_finite()) {
            return Err(Error::Parameter(format!(
                "grid_shift must be >= 0, got {}",
                self.grid_shift
            )));
        }
        if !(0.0..1.0).contains(&self.grid_intensity_delta) {
            return Err(Error::Parameter(format!(
                "grid_intensity_delta must be in [0, 1), got {}",
                self.grid_intensity_delta
            )));
        }
        if !(self.test_width > 0.0 && self.test_width.is_finite()) {
            return Err(Error::Parameter(format!(
                "test_width must be > 0, got {}",
                self.test_width
            )));
        }
        Ok(())
    }

    /// Test alterations must be strictly weaker than training variations.
    pub fn validate_against(&self, training: &VariationConfig) -> Result<()> {
        self.validate()?;
        if self.grid_shift >= training.max_shift && training.max_shift > 0.0 {
            return Err(Error::Parameter(format!(
                "grid_shift {} must be smaller than training max_shift {}",
                self.grid_shift, training.max_shift
            )));
        }
        if self.grid_intensity_delta >= training.max_intensity_delta
            && training.max_intensity_delta > 0.0
        {
            return Err(Error::Parameter(format!(
                "grid_intensity_delta {} must be smaller than training max_intensity_delta {}",
                self.grid_intensity_delta, training.max_intensity_delta
            )));
        }
        Ok(())
    }
}

/// One rendered sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub label: u32,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Sums one Gaussian per peak on the grid `0..n_datapoints`.
///
/// With `normalize`, the result is divided by its maximum so the tallest
/// point is exactly 1.0. An empty fingerprint yields zeros and is never
/// normalized.
pub fn render_spectrum(
    fingerprint: &ClassFingerprint,
    width: f64,
    n_datapoints: usize,
    normalize: bool,
) -> Result<Spectrum> {
    let mut values = vec![0.0; n_datapoints];
    render_into(fingerprint, width, &mut values)?;
    if normalize {
        normalize_max(&mut values);
    }
    Ok(Spectrum {
        values,
        label: fingerprint.class_id,
    })
}

/// Accumulates the Gaussians of `fingerprint` into `out` (not cleared).
pub fn render_into(fingerprint: &ClassFingerprint, width: f64, out: &mut [f64]) -> Result<()> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Parameter(format!("width must be > 0, got {width}")));
    }
    let n = out.len();
    for p in &fingerprint.peaks {
        if !(p.position >= 0.0 && p.position < n as f64) {
            return Err(Error::Domain(format!(
                "class {}: peak position {} outside [0, {n})",
                fingerprint.class_id, p.position
            )));
        }
    }
    let two_w2 = 2.0 * width * width;
    let reach = UNDERFLOW_SIGMAS * width;
    for p in &fingerprint.peaks {
        let lo = (p.position - reach).ceil().max(0.0) as usize;
        let hi = ((p.position + reach).floor() as usize).min(n - 1);
        for (x, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = x as f64 - p.position;
            *slot += p.intensity * (-(d * d) / two_w2).exp();
        }
    }
    Ok(())
}

/// Divides by the maximum; leaves all-zero vectors untouched.
pub fn normalize_max(values: &mut [f64]) {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in values.iter_mut() {
            *v /= max;
        }
    }
}

/// Draws one randomly varied copy of `fingerprint` and its Gaussian width.
///
/// Draw order is fixed: for every peak a shift then an intensity change,
/// then a single width shared by the whole sample.
pub fn sample_training_variant<R: Rng + ?Sized>(
    fingerprint: &ClassFingerprint,
    var: &VariationConfig,
    n_datapoints: usize,
    rng: &mut R,
) -> Result<(ClassFingerprint, f64)> {
    var.validate()?;
    let mut peaks = Vec::with_capacity(fingerprint.peaks.len());
    for p in &fingerprint.peaks {
        let shift = uniform(rng, -var.max_shift, var.max_shift);
        let delta = uniform(rng, -var.max_intensity_delta, var.max_intensity_delta);
        let position = p.position + shift;
        if !(position >= 0.0 && position < n_datapoints as f64) {
            return Err(Error::Domain(format!(
                "class {}: shifted peak {} left [0, {n_datapoints})",
                fingerprint.class_id, position
            )));
        }
        let intensity = match var.intensity_mode {
            IntensityMode::Multiplicative => p.intensity * (1.0 + delta),
            IntensityMode::Additive => p.intensity + delta,
        };
        peaks.push(Peak::new(position, intensity));
    }
    let (lo, hi) = var.width_range;
    let width = if lo == hi { lo } else { uniform(rng, lo, hi) };
    Ok((ClassFingerprint::new(fingerprint.class_id, peaks), width))
}

/// Index of the unaltered variant within [`build_test_grid`]'s output.
pub const IDEAL_GRID_INDEX: usize = 4;

/// The 3x3 grid of global shifts `{-s, 0, +s}` (outer) and global intensity
/// scales `{1-d, 1, 1+d}` (inner). Every variant uses `test_width`.
pub fn build_test_grid(
    fingerprint: &ClassFingerprint,
    grid: &TestGridConfig,
) -> Result<Vec<(ClassFingerprint, f64)>> {
    grid.validate()?;
    let shifts = [-grid.grid_shift, 0.0, grid.grid_shift];
    let d = grid.grid_intensity_delta;
    let scales = [1.0 - d, 1.0, 1.0 + d];
    let mut out = Vec::with_capacity(9);
    for &shift in &shifts {
        for &scale in &scales {
            let peaks = fingerprint
                .peaks
                .iter()
                .map(|p| Peak::new(p.position + shift, p.intensity * scale))
                .collect();
            out.push((
                ClassFingerprint {
                    class_id: fingerprint.class_id,
                    peaks,
                },
                grid.test_width,
            ));
        }
    }
    Ok(out)
}
