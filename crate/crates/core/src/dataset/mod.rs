//! Class sampling, dataset assembly and persistence.

mod config_io;
pub mod npy;

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::oracle::Oracle;
use crate::error::{Error, Result};
use crate::rng::{permutation, tags, uniform, StreamKey};
use crate::spectra::{
    build_test_grid, normalize_max, render_into, sample_training_variant, ClassFingerprint,
    IntensityMode, Peak, TestGridConfig, VariationConfig,
};

pub use config_io::{
    from_json, load_config, load_config_with_warnings, save_config, to_json, SCHEMA_VERSION,
};

/// Consecutive failed attempts at placing peaks before giving up on a class.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Resamples allowed per class when it fails the separability check.
pub const MAX_SEPARABILITY_RETRIES: u32 = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_datapoints: usize,
    pub n_classes: usize,
    pub min_peaks: usize,
    pub max_peaks: usize,
    pub border_margin: f64,
    pub min_peak_separation: f64,
    pub intensity_floor: f64,
    pub train_samples_per_class: usize,
    /// Share of the per-class training samples held out for validation.
    pub val_fraction: f64,
    pub training_variation: VariationConfig,
    pub test_grid: TestGridConfig,
    pub master_seed: u64,
}

impl GenerationConfig {
    /// 500 classes of 5000 datapoints with 2-10 peaks each.
    pub fn paper500(master_seed: u64) -> Self {
        GenerationConfig {
            n_datapoints: 5000,
            n_classes: 500,
            min_peaks: 2,
            max_peaks: 10,
            border_margin: 100.0,
            min_peak_separation: 10.0,
            intensity_floor: 0.05,
            train_samples_per_class: 60,
            val_fraction: 1.0 / 6.0,
            training_variation: VariationConfig {
                max_shift: 50.0,
                max_intensity_delta: 0.05,
                width_range: (2.0, 5.0),
                intensity_mode: IntensityMode::Multiplicative,
            },
            test_grid: TestGridConfig {
                grid_shift: 25.0,
                grid_intensity_delta: 0.02,
                test_width: 2.0,
            },
            master_seed,
        }
    }

    /// Laptop-sized variant: 50 classes of 1000 datapoints, shifts scaled
    /// down by the datapoint ratio.
    pub fn desk(master_seed: u64) -> Self {
        GenerationConfig {
            n_datapoints: 1000,
            n_classes: 50,
            min_peaks: 2,
            max_peaks: 6,
            border_margin: 20.0,
            training_variation: VariationConfig {
                max_shift: 10.0,
                max_intensity_delta: 0.05,
                width_range: (2.0, 5.0),
                intensity_mode: IntensityMode::Multiplicative,
            },
            test_grid: TestGridConfig {
                grid_shift: 5.0,
                grid_intensity_delta: 0.02,
                test_width: 2.0,
            },
            ..Self::paper500(master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.min_peaks < 1 || self.max_peaks < self.min_peaks {
            return bad(format!(
                "peak range [{}, {}] must satisfy 1 <= min <= max",
                self.min_peaks, self.max_peaks
            ));
        }
        if self.n_classes == 0 {
            return bad("n_classes must be at least 1".into());
        }
        if !(self.border_margin >= 0.0) {
            return bad(format!("border_margin must be >= 0, got {}", self.border_margin));
        }
        if (self.n_datapoints as f64) <= 2.0 * self.border_margin + 1.0 {
            return bad(format!(
                "n_datapoints {} leaves no room inside border_margin {}",
                self.n_datapoints, self.border_margin
            ));
        }
        if self.border_margin < self.training_variation.max_shift {
            return bad(format!(
                "border_margin {} is smaller than training max_shift {}; shifted peaks could leave the spectrum",
                self.border_margin, self.training_variation.max_shift
            ));
        }
        if !(self.min_peak_separation >= 0.0) {
            return bad(format!(
                "min_peak_separation must be >= 0, got {}",
                self.min_peak_separation
            ));
        }
        if !(self.intensity_floor > 0.0 && self.intensity_floor <= 1.0) {
            return bad(format!(
                "intensity_floor must be in (0, 1], got {}",
                self.intensity_floor
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if self.train_samples_per_class == 0 {
            return bad("train_samples_per_class must be at least 1".into());
        }
        self.training_variation
            .validate()
            .map_err(|e| Error::Config(format!("training_variation: {e}")))?;
        self.test_grid
            .validate_against(&self.training_variation)
            .map_err(|e| Error::Config(format!("test_grid: {e}")))?;
        Ok(())
    }

    /// Validation samples per class.
    pub fn val_samples_per_class(&self) -> usize {
        (self.train_samples_per_class as f64 * self.val_fraction).round() as usize
    }

    fn peak_bounds(&self) -> (f64, f64) {
        (
            self.border_margin,
            self.n_datapoints as f64 - self.border_margin - 1.0,
        )
    }

    fn key(&self) -> StreamKey {
        StreamKey::root(self.master_seed)
    }
}

/// Generation recipe plus one fingerprint per class.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub generation: GenerationConfig,
    /// Indexed by class id.
    pub fingerprints: Vec<ClassFingerprint>,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.generation;
        g.validate()?;
        if self.fingerprints.len() != g.n_classes {
            return Err(Error::Validation(format!(
                "{} fingerprints for {} classes",
                self.fingerprints.len(),
                g.n_classes
            )));
        }
        for (i, fp) in self.fingerprints.iter().enumerate() {
            if fp.class_id as usize != i {
                return Err(Error::Validation(format!(
                    "fingerprint at index {i} carries class id {}",
                    fp.class_id
                )));
            }
            fp.check_ideal(
                g.n_datapoints,
                g.border_margin,
                (g.min_peaks, g.max_peaks),
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    /// File-name stem used when persisting the split.
    pub fn stem(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

/// Row-major `n_samples x n_datapoints` matrix with aligned labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub role: Split,
    pub n_datapoints: usize,
    pub spectra: Vec<f32>,
    pub labels: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(role: Split, n_datapoints: usize, spectra: Vec<f32>, labels: Vec<i64>) -> Result<Self> {
        if n_datapoints == 0 && !spectra.is_empty() {
            return Err(Error::Shape("spectra present with zero datapoints".into()));
        }
        if n_datapoints > 0 && spectra.len() != labels.len() * n_datapoints {
            return Err(Error::Shape(format!(
                "{} values do not form {} rows of {n_datapoints}",
                spectra.len(),
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            role,
            n_datapoints,
            spectra,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.spectra[i * self.n_datapoints..(i + 1) * self.n_datapoints]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.spectra.chunks_exact(self.n_datapoints.max(1))
    }

    /// Number of distinct labels, assuming ids are dense from zero.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    pub fn save(&self, x_path: &Path, y_path: &Path) -> Result<()> {
        npy::save_arrays(self, x_path, y_path)
    }

    pub fn load(role: Split, x_path: &Path, y_path: &Path) -> Result<Self> {
        npy::load_arrays(role, x_path, y_path)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetSplits {
    pub fn get(&self, split: Split) -> &LabeledDataset {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn paths(dir: &Path, split: Split) -> (std::path::PathBuf, std::path::PathBuf) {
        (
            dir.join(format!("{}_x.npy", split.stem())),
            dir.join(format!("{}_y.npy", split.stem())),
        )
    }

    /// Writes `{train,val,test}_{x,y}.npy` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        for split in Split::ALL {
            let (x, y) = Self::paths(dir, split);
            self.get(split).save(&x, &y)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let load = |split| {
            let (x, y) = Self::paths(dir, split);
            LabeledDataset::load(split, &x, &y)
        };
        Ok(DatasetSplits {
            train: load(Split::Train)?,
            validation: load(Split::Validation)?,
            test: load(Split::Test)?,
        })
    }
}

/// Draws one ideal fingerprint.
///
/// The peak count is uniform on `min_peaks..=max_peaks`; positions are
/// uniform inside the border margin and redrawn until every gap is at least
/// `min_peak_separation`; intensities are uniform in `[intensity_floor, 1)`
/// and rescaled so the tallest is exactly 1.0.
pub fn generate_class_fingerprint<R: Rng + ?Sized>(
    cfg: &GenerationConfig,
    class_id: u32,
    rng: &mut R,
) -> Result<ClassFingerprint> {
    let count = rng.random_range(cfg.min_peaks..=cfg.max_peaks);
    let (lo, hi) = cfg.peak_bounds();
    let mut positions = Vec::with_capacity(count);
    let mut placed = false;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        positions.clear();
        positions.extend((0..count).map(|_| uniform(rng, lo, hi)));
        positions.sort_by(f64::total_cmp);
        if positions
            .windows(2)
            .all(|w| w[1] - w[0] >= cfg.min_peak_separation)
        {
            placed = true;
            break;
        }
    }
    if !placed {
        return Err(Error::Config(format!(
            "class {class_id}: could not place {count} peaks at least {} datapoints apart within [{lo}, {hi}] after {MAX_PLACEMENT_ATTEMPTS} attempts; reduce max_peaks or min_peak_separation",
            cfg.min_peak_separation
        )));
    }
    let mut intensities: Vec<f64> = (0..count)
        .map(|_| uniform(rng, cfg.intensity_floor, 1.0))
        .collect();
    let max = intensities.iter().copied().fold(0.0, f64::max);
    for v in &mut intensities {
        *v /= max;
    }
    let peaks = positions
        .into_iter()
        .zip(intensities)
        .map(|(p, i)| Peak::new(p, i))
        .collect();
    Ok(ClassFingerprint::new(class_id, peaks))
}

fn fingerprint_key(cfg: &GenerationConfig, class_id: u32, retry: u32) -> StreamKey {
    cfg.key()
        .child(tags::FINGERPRINT)
        .child(class_id as u64)
        .child(retry as u64)
}

fn class_fingerprint_attempt(
    cfg: &GenerationConfig,
    class_id: u32,
    retry: u32,
) -> Result<ClassFingerprint> {
    let mut rng = fingerprint_key(cfg, class_id, retry).stream();
    generate_class_fingerprint(cfg, class_id, &mut rng)
}

/// Samples every class from its own child stream, then resamples classes
/// that fail [`validate_separability`] until none do.
pub fn generate_dataset_config(cfg: &GenerationConfig) -> Result<DatasetConfig> {
    cfg.validate()?;
    let fingerprints = (0..cfg.n_classes as u32)
        .into_par_iter()
        .map(|c| class_fingerprint_attempt(cfg, c, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut config = DatasetConfig {
        generation: cfg.clone(),
        fingerprints,
    };
    let mut retries = vec![0u32; cfg.n_classes];
    loop {
        let violations = validate_separability(&config)?;
        if violations.is_empty() {
            return Ok(config);
        }
        let bad: BTreeSet<u32> = violations.iter().map(|v| v.class_id).collect();
        log::debug!("resampling {} inseparable classes", bad.len());
        for &c in &bad {
            let r = &mut retries[c as usize];
            *r += 1;
            if *r > MAX_SEPARABILITY_RETRIES {
                return Err(Error::Config(format!(
                    "class {c} is still not separable after {MAX_SEPARABILITY_RETRIES} resamples; use fewer classes or smaller test-grid variations"
                )));
            }
        }
        let resampled = bad
            .par_iter()
            .map(|&c| class_fingerprint_attempt(cfg, c, retries[c as usize]))
            .collect::<Result<Vec<_>>>()?;
        for fp in resampled {
            let idx = fp.class_id as usize;
            config.fingerprints[idx] = fp;
        }
    }
}

/// A test-grid sample whose nearest ideal class is not its own (or is tied).
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub class_id: u32,
    pub variant_index: usize,
    pub nearest_class_id: u32,
    pub tie: bool,
}

/// Renders every class's test grid and checks each sample against the
/// nearest-ideal oracle. An empty result means the test set is separable.
pub fn validate_separability(config: &DatasetConfig) -> Result<Vec<Violation>> {
    let oracle = Oracle::new(config)?;
    let g = &config.generation;
    let per_class = config
        .fingerprints
        .par_iter()
        .map(|fp| -> Result<Vec<Violation>> {
            let mut out = Vec::new();
            for (i, (variant, width)) in build_test_grid(fp, &g.test_grid)?.iter().enumerate() {
                let sample = render_sample(variant, *width, g.n_datapoints)?;
                let m = oracle.classify(&sample)?;
                if m.class_id != fp.class_id || m.tie {
                    out.push(Violation {
                        class_id: fp.class_id,
                        variant_index: i,
                        nearest_class_id: m.class_id,
                        tie: m.tie,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_class.into_iter().flatten().collect())
}

/// Renders, normalizes and narrows one sample to `f32`.
pub fn render_sample(fp: &ClassFingerprint, width: f64, n_datapoints: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0.0; n_datapoints];
    render_sample_into(fp, width, &mut buf, &mut Vec::new())?;
    Ok(buf.into_iter().map(|v| v as f32).collect())
}

fn render_sample_into(
    fp: &ClassFingerprint,
    width: f64,
    scratch: &mut [f64],
    out: &mut Vec<f32>,
) -> Result<()> {
    scratch.fill(0.0);
    render_into(fp, width, scratch)?;
    normalize_max(scratch);
    out.extend(scratch.iter().map(|&v| v as f32));
    Ok(())
}

/// The first `count` training variants of one class, rendered row by row.
///
/// These are the same rows [`build_dataset`] draws for the class (before the
/// train/validation split), so the stream depends only on the master seed and
/// the class id.
pub fn render_training_block(config: &DatasetConfig, class_id: u32, count: usize) -> Result<Vec<f32>> {
    let g = &config.generation;
    let fp = config
        .fingerprints
        .get(class_id as usize)
        .ok_or_else(|| Error::Parameter(format!("no class {class_id}")))?;
    let mut rng = g
        .key()
        .child(tags::TRAIN_VARIANTS)
        .child(class_id as u64)
        .stream();
    let mut scratch = vec![0.0; g.n_datapoints];
    let mut out = Vec::with_capacity(count * g.n_datapoints);
    for _ in 0..count {
        let (variant, width) =
            sample_training_variant(fp, &g.training_variation, g.n_datapoints, &mut rng)?;
        render_sample_into(&variant, width, &mut scratch, &mut out)?;
    }
    Ok(out)
}

struct ClassRows {
    train: Vec<f32>,
    n_train: usize,
    val: Vec<f32>,
    n_val: usize,
    test: Vec<f32>,
}

fn build_class_rows(config: &DatasetConfig, class_id: u32) -> Result<ClassRows> {
    let g = &config.generation;
    let n = g.n_datapoints;
    let total = g.train_samples_per_class;
    let block = render_training_block(config, class_id, total)?;

    let mut split_rng = g.key().child(tags::SPLIT).child(class_id as u64).stream();
    let order = permutation(&mut split_rng, total);
    let n_val = g.val_samples_per_class();
    let mut is_val = vec![false; total];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let mut train = Vec::with_capacity((total - n_val) * n);
    let mut val = Vec::with_capacity(n_val * n);
    for (i, row) in block.chunks_exact(n).enumerate() {
        if is_val[i] {
            val.extend_from_slice(row);
        } else {
            train.extend_from_slice(row);
        }
    }

    let fp = &config.fingerprints[class_id as usize];
    let mut scratch = vec![0.0; n];
    let mut test = Vec::with_capacity(9 * n);
    for (variant, width) in build_test_grid(fp, &g.test_grid)? {
        render_sample_into(&variant, width, &mut scratch, &mut test)?;
    }
    Ok(ClassRows {
        train,
        n_train: total - n_val,
        val,
        n_val,
        test,
    })
}

/// Renders all three splits. Rows are grouped by class in id order.
pub fn build_dataset(config: &DatasetConfig) -> Result<DatasetSplits> {
    config.validate()?;
    let g = &config.generation;
    let n = g.n_datapoints;
    let rows = (0..g.n_classes as u32)
        .into_par_iter()
        .map(|c| build_class_rows(config, c))
        .collect::<Result<Vec<_>>>()?;

    let mut train = (Vec::new(), Vec::new());
    let mut val = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (c, r) in rows.into_iter().enumerate() {
        let label = c as i64;
        train.0.extend(r.train);
        train.1.extend(std::iter::repeat_n(label, r.n_train));
        val.0.extend(r.val);
        val.1.extend(std::iter::repeat_n(label, r.n_val));
        test.0.extend(r.test);
        test.1.extend(std::iter::repeat_n(label, 9));
    }
    Ok(DatasetSplits {
        train: LabeledDataset::new(Split::Train, n, train.0, train.1)?,
        validation: LabeledDataset::new(Split::Validation, n, val.0, val.1)?,
        test: LabeledDataset::new(Split::Test, n, test.0, test.1)?,
    })
}
