use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{ReportHeader, RunReport, RunRow};
use crate::dataset::{DatasetSplits, Split};
use crate::error::{Error, Result};
use crate::rng::child_seed;
use crate::zoo::{build_model, evaluate, train, ArchitectureSpec, TrainingConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub n_seeds: usize,
    pub base_seed: u64,
    /// Template for every run; its `seed` is replaced per run.
    pub training: TrainingConfig,
    pub dataset_label: String,
    pub hardware: String,
    pub timestamp: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            n_seeds: 5,
            base_seed: 0,
            training: TrainingConfig::default(),
            dataset_label: String::new(),
            hardware: default_hardware(),
            timestamp: true,
        }
    }
}

/// `"<threads> threads, <os>/<arch>"`.
pub fn default_hardware() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{threads} threads, {}/{}", std::env::consts::OS, std::env::consts::ARCH)
}

/// CPU time consumed by the calling thread, where the platform reports it.
fn thread_cpu_seconds() -> Option<f64> {
    #[cfg(unix)]
    {
        let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
        // SAFETY: `ts` is a valid, writable timespec.
        let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
        if rc == 0 {
            return Some(ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9);
        }
    }
    None
}

/// Trains every architecture once per seed and evaluates on the test split.
///
/// Run `i` uses `child_seed(base_seed, i)` for both initialization and the
/// shuffle order, so at a given seed index every architecture sees the same
/// minibatches. Runs execute in parallel; rows come back in
/// `(architecture, seed index)` order. A failing run becomes an error row.
pub fn run_benchmark(specs: &[ArchitectureSpec], data: &DatasetSplits, opts: &BenchOptions) -> Result<RunReport> {
    if specs.is_empty() {
        return Err(Error::Usage("no architectures to benchmark".into()));
    }
    if opts.n_seeds == 0 {
        return Err(Error::Usage("at least one seed is required".into()));
    }
    opts.training.validate()?;
    let n_classes = [Split::Train, Split::Validation, Split::Test]
        .iter()
        .map(|&s| data.get(s).n_classes())
        .max()
        .unwrap_or(0);
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|m| (0..opts.n_seeds).map(move |i| (m, i)))
        .collect();
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|&(m, i)| run_one(&specs[m], i, n_classes, data, opts))
        .collect();
    let mut report = RunReport {
        header: ReportHeader {
            generated_at: opts.timestamp.then(|| chrono::Utc::now().to_rfc3339()),
            hardware: opts.hardware.clone(),
            dataset: opts.dataset_label.clone(),
            base_seed: opts.base_seed,
            n_seeds: opts.n_seeds,
        },
        rows,
    };
    if !opts.timestamp {
        report.strip_volatile();
    }
    Ok(report)
}

fn run_one(spec: &ArchitectureSpec, i: usize, n_classes: usize, data: &DatasetSplits, opts: &BenchOptions) -> RunRow {
    let seed = child_seed(opts.base_seed, i as u64);
    let started = Instant::now();
    let cpu0 = thread_cpu_seconds();
    let outcome = (|| {
        let model = build_model(spec, data.train.n_datapoints, n_classes, seed)?;
        let cfg = TrainingConfig { seed, ..opts.training.clone() };
        let trained = train(model, &data.train, &data.validation, &cfg)?;
        let eval = evaluate(&trained.model, &data.test)?;
        Ok::<_, Error>((trained.history, eval))
    })();
    let wall = started.elapsed().as_secs_f64();
    let cpu = match (cpu0, thread_cpu_seconds()) {
        (Some(a), Some(b)) => b - a,
        _ => wall,
    };
    let mut row = RunRow {
        model: spec.name.clone(),
        seed_index: i,
        seed,
        misclassifications: None,
        test_samples: data.test.len(),
        trained_epochs: None,
        best_epoch: None,
        stop_reason: None,
        wall_time_s: wall,
        cpu_time_s: cpu,
        error: None,
    };
    match outcome {
        Ok((history, eval)) => {
            log::info!(
                "{} seed {i}: {} misclassified after {} epochs",
                spec.name,
                eval.misclassifications,
                history.trained_epochs()
            );
            row.misclassifications = Some(eval.misclassifications);
            row.trained_epochs = Some(history.trained_epochs());
            row.best_epoch = history.best_epoch;
            row.stop_reason = Some(history.stop_reason.to_string());
        }
        Err(e) => {
            log::warn!("{} seed {i} failed: {e}", spec.name);
            row.error = Some(e.to_string());
        }
    }
    row
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSpec {
    pub name: String,
    pub source: String,
    pub architecture: String,
}

/// What a benchmark ran on, with content digests of the array files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub specs: Vec<ManifestSpec>,
    pub dataset_files: Vec<ManifestFile>,
    pub base_seed: u64,
    pub n_seeds: usize,
    pub training: TrainingConfig,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(specs: &[ArchitectureSpec], data_dir: &Path, opts: &BenchOptions) -> Result<Self> {
        let mut dataset_files = Vec::new();
        for split in Split::ALL {
            let (x, y) = DatasetSplits::paths(data_dir, split);
            for p in [x, y] {
                dataset_files.push(ManifestFile {
                    name: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    sha256: sha256_file(&p)?,
                });
            }
        }
        Ok(Manifest {
            specs: specs
                .iter()
                .map(|s| ManifestSpec {
                    name: s.name.clone(),
                    source: s.source.clone(),
                    architecture: s.architecture.clone(),
                })
                .collect(),
            dataset_files,
            base_seed: opts.base_seed,
            n_seeds: opts.n_seeds,
            training: opts.training.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledDataset;

    fn tiny_data() -> DatasetSplits {
        let make = |role, n: usize| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for i in 0..n {
                let c = i % 2;
                for j in 0..12 {
                    x.push(if (j < 6) == (c == 0) { 1.0 } else { 0.0 });
                }
                y.push(c as i64);
            }
            LabeledDataset::new(role, 12, x, y).unwrap()
        };
        DatasetSplits { train: make(Split::Train, 16), validation: make(Split::Validation, 4), test: make(Split::Test, 6) }
    }

    fn opts(n_seeds: usize) -> BenchOptions {
        BenchOptions {
            n_seeds,
            base_seed: 3,
            training: TrainingConfig { max_epochs: 2, batch_size: 4, ..Default::default() },
            hardware: "test".into(),
            timestamp: false,
            ..Default::default()
        }
    }

    #[test]
    fn single_seed_single_row() {
        let spec = ArchitectureSpec::new("tiny", "tiny", "C2k3-MP2-F").unwrap();
        let rep = run_benchmark(&[spec], &tiny_data(), &opts(1)).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let a = &rep.aggregates()[0];
        assert_eq!(a.mean_misclassifications, rep.rows[0].misclassifications.unwrap() as f64);
        assert!(!a.std_defined);
        assert_eq!(a.std_misclassifications, 0.0);
    }

    #[test]
    fn rows_are_canonical_and_reproducible() {
        let specs = [
            ArchitectureSpec::new("b", "b", "C2k3-MP2-F").unwrap(),
            ArchitectureSpec::new("a", "a", "F-D3").unwrap(),
        ];
        let first = run_benchmark(&specs, &tiny_data(), &opts(3)).unwrap();
        let order: Vec<(String, usize)> = first.rows.iter().map(|r| (r.model.clone(), r.seed_index)).collect();
        assert_eq!(order[0], ("b".into(), 0));
        assert_eq!(order[5], ("a".into(), 2));
        assert_eq!(first.rows[1].seed, child_seed(3, 1));
        assert_eq!(first, run_benchmark(&specs, &tiny_data(), &opts(3)).unwrap());
    }

    #[test]
    fn failures_become_error_rows() {
        // too deep for 12 datapoints
        let spec = ArchitectureSpec::new("deep", "deep", "(C2k3-MP2)x4-F").unwrap();
        let rep = run_benchmark(&[spec], &tiny_data(), &opts(2)).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(!rep.complete());
        assert!(rep.rows[0].error.as_deref().unwrap().contains("layer"));
    }
}
