//! Nearest-ideal reference classifier.
//!
//! Every class's ideal fingerprint is rendered at the test width. A query is
//! scored against each class by the best cosine similarity over integer lags
//! `-L..=L`, where `L` is the test grid's shift rounded up:
//!
//! ```text
//! sim(q, c) = max_lag  sum_x q[x] * r_c[x - lag] / sqrt(|q|^2 |r_c|^2)
//! ```
//!
//! The lag search makes the score tolerant to the global shifts the test grid
//! applies. Spectra are stored as runs of nonzero values, so a pair of
//! classes whose supports never come within `L` datapoints scores exactly 0.

use crate::dataset::{render_sample, DatasetConfig};
use crate::error::{Error, Result};

/// Bucket width of the position index used to find candidate classes.
const BUCKET: usize = 32;

#[derive(Clone, Debug)]
struct Run {
    start: usize,
    values: Vec<f64>,
}

impl Run {
    fn end(&self) -> usize {
        self.start + self.values.len()
    }
}

/// Nonzero runs of a dense vector.
#[derive(Clone, Debug)]
pub struct SparseSpectrum {
    runs: Vec<Run>,
    norm2: f64,
}

impl SparseSpectrum {
    pub fn from_dense(values: &[f32]) -> Self {
        let mut runs: Vec<Run> = Vec::new();
        let mut open = false;
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                let v = v as f64;
                if open {
                    runs.last_mut().unwrap().values.push(v);
                } else {
                    runs.push(Run {
                        start: i,
                        values: vec![v],
                    });
                    open = true;
                }
            } else {
                open = false;
            }
        }
        // Summed run by run, exactly as `lagged_dots` does at lag 0, so a
        // spectrum's similarity with itself is exactly 1.
        let mut norm2 = 0.0;
        for r in &runs {
            let mut acc = 0.0;
            for v in &r.values {
                acc += v * v;
            }
            norm2 += acc;
        }
        SparseSpectrum { runs, norm2 }
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    /// `dots[lag + max_lag] = sum_x self[x] * other[x - lag]`.
    fn lagged_dots(&self, other: &SparseSpectrum, max_lag: usize, dots: &mut [f64]) {
        dots.fill(0.0);
        let l = max_lag as isize;
        for q in &self.runs {
            for r in &other.runs {
                // lags for which r shifted by `lag` overlaps q
                let lo = (q.start as isize - r.end() as isize + 1).max(-l);
                let hi = (q.end() as isize - 1 - r.start as isize).min(l);
                for lag in lo..=hi {
                    let start = (q.start as isize).max(r.start as isize + lag) as usize;
                    let end = (q.end() as isize).min(r.end() as isize + lag) as usize;
                    let qs = &q.values[start - q.start..end - q.start];
                    let ro = (start as isize - lag) as usize - r.start;
                    let rs = &r.values[ro..ro + (end - start)];
                    let mut acc = 0.0;
                    for (a, b) in qs.iter().zip(rs) {
                        acc += a * b;
                    }
                    dots[(lag + l) as usize] += acc;
                }
            }
        }
    }
}

/// Result of classifying one spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleMatch {
    pub class_id: u32,
    pub similarity: f64,
    /// Lag (datapoints) at which the winning similarity was reached.
    pub lag: isize,
    /// Best other class and its similarity, if there is more than one class.
    pub runner_up: Option<(u32, f64)>,
    /// Another class reached exactly the same similarity.
    pub tie: bool,
}

pub struct Oracle {
    n_datapoints: usize,
    max_lag: usize,
    references: Vec<SparseSpectrum>,
    /// `buckets[b]` lists classes whose lag-widened support touches bucket `b`.
    buckets: Vec<Vec<u32>>,
}

impl Oracle {
    pub fn new(config: &DatasetConfig) -> Result<Self> {
        let g = &config.generation;
        let references = config
            .fingerprints
            .iter()
            .map(|fp| {
                render_sample(fp, g.test_grid.test_width, g.n_datapoints)
                    .map(|v| SparseSpectrum::from_dense(&v))
            })
            .collect::<Result<Vec<_>>>()?;
        let max_lag = g.test_grid.grid_shift.ceil() as usize;
        Ok(Self::from_references(g.n_datapoints, max_lag, references))
    }

    pub fn from_references(n_datapoints: usize, max_lag: usize, references: Vec<SparseSpectrum>) -> Self {
        let n_buckets = n_datapoints.div_ceil(BUCKET).max(1);
        let mut buckets = vec![Vec::new(); n_buckets];
        for (c, r) in references.iter().enumerate() {
            for run in &r.runs {
                let lo = run.start.saturating_sub(max_lag) / BUCKET;
                let hi = ((run.end() - 1 + max_lag) / BUCKET).min(n_buckets - 1);
                for b in &mut buckets[lo..=hi] {
                    if b.last() != Some(&(c as u32)) {
                        b.push(c as u32);
                    }
                }
            }
        }
        Oracle {
            n_datapoints,
            max_lag,
            references,
            buckets,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.references.len()
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// Scores every class; classes never near the query score 0.
    pub fn similarities(&self, spectrum: &[f32]) -> Result<Vec<(f64, isize)>> {
        let query = self.prepare(spectrum)?;
        let mut out = vec![(0.0, 0isize); self.references.len()];
        let mut dots = vec![0.0; 2 * self.max_lag + 1];
        for c in self.candidates(&query) {
            out[c as usize] = self.score(&query, c, &mut dots);
        }
        Ok(out)
    }

    pub fn classify(&self, spectrum: &[f32]) -> Result<OracleMatch> {
        let scores = self.similarities(spectrum)?;
        let first_max = |skip: Option<usize>| {
            let mut best: Option<usize> = None;
            for (c, s) in scores.iter().enumerate() {
                if Some(c) != skip && best.is_none_or(|b| s.0 > scores[b].0) {
                    best = Some(c);
                }
            }
            best
        };
        let best = first_max(None).map(|c| (c as u32, scores[c].0, scores[c].1));
        let runner_up = best
            .and_then(|(c, _, _)| first_max(Some(c as usize)))
            .map(|c| (c as u32, scores[c].0));
        let (class_id, similarity, lag) =
            best.ok_or_else(|| Error::Domain("oracle has no classes".into()))?;
        Ok(OracleMatch {
            class_id,
            similarity,
            lag,
            runner_up,
            tie: runner_up.is_some_and(|(_, s)| s == similarity),
        })
    }

    fn prepare(&self, spectrum: &[f32]) -> Result<SparseSpectrum> {
        if spectrum.len() != self.n_datapoints {
            return Err(Error::Shape(format!(
                "spectrum has {} datapoints, oracle expects {}",
                spectrum.len(),
                self.n_datapoints
            )));
        }
        let query = SparseSpectrum::from_dense(spectrum);
        if !(query.norm2 > 0.0) || !query.norm2.is_finite() {
            return Err(Error::Domain(
                "cannot compare a zero-norm or non-finite spectrum".into(),
            ));
        }
        Ok(query)
    }

    fn candidates(&self, query: &SparseSpectrum) -> Vec<u32> {
        let mut out = Vec::new();
        for run in &query.runs {
            let lo = run.start / BUCKET;
            let hi = (run.end() - 1) / BUCKET;
            for b in &self.buckets[lo..=hi] {
                out.extend_from_slice(b);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn score(&self, query: &SparseSpectrum, class: u32, dots: &mut [f64]) -> (f64, isize) {
        let r = &self.references[class as usize];
        if r.norm2 == 0.0 {
            return (0.0, 0);
        }
        query.lagged_dots(r, self.max_lag, dots);
        let denom = (query.norm2 * r.norm2).sqrt();
        // scan from lag 0 outward so equal scores prefer the smallest shift
        let l = self.max_lag as isize;
        let mut best = (dots[l as usize] / denom, 0isize);
        for k in 1..=l {
            for lag in [-k, k] {
                let s = dots[(lag + l) as usize] / denom;
                if s > best.0 {
                    best = (s, lag);
                }
            }
        }
        best
    }
}

/// One-shot classification against a dataset config.
pub fn oracle_classify(spectrum: &[f32], config: &DatasetConfig) -> Result<OracleMatch> {
    Oracle::new(config)?.classify(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GenerationConfig;
    use crate::spectra::{ClassFingerprint, Peak};

    /// Dense reference: every lag, every datapoint.
    fn dense_similarity(q: &[f32], r: &[f32], max_lag: isize) -> f64 {
        let n = q.len() as isize;
        let nq: f64 = q.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let nr: f64 = r.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let mut best = f64::MIN;
        for lag in -max_lag..=max_lag {
            let mut dot = 0.0;
            for x in 0..n {
                let y = x - lag;
                if (0..n).contains(&y) {
                    dot += q[x as usize] as f64 * r[y as usize] as f64;
                }
            }
            best = best.max(dot / (nq * nr).sqrt());
        }
        best
    }

    fn config(fps: Vec<ClassFingerprint>) -> DatasetConfig {
        DatasetConfig {
            generation: GenerationConfig {
                n_classes: fps.len(),
                min_peaks: 1,
                ..GenerationConfig::desk(0)
            },
            fingerprints: fps,
        }
    }

    #[test]
    fn ideal_render_classifies_as_itself() {
        let cfg = crate::dataset::generate_dataset_config(&GenerationConfig {
            n_classes: 12,
            ..GenerationConfig::desk(31)
        })
        .unwrap();
        let oracle = Oracle::new(&cfg).unwrap();
        for fp in &cfg.fingerprints {
            let ideal = render_sample(fp, 2.0, 1000).unwrap();
            let m = oracle.classify(&ideal).unwrap();
            assert_eq!(m.class_id, fp.class_id);
            assert_eq!(m.similarity, 1.0);
            assert_eq!(m.lag, 0);
            assert!(!m.tie);
        }
        let ideal7 = render_sample(&cfg.fingerprints[7], 2.0, 1000).unwrap();
        assert_eq!(oracle_classify(&ideal7, &cfg).unwrap().class_id, 7);
    }

    #[test]
    fn orthogonal_runner_up_scores_zero() {
        let cfg = config(vec![
            ClassFingerprint::new(0, vec![Peak::new(200.0, 1.0)]),
            ClassFingerprint::new(1, vec![Peak::new(700.0, 1.0)]),
        ]);
        let q = render_sample(&cfg.fingerprints[0], 2.0, 1000).unwrap();
        let m = oracle_classify(&q, &cfg).unwrap();
        assert_eq!(m.class_id, 0);
        assert_eq!(m.runner_up, Some((1, 0.0)));
    }

    #[test]
    fn sparse_scores_match_dense_reference() {
        let cfg = crate::dataset::generate_dataset_config(&GenerationConfig {
            n_classes: 10,
            ..GenerationConfig::desk(77)
        })
        .unwrap();
        let oracle = Oracle::new(&cfg).unwrap();
        let refs: Vec<Vec<f32>> = cfg
            .fingerprints
            .iter()
            .map(|f| render_sample(f, 2.0, 1000).unwrap())
            .collect();
        let mut rng = crate::rng::StreamKey::root(5).stream();
        for fp in cfg.fingerprints.iter().take(4) {
            let (v, w) = crate::spectra::sample_training_variant(
                fp,
                &cfg.generation.training_variation,
                1000,
                &mut rng,
            )
            .unwrap();
            let q = render_sample(&v, w, 1000).unwrap();
            let got = oracle.similarities(&q).unwrap();
            for (c, r) in refs.iter().enumerate() {
                let want = dense_similarity(&q, r, oracle.max_lag() as isize);
                assert!((got[c].0 - want).abs() < 1e-12, "class {c}: {} vs {want}", got[c].0);
            }
        }
    }

    #[test]
    fn zero_spectrum_is_a_domain_error() {
        let cfg = config(vec![ClassFingerprint::new(0, vec![Peak::new(200.0, 1.0)])]);
        assert!(matches!(
            oracle_classify(&[0.0; 1000], &cfg),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            oracle_classify(&[1.0; 10], &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn ties_prefer_lower_id_and_are_flagged() {
        let p = vec![Peak::new(300.0, 1.0), Peak::new(500.0, 0.4)];
        let cfg = config(vec![
            ClassFingerprint::new(0, vec![Peak::new(800.0, 1.0)]),
            ClassFingerprint::new(1, p.clone()),
            ClassFingerprint::new(2, p),
        ]);
        let q = render_sample(&cfg.fingerprints[2], 2.0, 1000).unwrap();
        let m = oracle_classify(&q, &cfg).unwrap();
        assert_eq!(m.class_id, 1);
        assert!(m.tie);
    }
}
