//! WebAssembly bindings behind `www/index.html`.
//!
//! A [`Demo`] holds one generated desk-scale dataset config. The page uses
//! it to draw a class's ideal spectrum next to its random training
//! variants, to apply a user-chosen shift / intensity / width and let the
//! nearest-ideal oracle classify the result, and to show the 3x3 test grid.

use synspec::bench::{Oracle, OracleMatch};
use synspec::dataset::{generate_dataset_config, render_sample, render_training_block, DatasetConfig, GenerationConfig};
use synspec::spectra::{build_test_grid, ClassFingerprint, Peak};
use wasm_bindgen::prelude::*;

fn js(e: synspec::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Oracle verdict for one spectrum.
#[wasm_bindgen]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub class_id: u32,
    pub similarity: f64,
    pub lag: i32,
    /// `-1` when the dataset has a single class.
    pub runner_up: i32,
    pub runner_up_similarity: f64,
    pub tie: bool,
}

impl From<OracleMatch> for Verdict {
    fn from(m: OracleMatch) -> Self {
        let (runner_up, runner_up_similarity) = m.runner_up.map_or((-1, 0.0), |(c, s)| (c as i32, s));
        Verdict {
            class_id: m.class_id,
            similarity: m.similarity,
            lag: m.lag as i32,
            runner_up,
            runner_up_similarity,
            tie: m.tie,
        }
    }
}

#[wasm_bindgen]
pub struct Demo {
    config: DatasetConfig,
    oracle: Oracle,
}

impl Demo {
    pub fn build(seed: u64) -> synspec::Result<Demo> {
        let config = generate_dataset_config(&GenerationConfig::desk(seed))?;
        let oracle = Oracle::new(&config)?;
        Ok(Demo { config, oracle })
    }

    fn fingerprint(&self, class_id: u32) -> synspec::Result<&ClassFingerprint> {
        self.config
            .fingerprints
            .get(class_id as usize)
            .ok_or_else(|| synspec::Error::Parameter(format!("no class {class_id}")))
    }

    /// The class with every peak shifted by `shift` datapoints and scaled by
    /// `scale`, rendered at `width`. Peaks pushed off the grid are dropped.
    pub fn altered(&self, class_id: u32, shift: f64, scale: f64, width: f64) -> synspec::Result<Vec<f32>> {
        let fp = self.fingerprint(class_id)?;
        let n = self.config.generation.n_datapoints as f64;
        let peaks = fp
            .peaks
            .iter()
            .map(|p| Peak::new(p.position + shift, p.intensity * scale))
            .filter(|p| p.position >= 0.0 && p.position < n)
            .collect();
        render_sample(&ClassFingerprint::new(class_id, peaks), width, self.config.generation.n_datapoints)
    }

    pub fn verdict(&self, spectrum: &[f32]) -> synspec::Result<Verdict> {
        self.oracle.classify(spectrum).map(Verdict::from)
    }
}

#[wasm_bindgen]
impl Demo {
    /// Samples a 50-class, 1000-datapoint dataset config from `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, JsError> {
        Demo::build(seed).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn n_classes(&self) -> u32 {
        self.config.fingerprints.len() as u32
    }

    #[wasm_bindgen(getter)]
    pub fn n_datapoints(&self) -> u32 {
        self.config.generation.n_datapoints as u32
    }

    /// Peak positions of the ideal fingerprint.
    pub fn peak_positions(&self, class_id: u32) -> Result<Vec<f64>, JsError> {
        Ok(self.fingerprint(class_id).map_err(js)?.positions().collect())
    }

    /// Ideal spectrum at the test width, normalized to a maximum of 1.
    pub fn ideal(&self, class_id: u32) -> Result<Vec<f32>, JsError> {
        let fp = self.fingerprint(class_id).map_err(js)?;
        let g = &self.config.generation;
        render_sample(fp, g.test_grid.test_width, g.n_datapoints).map_err(js)
    }

    /// The first `count` training variants of the class, row after row.
    pub fn training_variants(&self, class_id: u32, count: usize) -> Result<Vec<f32>, JsError> {
        render_training_block(&self.config, class_id, count).map_err(js)
    }

    /// The nine test-grid spectra of the class, row after row.
    pub fn test_grid(&self, class_id: u32) -> Result<Vec<f32>, JsError> {
        let fp = self.fingerprint(class_id).map_err(js)?;
        let g = &self.config.generation;
        let mut out = Vec::with_capacity(9 * g.n_datapoints);
        for (variant, width) in build_test_grid(fp, &g.test_grid).map_err(js)? {
            out.extend(render_sample(&variant, width, g.n_datapoints).map_err(js)?);
        }
        Ok(out)
    }

    /// Renders an altered copy of the class (see [`Demo::altered`]).
    pub fn alter(&self, class_id: u32, shift: f64, scale: f64, width: f64) -> Result<Vec<f32>, JsError> {
        self.altered(class_id, shift, scale, width).map_err(js)
    }

    /// Nearest ideal class of an arbitrary spectrum of `n_datapoints` values.
    pub fn classify(&self, spectrum: &[f32]) -> Result<Verdict, JsError> {
        self.verdict(spectrum).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exported_views_have_expected_sizes() {
        let demo = Demo::build(3).unwrap();
        assert_eq!(demo.n_classes(), 50);
        assert_eq!(demo.n_datapoints(), 1000);
        let ideal = demo.ideal(4).unwrap();
        assert_eq!(ideal.len(), 1000);
        assert_eq!(ideal.iter().copied().fold(0.0f32, f32::max), 1.0);
        assert_eq!(demo.training_variants(4, 3).unwrap().len(), 3000);
        assert_eq!(demo.test_grid(4).unwrap().len(), 9000);
        assert!(!demo.peak_positions(4).unwrap().is_empty());
    }

    #[test]
    fn test_grid_is_classified_correctly() {
        let demo = Demo::build(3).unwrap();
        for class in [0, 17, 49] {
            let grid = demo.test_grid(class).unwrap();
            for row in grid.chunks(1000) {
                let v = demo.verdict(row).unwrap();
                assert_eq!(v.class_id, class);
                assert!(!v.tie);
            }
        }
    }

    #[test]
    fn alterations_within_the_grid_keep_the_class() {
        let demo = Demo::build(11).unwrap();
        let s = demo.altered(7, 3.0, 1.01, 2.0).unwrap();
        let v = demo.verdict(&s).unwrap();
        assert_eq!(v.class_id, 7);
        assert_eq!(v.lag, 3);
    }

    #[test]
    fn errors_surface_from_the_inner_api() {
        let demo = Demo::build(0).unwrap();
        assert!(demo.altered(99, 0.0, 1.0, 2.0).is_err());
        assert!(demo.verdict(&[0.0; 1000]).is_err());
        assert!(demo.verdict(&[1.0; 10]).is_err());
    }
}
