//! Architecture definitions and the training loop.
//!
//! Architectures are small TOML documents holding a layer string in the
//! grammar of [`grammar`]. The shipped ones are embedded at compile time and
//! listed by [`builtin`]; any other file can be loaded with
//! [`ArchitectureSpec::load`].

pub mod grammar;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use grammar::parse_layers;
pub use train::{
    evaluate, train, train_observed, EpochRecord, Evaluation, PlateauSchedule, ScheduleStep, StopReason,
    Trained, TrainingConfig, TrainingHistory, MIN_IMPROVEMENT,
};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Model};

/// Conv-output size recorded alongside an architecture, checked in tests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvOutput {
    pub n_datapoints: usize,
    pub positions: usize,
    pub channels: usize,
    /// The published value this configuration approximates, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchitectureFile {
    name: String,
    source: String,
    architecture: String,
    conv_output: Option<ConvOutput>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub name: String,
    /// Family tag, e.g. `CNN2` or `CNN BN`.
    pub source: String,
    /// The layer string as written.
    pub architecture: String,
    /// Expanded layers, without the classification head.
    pub layers: Vec<LayerSpec>,
    pub conv_output: Option<ConvOutput>,
}

impl ArchitectureSpec {
    pub fn new(name: &str, source: &str, architecture: &str) -> Result<Self> {
        Ok(ArchitectureSpec {
            name: name.to_string(),
            source: source.to_string(),
            architecture: architecture.to_string(),
            layers: parse_layers(architecture)?,
            conv_output: None,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ArchitectureFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut spec = Self::new(&file.name, &file.source, &file.architecture)?;
        spec.conv_output = file.conv_output;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Parse { path: path.display().to_string(), message: m },
            Error::Grammar { position, message } => Error::Parse {
                path: path.display().to_string(),
                message: format!("architecture, position {position}: {message}"),
            },
            other => other,
        })
    }

    /// Hidden dense widths, in order.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect()
    }

    /// The full layer list for `n_classes` outputs: a `dense(n_classes)` and
    /// softmax head is appended unless the architecture already ends in one.
    pub fn with_head(&self, n_classes: usize) -> Result<Vec<LayerSpec>> {
        let mut layers = self.layers.clone();
        if layers.last() == Some(&LayerSpec::Softmax) {
            let units = match layers.iter().rev().nth(1) {
                Some(LayerSpec::Dense { units }) => *units,
                _ => 0,
            };
            if units != n_classes {
                return Err(Error::Shape(format!(
                    "architecture {} ends in {units} outputs but the data has {n_classes} classes",
                    self.name
                )));
            }
            return Ok(layers);
        }
        if !layers.contains(&LayerSpec::Flatten) {
            layers.push(LayerSpec::Flatten);
        }
        layers.push(LayerSpec::Dense { units: n_classes });
        layers.push(LayerSpec::Softmax);
        Ok(layers)
    }
}

/// Builds and initializes a classifier for spectra of `n_datapoints`.
pub fn build_model(spec: &ArchitectureSpec, n_datapoints: usize, n_classes: usize, seed: u64) -> Result<Model<f32>> {
    Model::new(spec.with_head(n_classes)?, n_datapoints, seed).map_err(|e| match e {
        Error::Shape(m) => Error::Shape(format!("architecture {}: {m}", spec.name)),
        other => other,
    })
}

const BUILTIN: &[&str] = &[
    include_str!("../../configs/cnn2.toml"),
    include_str!("../../configs/cnn3.toml"),
    include_str!("../../configs/cnn6.toml"),
    include_str!("../../configs/cnn_bn.toml"),
    include_str!("../../configs/vgg.toml"),
    include_str!("../../configs/desk/desk_cnn2.toml"),
    include_str!("../../configs/desk/desk_cnn6.toml"),
];

/// The shipped architectures.
pub fn builtin() -> Vec<ArchitectureSpec> {
    BUILTIN
        .iter()
        .map(|t| ArchitectureSpec::from_toml(t).expect("shipped architecture files are valid"))
        .collect()
}

/// Looks a name up among the shipped architectures, falling back to a file path.
pub fn resolve(name_or_path: &str) -> Result<ArchitectureSpec> {
    let key = name_or_path.trim();
    if let Some(spec) = builtin().into_iter().find(|s| s.name == key.replace('-', "_")) {
        return Ok(spec);
    }
    let path = Path::new(key);
    if path.exists() {
        return ArchitectureSpec::load(path);
    }
    let names: Vec<String> = builtin().into_iter().map(|s| s.name).collect();
    Err(Error::Usage(format!(
        "unknown architecture `{key}` (built-in: {})",
        names.join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_conv_outputs_match_documented_values() {
        for spec in builtin() {
            let doc = spec.conv_output.clone().expect("documented");
            let model = build_model(&spec, doc.n_datapoints, 10, 0).unwrap();
            assert_eq!(
                model.conv_output(),
                (doc.positions, doc.channels),
                "{}",
                spec.name
            );
        }
    }

    #[test]
    fn exact_and_approximate_table_values() {
        let find = |n: &str| builtin().into_iter().find(|s| s.name == n).unwrap();
        for (name, positions) in [("cnn2", 139), ("cnn3", 139), ("cnn6", 76), ("cnn_bn", 623), ("vgg", 308)] {
            let spec = find(name);
            let reference = spec.conv_output.as_ref().unwrap().reference.clone().unwrap();
            let published: usize = reference.split('x').next().unwrap().parse().unwrap();
            assert!(published.abs_diff(positions) <= 4, "{name}");
            let m = Model::<f32>::zeros(spec.with_head(500).unwrap(), 5000).unwrap();
            assert_eq!(m.conv_output(), (positions, 64));
        }
        assert_eq!(find("cnn2").dense_widths(), vec![2000, 500]);
        assert_eq!(find("cnn6").dense_widths(), vec![3100, 1200]);
    }

    #[test]
    fn head_is_appended_once() {
        let spec = ArchitectureSpec::new("t", "t", "C4k3-MP2-F-D8").unwrap();
        let layers = spec.with_head(3).unwrap();
        assert_eq!(LayerSpec::format_stack(&layers), "C4k3s1,R,MP2,F,D8,R,D3,SM");
        let headed = ArchitectureSpec::new("t", "t", "F-D3-SM").unwrap();
        assert_eq!(headed.with_head(3).unwrap().len(), 3);
        assert!(headed.with_head(4).is_err());
        let linear = ArchitectureSpec::new("lin", "lin", "Fx1").unwrap();
        assert_eq!(LayerSpec::format_stack(&linear.with_head(2).unwrap()), "F,D2,SM");
    }

    #[test]
    fn short_input_is_a_shape_error_naming_the_layer() {
        let spec = ArchitectureSpec::new("p", "p", "MP8-F").unwrap();
        match build_model(&spec, 4, 2, 0) {
            Err(Error::Shape(m)) => assert!(m.contains("layer 0") && m.contains("MP8"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolve_accepts_dashes_and_rejects_unknown() {
        assert_eq!(resolve("desk-cnn2").unwrap().name, "desk_cnn2");
        assert!(matches!(resolve("nope"), Err(Error::Usage(_))));
    }
}
