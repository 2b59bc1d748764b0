use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::lstm::LayerShape;
use super::{ForecastError, ForecastModel, HyperParams, Network, Normalizer, N_FEATURES};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// A named row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk form of a [`ForecastModel`].
///
/// Tensors are `lstm{l}.weight` (4H × (D+H), gate blocks in [`super::GATES`]
/// order, columns input then recurrent), `lstm{l}.bias` (4H), `dense.weight`
/// (8 × H) and `dense.bias` (8).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    pub hyperparams: HyperParams,
    pub use_dow: bool,
    pub input_width: usize,
    pub normalizer: Normalizer,
    pub tensors: Vec<Tensor>,
    pub loss_history: Vec<f64>,
}

impl ModelSnapshot {
    pub fn from_model(model: &ForecastModel) -> Self {
        let net = &model.network;
        let mut tensors = Vec::new();
        for (l, shape) in net.layers.iter().enumerate() {
            let (w, b) = net.layer_params(l);
            let rows = 4 * shape.units;
            tensors.push(Tensor { name: format!("lstm{l}.weight"), shape: vec![rows, shape.input + shape.units], data: w.to_vec() });
            tensors.push(Tensor { name: format!("lstm{l}.bias"), shape: vec![rows], data: b.to_vec() });
        }
        let (w, b) = net.dense_params();
        tensors.push(Tensor { name: "dense.weight".into(), shape: vec![N_FEATURES, w.len() / N_FEATURES], data: w.to_vec() });
        tensors.push(Tensor { name: "dense.bias".into(), shape: vec![N_FEATURES], data: b.to_vec() });
        ModelSnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            hyperparams: model.hyperparams.clone(),
            use_dow: model.use_dow,
            input_width: net.input_width(),
            normalizer: model.normalizer.clone(),
            tensors,
            loss_history: model.loss_history.clone(),
        }
    }

    pub fn into_model(self) -> Result<ForecastModel, ForecastError> {
        let bad = |m: String| Err(ForecastError::Snapshot(m));
        if self.format_version != SNAPSHOT_FORMAT_VERSION {
            return bad(format!("unsupported format version {}", self.format_version));
        }
        self.hyperparams.validate()?;
        let mut width = self.input_width;
        let mut layers = Vec::new();
        for (units, act) in self.hyperparams.layer_units() {
            layers.push(LayerShape { input: width, units, act });
            width = units;
        }
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        for (l, s) in layers.iter().enumerate() {
            expected.push((format!("lstm{l}.weight"), vec![4 * s.units, s.input + s.units]));
            expected.push((format!("lstm{l}.bias"), vec![4 * s.units]));
        }
        expected.push(("dense.weight".into(), vec![N_FEATURES, width]));
        expected.push(("dense.bias".into(), vec![N_FEATURES]));
        if self.tensors.len() != expected.len() {
            return bad(format!("expected {} tensors, found {}", expected.len(), self.tensors.len()));
        }
        let mut params = Vec::new();
        for (t, (name, shape)) in self.tensors.iter().zip(&expected) {
            if &t.name != name || &t.shape != shape {
                return bad(format!("expected tensor {name} {shape:?}, found {} {:?}", t.name, t.shape));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return bad(format!("tensor {name} holds {} values for shape {shape:?}", t.data.len()));
            }
            params.extend_from_slice(&t.data);
        }
        Ok(ForecastModel {
            hyperparams: self.hyperparams,
            use_dow: self.use_dow,
            normalizer: self.normalizer,
            network: Network { layers, params },
            loss_history: self.loss_history,
        })
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, ForecastError> {
        serde_json::from_reader(r).map_err(|e| ForecastError::Snapshot(e.to_string()))
    }
}

impl ForecastModel {
    pub fn save_json<W: Write>(&self, w: W) -> std::io::Result<()> {
        ModelSnapshot::from_model(self).write_json(w)
    }

    pub fn load_json<R: Read>(r: R) -> Result<ForecastModel, ForecastError> {
        ModelSnapshot::read_json(r)?.into_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{train_model, Activation, Sample};

    fn model(units2: usize, use_dow: bool) -> ForecastModel {
        let width = if use_dow { 14 } else { 8 };
        let samples: Vec<Sample> = (0..12)
            .map(|i| Sample {
                inputs: (0..3).map(|t| (0..width).map(|k| ((i * 7 + t * 3 + k) % 5) as f64 * 0.3 - 0.6).collect()).collect(),
                target: std::array::from_fn(|j| ((i + j) % 4) as f64 * 0.25),
            })
            .collect();
        let hp = HyperParams { units1: 5, units2, act2: Activation::Relu, epochs: 2, window_len: 3, ..HyperParams::default() };
        let norm = Normalizer { mean: [1.0 / 3.0; 8], std: [0.1; 8] };
        train_model(&samples, &hp, norm, use_dow).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for (units2, dow) in [(0, false), (4, true)] {
            let m = model(units2, dow);
            let mut buf = Vec::new();
            m.save_json(&mut buf).unwrap();
            assert_eq!(ForecastModel::load_json(buf.as_slice()).unwrap(), m);
        }
    }

    #[test]
    fn tensor_names_and_shapes() {
        let snap = ModelSnapshot::from_model(&model(4, true));
        let got: Vec<(&str, &[usize])> = snap.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
        assert_eq!(
            got,
            vec![
                ("lstm0.weight", &[20, 19][..]),
                ("lstm0.bias", &[20][..]),
                ("lstm1.weight", &[16, 9][..]),
                ("lstm1.bias", &[16][..]),
                ("dense.weight", &[8, 4][..]),
                ("dense.bias", &[8][..]),
            ]
        );
    }

    #[test]
    fn rejects_inconsistent_snapshots() {
        let mut snap = ModelSnapshot::from_model(&model(0, false));
        snap.tensors[0].data.pop();
        assert!(matches!(snap.into_model(), Err(ForecastError::Snapshot(_))));
        let mut snap = ModelSnapshot::from_model(&model(0, false));
        snap.format_version = 99;
        assert!(matches!(snap.into_model(), Err(ForecastError::Snapshot(_))));
        let mut snap = ModelSnapshot::from_model(&model(0, false));
        snap.hyperparams.units1 = 6;
        assert!(matches!(snap.into_model(), Err(ForecastError::Snapshot(_))));
        assert!(matches!(ModelSnapshot::read_json(&b"{"[..]), Err(ForecastError::Snapshot(_))));
    }
}
