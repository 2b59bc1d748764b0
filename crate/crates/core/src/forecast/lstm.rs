//! LSTM layers with a dense head, stored as one flat parameter vector.
//!
//! Per layer with input width D and H units, the weight matrix is 4H × (D+H)
//! row-major and multiplies the concatenation [x_t; h_{t-1}]. Its row blocks,
//! and the matching bias blocks, follow [`GATES`].

use rand::Rng;

use super::{Activation, ForecastError, ForecastModel, N_FEATURES};

/// Order of the gate blocks in each layer's weights and bias.
pub const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with independent partial sums so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerShape {
    pub input: usize,
    pub units: usize,
    pub act: Activation,
}

impl LayerShape {
    fn cols(&self) -> usize {
        self.input + self.units
    }

    fn n_weights(&self) -> usize {
        4 * self.units * self.cols()
    }

    fn n_params(&self) -> usize {
        self.n_weights() + 4 * self.units
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<LayerShape>,
    pub params: Vec<f64>,
}

/// Activations saved during a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// [x_t; h_{t-1}] per step.
    xh: Vec<Vec<f64>>,
    /// Post-activation gates per step, laid out like the bias.
    gates: Vec<Vec<f64>>,
    /// Candidate pre-activations (needed for the relu derivative).
    cand_pre: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    c_act: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    layers: Vec<LayerCache>,
    /// Input of the dense head (last layer's final output, after dropout).
    head_in: Vec<f64>,
}

#[cfg(test)]
impl ForwardCache {
    /// Every value fed to a relu: candidate pre-activations and cell states of relu layers.
    pub(crate) fn relu_inputs(&self, net: &Network) -> Vec<f64> {
        net.layers
            .iter()
            .zip(&self.layers)
            .filter(|(s, _)| s.act == Activation::Relu)
            .flat_map(|(_, c)| c.cand_pre.iter().chain(&c.c).flatten().copied())
            .collect()
    }
}

/// Per layer, per step, per unit multipliers applied to layer outputs.
pub(crate) type DropoutMasks = Vec<Vec<Vec<f64>>>;

impl Network {
    /// Uniform(±1/√fan_in) weights, zero biases except a forget-gate bias of 1.
    pub fn new<R: Rng>(input_width: usize, layer_units: &[(usize, Activation)], rng: &mut R) -> Network {
        let mut layers = Vec::with_capacity(layer_units.len());
        let mut width = input_width;
        for &(units, act) in layer_units {
            layers.push(LayerShape { input: width, units, act });
            width = units;
        }
        let mut net = Network::zeros(layers);
        let mut off = 0;
        for shape in net.layers.clone() {
            let k = 1.0 / (shape.cols() as f64).sqrt();
            for w in &mut net.params[off..off + shape.n_weights()] {
                *w = rng.random_range(-k..k);
            }
            let b = off + shape.n_weights();
            net.params[b + shape.units..b + 2 * shape.units].fill(1.0);
            off += shape.n_params();
        }
        let h = net.last_units();
        let k = 1.0 / (h as f64).sqrt();
        for w in &mut net.params[off..off + N_FEATURES * h] {
            *w = rng.random_range(-k..k);
        }
        net
    }

    pub fn zeros(layers: Vec<LayerShape>) -> Network {
        let head = N_FEATURES * (layers.last().map_or(0, |l| l.units) + 1);
        let n = layers.iter().map(LayerShape::n_params).sum::<usize>() + head;
        Network { layers, params: vec![0.0; n] }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    fn last_units(&self) -> usize {
        self.layers.last().map_or(0, |l| l.units)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Start of each layer's weights, then the start of the dense head.
    pub fn offsets(&self) -> (Vec<usize>, usize) {
        let mut offs = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offs.push(off);
            off += l.n_params();
        }
        (offs, off)
    }

    /// (weight, bias) slices of layer `l`.
    pub fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        let (offs, _) = self.offsets();
        let s = self.layers[l];
        let p = &self.params[offs[l]..offs[l] + s.n_params()];
        p.split_at(s.n_weights())
    }

    /// (weight 8 × H, bias 8) of the dense head.
    pub fn dense_params(&self) -> (&[f64], &[f64]) {
        let (_, d) = self.offsets();
        self.params[d..].split_at(N_FEATURES * self.last_units())
    }

    pub fn check_window(&self, window: &[Vec<f64>]) -> Result<(), ForecastError> {
        if window.is_empty() {
            return Err(ForecastError::ShapeMismatch("empty input window".into()));
        }
        let w = self.input_width();
        if let Some(row) = window.iter().find(|r| r.len() != w) {
            return Err(ForecastError::ShapeMismatch(format!("input row of width {} but the network expects {w}", row.len())));
        }
        Ok(())
    }

    /// Inference: no dropout.
    pub fn predict(&self, window: &[Vec<f64>]) -> Result<[f64; N_FEATURES], ForecastError> {
        self.check_window(window)?;
        Ok(self.forward(window, None).0)
    }

    pub(crate) fn forward(&self, window: &[Vec<f64>], masks: Option<&DropoutMasks>) -> ([f64; N_FEATURES], ForwardCache) {
        let (offs, dense_off) = self.offsets();
        let mut seq: Vec<Vec<f64>> = window.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, shape) in self.layers.iter().enumerate() {
            let (h_units, cols) = (shape.units, shape.cols());
            let w = &self.params[offs[l]..offs[l] + shape.n_weights()];
            let b = &self.params[offs[l] + shape.n_weights()..offs[l] + shape.n_params()];
            let steps = seq.len();
            let mut cache = LayerCache {
                xh: Vec::with_capacity(steps),
                gates: Vec::with_capacity(steps),
                cand_pre: Vec::with_capacity(steps),
                c: Vec::with_capacity(steps),
                c_act: Vec::with_capacity(steps),
            };
            let mut h = vec![0.0; h_units];
            let mut c = vec![0.0; h_units];
            let mut out = Vec::with_capacity(steps);
            for (t, x) in seq.iter().enumerate() {
                let mut xh = Vec::with_capacity(cols);
                xh.extend_from_slice(x);
                xh.extend_from_slice(&h);
                let mut z = b.to_vec();
                for (r, zr) in z.iter_mut().enumerate() {
                    let row = &w[r * cols..(r + 1) * cols];
                    *zr += dot(row, &xh);
                }
                let cand_pre = z[3 * h_units..].to_vec();
                for v in &mut z[..3 * h_units] {
                    *v = sigmoid(*v);
                }
                for v in &mut z[3 * h_units..] {
                    *v = shape.act.apply(*v);
                }
                let mut c_act = vec![0.0; h_units];
                for u in 0..h_units {
                    let (i, f, o, g) = (z[u], z[h_units + u], z[2 * h_units + u], z[3 * h_units + u]);
                    c[u] = f * c[u] + i * g;
                    c_act[u] = shape.act.apply(c[u]);
                    h[u] = o * c_act[u];
                }
                let mut y = h.clone();
                if let Some(m) = masks {
                    for (v, s) in y.iter_mut().zip(&m[l][t]) {
                        *v *= s;
                    }
                }
                out.push(y);
                cache.xh.push(xh);
                cache.gates.push(z);
                cache.cand_pre.push(cand_pre);
                cache.c.push(c.clone());
                cache.c_act.push(c_act);
            }
            caches.push(cache);
            seq = out;
        }
        let head_in = seq.pop().unwrap_or_default();
        let hu = head_in.len();
        let dw = &self.params[dense_off..dense_off + N_FEATURES * hu];
        let db = &self.params[dense_off + N_FEATURES * hu..];
        let pred = std::array::from_fn(|j| db[j] + dot(&dw[j * hu..(j + 1) * hu], &head_in));
        (pred, ForwardCache { layers: caches, head_in })
    }

    /// Accumulate into `grad` the gradient of Σ_j dout_j · pred_j.
    pub(crate) fn backward(&self, cache: &ForwardCache, dout: &[f64; N_FEATURES], masks: Option<&DropoutMasks>, grad: &mut [f64]) {
        let (offs, dense_off) = self.offsets();
        let hu = cache.head_in.len();
        let steps = cache.layers.first().map_or(0, |c| c.xh.len());
        let mut d_head = vec![0.0; hu];
        for j in 0..N_FEATURES {
            let g = dout[j];
            grad[dense_off + N_FEATURES * hu + j] += g;
            let row = &self.params[dense_off + j * hu..dense_off + (j + 1) * hu];
            let grow = &mut grad[dense_off + j * hu..dense_off + (j + 1) * hu];
            for u in 0..hu {
                grow[u] += g * cache.head_in[u];
                d_head[u] += g * row[u];
            }
        }
        // Gradient w.r.t. each layer's output sequence, post-dropout.
        let mut d_seq = vec![Vec::new(); steps];
        d_seq[steps - 1] = d_head;
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let (h_units, cols, d_in) = (shape.units, shape.cols(), shape.input);
            let lc = &cache.layers[l];
            let w = &self.params[offs[l]..offs[l] + shape.n_weights()];
            let (gw, gb) = grad[offs[l]..offs[l] + shape.n_params()].split_at_mut(shape.n_weights());
            let mut dh_next = vec![0.0; h_units];
            let mut dc_next = vec![0.0; h_units];
            let mut d_below = vec![Vec::new(); steps];
            let mut dz = vec![0.0; 4 * h_units];
            for t in (0..steps).rev() {
                let gates = &lc.gates[t];
                for u in 0..h_units {
                    let mut dy = d_seq[t].get(u).copied().unwrap_or(0.0);
                    if let Some(m) = masks {
                        dy *= m[l][t][u];
                    }
                    let dh = dy + dh_next[u];
                    let (i, f, o, g) = (gates[u], gates[h_units + u], gates[2 * h_units + u], gates[3 * h_units + u]);
                    let ca = lc.c_act[t][u];
                    let c_prev = if t > 0 { lc.c[t - 1][u] } else { 0.0 };
                    let dc = dc_next[u] + dh * o * shape.act.derivative(lc.c[t][u], ca);
                    dc_next[u] = dc * f;
                    dz[u] = dc * g * i * (1.0 - i);
                    dz[h_units + u] = dc * c_prev * f * (1.0 - f);
                    dz[2 * h_units + u] = dh * ca * o * (1.0 - o);
                    dz[3 * h_units + u] = dc * i * shape.act.derivative(lc.cand_pre[t][u], g);
                }
                let xh = &lc.xh[t];
                let mut dxh = vec![0.0; cols];
                for (r, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[r] += d;
                    let row = &w[r * cols..(r + 1) * cols];
                    let grow = &mut gw[r * cols..(r + 1) * cols];
                    for k in 0..cols {
                        grow[k] += d * xh[k];
                        dxh[k] += d * row[k];
                    }
                }
                dh_next.copy_from_slice(&dxh[d_in..]);
                dxh.truncate(d_in);
                d_below[t] = dxh;
            }
            d_seq = d_below;
        }
    }
}

/// Normalised next-day prediction of a trained model for one window.
pub fn lstm_forward(model: &ForecastModel, window: &[Vec<f64>]) -> Result<[f64; N_FEATURES], ForecastError> {
    if window.len() != model.hyperparams.window_len {
        return Err(ForecastError::ShapeMismatch(format!(
            "window of {} steps but the model was trained on {}",
            window.len(),
            model.hyperparams.window_len
        )));
    }
    model.network.predict(window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_window(rng: &mut ChaCha8Rng, steps: usize, width: usize) -> Vec<Vec<f64>> {
        (0..steps).map(|_| (0..width).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn zero_network_outputs_dense_bias() {
        let net = Network::zeros(vec![LayerShape { input: 8, units: 5, act: Activation::Tanh }]);
        assert_eq!(net.predict(&vec![vec![3.0; 8]; 4]).unwrap(), [0.0; N_FEATURES]);
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::new(14, &[(128, Activation::Tanh)], &mut rng);
        assert_eq!(net.n_params(), 4 * 128 * (14 + 128) + 4 * 128 + 8 * 128 + 8);
        let two = Network::new(8, &[(16, Activation::Tanh), (4, Activation::Relu)], &mut rng);
        assert_eq!(two.n_params(), 4 * 16 * 24 + 64 + 4 * 4 * 20 + 16 + 8 * 4 + 8);
        assert_eq!(two.layer_params(1).0.len(), 4 * 4 * 20);
    }

    #[test]
    fn init_ranges_and_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(8, &[(4, Activation::Tanh)], &mut rng);
        let (w, b) = net.layer_params(0);
        let k = 1.0 / 12f64.sqrt();
        assert!(w.iter().all(|x| x.abs() <= k));
        assert_eq!(b, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (dw, db) = net.dense_params();
        assert!(dw.iter().all(|x| x.abs() <= 0.5));
        assert_eq!(db, &[0.0; 8]);
    }

    #[test]
    fn shape_mismatch() {
        let net = Network::zeros(vec![LayerShape { input: 8, units: 2, act: Activation::Tanh }]);
        assert!(matches!(net.predict(&[vec![0.0; 14]]), Err(ForecastError::ShapeMismatch(_))));
        assert!(matches!(net.predict(&[]), Err(ForecastError::ShapeMismatch(_))));
    }

    #[test]
    fn leading_zero_rows_change_nothing_without_input_weights_or_gate_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Network::new(8, &[(3, Activation::Tanh)], &mut rng);
        let shape = net.layers[0];
        for r in 0..4 * shape.units {
            net.params[r * shape.cols()..r * shape.cols() + shape.input].fill(0.0);
        }
        let b0 = shape.n_weights();
        net.params[b0..b0 + 4 * shape.units].fill(0.0);
        let window = rand_window(&mut rng, 3, 8);
        let mut padded = vec![vec![0.0; 8]; 4];
        padded.extend(window.clone());
        assert_eq!(net.predict(&window).unwrap(), net.predict(&padded).unwrap());
    }

    /// Cell equations written out unit by unit with named gate weights.
    fn scalar_oracle(net: &Network, window: &[Vec<f64>]) -> [f64; 8] {
        let s = net.layers[0];
        let (w, b) = net.layer_params(0);
        let (hn, d) = (s.units, s.input);
        let weight = |gate: usize, unit: usize, col: usize| w[(gate * hn + unit) * (d + hn) + col];
        let mut h = vec![0.0; hn];
        let mut c = vec![0.0; hn];
        for x in window {
            let prev = h.clone();
            for u in 0..hn {
                let pre = |gate: usize| {
                    let mut z = b[gate * hn + u];
                    for (k, xk) in x.iter().enumerate() {
                        z += weight(gate, u, k) * xk;
                    }
                    for (k, hk) in prev.iter().enumerate() {
                        z += weight(gate, u, d + k) * hk;
                    }
                    z
                };
                let i = 1.0 / (1.0 + (-pre(0)).exp());
                let f = 1.0 / (1.0 + (-pre(1)).exp());
                let o = 1.0 / (1.0 + (-pre(2)).exp());
                let g = pre(3).tanh();
                c[u] = f * c[u] + i * g;
                h[u] = o * c[u].tanh();
            }
        }
        let (dw, db) = net.dense_params();
        std::array::from_fn(|j| db[j] + (0..hn).map(|u| dw[j * hn + u] * h[u]).sum::<f64>())
    }

    #[test]
    fn matches_scalar_oracle() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Network::new(8, &[(2, Activation::Tanh)], &mut rng);
            for p in &mut net.params {
                *p = rng.random_range(-1.0..1.0);
            }
            let window = rand_window(&mut rng, 3, 8);
            let got = net.predict(&window).unwrap();
            let want = scalar_oracle(&net, &window);
            for j in 0..8 {
                assert!((got[j] - want[j]).abs() < 1e-12, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn dropout_masks_of_one_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(8, &[(4, Activation::Tanh), (3, Activation::Relu)], &mut rng);
        let window = rand_window(&mut rng, 5, 8);
        let masks: DropoutMasks = vec![vec![vec![1.0; 4]; 5], vec![vec![1.0; 3]; 5]];
        assert_eq!(net.forward(&window, Some(&masks)).0, net.predict(&window).unwrap());
    }
}
