use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lstm::DropoutMasks;
use super::{ForecastError, ForecastModel, HyperParams, Network, Normalizer, Sample, DOW_WIDTH, N_FEATURES};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Gradients smaller than this are compared in absolute rather than relative terms.
const GRAD_CHECK_FLOOR: f64 = 1e-8;

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// RMSE over every feature of every sample in the batch.
fn batch_loss(network: &Network, batch: &[&Sample]) -> f64 {
    let sse: f64 = batch
        .iter()
        .map(|s| {
            let pred = network.forward(&s.inputs, None).0;
            pred.iter().zip(&s.target).map(|(p, t)| (p - t).powi(2)).sum::<f64>()
        })
        .sum();
    (sse / (batch.len() * N_FEATURES) as f64).sqrt()
}

fn batch_loss_grad(network: &Network, batch: &[&Sample], masks: Option<&[DropoutMasks]>) -> (f64, Vec<f64>) {
    // Per-sample passes run in parallel; results are summed in batch order so
    // the outcome does not depend on scheduling.
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .enumerate()
        .map(|(b, s)| {
            let m = masks.map(|m| &m[b]);
            let (pred, cache) = network.forward(&s.inputs, m);
            let err: [f64; N_FEATURES] = std::array::from_fn(|j| pred[j] - s.target[j]);
            let mut grad = vec![0.0; network.n_params()];
            network.backward(&cache, &err, m, &mut grad);
            (err.iter().map(|e| e * e).sum(), grad)
        })
        .collect();
    let mut sse = 0.0;
    let mut grad = vec![0.0; network.n_params()];
    for (e, g) in parts {
        sse += e;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let count = (batch.len() * N_FEATURES) as f64;
    let loss = (sse / count).sqrt();
    // d sqrt(S/n) / d pred = err / (n · loss); zero at an exact fit.
    let scale = if loss > 0.0 { 1.0 / (count * loss) } else { 0.0 };
    for g in &mut grad {
        *g *= scale;
    }
    (loss, grad)
}

/// RMSE loss of `samples` as one batch and its gradient w.r.t. every parameter (no dropout).
pub fn loss_and_gradient(network: &Network, samples: &[Sample]) -> Result<(f64, Vec<f64>), ForecastError> {
    if samples.is_empty() {
        return Err(ForecastError::NoSamples);
    }
    for s in samples {
        network.check_window(&s.inputs)?;
    }
    let batch: Vec<&Sample> = samples.iter().collect();
    Ok(batch_loss_grad(network, &batch, None))
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with the given step, over every parameter.
pub fn gradient_check(network: &Network, samples: &[Sample], step: f64) -> Result<f64, ForecastError> {
    let (_, analytic) = loss_and_gradient(network, samples)?;
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut net = network.clone();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let orig = net.params[i];
        net.params[i] = orig + step;
        let up = batch_loss(&net, &batch);
        net.params[i] = orig - step;
        let down = batch_loss(&net, &batch);
        net.params[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn dropout_masks<R: Rng>(network: &Network, steps: usize, p: f64, rng: &mut R) -> DropoutMasks {
    let keep = 1.0 / (1.0 - p);
    network
        .layers
        .iter()
        .map(|l| (0..steps).map(|_| (0..l.units).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()).collect())
        .collect()
}

/// Minibatch BPTT with Adam. The seed drives initialisation, shuffling and dropout.
pub fn train_model(
    samples: &[Sample],
    hp: &HyperParams,
    normalizer: Normalizer,
    use_dow: bool,
) -> Result<ForecastModel, ForecastError> {
    hp.validate()?;
    if samples.is_empty() {
        return Err(ForecastError::NoSamples);
    }
    let width = N_FEATURES + if use_dow { DOW_WIDTH } else { 0 };
    for s in samples {
        if s.inputs.len() != hp.window_len || s.inputs.iter().any(|r| r.len() != width) {
            return Err(ForecastError::ShapeMismatch(format!(
                "expected {} steps of width {width}, got {} steps of width {}",
                hp.window_len,
                s.inputs.len(),
                s.inputs.first().map_or(0, Vec::len)
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut network = Network::new(width, &hp.layer_units(), &mut rng);
    let mut adam = Adam::new(network.n_params(), hp.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_history = Vec::with_capacity(hp.epochs);

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let masks: Option<Vec<DropoutMasks>> = (hp.dropout > 0.0)
                .then(|| chunk.iter().map(|_| dropout_masks(&network, hp.window_len, hp.dropout, &mut rng)).collect());
            let (loss, grad) = batch_loss_grad(&network, &batch, masks.as_deref());
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ForecastError::NonFiniteLoss { epoch });
            }
            adam.step(&mut network.params, &grad);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}/{}: loss {mean:.6}", hp.epochs);
        loss_history.push(mean);
    }

    Ok(ForecastModel { hyperparams: hp.clone(), use_dow, normalizer, network, loss_history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{lstm::LayerShape, Activation};

    fn random_samples(rng: &mut ChaCha8Rng, n: usize, steps: usize, width: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| Sample {
                inputs: (0..steps).map(|_| (0..width).map(|_| rng.random_range(-1.5..1.5)).collect()).collect(),
                target: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences_tanh() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Network::new(8, &[(4, Activation::Tanh)], &mut rng);
            let samples = random_samples(&mut rng, 3, 3, 8);
            let err = gradient_check(&net, &samples, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn gradient_matches_two_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Network::new(14, &[(5, Activation::Tanh), (3, Activation::Tanh)], &mut rng);
        let samples = random_samples(&mut rng, 2, 3, 14);
        let err = gradient_check(&net, &samples, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    /// Pre-activations of every relu in the network stay clear of zero.
    fn clear_of_kinks(net: &Network, samples: &[Sample]) -> bool {
        samples.iter().all(|s| {
            let (_, cache) = net.forward(&s.inputs, None);
            cache.relu_inputs(net).iter().all(|x| x.abs() > 1e-3)
        })
    }

    #[test]
    fn gradient_matches_relu_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..500 {
            let net = Network::new(8, &[(4, Activation::Relu)], &mut rng);
            let samples = random_samples(&mut rng, 1, 3, 8);
            if !clear_of_kinks(&net, &samples) {
                continue;
            }
            let err = gradient_check(&net, &samples, 1e-5).unwrap();
            assert!(err < 1e-4, "{err}");
            checked += 1;
            if checked == 5 {
                break;
            }
        }
        assert_eq!(checked, 5);
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::new(8, &[(4, Activation::Tanh)], &mut rng);
        let mut samples = random_samples(&mut rng, 1, 3, 8);
        samples[0].target = net.predict(&samples[0].inputs).unwrap();
        let (loss, grad) = loss_and_gradient(&net, &samples).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| g.abs() < 1e-8));
    }

    #[test]
    fn rmse_loss_by_hand() {
        let net = Network::zeros(vec![LayerShape { input: 8, units: 2, act: Activation::Tanh }]);
        let s = Sample { inputs: vec![vec![0.0; 8]], target: [3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] };
        let (loss, _) = loss_and_gradient(&net, &[s]).unwrap();
        assert!((loss - (25.0f64 / 8.0).sqrt()).abs() < 1e-15);
    }

    fn sine_samples(n: usize) -> Vec<Sample> {
        let series: Vec<f64> = (0..n + 7).map(|t| (t as f64 * std::f64::consts::TAU / 7.0).sin()).collect();
        (0..n)
            .map(|i| Sample {
                inputs: (i..i + 7).map(|t| vec![series[t]; 8]).collect(),
                target: [series[i + 7]; 8],
            })
            .collect()
    }

    fn identity() -> Normalizer {
        Normalizer { mean: [0.0; 8], std: [1.0; 8] }
    }

    fn small_hp(epochs: usize) -> HyperParams {
        HyperParams { units1: 8, epochs, dropout: 0.04, ..HyperParams::default() }
    }

    #[test]
    fn loss_decreases_on_learnable_series() {
        let model = train_model(&sine_samples(100), &HyperParams { learning_rate: 1e-2, ..small_hp(30) }, identity(), false).unwrap();
        let h = &model.loss_history;
        assert_eq!(h.len(), 30);
        assert!(h.last().unwrap() < &h[0], "{h:?}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let samples = sine_samples(40);
        let a = train_model(&samples, &small_hp(3), identity(), false).unwrap();
        let b = train_model(&samples, &small_hp(3), identity(), false).unwrap();
        assert_eq!(a.network.params, b.network.params);
        let c = train_model(&samples, &HyperParams { seed: 1, ..small_hp(3) }, identity(), false).unwrap();
        assert_ne!(a.network.params, c.network.params);
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let samples = sine_samples(10);
        let model = train_model(&samples, &small_hp(0), identity(), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(model.network, Network::new(8, &[(8, Activation::Tanh)], &mut rng));
        assert!(model.loss_history.is_empty());
    }

    #[test]
    fn input_errors() {
        assert_eq!(train_model(&[], &small_hp(1), identity(), false), Err(ForecastError::NoSamples));
        let samples = sine_samples(5);
        assert!(matches!(train_model(&samples, &small_hp(1), identity(), true), Err(ForecastError::ShapeMismatch(_))));
        let bad = HyperParams { dropout: 1.0, ..small_hp(1) };
        assert!(matches!(train_model(&samples, &bad, identity(), false), Err(ForecastError::InvalidHyperParams(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let mut samples = sine_samples(5);
        samples[2].target[0] = f64::INFINITY;
        assert_eq!(train_model(&samples, &small_hp(2), identity(), false), Err(ForecastError::NonFiniteLoss { epoch: 1 }));
    }
}
