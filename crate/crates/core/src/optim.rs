//! MSE loss, the RMSprop optimizer, the mini-batch training loop, and the
//! sigma-restore denoising path.
//!
//! Training is fully deterministic given `(seed, config, dataset)`: the
//! shuffle order, batch boundaries, and gradient reduction order are all
//! fixed, so two runs produce bit-identical parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::MixedDataset;
use crate::engine::{Gradients, TapeState, Tensor2};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::signal::{std_slice, Epoch};

/// Mean squared error and its gradient with respect to the prediction:
/// `loss = mean((pred-target)^2)`, `grad = (2/N)(pred-target)`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// Training hyperparameters. Defaults follow the full-scale protocol:
/// 50 epochs, batch 40, RMSprop with `alpha = 5e-5`, `beta = 0.9`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 40,
            alpha: 5e-5,
            beta: 0.9,
            epsilon: 1e-7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        // alpha = 0 is allowed: it freezes the parameters, which is a
        // useful smoke test, and the loop stays well defined.
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must be in [0, 1), got {}", self.beta)));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-parameter squared-gradient accumulators, shaped like the model.
#[derive(Debug, Clone)]
pub struct RmspropState {
    acc: Vec<(Vec<f64>, Vec<f64>)>,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl RmspropState {
    pub fn new(model: &ModelGraph, alpha: f64, beta: f64, epsilon: f64) -> Self {
        let acc = model
            .layers()
            .iter()
            .map(|l| {
                l.params()
                    .map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()]))
                    .unwrap_or_default()
            })
            .collect();
        Self { acc, alpha, beta, epsilon }
    }

    pub fn from_config(model: &ModelGraph, config: &TrainConfig) -> Self {
        Self::new(model, config.alpha, config.beta, config.epsilon)
    }
}

/// One elementwise RMSprop update:
/// `a <- beta*a + (1-beta)*g^2; w <- w - alpha*g/(sqrt(a)+eps)`.
fn rmsprop_update(params: &mut [f64], grads: &[f64], acc: &mut [f64], alpha: f64, beta: f64, epsilon: f64) {
    for ((w, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = beta * *a + (1.0 - beta) * g * g;
        if g != 0.0 {
            *w -= alpha * g / (a.sqrt() + epsilon);
        }
    }
}

/// Apply one optimizer step to every parameter group of the model.
/// A non-finite gradient aborts the step and names the offending group.
pub fn rmsprop_step(model: &mut ModelGraph, grads: &Gradients, state: &mut RmspropState) -> Result<()> {
    for (name, group, _) in model.param_groups() {
        let g = &grads.layers[group.layer];
        let gvals = if group.bias { &g.bias } else { &g.weights };
        if gvals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in {name}")));
        }
    }
    let (alpha, beta, epsilon) = (state.alpha, state.beta, state.epsilon);
    for ((layer, acc), grad) in model
        .layers_mut()
        .iter_mut()
        .zip(state.acc.iter_mut())
        .zip(&grads.layers)
    {
        if let Some((w, b)) = layer.params_mut() {
            rmsprop_update(w, &grad.weights, &mut acc.0, alpha, beta, epsilon);
            rmsprop_update(b, &grad.bias, &mut acc.1, alpha, beta, epsilon);
        }
    }
    Ok(())
}

/// Per-epoch mean losses for the training and held-out sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

impl LossCurve {
    /// `epoch,train_loss,val_loss` rows; `meta_lines` become `#` comments.
    pub fn to_csv(&self, meta_lines: &[String]) -> String {
        let mut out = String::new();
        for line in meta_lines {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train.iter().zip(&self.val).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, t, v));
        }
        out
    }
}

fn example_loss(model: &ModelGraph, y_hat: &[f64], x_hat: &[f64]) -> Result<f64> {
    let out = model.forward_inference(&Tensor2::from_signal(y_hat))?;
    Ok(mse_loss(out.data(), x_hat)?.0)
}

/// Mean loss of the model over a dataset, without touching parameters.
pub fn mean_loss(model: &ModelGraph, set: &MixedDataset) -> Result<f64> {
    if set.examples.is_empty() {
        return Err(Error::Length("cannot evaluate loss on an empty dataset".into()));
    }
    let mut total = 0.0;
    for ex in &set.examples {
        total += example_loss(model, &ex.y_hat, &ex.x_hat)?;
    }
    Ok(total / set.examples.len() as f64)
}

/// Mini-batch training. Shuffles the training examples each epoch with a
/// seeded RNG, averages gradients over each batch, applies RMSprop, and
/// records the mean train loss plus the held-out loss after every epoch.
pub fn train(
    model: &mut ModelGraph,
    train_set: &MixedDataset,
    val_set: &MixedDataset,
    config: &TrainConfig,
) -> Result<LossCurve> {
    config.validate()?;
    if train_set.examples.is_empty() {
        return Err(Error::Length("training set is empty".into()));
    }
    if train_set.epoch_len != model.input_len() {
        return Err(Error::Shape(format!(
            "model expects length {}, dataset has {}",
            model.input_len(),
            train_set.epoch_len
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = RmspropState::from_config(model, config);
    let mut curve = LossCurve::default();
    let mut order: Vec<usize> = (0..train_set.examples.len()).collect();
    let mut tape = TapeState::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut summed: Option<Gradients> = None;
            for &i in batch {
                let ex = &train_set.examples[i];
                let input = Tensor2::from_signal(&ex.y_hat);
                let out = model.forward(&input, &mut tape)?;
                let (loss, grad) = mse_loss(out.data(), &ex.x_hat)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {} batch {batch_idx}",
                        epoch + 1
                    )));
                }
                epoch_loss += loss;
                let grads =
                    model.backward(&Tensor2::new(out.channels(), out.len(), grad)?, &mut tape)?;
                match summed.as_mut() {
                    Some(s) => s.add_assign(&grads),
                    None => summed = Some(grads),
                }
            }
            let mut grads = summed.expect("batches are non-empty");
            grads.scale(1.0 / batch.len() as f64);
            rmsprop_step(model, &grads, &mut state)?;
        }
        if !model.all_params_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameter after epoch {}",
                epoch + 1
            )));
        }
        curve.train.push(epoch_loss / train_set.examples.len() as f64);
        curve.val.push(mean_loss(model, val_set)?);
    }
    Ok(curve)
}

/// Denoise one epoch: divide by its standard deviation, run the network,
/// multiply the output back to the original scale.
pub fn denoise(model: &ModelGraph, noisy: &Epoch) -> Result<Epoch> {
    if noisy.len() != model.input_len() {
        return Err(Error::Shape(format!(
            "model expects length {}, epoch has {}",
            model.input_len(),
            noisy.len()
        )));
    }
    let sigma = std_slice(noisy.samples());
    if sigma == 0.0 {
        return Err(Error::ConstantSignal(
            "cannot denoise a constant epoch (zero standard deviation)".into(),
        ));
    }
    let normalized: Vec<f64> = noisy.samples().iter().map(|v| v / sigma).collect();
    let out = model.forward_inference(&Tensor2::from_signal(&normalized))?;
    let restored: Vec<f64> = out.data().iter().map(|v| v * sigma).collect();
    Epoch::new(restored, noisy.sample_rate())
}

/// Denoise every row of a matrix. Row errors name the offending row.
pub fn denoise_matrix(
    model: &ModelGraph,
    input: &crate::data::EpochMatrix,
    sample_rate: f64,
) -> Result<crate::data::EpochMatrix> {
    if input.cols() != model.input_len() {
        return Err(Error::Shape(format!(
            "model expects {} columns, matrix has {}",
            model.input_len(),
            input.cols()
        )));
    }
    let mut out = Vec::with_capacity(input.rows() * input.cols());
    for r in 0..input.rows() {
        let epoch = input.to_epoch(r, sample_rate)?;
        let denoised = denoise(model, &epoch).map_err(|e| match e {
            Error::ConstantSignal(msg) => Error::ConstantSignal(format!("row {r}: {msg}")),
            other => other,
        })?;
        out.extend_from_slice(denoised.samples());
    }
    crate::data::EpochMatrix::new(input.rows(), input.cols(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fcnn_baseline, build_novel_cnn};

    #[test]
    fn mse_loss_hand_values() {
        let (loss, grad) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0, 0.0]);

        let (loss, grad) = mse_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad, vec![1.0, 1.0]);

        assert!(matches!(
            mse_loss(&[1.0], &[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mse_grad_matches_finite_differences() {
        let pred = [0.3, -1.2, 2.0, 0.0];
        let target = [0.1, 0.4, -0.5, 1.0];
        let (_, grad) = mse_loss(&pred, &target).unwrap();
        let h = 1e-7;
        for i in 0..pred.len() {
            let mut plus = pred;
            let mut minus = pred;
            plus[i] += h;
            minus[i] -= h;
            let fd = (mse_loss(&plus, &target).unwrap().0 - mse_loss(&minus, &target).unwrap().0)
                / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "component {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn rmsprop_hand_computed_steps() {
        // Step 1: w=0, g=1, a=0, alpha=0.1, beta=0.9, eps=0
        //   a' = 0.1, w' = -0.1/sqrt(0.1)
        let mut w = vec![0.0];
        let mut a = vec![0.0];
        rmsprop_update(&mut w, &[1.0], &mut a, 0.1, 0.9, 0.0);
        assert!((a[0] - 0.1).abs() < 1e-15);
        assert!((w[0] + 0.1 / 0.1f64.sqrt()).abs() < 1e-10);
        assert!((w[0] + 0.31622776601).abs() < 1e-10);
        // Step 2 with the same g: a'' = 0.9*0.1 + 0.1 = 0.19,
        //   step = 0.1/sqrt(0.19) = 0.1/0.43589 = 0.22942
        rmsprop_update(&mut w, &[1.0], &mut a, 0.1, 0.9, 0.0);
        assert!((a[0] - 0.19).abs() < 1e-15);
        let expected = -0.31622776601 - 0.1 / 0.19f64.sqrt();
        assert!((w[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn rmsprop_zero_gradient_leaves_params_untouched() {
        let mut model = build_fcnn_baseline(4, 1, 3).unwrap();
        model.init_params(2);
        let before = model.clone();
        let mut state = RmspropState::new(&model, 0.1, 0.9, 1e-7);
        // seed the accumulators, then feed zero gradients
        let grads_zero = Gradients {
            layers: model
                .layers()
                .iter()
                .map(|l| {
                    let (w, b) = l.params().map(|(w, b)| (w.len(), b.len())).unwrap_or((0, 0));
                    crate::engine::LayerGrads {
                        weights: vec![0.0; w],
                        bias: vec![0.0; b],
                    }
                })
                .collect(),
            input: Tensor2::zeros(1, 4),
        };
        rmsprop_step(&mut model, &grads_zero, &mut state).unwrap();
        assert_eq!(model, before);
        // accumulators decayed by beta but stay >= 0
        assert!(state.acc.iter().all(|(w, b)| w.iter().chain(b).all(|v| *v >= 0.0)));
    }

    #[test]
    fn rmsprop_rejects_non_finite_gradient() {
        let mut model = build_fcnn_baseline(2, 0, 0).unwrap();
        model.init_params(1);
        let mut state = RmspropState::new(&model, 0.1, 0.9, 1e-7);
        let mut layers: Vec<crate::engine::LayerGrads> = model
            .layers()
            .iter()
            .map(|l| {
                let (w, b) = l.params().map(|(w, b)| (w.len(), b.len())).unwrap_or((0, 0));
                crate::engine::LayerGrads {
                    weights: vec![0.0; w],
                    bias: vec![0.0; b],
                }
            })
            .collect();
        layers[0].weights[1] = f64::NAN;
        let grads = Gradients {
            layers,
            input: Tensor2::zeros(1, 2),
        };
        match rmsprop_step(&mut model, &grads, &mut state) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("layer0.dense.weight")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { alpha: 0.0, ..Default::default() }.validate().is_ok());
        assert!(TrainConfig { beta: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn denoise_identity_model_returns_input() {
        // Dense 8->8 identity with zero bias: f(y_hat) = y_hat, so the
        // sigma-restore path must reproduce the input exactly.
        let mut model = build_fcnn_baseline(8, 0, 0).unwrap();
        if let crate::engine::Layer::Dense(d) = &mut model.layers_mut()[0] {
            for i in 0..8 {
                d.weights[i * 8 + i] = 1.0;
            }
        }
        let noisy = Epoch::from_samples(vec![3.0, -1.0, 2.0, 0.5, -2.0, 1.5, 0.0, 4.0]).unwrap();
        let out = denoise(&model, &noisy).unwrap();
        for (a, b) in out.samples().iter().zip(noisy.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn denoise_linear_model_scales_homogeneously() {
        let mut model = build_fcnn_baseline(4, 0, 0).unwrap();
        model.init_params(9);
        let base = Epoch::from_samples(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let out1 = denoise(&model, &base).unwrap();
        let scaled = Epoch::from_samples(base.samples().iter().map(|v| 2.5 * v).collect()).unwrap();
        let out2 = denoise(&model, &scaled).unwrap();
        for (a, b) in out2.samples().iter().zip(out1.samples()) {
            assert!((a - 2.5 * b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn denoise_rejects_constant_and_wrong_length() {
        let model = build_fcnn_baseline(4, 0, 0).unwrap();
        let flat = Epoch::from_samples(vec![2.0; 4]).unwrap();
        assert!(matches!(denoise(&model, &flat), Err(Error::ConstantSignal(_))));
        let wrong = Epoch::from_samples(vec![1.0; 5]).unwrap();
        assert!(matches!(denoise(&model, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn denoise_matrix_names_constant_rows() {
        let mut model = build_fcnn_baseline(4, 0, 0).unwrap();
        model.init_params(2);
        let m = crate::data::EpochMatrix::new(
            2,
            4,
            vec![1.0, -2.0, 0.5, 3.0, 7.0, 7.0, 7.0, 7.0],
        )
        .unwrap();
        match denoise_matrix(&model, &m, 512.0) {
            Err(Error::ConstantSignal(msg)) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("expected constant-signal error, got {other:?}"),
        }
        // shape mismatch
        let wrong = crate::data::EpochMatrix::new(1, 5, vec![1.0; 5]).unwrap();
        assert!(matches!(
            denoise_matrix(&model, &wrong, 512.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn novel_cnn_forward_output_length_matches_input() {
        let mut model = build_novel_cnn(128, 1.0 / 16.0).unwrap();
        model.init_params(3);
        let input = Tensor2::from_signal(&(0..128).map(|i| (i as f64 * 0.1).sin()).collect::<Vec<_>>());
        let out = model.forward_inference(&input).unwrap();
        assert_eq!(out.len(), 128);
        assert!(out.all_finite());
    }
}
