//! Finite-difference verification of the backward pass.
//!
//! Backprop gradients are compared against central differences of the MSE
//! loss, parameter group by parameter group (plus the input). Central
//! differences are only valid where the loss is locally smooth; if a ReLU
//! changes state between the two perturbed evaluations the check point sits
//! on a kink, so that index is skipped and counted rather than compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Layer, TapeState, Tensor2};
use crate::error::{Error, Result};
use crate::model::{build_fcnn_baseline, build_novel_cnn, LayerSpec, ModelGraph};
use crate::optim::mse_loss;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Maximum acceptable relative error.
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    /// Cap on indices checked per parameter group; 0 checks everything.
    pub max_checks_per_group: usize,
    /// Negate the analytic gradients first (negative control).
    pub corrupt_backward: bool,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            max_checks_per_group: 0,
            corrupt_backward: false,
        }
    }
}

/// Result for one parameter group.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn from_groups(groups: Vec<GroupCheck>, tolerance: f64) -> Self {
        let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
        Self {
            passed: max_rel_err < tolerance,
            groups,
            max_rel_err,
            tolerance,
        }
    }

    /// Merge per-seed reports of the same instance (max error, summed counts).
    pub fn merge(mut self, other: &GradCheckReport) -> GradCheckReport {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.checked += b.checked;
            a.skipped_kinks += b.skipped_kinks;
            a.max_rel_err = a.max_rel_err.max(b.max_rel_err);
        }
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.passed = self.max_rel_err < self.tolerance;
        self
    }
}

/// Two-regime error: relative where the gradients have magnitude, absolute
/// (floored denominator) where both are tiny.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Hash of the ReLU activation pattern for the most recent forward pass.
/// Two evaluations with different hashes straddle a kink.
fn relu_mask_sig(model: &ModelGraph, tape: &TapeState) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (i, layer) in model.layers().iter().enumerate() {
        if matches!(layer, Layer::Relu) {
            if let Some(input) = tape.layer_input(i) {
                for &v in input.data() {
                    h ^= u64::from(v > 0.0);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
    }
    h
}

fn loss_and_mask(
    model: &ModelGraph,
    input: &Tensor2,
    target: &[f64],
    tape: &mut TapeState,
) -> Result<(f64, u64)> {
    let out = model.forward(input, tape)?;
    let (loss, _) = mse_loss(out.data(), target)?;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss during gradient check".into()));
    }
    Ok((loss, relu_mask_sig(model, tape)))
}

/// Indices to probe: everything when the group is small (or the cap is 0),
/// otherwise an even stride across the group.
fn probe_indices(len: usize, cap: usize) -> Vec<usize> {
    if cap == 0 || len <= cap {
        (0..len).collect()
    } else {
        (0..cap).map(|i| i * len / cap).collect()
    }
}

/// Compare backprop against central finite differences for every parameter
/// group and the input of `model`, at the given input/target point.
pub fn gradcheck(
    model: &ModelGraph,
    input: &Tensor2,
    target: &[f64],
    settings: &GradCheckSettings,
) -> Result<GradCheckReport> {
    let mut work = model.clone();
    let mut tape = TapeState::new();

    // Analytic gradients at the unperturbed point.
    let out = work.forward(input, &mut tape)?;
    let (loss, loss_grad) = mse_loss(out.data(), target)?;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss during gradient check".into()));
    }
    let mut grads = work.backward(
        &Tensor2::new(out.channels(), out.len(), loss_grad)?,
        &mut tape,
    )?;
    if settings.corrupt_backward {
        grads.scale(-1.0);
    }

    let h = settings.step;
    let mut groups = Vec::new();

    for (name, group, len) in work.param_groups() {
        let analytic: Vec<f64> = {
            let g = &grads.layers[group.layer];
            if group.bias { g.bias.clone() } else { g.weights.clone() }
        };
        let mut check = GroupCheck {
            name,
            checked: 0,
            skipped_kinks: 0,
            max_rel_err: 0.0,
        };
        for i in probe_indices(len, settings.max_checks_per_group) {
            let orig = work.group_slice(group)[i];
            work.group_slice_mut(group)[i] = orig + h;
            let (lp, sp) = loss_and_mask(&work, input, target, &mut tape)?;
            work.group_slice_mut(group)[i] = orig - h;
            let (lm, sm) = loss_and_mask(&work, input, target, &mut tape)?;
            work.group_slice_mut(group)[i] = orig;
            if sp != sm {
                check.skipped_kinks += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            check.max_rel_err = check.max_rel_err.max(rel_err(fd, analytic[i]));
            check.checked += 1;
        }
        groups.push(check);
    }

    // Gradient with respect to the input.
    let mut check = GroupCheck {
        name: "input".into(),
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
    };
    let mut probe_input = input.clone();
    for i in probe_indices(input.data().len(), settings.max_checks_per_group) {
        let orig = probe_input.data()[i];
        probe_input.data_mut()[i] = orig + h;
        let (lp, sp) = loss_and_mask(&work, &probe_input, target, &mut tape)?;
        probe_input.data_mut()[i] = orig - h;
        let (lm, sm) = loss_and_mask(&work, &probe_input, target, &mut tape)?;
        probe_input.data_mut()[i] = orig;
        if sp != sm {
            check.skipped_kinks += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        check.max_rel_err = check.max_rel_err.max(rel_err(fd, grads.input.data()[i]));
        check.checked += 1;
    }
    groups.push(check);

    Ok(GradCheckReport::from_groups(groups, settings.tolerance))
}

/// A named model instance for the standard verification suite.
fn suite_instances() -> Vec<(&'static str, fn() -> Result<ModelGraph>)> {
    fn conv_only() -> Result<ModelGraph> {
        ModelGraph::build(vec![LayerSpec::Conv1d { channels_out: 5, kernel: 3 }], 17)
    }
    fn relu_only() -> Result<ModelGraph> {
        ModelGraph::build(vec![LayerSpec::Relu], 9)
    }
    fn pool_only() -> Result<ModelGraph> {
        ModelGraph::build(vec![LayerSpec::AvgPool2], 10)
    }
    fn dense_only() -> Result<ModelGraph> {
        build_fcnn_baseline(7, 0, 0)
    }
    fn conv_flatten_dense() -> Result<ModelGraph> {
        ModelGraph::build(
            vec![
                LayerSpec::Conv1d { channels_out: 3, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 6 },
            ],
            6,
        )
    }
    fn conv_relu_pool() -> Result<ModelGraph> {
        ModelGraph::build(
            vec![
                LayerSpec::Conv1d { channels_out: 3, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::AvgPool2,
                LayerSpec::Conv1d { channels_out: 4, kernel: 3 },
                LayerSpec::Relu,
            ],
            12,
        )
    }
    fn fcnn_small() -> Result<ModelGraph> {
        build_fcnn_baseline(16, 2, 16)
    }
    fn novel_cnn_scaled() -> Result<ModelGraph> {
        build_novel_cnn(128, 1.0 / 16.0)
    }
    vec![
        ("conv1d", conv_only),
        ("relu", relu_only),
        ("avgpool2", pool_only),
        ("dense", dense_only),
        ("conv_flatten_dense", conv_flatten_dense),
        ("conv_relu_pool", conv_relu_pool),
        ("fcnn_small", fcnn_small),
        ("novel_cnn_scaled", novel_cnn_scaled),
    ]
}

/// Run the standard gradient suite: every layer kind alone and in small
/// stacks, plus the width-scaled denoising CNN at input length 128, each
/// over `seeds` random (init, input, target) triples. Large groups are
/// probed at a capped, evenly-strided subset of indices.
pub fn gradcheck_suite(seeds: u64, settings: &GradCheckSettings) -> Result<Vec<(String, GradCheckReport)>> {
    let mut results = Vec::new();
    for (name, build) in suite_instances() {
        let mut merged: Option<GradCheckReport> = None;
        for seed in 0..seeds {
            let mut model = build()?;
            // Mix the instance name into the seed stream so instances do
            // not share initializations.
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for b in name.bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(h ^ seed);
            model.init_params(rng.random());
            let input = Tensor2::from_signal(
                &(0..model.input_len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>(),
            );
            let out_len = model.output_len();
            let target: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let report = gradcheck(&model, &input, &target, settings)?;
            merged = Some(match merged {
                Some(m) => m.merge(&report),
                None => report,
            });
        }
        results.push((name.to_string(), merged.expect("at least one seed")));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dense_layer_passes_tightly() {
        let mut model = build_fcnn_baseline(6, 0, 0).unwrap();
        model.init_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let input = Tensor2::from_signal(
            &(0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        );
        let target: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let settings = GradCheckSettings { tolerance: 1e-7, ..Default::default() };
        let report = gradcheck(&model, &input, &target, &settings).unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
        assert!(report.groups.iter().all(|g| g.skipped_kinks == 0));
    }

    #[test]
    fn conv_layer_matches_finite_differences() {
        let mut model =
            ModelGraph::build(vec![LayerSpec::Conv1d { channels_out: 4, kernel: 3 }], 11).unwrap();
        model.init_params(8);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let input = Tensor2::from_signal(
            &(0..11).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        );
        let target: Vec<f64> = (0..44).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = gradcheck(&model, &input, &target, &GradCheckSettings::default()).unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_backward_fails() {
        let mut model = build_fcnn_baseline(6, 1, 5).unwrap();
        model.init_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let input = Tensor2::from_signal(
            &(0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        );
        let target: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let settings = GradCheckSettings { corrupt_backward: true, ..Default::default() };
        let report = gradcheck(&model, &input, &target, &settings).unwrap();
        assert!(!report.passed);
        assert!(report.max_rel_err > 1.0);
    }

    #[test]
    fn probe_indices_cover_or_stride() {
        assert_eq!(probe_indices(5, 0), vec![0, 1, 2, 3, 4]);
        assert_eq!(probe_indices(3, 8), vec![0, 1, 2]);
        let strided = probe_indices(100, 4);
        assert_eq!(strided, vec![0, 25, 50, 75]);
    }
}
