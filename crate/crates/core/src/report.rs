//! Per-SNR-level evaluation reports: the three metrics for the model output
//! and for the untouched noisy input (the baseline any denoiser must beat).

use crate::data::{MixedDataset, MixedExample};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::optim::denoise;
use crate::signal::{cc, rrmse_f, rrmse_t, Epoch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

/// Mean and spread of the three metrics over a set of examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub rrmse_t: MeanStd,
    pub rrmse_f: MeanStd,
    pub cc: MeanStd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelMetrics {
    pub snr_db: f64,
    pub n: usize,
    pub denoised: MetricSummary,
    pub noisy: MetricSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub levels: Vec<LevelMetrics>,
    pub overall_denoised: MetricSummary,
    pub overall_noisy: MetricSummary,
    pub n_examples: usize,
}

struct ExampleMetrics {
    snr_db: f64,
    denoised: [f64; 3],
    noisy: [f64; 3],
}

fn summarize(rows: &[&ExampleMetrics], pick: fn(&ExampleMetrics) -> [f64; 3]) -> MetricSummary {
    let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| pick(r)[i]).collect() };
    MetricSummary {
        rrmse_t: mean_std(&col(0)),
        rrmse_f: mean_std(&col(1)),
        cc: mean_std(&col(2)),
    }
}

/// Evaluate an arbitrary denoiser over a mixed dataset. The closure maps a
/// normalized example to the network output `f(y_hat)` (still normalized);
/// the sigma-restore happens here. Results are grouped by SNR tag.
pub fn evaluate_with<F>(set: &MixedDataset, mut denoiser: F) -> Result<MetricsReport>
where
    F: FnMut(&MixedExample) -> Result<Vec<f64>>,
{
    if set.examples.is_empty() {
        return Err(Error::Length("cannot evaluate an empty dataset".into()));
    }
    let fs = set.sample_rate;
    let mut rows = Vec::with_capacity(set.examples.len());
    for ex in &set.examples {
        let truth = Epoch::new(ex.x_hat.iter().map(|v| v * ex.sigma_y).collect(), fs)?;
        let noisy = Epoch::new(ex.y_hat.iter().map(|v| v * ex.sigma_y).collect(), fs)?;
        let out = denoiser(ex)?;
        if out.len() != ex.x_hat.len() {
            return Err(Error::Shape(format!(
                "denoiser returned length {}, expected {}",
                out.len(),
                ex.x_hat.len()
            )));
        }
        let denoised = Epoch::new(out.iter().map(|v| v * ex.sigma_y).collect(), fs)?;
        rows.push(ExampleMetrics {
            snr_db: ex.snr_db,
            denoised: [
                rrmse_t(&denoised, &truth)?,
                rrmse_f(&denoised, &truth)?,
                cc(&denoised, &truth)?,
            ],
            noisy: [
                rrmse_t(&noisy, &truth)?,
                rrmse_f(&noisy, &truth)?,
                cc(&noisy, &truth)?,
            ],
        });
    }

    let mut level_tags: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
    level_tags.sort_by(f64::total_cmp);
    level_tags.dedup();

    let levels = level_tags
        .into_iter()
        .map(|tag| {
            let members: Vec<&ExampleMetrics> = rows.iter().filter(|r| r.snr_db == tag).collect();
            LevelMetrics {
                snr_db: tag,
                n: members.len(),
                denoised: summarize(&members, |r| r.denoised),
                noisy: summarize(&members, |r| r.noisy),
            }
        })
        .collect();

    let all: Vec<&ExampleMetrics> = rows.iter().collect();
    Ok(MetricsReport {
        levels,
        overall_denoised: summarize(&all, |r| r.denoised),
        overall_noisy: summarize(&all, |r| r.noisy),
        n_examples: rows.len(),
    })
}

/// Evaluate a trained model: run each example's normalized input through
/// the sigma-restore path and compare against the clean epoch.
pub fn evaluate_model(model: &ModelGraph, set: &MixedDataset) -> Result<MetricsReport> {
    let fs = set.sample_rate;
    evaluate_with(set, |ex| {
        let noisy = Epoch::new(ex.y_hat.iter().map(|v| v * ex.sigma_y).collect(), fs)?;
        let out = denoise(model, &noisy)?;
        // Back to normalized units; evaluate_with restores sigma itself.
        Ok(out.samples().iter().map(|v| v / ex.sigma_y).collect())
    })
}

/// Render a report as CSV. `meta_lines` become leading `#` comments; one
/// row per SNR level plus an `all` row.
pub fn render_report_csv(report: &MetricsReport, meta_lines: &[String]) -> String {
    let mut out = String::new();
    for line in meta_lines {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(
        "snr_db,n,rrmse_t_mean,rrmse_t_std,rrmse_f_mean,rrmse_f_std,cc_mean,cc_std,\
         noisy_rrmse_t_mean,noisy_rrmse_t_std,noisy_rrmse_f_mean,noisy_rrmse_f_std,\
         noisy_cc_mean,noisy_cc_std\n",
    );
    let row = |label: &str, n: usize, d: &MetricSummary, b: &MetricSummary| {
        format!(
            "{label},{n},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            d.rrmse_t.mean,
            d.rrmse_t.std,
            d.rrmse_f.mean,
            d.rrmse_f.std,
            d.cc.mean,
            d.cc.std,
            b.rrmse_t.mean,
            b.rrmse_t.std,
            b.rrmse_f.mean,
            b.rrmse_f.std,
            b.cc.mean,
            b.cc.std
        )
    };
    for level in &report.levels {
        out.push_str(&row(
            &format!("{}", level.snr_db),
            level.n,
            &level.denoised,
            &level.noisy,
        ));
    }
    out.push_str(&row(
        "all",
        report.n_examples,
        &report.overall_denoised,
        &report.overall_noisy,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_eval_set, equalize_and_pair, synth_corpus, EVAL_SNR_LEVELS_DB};

    fn small_eval_set() -> MixedDataset {
        let (eeg, emg) = synth_corpus(4, 4, 64, 512.0, 50).unwrap();
        let pairs = equalize_and_pair(&eeg, &emg, 51).unwrap();
        build_eval_set(&eeg, &emg, &pairs, &EVAL_SNR_LEVELS_DB, 512.0).unwrap()
    }

    #[test]
    fn identity_stub_equals_noisy_baseline() {
        let set = small_eval_set();
        let report = evaluate_with(&set, |ex| Ok(ex.y_hat.clone())).unwrap();
        for level in &report.levels {
            assert!((level.denoised.rrmse_t.mean - level.noisy.rrmse_t.mean).abs() < 1e-12);
            assert!((level.denoised.cc.mean - level.noisy.cc.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_stub_is_perfect_at_every_level() {
        let set = small_eval_set();
        let report = evaluate_with(&set, |ex| Ok(ex.x_hat.clone())).unwrap();
        for level in &report.levels {
            assert!(level.denoised.rrmse_t.mean < 1e-9);
            assert!(level.denoised.rrmse_f.mean < 1e-9);
            assert!((level.denoised.cc.mean - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn levels_partition_the_set() {
        let set = small_eval_set();
        let report = evaluate_with(&set, |ex| Ok(ex.y_hat.clone())).unwrap();
        assert_eq!(report.levels.len(), 10);
        assert_eq!(report.levels.iter().map(|l| l.n).sum::<usize>(), report.n_examples);
        // levels come out sorted
        for pair in report.levels.windows(2) {
            assert!(pair[0].snr_db < pair[1].snr_db);
        }
    }

    #[test]
    fn noisy_baseline_tracks_snr() {
        // At lower SNR the noisy input is farther from the truth, so its
        // time-domain error must fall monotonically as SNR rises.
        let set = small_eval_set();
        let report = evaluate_with(&set, |ex| Ok(ex.y_hat.clone())).unwrap();
        for pair in report.levels.windows(2) {
            assert!(pair[0].noisy.rrmse_t.mean > pair[1].noisy.rrmse_t.mean);
        }
        // RMS(lambda*n)/RMS(x) = 10^(-snr/10) exactly, per the mixing model,
        // so the noisy baseline is known in closed form.
        for level in &report.levels {
            let expected = 10f64.powf(-level.snr_db / 10.0);
            let got = level.noisy.rrmse_t.mean;
            assert!(
                (got - expected).abs() / expected < 1e-9,
                "level {}: rrmse_t {} vs closed form {}",
                level.snr_db,
                got,
                expected
            );
        }
    }

    #[test]
    fn csv_has_level_rows_and_overall() {
        let set = small_eval_set();
        let report = evaluate_with(&set, |ex| Ok(ex.y_hat.clone())).unwrap();
        let csv = render_report_csv(&report, &["seed = 1".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# seed = 1");
        assert!(lines[1].starts_with("snr_db,"));
        assert_eq!(lines.len(), 2 + 10 + 1);
        assert!(lines[2].starts_with("-7,"));
        assert!(lines.last().unwrap().starts_with("all,"));
    }
}
