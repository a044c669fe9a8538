//! Pure signal mathematics: RMS, SNR-controlled mixing, sigma-normalization,
//! power spectral density, and the three evaluation metrics (time-domain
//! relative RMSE, spectral relative RMSE, correlation coefficient).
//!
//! Conventions (documented so results are bit-reproducible):
//! - SNR is `10*log10(RMS(x)/RMS(lambda*n))` with the factor 10 applied to the
//!   RMS (amplitude) ratio, exactly as the mixing model defines it.
//! - Standard deviation is the population form (divide by `L`).
//! - The PSD is a plain one-sided rectangular-window periodogram of the whole
//!   epoch: `P[k] = |DFT(x)[k]|^2 / (fs*L)`, doubled for `0 < k < L/2`. No
//!   Welch averaging and no detrending, so Parseval holds exactly:
//!   `sum(P)*bin_width == mean(x^2)`.
//!
//! Every function here is pure and reentrant.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Epochs are 2 s long at 512 Hz unless a dataset says otherwise.
pub const DEFAULT_SAMPLE_RATE: f64 = 512.0;
pub const DEFAULT_EPOCH_LEN: usize = 1024;

/// One fixed-length single-channel signal segment, the unit of all
/// processing. Samples are amplitudes in microvolts.
///
/// Construction validates the invariants (non-empty, all samples finite,
/// positive sample rate), so holding an `Epoch` is proof they hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Epoch {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Length("epoch must contain at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {i}")));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// An epoch at the default 512 Hz rate.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, DEFAULT_SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Same-length, same-rate companion built from raw samples.
    fn like(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }
}

/// One-sided power spectral density of an epoch (uV^2/Hz per bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    power: Vec<f64>,
    bin_width: f64,
}

impl Psd {
    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Total power: `sum(P) * bin_width`. Equals the epoch's mean square.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width
    }

    /// Power in `[lo, hi]` Hz (bin centers, inclusive).
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.power
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * self.bin_width;
                f >= lo && f <= hi
            })
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.bin_width
    }
}

pub(crate) fn rms_slice(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub(crate) fn mean_slice(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation (divide by L, not L-1).
pub(crate) fn std_slice(x: &[f64]) -> f64 {
    let m = mean_slice(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Root mean square of an epoch. Zero iff all samples are zero.
pub fn rms(x: &Epoch) -> f64 {
    rms_slice(&x.samples)
}

fn check_same_shape(a: &Epoch, b: &Epoch) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "epoch lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::Shape(format!(
            "sample rates differ: {} Hz vs {} Hz",
            a.sample_rate, b.sample_rate
        )));
    }
    Ok(())
}

/// Scale for the artifact so that the mixture `x + lambda*n` attains the
/// requested SNR: `lambda = RMS(x) / (RMS(n) * 10^(snr_db/10))`.
pub fn lambda_for_snr(x: &Epoch, n: &Epoch, snr_db: f64) -> Result<f64> {
    let rn = rms(n);
    if rn == 0.0 {
        return Err(Error::DegenerateNoise);
    }
    Ok(rms(x) / (rn * 10f64.powf(snr_db / 10.0)))
}

/// Mix a clean epoch with an artifact epoch at the requested SNR.
/// Returns the mixture `y[i] = x[i] + lambda*n[i]` and the scale used.
pub fn mix(x: &Epoch, n: &Epoch, snr_db: f64) -> Result<(Epoch, f64)> {
    check_same_shape(x, n)?;
    let lambda = lambda_for_snr(x, n, snr_db)?;
    let y: Vec<f64> = x
        .samples
        .iter()
        .zip(&n.samples)
        .map(|(xi, ni)| xi + lambda * ni)
        .collect();
    Ok((x.like(y)?, lambda))
}

/// SNR in dB of a clean signal against an already-scaled artifact:
/// `10*log10(RMS(x)/RMS(scaled_noise))`.
pub fn snr_of(x: &Epoch, scaled_noise: &Epoch) -> Result<f64> {
    let rn = rms(scaled_noise);
    if rn == 0.0 {
        return Err(Error::DegenerateNoise);
    }
    Ok(10.0 * (rms(x) / rn).log10())
}

/// Divide both the noisy epoch and its clean counterpart by the noisy
/// epoch's (population) standard deviation. Returns `(y_hat, x_hat,
/// sigma_y)`; multiplying by `sigma_y` restores the original scale.
pub fn normalize_pair(y: &Epoch, x: &Epoch) -> Result<(Epoch, Epoch, f64)> {
    check_same_shape(y, x)?;
    let sigma = std_slice(&y.samples);
    if sigma == 0.0 {
        return Err(Error::ConstantSignal(
            "noisy epoch has zero standard deviation".into(),
        ));
    }
    let y_hat: Vec<f64> = y.samples.iter().map(|v| v / sigma).collect();
    let x_hat: Vec<f64> = x.samples.iter().map(|v| v / sigma).collect();
    Ok((y.like(y_hat)?, x.like(x_hat)?, sigma))
}

thread_local! {
    // rustfft's planner caches plans per length; keep one per thread so
    // repeated PSDs of equal-length epochs do not re-plan.
    static FFT_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FFT_PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(buf.len());
        fft.process(&mut buf);
    });
    buf
}

pub(crate) fn idft(buf: &mut [Complex64]) {
    let n = buf.len() as f64;
    FFT_PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_inverse(buf.len());
        fft.process(buf);
    });
    for v in buf.iter_mut() {
        *v /= n;
    }
}

/// One-sided periodogram of the whole epoch (see the module notes for the
/// exact estimator). Bin count is `floor(L/2) + 1`.
pub fn psd(x: &Epoch) -> Result<Psd> {
    let l = x.len();
    if l < 2 {
        return Err(Error::Length(format!("psd needs at least 2 samples, got {l}")));
    }
    let spectrum = dft(&x.samples);
    let n_bins = l / 2 + 1;
    let scale = 1.0 / (x.sample_rate * l as f64);
    let power: Vec<f64> = (0..n_bins)
        .map(|k| {
            let p = spectrum[k].norm_sqr() * scale;
            // Double interior bins; DC and (for even L) Nyquist appear once.
            if k > 0 && 2 * k < l {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    Ok(Psd {
        power,
        bin_width: x.sample_rate / l as f64,
    })
}

/// Relative root-mean-square error in the time domain:
/// `RMS(denoised - truth) / RMS(truth)`.
pub fn rrmse_t(denoised: &Epoch, truth: &Epoch) -> Result<f64> {
    check_same_shape(denoised, truth)?;
    let rt = rms(truth);
    if rt == 0.0 {
        return Err(Error::DegenerateTruth("reference epoch has zero RMS"));
    }
    let diff: f64 = denoised
        .samples
        .iter()
        .zip(&truth.samples)
        .map(|(d, t)| (d - t) * (d - t))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(diff.sqrt() / rt)
}

/// Relative root-mean-square error between the two one-sided PSDs,
/// treating the bin vectors like signals.
pub fn rrmse_f(denoised: &Epoch, truth: &Epoch) -> Result<f64> {
    check_same_shape(denoised, truth)?;
    let pd = psd(denoised)?;
    let pt = psd(truth)?;
    let rt = rms_slice(&pt.power);
    if rt == 0.0 {
        return Err(Error::DegenerateTruth("reference epoch has an all-zero PSD"));
    }
    let diff: Vec<f64> = pd
        .power
        .iter()
        .zip(&pt.power)
        .map(|(d, t)| d - t)
        .collect();
    Ok(rms_slice(&diff) / rt)
}

/// Pearson correlation coefficient, population form, computed two-pass
/// (mean subtraction first) to avoid catastrophic cancellation.
pub fn cc(denoised: &Epoch, truth: &Epoch) -> Result<f64> {
    check_same_shape(denoised, truth)?;
    let md = mean_slice(&denoised.samples);
    let mt = mean_slice(&truth.samples);
    let mut cov = 0.0;
    let mut var_d = 0.0;
    let mut var_t = 0.0;
    for (d, t) in denoised.samples.iter().zip(&truth.samples) {
        let dd = d - md;
        let dt = t - mt;
        cov += dd * dt;
        var_d += dd * dd;
        var_t += dt * dt;
    }
    if var_d == 0.0 {
        return Err(Error::ZeroVariance("denoised epoch"));
    }
    if var_t == 0.0 {
        return Err(Error::ZeroVariance("reference epoch"));
    }
    Ok((cov / (var_d * var_t).sqrt()).clamp(-1.0, 1.0))
}
