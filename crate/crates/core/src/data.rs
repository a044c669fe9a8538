//! Dataset ingestion, pairing, splitting, SNR remixing, and the synthetic
//! corpus generator used for desk-scale runs without the real recordings.
//!
//! The on-disk matrix format ("EDNB") is deliberately language-neutral:
//!
//! ```text
//! magic   4 bytes  b"EDNB"
//! rows    u32 little-endian
//! cols    u32 little-endian
//! payload rows*cols f64 little-endian, row-major
//! ```
//!
//! Every builder here is a pure function of its inputs and a seed, so a
//! dataset can be reconstructed exactly from its manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::{self, Epoch};

const MATRIX_MAGIC: &[u8; 4] = b"EDNB";

/// Integer SNR levels (dB) used to expand validation and test pairs.
pub const EVAL_SNR_LEVELS_DB: [i32; 10] = [-7, -6, -5, -4, -3, -2, -1, 0, 1, 2];

/// Default SNR range for training mixtures, in dB.
pub const TRAIN_SNR_RANGE_DB: (f64, f64) = (-7.0, 2.0);

/// Default number of times each training pair is remixed.
pub const TRAIN_REMIX_COUNT: usize = 10;

/// Rows are epochs, columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EpochMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value at row {} col {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_epoch(&self, r: usize, sample_rate: f64) -> Result<Epoch> {
        Epoch::new(self.row(r).to_vec(), sample_rate)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Ednb,
    Csv,
}

/// Write a matrix in EDNB format (bit-exact round trip).
pub fn save_matrix(m: &EpochMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + m.data.len() * 8);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(m.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn load_ednb(bytes: &[u8]) -> Result<EpochMatrix> {
    if bytes.len() < 12 {
        return Err(Error::format(
            "header",
            format!("file is {} bytes, header needs 12", bytes.len()),
        ));
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(Error::format("magic", "not an EDNB matrix file"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format("header", "rows*cols overflows"))?;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return Err(Error::format(
            "payload",
            format!(
                "expected {expected} payload bytes for {rows}x{cols}, found {} (offset 12)",
                payload.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                "payload",
                format!(
                    "non-finite value at row {} col {} (byte offset {})",
                    i / cols,
                    i % cols,
                    12 + i * 8
                ),
            ));
        }
        data.push(v);
    }
    EpochMatrix::new(rows, cols, data)
}

fn load_csv(text: &str) -> Result<EpochMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(Error::format(
                    format!("row {line_no}"),
                    format!("has {} columns, expected {c}", values.len()),
                ));
            }
            _ => {}
        }
        for (col, raw) in values.iter().enumerate() {
            let v: f64 = raw.trim().parse().map_err(|_| {
                Error::format(
                    format!("row {line_no} col {col}"),
                    format!("cannot parse {raw:?} as a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    format!("row {line_no} col {col}"),
                    "non-finite value",
                ));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::format("file", "no data rows"))?;
    EpochMatrix::new(rows, cols, data)
}

/// Load an epoch matrix from disk in the given format.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<EpochMatrix> {
    match format {
        MatrixFormat::Ednb => {
            let mut bytes = Vec::new();
            fs::File::open(path)?.read_to_end(&mut bytes)?;
            load_ednb(&bytes)
        }
        MatrixFormat::Csv => load_csv(&fs::read_to_string(path)?),
    }
}

/// Extend the EEG index list to the EMG count by reuse (sampling without
/// replacement until the pool is exhausted, then restarting), and pair it
/// 1:1 with a shuffled EMG index list. Every EMG epoch is used exactly once.
pub fn equalize_and_pair(
    eeg: &EpochMatrix,
    emg: &EpochMatrix,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if eeg.rows == 0 || emg.rows == 0 {
        return Err(Error::Length("pairing needs non-empty EEG and EMG matrices".into()));
    }
    if emg.rows < eeg.rows {
        return Err(Error::Length(format!(
            "pairing expects at least as many EMG epochs as EEG epochs ({} < {})",
            emg.rows, eeg.rows
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eeg_indices: Vec<usize> = (0..eeg.rows).collect();
    while eeg_indices.len() < emg.rows {
        let mut round: Vec<usize> = (0..eeg.rows).collect();
        round.shuffle(&mut rng);
        let need = emg.rows - eeg_indices.len();
        eeg_indices.extend(round.into_iter().take(need));
    }
    let mut emg_indices: Vec<usize> = (0..emg.rows).collect();
    emg_indices.shuffle(&mut rng);
    Ok(eeg_indices.into_iter().zip(emg_indices).collect())
}

/// Eight/one/one split of ten parts; odd remainders stay in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub seed: u64,
}

/// Seeded shuffle followed by contiguous slicing. One "part" is
/// `round(n/10)` pairs, so 5598 pairs split 4478/560/560.
#[allow(clippy::type_complexity)]
pub fn split_pairs(
    pairs: &[(usize, usize)],
    spec: SplitSpec,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let n = pairs.len();
    if n < 10 {
        return Err(Error::Length(format!("need at least 10 pairs to split, got {n}")));
    }
    let mut shuffled = pairs.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    shuffled.shuffle(&mut rng);
    let part = (n + 5) / 10;
    let train_end = n - 2 * part;
    let val_end = n - part;
    Ok((
        shuffled[..train_end].to_vec(),
        shuffled[train_end..val_end].to_vec(),
        shuffled[val_end..].to_vec(),
    ))
}

/// One normalized training/evaluation example plus everything needed to
/// reconstruct the mixture it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample {
    pub y_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub sigma_y: f64,
    pub snr_db: f64,
    pub eeg_index: usize,
    pub emg_index: usize,
}

/// A built dataset of normalized mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    pub examples: Vec<MixedExample>,
    pub epoch_len: usize,
    pub sample_rate: f64,
    /// Pairs dropped because their EMG epoch had zero RMS (or the mixture
    /// came out constant). Non-zero values deserve a look at the corpus.
    pub skipped_pairs: usize,
}

fn mix_and_normalize(
    eeg: &EpochMatrix,
    emg: &EpochMatrix,
    pair: (usize, usize),
    snr_db: f64,
    sample_rate: f64,
) -> Result<MixedExample> {
    let x = eeg.to_epoch(pair.0, sample_rate)?;
    let n = emg.to_epoch(pair.1, sample_rate)?;
    let (y, _lambda) = signal::mix(&x, &n, snr_db)?;
    let (y_hat, x_hat, sigma_y) = signal::normalize_pair(&y, &x)?;
    Ok(MixedExample {
        y_hat: y_hat.into_samples(),
        x_hat: x_hat.into_samples(),
        sigma_y,
        snr_db,
        eeg_index: pair.0,
        emg_index: pair.1,
    })
}

fn check_pair_matrices(eeg: &EpochMatrix, emg: &EpochMatrix) -> Result<()> {
    if eeg.cols != emg.cols {
        return Err(Error::Shape(format!(
            "EEG epochs have {} samples, EMG epochs {}",
            eeg.cols, emg.cols
        )));
    }
    Ok(())
}

/// Remix every training pair `remix_count` times at SNRs drawn uniformly
/// (continuously) from `snr_range`, normalizing each mixture.
pub fn build_training_set(
    eeg: &EpochMatrix,
    emg: &EpochMatrix,
    pairs: &[(usize, usize)],
    remix_count: usize,
    snr_range: (f64, f64),
    sample_rate: f64,
    seed: u64,
) -> Result<MixedDataset> {
    check_pair_matrices(eeg, emg)?;
    if remix_count == 0 {
        return Err(Error::Config("remix count must be >= 1".into()));
    }
    if !(snr_range.0 < snr_range.1) {
        return Err(Error::Config(format!(
            "SNR range must satisfy low < high, got [{}, {}]",
            snr_range.0, snr_range.1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(pairs.len() * remix_count);
    let mut skipped = 0usize;
    for &pair in pairs {
        // Draw the pair's SNRs unconditionally so skipping a degenerate
        // pair does not shift every later draw.
        let snrs: Vec<f64> = (0..remix_count)
            .map(|_| rng.random_range(snr_range.0..snr_range.1))
            .collect();
        if signal::rms_slice(emg.row(pair.1)) == 0.0 {
            skipped += 1;
            continue;
        }
        for snr_db in snrs {
            match mix_and_normalize(eeg, emg, pair, snr_db, sample_rate) {
                Ok(ex) => examples.push(ex),
                Err(Error::ConstantSignal(_)) | Err(Error::DegenerateNoise) => {
                    skipped += 1;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(MixedDataset {
        examples,
        epoch_len: eeg.cols,
        sample_rate,
        skipped_pairs: skipped,
    })
}

/// Mix every pair once at each integer SNR level, tagging examples with
/// their level so reports can group by it. 560 pairs become 5600 examples.
pub fn build_eval_set(
    eeg: &EpochMatrix,
    emg: &EpochMatrix,
    pairs: &[(usize, usize)],
    levels_db: &[i32],
    sample_rate: f64,
) -> Result<MixedDataset> {
    check_pair_matrices(eeg, emg)?;
    if levels_db.is_empty() {
        return Err(Error::Config("need at least one SNR level".into()));
    }
    let mut examples = Vec::with_capacity(pairs.len() * levels_db.len());
    let mut skipped = 0usize;
    for &pair in pairs {
        if signal::rms_slice(emg.row(pair.1)) == 0.0 {
            skipped += 1;
            continue;
        }
        let mut pair_examples = Vec::with_capacity(levels_db.len());
        let mut degenerate = false;
        for &level in levels_db {
            match mix_and_normalize(eeg, emg, pair, level as f64, sample_rate) {
                Ok(ex) => pair_examples.push(ex),
                Err(Error::ConstantSignal(_)) | Err(Error::DegenerateNoise) => {
                    degenerate = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if degenerate {
            skipped += 1;
        } else {
            examples.extend(pair_examples);
        }
    }
    Ok(MixedDataset {
        examples,
        epoch_len: eeg.cols,
        sample_rate,
        skipped_pairs: skipped,
    })
}

/// Synthetic stand-ins for the real corpus. EEG surrogates are sums of a
/// few low-frequency sinusoids (1-30 Hz, amplitudes weighted 1/f) plus a
/// little broadband noise; EMG surrogates are broadband noise band-limited
/// to 20-250 Hz in the frequency domain. All rows are unit-RMS.
pub fn synth_corpus(
    n_eeg: usize,
    n_emg: usize,
    length: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<(EpochMatrix, EpochMatrix)> {
    if n_eeg == 0 || n_emg == 0 {
        return Err(Error::Config("corpus sizes must be >= 1".into()));
    }
    if length < 8 {
        return Err(Error::Config(format!("epoch length {length} is too short")));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
    }
    let bin_width = sample_rate / length as f64;
    let eeg_lo = ((1.0 / bin_width).ceil() as usize).max(1);
    let eeg_hi = ((30.0 / bin_width).floor() as usize).min(length / 2);
    if eeg_lo > eeg_hi {
        return Err(Error::Config(
            "sample rate and length leave no PSD bins in the 1-30 Hz EEG band".into(),
        ));
    }
    // Tones sit on a coarse fixed grid of bins inside the band. A compact
    // shared dictionary keeps the denoising subspace identifiable from a
    // desk-sized corpus; a fine grid would need orders of magnitude more
    // training pairs.
    let n_grid = 4.min(eeg_hi - eeg_lo + 1);
    let eeg_bins: Vec<usize> = (0..n_grid)
        .map(|i| eeg_lo + i * (eeg_hi - eeg_lo) / (n_grid - 1).max(1))
        .collect();
    let nyquist = sample_rate / 2.0;
    let emg_band = (20.0, 250.0f64.min(nyquist));
    if emg_band.0 >= emg_band.1 {
        return Err(Error::Config(
            "sample rate leaves no room for the 20-250 Hz EMG band".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;

    let mut eeg_data = Vec::with_capacity(n_eeg * length);
    for _ in 0..n_eeg {
        let mut row = vec![0.0f64; length];
        let n_tones = rng.random_range(3..=6usize);
        for _ in 0..n_tones {
            // Bin-centered tones keep the surrogate spectrum clean; the
            // two-point phase set keeps the clean-signal subspace spanned
            // by one waveform per grid bin (signed), yet zero-mean.
            let bin = eeg_bins[rng.random_range(0..eeg_bins.len())];
            let freq = bin as f64 * bin_width;
            let amp = 1.0 / freq;
            let phase = if rng.random::<bool>() { 0.0 } else { std::f64::consts::PI };
            for (i, v) in row.iter_mut().enumerate() {
                *v += amp * (tau * bin as f64 * i as f64 / length as f64 + phase).sin();
            }
        }
        let tone_rms = signal::rms_slice(&row);
        let noise: Vec<f64> = (0..length).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let noise_rms = signal::rms_slice(&noise);
        if noise_rms > 0.0 {
            let scale = 0.02 * tone_rms / noise_rms;
            for (v, n) in row.iter_mut().zip(&noise) {
                *v += scale * n;
            }
        }
        normalize_unit_rms(&mut row)?;
        eeg_data.extend_from_slice(&row);
    }

    let mut emg_data = Vec::with_capacity(n_emg * length);
    for _ in 0..n_emg {
        let white: Vec<f64> = (0..length).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut spectrum = signal::dft(&white);
        for (k, c) in spectrum.iter_mut().enumerate() {
            // Mirror-symmetric mask keeps the inverse transform real.
            let f = (k.min(length - k)) as f64 * bin_width;
            if f < emg_band.0 || f > emg_band.1 {
                *c *= 0.0;
            }
        }
        signal::idft(&mut spectrum);
        let mut row: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
        normalize_unit_rms(&mut row)?;
        emg_data.extend_from_slice(&row);
    }

    Ok((
        EpochMatrix::new(n_eeg, length, eeg_data)?,
        EpochMatrix::new(n_emg, length, emg_data)?,
    ))
}

fn normalize_unit_rms(row: &mut [f64]) -> Result<()> {
    let r = signal::rms_slice(row);
    if r == 0.0 {
        return Err(Error::Numeric("surrogate epoch came out all-zero".into()));
    }
    for v in row.iter_mut() {
        *v /= r;
    }
    Ok(())
}

/// Where a built corpus lives and how it was generated. Stored as UTF-8
/// `key = value` lines with `#` comments; paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub eeg_path: PathBuf,
    pub emg_path: PathBuf,
    pub seed: u64,
    pub n_eeg: usize,
    pub n_emg: usize,
    pub epoch_len: usize,
    pub sample_rate: f64,
    pub snr_low: f64,
    pub snr_high: f64,
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = format!(
            "# epoch-matrix dataset manifest\n\
             eeg = {}\n\
             emg = {}\n\
             seed = {}\n\
             n_eeg = {}\n\
             n_emg = {}\n\
             length = {}\n\
             sample_rate = {}\n\
             snr_low = {}\n\
             snr_high = {}\n",
            self.eeg_path.display(),
            self.emg_path.display(),
            self.seed,
            self.n_eeg,
            self.n_emg,
            self.epoch_len,
            self.sample_rate,
            self.snr_low,
            self.snr_high,
        );
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let map = parse_key_values(&text);
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let get = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::Config(format!("manifest is missing key `{key}`")))
        };
        let parse_num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("manifest key `{key}` is not a number")))
        };
        Ok(Self {
            eeg_path: dir.join(get("eeg")?),
            emg_path: dir.join(get("emg")?),
            seed: parse_num("seed")? as u64,
            n_eeg: parse_num("n_eeg")? as usize,
            n_emg: parse_num("n_emg")? as usize,
            epoch_len: parse_num("length")? as usize,
            sample_rate: parse_num("sample_rate")?,
            snr_low: parse_num("snr_low")?,
            snr_high: parse_num("snr_high")?,
        })
    }
}

/// The three datasets the training protocol needs, built from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolDatasets {
    pub train: MixedDataset,
    pub val: MixedDataset,
    pub test: MixedDataset,
}

/// Derive a per-stage RNG seed from the run seed, so pairing, splitting,
/// and mixing consume independent, reproducible streams.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    crate::fnv1a64(&format!("{stage}#{seed}"))
}

/// Run the full dataset protocol: pair EEG with EMG epochs, split 8/1/1,
/// remix the training pairs `remix_count` times at uniform SNRs, and expand
/// the validation and test pairs once per integer SNR level.
pub fn build_protocol_datasets(
    eeg: &EpochMatrix,
    emg: &EpochMatrix,
    seed: u64,
    remix_count: usize,
    snr_range: (f64, f64),
    levels_db: &[i32],
    sample_rate: f64,
) -> Result<ProtocolDatasets> {
    let pairs = equalize_and_pair(eeg, emg, stage_seed(seed, "pairing"))?;
    let (train_pairs, val_pairs, test_pairs) =
        split_pairs(&pairs, SplitSpec { seed: stage_seed(seed, "split") })?;
    let train = build_training_set(
        eeg,
        emg,
        &train_pairs,
        remix_count,
        snr_range,
        sample_rate,
        stage_seed(seed, "mix"),
    )?;
    let val = build_eval_set(eeg, emg, &val_pairs, levels_db, sample_rate)?;
    let test = build_eval_set(eeg, emg, &test_pairs, levels_db, sample_rate)?;
    Ok(ProtocolDatasets { train, val, test })
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Later keys override earlier ones. Shared by manifests and config files.
pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
    }
    map
}
