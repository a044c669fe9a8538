//! Error types shared by every module in the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
///
/// Variants map onto the CLI's stable exit-code contract: configuration
/// problems are usage errors (exit 1), data and format problems are data
/// errors (exit 2), and runtime numeric failures are exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input was empty or shorter than the operation requires.
    #[error("length error: {0}")]
    Length(String),

    /// Dimensions of two operands (or a model and its input) disagree.
    #[error("shape error: {0}")]
    Shape(String),

    /// The artifact epoch has zero RMS, so no mixing scale can attain
    /// the requested SNR.
    #[error("degenerate noise: artifact epoch has zero RMS")]
    DegenerateNoise,

    /// The reference signal is unusable as a denominator (zero RMS or
    /// an all-zero spectrum).
    #[error("degenerate truth: {0}")]
    DegenerateTruth(&'static str),

    /// Correlation is undefined when either signal has zero variance.
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    /// The signal is constant, so sigma-normalization is undefined.
    #[error("constant signal: {0}")]
    ConstantSignal(String),

    /// Backward was called without a matching forward, or the tape was
    /// already consumed.
    #[error("tape error: {0}")]
    Tape(&'static str),

    /// A loss, gradient, or parameter stopped being finite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A file failed structural validation; `field` names the offending
    /// part of the format.
    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    /// Invalid configuration value or manifest entry.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
