use thiserror::Error;

/// Everything that can go wrong across the estimation pipeline.
///
/// The variants are deliberately coarse: callers (in particular the CLI exit
/// code mapping and the Monte Carlo failure tallies) dispatch on the *kind*
/// of failure, not on message contents.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: dimension mismatches, non-finite values,
    /// unparseable cells, unknown column names.
    #[error("invalid input: {0}")]
    Input(String),

    /// Data that is structurally fine but cannot support the requested fit,
    /// e.g. an empty observed subsample or a single-class outcome.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Design matrix is (numerically) rank deficient.
    #[error("singular design: column {col} ({label}) is linearly dependent on earlier columns")]
    SingularDesign { col: usize, label: String },

    /// IRLS ran out of iterations. Carries the last iterate so callers can
    /// inspect how far the fit got.
    #[error("no convergence after {iterations} iterations (max |score| = {max_abs_score:.3e})")]
    NonConvergence {
        iterations: usize,
        max_abs_score: f64,
        last_coef: Vec<f64>,
    },

    /// Coefficients ran away, the classic signature of (quasi-)complete
    /// separation. Anything past the bound is numerically saturated anyway.
    #[error("separation suspected: |coef|_inf = {coef_inf_norm:.4e} exceeded {bound}")]
    Separation { coef_inf_norm: f64, bound: f64 },

    /// The selection-effect coefficient cannot be inverted to a finite
    /// missingness log odds ratio.
    #[error(
        "selection effect not identified: gamma_hat = {gamma_hat:.6} (se {gamma_se:.3}) \
         is >= 1, so delta_y has no finite solution"
    )]
    Identification { gamma_hat: f64, gamma_se: f64 },

    /// A numeric operation left its domain (log of a non-positive value, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A conditioning event required by an exact computation has probability
    /// 0 or 1, so the conditional is undefined.
    #[error("degenerate conditioning event: {0}")]
    DegenerateCondition(String),

    /// Too many replicates of a resampling procedure failed for the summary
    /// to mean anything.
    #[error("replication failure: {0}")]
    McFailure(String),

    /// Wrapper locating a failure within the three-step correction, so that
    /// surfaced messages name the step that died.
    #[error("step {step} ({name}) failed: {source}")]
    Step {
        step: u8,
        name: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable tag for failure tallies; unwraps step wrappers.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::DegenerateData(_) => "degenerate-data",
            Error::SingularDesign { .. } => "singular-design",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Separation { .. } => "separation",
            Error::Identification { .. } => "identification",
            Error::Numerical(_) => "numerical",
            Error::DegenerateCondition(_) => "degenerate-condition",
            Error::McFailure(_) => "replication-failure",
            Error::Step { source, .. } => source.kind(),
        }
    }

    /// Tag an error with the correction step it occurred in.
    pub(crate) fn in_step(self, step: u8, name: &'static str) -> Error {
        Error::Step { step, name, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
