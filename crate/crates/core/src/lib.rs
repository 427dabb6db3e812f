//! Evidential traversability learning and risk-aware navigation on uneven
//! terrain.
//!
//! The crate covers the full loop at desk scale: discrete traversability
//! distributions with CVaR tail statistics, evidential losses over Dirichlet
//! concentrations with exact gradients, a minimal trainable network stack
//! (MLP encoder/decoders, affine-coupling flow density, Adam), closed-form
//! physics priors, a synthetic 2.5D terrain simulator for self-supervised
//! data collection, an evidential traversability predictor, and a
//! CVaR-constrained MPPI planner, plus a benchmark harness driven by the
//! `evtrav` binary.

pub mod bench;
pub mod config;
pub mod dist;
pub mod losses;
pub mod nn;
pub mod physics;
pub mod planner;
pub mod predictor;
pub mod sim;
pub mod special;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violates an operation's preconditions.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    /// Training produced a non-finite loss or activation.
    #[error("training fault: {0}")]
    Training(String),
    /// A pipeline stage is missing an upstream artifact.
    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// The four traversability parameters predicted per terrain feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TravParam {
    /// Achieved/commanded linear velocity ratio, in [0, 1].
    LinearTraction,
    /// Achieved/commanded angular velocity ratio, in [0, 1].
    AngularTraction,
    /// Absolute roll angle, radians, >= 0.
    Roll,
    /// Absolute pitch angle, radians, >= 0.
    Pitch,
}

impl TravParam {
    pub const ALL: [TravParam; 4] = [
        TravParam::LinearTraction,
        TravParam::AngularTraction,
        TravParam::Roll,
        TravParam::Pitch,
    ];

    pub fn index(self) -> usize {
        match self {
            TravParam::LinearTraction => 0,
            TravParam::AngularTraction => 1,
            TravParam::Roll => 2,
            TravParam::Pitch => 3,
        }
    }

    /// Traction parameters are "low is bad" (left-tail risk); attitude
    /// parameters are "high is bad" (right-tail risk).
    pub fn is_traction(self) -> bool {
        matches!(self, TravParam::LinearTraction | TravParam::AngularTraction)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TravParam::LinearTraction => "lin",
            TravParam::AngularTraction => "ang",
            TravParam::Roll => "roll",
            TravParam::Pitch => "pitch",
        }
    }
}

/// One observed traversability outcome: tractions in [0, 1], absolute
/// attitude angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversabilitySample {
    pub lin_traction: f64,
    pub ang_traction: f64,
    pub roll: f64,
    pub pitch: f64,
}

impl TraversabilitySample {
    pub fn get(&self, p: TravParam) -> f64 {
        match p {
            TravParam::LinearTraction => self.lin_traction,
            TravParam::AngularTraction => self.ang_traction,
            TravParam::Roll => self.roll,
            TravParam::Pitch => self.pitch,
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.lin_traction, self.ang_traction, self.roll, self.pitch]
    }
}
