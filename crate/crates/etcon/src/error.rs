//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has no directed spanning tree: {0}")]
    NoSpanningTree(String),

    #[error("Laplacian has {count} eigenvalues within tolerance of zero; a spanning tree requires exactly one")]
    MultipleZeroEigenvalues { count: usize },

    #[error("(A, B) is not controllable: controllability matrix has rank {rank}, need {n}")]
    Uncontrollable { rank: usize, n: usize },

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("matrix is not Hurwitz: max Re(eig) = {max_re:.6e}")]
    NotHurwitz { max_re: f64 },

    #[error("decay certificate invalid: {0}")]
    CertificateInvalid(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("bound degeneracy: {0}")]
    BoundDegeneracy(String),

    #[error("eigenvalue iteration failed to converge for a {n}x{n} matrix")]
    EigenFailure { n: usize },

    #[error("simulation diverged (non-finite state) at t = {t:.6}")]
    SimDiverged { t: f64 },

    #[error("Zeno guard tripped: agent {agent} fired {count} events within one second at t = {t:.6}")]
    ZenoGuard { agent: usize, count: usize, t: f64 },

    #[error("agent {agent} has no model for neighbor {neighbor}")]
    MissingNeighborModel { agent: usize, neighbor: usize },

    #[error("oracle segment explosion: more than {max} events")]
    OracleEventExplosion { max: usize },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("scenario hash mismatch: artifact was produced from {artifact}, current scenario is {current}")]
    HashMismatch { artifact: String, current: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
