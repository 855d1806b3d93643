use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("site outside simulation box: {0}")]
    OutOfBox(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("root not bracketed: gamma({x:.3}, {b_max:.3}) CI does not exceed 1; increase b_max")]
    NonBracketed { x: f64, b_max: f64 },
    #[error("point not strictly inside estimated B0: mu_hat = {mu:.4} +- {stderr:.4}")]
    NotInterior { mu: f64, stderr: f64 },
    #[error("timeout fraction {frac:.3} exceeds 1% over {replicas} replicas; estimate invalid")]
    TooManyTimeouts { frac: f64, replicas: usize },
    #[error("light-cone breach at t = {0}: halo influence reached the observation region")]
    LightConeBreach(f64),
    #[error("insufficient replicas: {got} < {need}")]
    InsufficientReplicas { got: usize, need: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
