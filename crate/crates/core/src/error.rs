use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("degenerate conditioning: {0}")]
    DegenerateConditioning(String),
    #[error("boundary evaluation did not converge: {0}")]
    Boundary(String),
    #[error("empty estimate: {0}")]
    EmptyEstimate(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_overlap(r: f64) -> Result<()> {
    if !(r.is_finite() && r.abs() < 1.0) {
        return domain(format!("overlap r={r} must satisfy |r| < 1"));
    }
    Ok(())
}

pub(crate) fn check_degree(p: u32) -> Result<()> {
    if p < 3 {
        return domain(format!("degree p={p} must be at least 3"));
    }
    Ok(())
}
