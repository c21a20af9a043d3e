use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in `{param}`: {detail}")]
    Domain { param: &'static str, detail: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("step {dt} exceeds stability limit {limit} (epsilon / 10)")]
    Stability { dt: f64, limit: f64 },

    #[error("state became non-finite at path {path}, step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("quadrature did not converge: relative change {change:e} after {nodes} nodes")]
    Quadrature { change: f64, nodes: usize },

    #[error("CFL violation: max|drift| * dt = {courant:e} exceeds grid spacing {dx:e}")]
    Cfl { courant: f64, dx: f64 },

    #[error("all particle weights underflowed at observation {step}")]
    Degeneracy { step: usize },

    #[error("invalid simplex: {0}")]
    Simplex(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(param: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        param,
        detail: detail.into(),
    }
}
