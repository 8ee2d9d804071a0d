use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed files, violated preconditions, invalid material data.
    Input,
    /// A numerical procedure failed (singular pivot, incompatible data at solve time).
    Numerical,
    /// A checked inequality or sign law did not hold.
    Check,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("polygon is not simple: edges {first} and {second} intersect")]
    NonSimplePolygon { first: usize, second: usize },

    #[error("mesh would need {requested} elements, budget is {budget}")]
    ElementBudget { requested: usize, budget: usize },

    #[error("ellipticity violated at element {element}: {detail}")]
    Ellipticity { element: usize, detail: String },

    #[error("invalid jump: {0}")]
    InvalidJump(String),

    #[error("indefinite jump at element {element}: neither the stiff nor the soft regime holds")]
    IndefiniteJump { element: usize },

    #[error("non-positive Jacobian in element {element}")]
    SingularJacobian { element: usize },

    #[error("incompatible boundary load: force resultant {force:.3e}, moment resultant ({moment_x:.3e}, {moment_y:.3e})")]
    IncompatibleLoad {
        force: f64,
        moment_x: f64,
        moment_y: f64,
    },

    #[error("right-hand side has a kernel component of relative size {0:.3e}")]
    KernelComponent(f64),

    #[error("dense oracle limited to {cap} dofs, system has {dofs}")]
    DofCap { dofs: usize, cap: usize },

    #[error("factorization broke down at pivot {0}")]
    ZeroPivot(usize),

    #[error("state and mesh/load do not match: {0}")]
    MeshMismatch(String),

    #[error("degenerate quantity: {0}")]
    Degenerate(String),

    #[error("inadmissible disk center: distance to boundary {distance:.4} < required {required:.4}")]
    Inadmissible { distance: f64, required: f64 },

    #[error("sign law violated: {0}")]
    SignMismatch(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SingularJacobian { .. }
            | Error::KernelComponent(_)
            | Error::ZeroPivot(_)
            | Error::Degenerate(_) => ErrorClass::Numerical,
            Error::SignMismatch(_) => ErrorClass::Check,
            _ => ErrorClass::Input,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
