use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing covariate `{0}`")]
    MissingCovariate(String),

    #[error("{} event(s) lie outside the study region of the mesh (first indices: {:?})", .indices.len(), &.indices[..(.indices.len().min(10))])]
    EventsOutsideMesh { indices: Vec<usize> },

    #[error("mesh refinement did not finish within {cap} additional vertices; unresolved region ({xmin:.3}, {ymin:.3})-({xmax:.3}, {ymax:.3})")]
    MeshRefinement {
        cap: usize,
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("inner Newton iteration did not converge after {iterations} steps (gradient norm {grad_norm:e})")]
    NewtonNotConverged { iterations: usize, grad_norm: f64 },

    #[error("outer optimizer did not converge in {evals} evaluations (best objective {best_value}, at {best_theta:?})")]
    OuterNotConverged {
        evals: usize,
        best_theta: Vec<f64>,
        best_value: f64,
    },

    #[error("maximum intensity {max:e} exceeds the cap {cap:e}; try a smaller field standard deviation")]
    IntensityOverflow { max: f64, cap: f64 },
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MeshRefinement { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NonFinite(_)
                | Error::NewtonNotConverged { .. }
                | Error::OuterNotConverged { .. }
                | Error::IntensityOverflow { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
