//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("unknown density spec `{0}` for manifold `{1}`")]
    UnknownDensity(String, String),

    #[error("unknown manifold `{0}`")]
    UnknownManifold(String),

    #[error("point is off the manifold by {dist:.3e} (tolerance {tol:.1e})")]
    OffManifold { dist: f64, tol: f64 },

    #[error("point lies at a chart singularity; use the fallback chart")]
    ChartSingularity,

    #[error("manifold `{0}` has no closed-form parallel transport")]
    NoClosedFormTransport(String),

    #[error("unknown field `{0}` for manifold `{1}`")]
    UnknownField(String, String),

    #[error("no catalogued {1:?} spectrum for manifold `{0}`")]
    UncataloguedSpectrum(String, crate::manifolds::OperatorKind),

    #[error("kernel argument must be nonnegative, got {0}")]
    NegativeKernelArg(f64),

    #[error("quadrature failed to converge (best estimate {best:.6e}, error {err:.3e})")]
    QuadratureNonConvergence { best: f64, err: f64 },

    #[error("local PCA found {found} neighbors at x[{index}], need at least {need}; enlarge h_pca")]
    TooFewNeighbors {
        index: usize,
        found: usize,
        need: usize,
    },

    #[error("alignment is rank deficient (smallest singular value {sigma_min:.3e}); frames are near-perpendicular")]
    RankDeficientAlignment { sigma_min: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vector length {got} does not match operator dimension {want}")]
    DimensionMismatch { want: usize, got: usize },

    #[error("missing frames for connection source `{0}`")]
    MissingFrames(String),

    #[error("frame {0} is not column-orthonormal")]
    NonOrthonormalFrame(usize),

    #[error("eigensolver did not converge within the iteration budget; best residuals {0:?}")]
    EigenNonConvergence(Vec<f64>),

    #[error("brute-force path limited to nq <= {limit}, got {got}")]
    SizeGuardExceeded { limit: usize, got: usize },

    #[error("heat power t/h = {0:.3e} exceeds the overflow guard 1e6")]
    PowerOverflow(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input at {path}:{line}: {what}")]
    MalformedInput {
        path: String,
        line: usize,
        what: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
