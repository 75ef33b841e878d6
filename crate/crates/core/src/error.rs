use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incommensurate flux: {0}")]
    IncommensurateFlux(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("family not isolated at grid point {theta:?}: {reason}")]
    NotIsolated { theta: Vec<f64>, reason: String },

    #[error("eigenvalue {eigenvalue} lies within {distance:e} of the contour")]
    EigenvalueOnContour { eigenvalue: f64, distance: f64 },

    #[error("chern number requires a two-dimensional field")]
    NotTwoDimensional,

    #[error("truncation radius {radius} aliases on a grid with {n_k} points per axis")]
    AliasRisk { radius: usize, n_k: usize },

    #[error(
        "frame deficient at theta {theta:?}: lower bound {bound:e}, max neighbour jump {}; try n_B = {suggested_nb}", show_jump(*jump)
    )]
    FrameDeficient {
        theta: Vec<f64>,
        bound: f64,
        jump: f64,
        suggested_nb: usize,
    },

    #[error("operator is not translation invariant (defect {0:e})")]
    NotTranslationInvariant(f64),

    #[error("box padding insufficient: {0}")]
    PaddingInsufficient(String),

    #[error("no spectral dichotomy: eigenvalue {0} of the frame kernel lies in [0.25, 0.75]")]
    NoSpectralDichotomy(f64),

    #[error("projections too far apart: |P - Q| = {0}")]
    ProjectionsTooFar(f64),

    #[error("phase structure violated: defect {0:e}")]
    StructureViolation(f64),

    #[error("spectrum of the reduced operator touches the contour |z| = {radius} (eigenvalue {eigenvalue})")]
    SpectrumOnContour { eigenvalue: f64, radius: f64 },

    #[error("singular block {0}")]
    SingularBlock(String),

    #[error("complement resolvent not uniformly bounded on the window (min singular value {0:e})")]
    ConditionTwoFails(f64),

    #[error("function support [{lo}, {hi}] leaves the window [{window_lo}, {window_hi}]")]
    SupportViolation {
        lo: f64,
        hi: f64,
        window_lo: f64,
        window_hi: f64,
    },

    #[error("exactly one spectrum meets the window")]
    OneSideEmpty,

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn show_jump(j: f64) -> String {
    if j.is_nan() {
        "not measured".into()
    } else {
        format!("{j:.3}")
    }
}
