use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("subdivision level {0} out of range [0, 8]")]
    LevelOutOfRange(u32),
    #[error("sphere radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("tube radius must be positive, got {0}")]
    NonPositiveTube(f64),
    #[error("quasiplane dimension k={k} not admissible for n={n} (need 1 <= k <= n-2)")]
    BadPlaneDimension { n: usize, k: usize },
    #[error("map dimension {0} does not match the 3-dimensional mesh")]
    DimensionMismatch(usize),
    #[error("trace is empty: sphere does not meet the quasiplane (free region equals the whole sphere)")]
    EmptyTrace,
    #[error("Dirichlet mask covers every vertex (tube too large)")]
    MaskCoversAll,
    #[error("free region is empty")]
    EmptyFreeRegion,
    #[error("degenerate triangle {0} (zero area)")]
    DegenerateTriangle(usize),
    #[error("p must be >= 1, got {0}")]
    BadExponent(f64),
    #[error("field has {got} values, mesh has {expected} vertices")]
    FieldLength { expected: usize, got: usize },
    #[error("malformed mesh text: {0}")]
    Parse(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("dimension must be >= 2, got {0}")]
    BadDimension(usize),
    #[error("radial stretch exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("matrix is singular or orientation reversing (det = {0})")]
    BadLinear(f64),
    #[error("matrix shape {rows}x{cols} does not match dimension {n}")]
    Shape { rows: usize, cols: usize, n: usize },
    #[error("shear bump is not a homeomorphism: sup|grad psi| = {0} >= 1")]
    NotHomeomorphic(f64),
    #[error("bump width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("sample count must be >= 1")]
    NoSamples,
    #[error("region must have positive volume")]
    EmptyRegion,
    #[error("Jacobian determinant {det} <= 0 at sample {point:?}")]
    NotSensePreserving { det: f64, point: Vec<f64> },
    #[error("map spec parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no Dirichlet vertices: the quotient infimum is 0 via constants")]
    NoBoundary,
    #[error("no free vertices")]
    NoFreeVertices,
    #[error("free region is not connected ({0} components)")]
    Disconnected(usize),
    #[error("p must be >= 2 for the Rayleigh solver, got {0}")]
    BadExponent(f64),
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("degeneracy floor must be positive")]
    BadFloor,
    #[error("center is not on the quasiplane: |f_perp(a)| = {0}")]
    CenterOffPlane(f64),
    #[error("radii must be positive and increasing")]
    BadRadii,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("K must be >= 1, got {0}")]
    BadDilatation(f64),
    #[error("need 0 < r < R, got r={r}, R={big_r}")]
    BadRadii { r: f64, big_r: f64 },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("geometric distortion sampling supports n = 3 only, got {0}")]
    UnsupportedDimension(usize),
    #[error("refinement budget exhausted: movement {movement:e} above tolerance {tol:e}")]
    BudgetExhausted { movement: f64, tol: f64 },
    #[error("Jacobian not positive inside the ball (J = {0})")]
    NonPositiveJacobian(f64),
    #[error("quadrature/Monte-Carlo discrepancy {discrepancy:e} exceeds budget {budget:e}")]
    Discrepancy { discrepancy: f64, budget: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InequalityError {
    #[error("need 1 <= k <= n-2, got n={n}, k={k}")]
    BadPlane { n: usize, k: usize },
    #[error("row index {i} out of range 1..={n}")]
    BadRow { i: usize, n: usize },
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("exponents must satisfy 1 <= t1 <= t2, got {t1}, {t2}")]
    BadExponents { t1: f64, t2: f64 },
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("config: {0}")]
    Config(String),
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: DistortionError,
    },
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serialize(String),
}

impl ReportError {
    /// True when the failure is a mathematical finding rather than a usage
    /// problem.
    pub fn is_math_failure(&self) -> bool {
        matches!(
            self,
            ReportError::Step {
                source: DistortionError::Discrepancy { .. } | DistortionError::BudgetExhausted { .. },
                ..
            }
        )
    }
}
