use thiserror::Error;

/// Solution blocks of the saddle-point system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldBlock {
    StressRow1,
    StressRow2,
    HoopStress,
    Displacement,
    Rotation,
}

impl std::fmt::Display for FieldBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            FieldBlock::StressRow1 => "stress row 1",
            FieldBlock::StressRow2 => "stress row 2",
            FieldBlock::HoopStress => "hoop stress",
            FieldBlock::Displacement => "displacement",
            FieldBlock::Rotation => "rotation multiplier",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum FemError {
    #[error("mesh size must be at least 1, got {0}")]
    InvalidMeshSize(usize),
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("no quadrature rule with exactness {0}")]
    UnsupportedExactness(u32),
    #[error("edge rule needs between 1 and {max} points, got {got}")]
    InvalidEdgePoints { got: usize, max: usize },
    #[error("integrand is not finite at a quadrature point")]
    NonFiniteIntegrand,
    #[error("polynomial degree {0} is not supported")]
    UnsupportedDegree(u8),
    #[error("degree-of-freedom matrix for degree {0} is singular")]
    SingularDofSystem(u8),
    #[error("local interpolation system on triangle {0} is singular")]
    SingularLocalSystem(usize),
    #[error("local interpolation system is singular (condition number {condition:e})")]
    SingularInterpolation { condition: f64 },
    #[error("reference point ({0}, {1}) lies outside the reference triangle")]
    PointOutsideTriangle(f64, f64),
    #[error("triangle has a vertex on the symmetry axis")]
    TriangleTouchesAxis,
    #[error("global matrix is singular near unknown {index} ({block})")]
    SingularMatrix { block: FieldBlock, index: usize },
    #[error("solver residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("solution contains non-finite values")]
    NonFiniteSolution,
    #[error("computed error norm is not finite")]
    NonFiniteNorm,
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { got: usize, expected: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FemError>;
