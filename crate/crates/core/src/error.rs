//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors from rational transfer-function algebra and decomposition.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TfError {
    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("evaluation too close to a pole: |den(s)| = {mag:.3e}")]
    PoleProximity { mag: f64 },
    #[error(
        "repeated non-origin pole near {pole_re:.6e}{pole_im:+.6e}j (multiplicity {multiplicity})"
    )]
    RepeatedPole {
        pole_re: f64,
        pole_im: f64,
        multiplicity: usize,
    },
    #[error("origin pole of multiplicity {0} (at most 2 supported)")]
    OriginMultiplicity(usize),
    #[error("DC gain is indeterminate after cancelling s^2")]
    IndeterminateDcGain,
}

/// Errors from converter-spec construction and loop-gain assembly.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpecError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter {name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("parameter {name} must be finite")]
    NonFinite { name: &'static str },
    #[error("compensator is improper")]
    ImproperCompensator,
    #[error("compensator has infinite DC gain; integrating compensators are not supported")]
    IntegratingCompensator,
}

/// Errors from the F-transform calculus.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FtError {
    #[error("duty cycle {0} outside the open interval (0, 1)")]
    DutyRange(f64),
    #[error("normalized pole {re:.6e}{im:+.6e}j lies on the csch pole set jZ")]
    PoleOnAxis { re: f64, im: f64 },
    #[error("series length {0} too short to certify the tail (minimum 1000)")]
    SeriesTooShort(usize),
    #[error("Taylor order {0} unsupported (maximum 8)")]
    UnsupportedOrder(usize),
    #[error("table case {case} is missing required parameter {param}")]
    MissingParameter {
        case: &'static str,
        param: &'static str,
    },
    #[error(transparent)]
    Tf(#[from] TfError),
}

/// Errors from steady-state and critical-condition solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CriticalError {
    #[error("loop gain has infinite DC gain; Eq-form with explicit ramp slope required")]
    NonFiniteDcGain,
    #[error("steady-state denominator vanished at d = {d:.6e} s (value {value:.3e})")]
    DenominatorZero { d: f64, value: f64 },
    #[error("loop transfer function must be strictly proper for harmonic summation")]
    NotStrictlyProper,
    #[error("ramp amplitude is zero: loop gain is infinite, use the ramp-slope form")]
    InfiniteLoopGain,
    #[error("parameter {0} cannot be swept")]
    UnsupportedParameter(String),
    #[error(transparent)]
    Ft(#[from] FtError),
    #[error(transparent)]
    Tf(#[from] TfError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Errors from the piecewise-linear switching simulator.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("inductor current went negative (i_L = {i_l:.6e} A at t = {t:.6e} s): discontinuous conduction is out of scope")]
    DcmViolation { t: f64, i_l: f64 },
    #[error("Newton iteration did not converge after {iters} steps (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scheme cannot be realized as state feedback for simulation")]
    UnsupportedScheme,
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
}
