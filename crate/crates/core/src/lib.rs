//! Exact saddle-node critical conditions for PWM buck converters, with an
//! independent piecewise-linear switching simulator for validation.
//!
//! The crate is organized around four layers:
//!
//! - [`tf`]: rational transfer-function algebra and partial fractions;
//! - [`converter`]: physical parameters, control schemes, and loop gains;
//! - [`ftransform`]: the closed-form spectral-sum calculus and its series
//!   oracle;
//! - [`critical`]: steady-state branches, fold solvers, S/L plots, and
//!   parameter-space boundary tracing;
//! - [`sim`]: cycle-exact switching simulation, periodic orbits, Floquet
//!   multipliers, and hysteresis sweeps.

pub mod converter;
pub mod critical;
pub mod error;
pub mod expm;
pub mod ftransform;
pub mod poly;
pub mod sim;
pub mod tf;

pub use converter::{
    build_loop_gain, make_power_stage, ControlScheme, ConverterSpec, LoopGain, StageOutput,
};
pub use critical::{
    closed_form_cmc, find_snb, min_stabilizing_ramp, s_curve, snb_lhs, steady_residual,
    trace_boundary, vs_of_d, HbPoint, SnbSolution, StabilityHint, StateFeedbackClosedForm,
};
pub use error::{CriticalError, FtError, SimError, SpecError, TfError};
pub use ftransform::{alpha, alpha_taylor, correction, f_closed, f_series, table_case, TableCase};
pub use sim::{
    branch_curve, build_pwl, find_orbit, simulate_cycles, strobe_map, sweep_hysteresis,
    PeriodicOrbit, PwlSystem, SweepDirection,
};
pub use tf::{dc_gain, eval_jomega, partial_fractions, PartialFractionForm, RationalTf};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::converter::{ControlScheme, ConverterSpec};

    /// The multi-loop state-feedback converter used as the worked example
    /// throughout the test suite: T = 400 us, L = 20 mH, C = 47 uF, R = 22,
    /// k_i = 2.1435, k_v = -0.1383, v_r = 0.2152, V_m = 1.
    pub fn multiloop_example() -> ConverterSpec {
        ConverterSpec {
            v_s: 20.0,
            r: 22.0,
            l: 20e-3,
            c: 47e-6,
            r_c: 0.0,
            t: 400e-6,
            v_m: 1.0,
            v_r: 0.2152,
            scheme: ControlScheme::StateFeedback {
                k_i: 2.1435,
                k_v: -0.1383,
            },
        }
    }
}
