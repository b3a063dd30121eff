//! Cycle-exact simulation of the switched converter.
//!
//! Each PWM period starts in stage S1 (diode voltage = v_s). The comparator
//! signal g(t) = y(t) - h(t) is sampled at 64 checkpoints propagated by
//! cached matrix exponentials; the first downward crossing is refined by a
//! hybrid bisection/secant solver and latches stage S2 (v_d = 0) for the
//! rest of the cycle. States advance by exact stage exponentials, so the
//! only error in the chain is the crossing-time tolerance of 1e-12 T.

use crate::converter::{ControlScheme, ConverterSpec};
use crate::critical::HarmonicSums;
use crate::error::SimError;
use crate::expm::{affine_step, affine_step_with_integral};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const CHECKPOINTS: usize = 64;
const CROSSING_RTOL: f64 = 1e-12;

/// Piecewise-linear switching model: shared dynamics matrix, per-stage
/// offsets, and the comparator read-out y = feedback_row . x + offset.
#[derive(Debug, Clone)]
pub struct PwlSystem {
    pub a: DMatrix<f64>,
    pub b_on: DVector<f64>,
    pub b_off: DVector<f64>,
    pub feedback_row: DVector<f64>,
    pub feedback_offset: f64,
    /// v_o = vo_row . x.
    pub vo_row: DVector<f64>,
    pub state_dim: usize,
}

impl PwlSystem {
    pub fn comparator(&self, x: &DVector<f64>) -> f64 {
        self.feedback_row.dot(x) + self.feedback_offset
    }

    pub fn output_voltage(&self, x: &DVector<f64>) -> f64 {
        self.vo_row.dot(x)
    }
}

/// Build the switching model for a converter.
///
/// The power-stage states are (i_L, v_C); a proper voltage-mode compensator
/// is realized in controllable canonical form and appended to the state.
pub fn build_pwl(spec: &ConverterSpec) -> Result<PwlSystem, SimError> {
    spec.validate()?;
    let rho = spec.rho();
    let (l, c, r, r_c) = (spec.l, spec.c, spec.r, spec.r_c);
    let a2 = DMatrix::from_row_slice(2, 2, &[-rho * r_c / l, -rho / l, rho / c, -rho / (r * c)]);
    let vo2 = DVector::from_vec(vec![rho * r_c, rho]);
    match &spec.scheme {
        ControlScheme::StateFeedback { k_i, k_v } => Ok(PwlSystem {
            a: a2,
            b_on: DVector::from_vec(vec![spec.v_s / l, 0.0]),
            b_off: DVector::zeros(2),
            feedback_row: DVector::from_vec(vec![-k_i - k_v * rho * r_c, -k_v * rho]),
            feedback_offset: spec.v_r,
            vo_row: vo2,
            state_dim: 2,
        }),
        ControlScheme::Cmc => Ok(PwlSystem {
            a: a2,
            b_on: DVector::from_vec(vec![spec.v_s / l, 0.0]),
            b_off: DVector::zeros(2),
            feedback_row: DVector::from_vec(vec![-1.0, 0.0]),
            feedback_offset: spec.v_r,
            vo_row: vo2,
            state_dim: 2,
        }),
        ControlScheme::Vmc { g_c } => {
            if g_c.is_zero() {
                return Err(SimError::UnsupportedScheme);
            }
            // Feedthrough + strictly proper split of the compensator.
            let den = g_c.den_coeffs();
            let num = g_c.num_coeffs();
            let m = den.len() - 1;
            let lead = den[m];
            let den_monic: Vec<f64> = den.iter().map(|v| v / lead).collect();
            let mut num_scaled: Vec<f64> = num.iter().map(|v| v / lead).collect();
            num_scaled.resize(m + 1, 0.0);
            let d_c = num_scaled[m];
            let mut c_row = vec![0.0; m];
            for i in 0..m {
                c_row[i] = num_scaled[i] - d_c * den_monic[i];
            }
            let n = 2 + m;
            let mut a = DMatrix::<f64>::zeros(n, n);
            a.view_mut((0, 0), (2, 2)).copy_from(&a2);
            // compensator: x_c' = A_c x_c + B_c (v_r - v_o)
            for i in 0..m.saturating_sub(1) {
                a[(2 + i, 2 + i + 1)] = 1.0;
            }
            for j in 0..m {
                a[(2 + m - 1, 2 + j)] = -den_monic[j];
            }
            // B_c = e_m drives from (v_r - v_o); v_o = vo2 . x
            for j in 0..2 {
                a[(2 + m - 1, j)] -= vo2[j];
            }
            let mut b_on = DVector::<f64>::zeros(n);
            b_on[0] = spec.v_s / l;
            b_on[n - 1] += spec.v_r;
            let mut b_off = DVector::<f64>::zeros(n);
            b_off[n - 1] += spec.v_r;
            // y = C_c x_c + d_c (v_r - v_o)
            let mut row = DVector::<f64>::zeros(n);
            for j in 0..2 {
                row[j] = -d_c * vo2[j];
            }
            for i in 0..m {
                row[2 + i] = c_row[i];
            }
            let mut vo_row = DVector::<f64>::zeros(n);
            vo_row[0] = vo2[0];
            vo_row[1] = vo2[1];
            Ok(PwlSystem {
                a,
                b_on,
                b_off,
                feedback_row: row,
                feedback_offset: d_c * spec.v_r,
                vo_row,
                state_dim: n,
            })
        }
        ControlScheme::Custom { .. } => Err(SimError::UnsupportedScheme),
    }
}

/// Which stage a trace sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    On,
    Off,
}

#[derive(Debug, Clone)]
pub struct TraceSample {
    pub t: f64,
    pub state: DVector<f64>,
    pub y: f64,
    pub h: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TraceSample>,
    pub duties: Vec<f64>,
    pub end_state: DVector<f64>,
}

/// Cached per-cycle propagators.
struct CycleCache {
    e_on: DMatrix<f64>,
    w_on: DVector<f64>,
    e_off: DMatrix<f64>,
    w_off: DVector<f64>,
    dt: f64,
    period: f64,
    v_m: f64,
}

impl CycleCache {
    fn new(sys: &PwlSystem, spec: &ConverterSpec) -> Self {
        let dt = spec.t / CHECKPOINTS as f64;
        let (e_on, w_on) = affine_step(&sys.a, &sys.b_on, dt);
        let (e_off, w_off) = affine_step(&sys.a, &sys.b_off, dt);
        Self {
            e_on,
            w_on,
            e_off,
            w_off,
            dt,
            period: spec.t,
            v_m: spec.v_m,
        }
    }

    fn ramp(&self, t: f64) -> f64 {
        self.v_m * t / self.period
    }
}

fn dcm_check(x: &DVector<f64>, t: f64) -> Result<(), SimError> {
    let i_l = x[0];
    if i_l < -1e-9 * (1.0 + x.amax()) {
        return Err(SimError::DcmViolation { t, i_l });
    }
    Ok(())
}

struct CycleResult {
    end_state: DVector<f64>,
    duty: f64,
}

/// Advance one full period from `x`, optionally recording checkpoint samples
/// (with `t0` as the global cycle start time).
fn one_cycle(
    sys: &PwlSystem,
    cache: &CycleCache,
    x: &DVector<f64>,
    mut samples: Option<(&mut Vec<TraceSample>, f64)>,
    dcm_guard: bool,
) -> Result<CycleResult, SimError> {
    let period = cache.period;
    let mut record = |t_local: f64, state: &DVector<f64>, stage: Stage| {
        if let Some((buf, t0)) = samples.as_mut() {
            buf.push(TraceSample {
                t: *t0 + t_local,
                state: state.clone(),
                y: sys.comparator(state),
                h: cache.ramp(t_local),
                stage,
            });
        }
    };

    let g0 = sys.comparator(x) - 0.0;
    if g0 <= 0.0 {
        // Comparator already below the ramp: stage S2 for the whole cycle.
        record(0.0, x, Stage::Off);
        let mut xk = x.clone();
        for k in 1..=CHECKPOINTS {
            xk = &cache.e_off * &xk + &cache.w_off;
            if dcm_guard {
                dcm_check(&xk, k as f64 * cache.dt)?;
            }
            record(k as f64 * cache.dt, &xk, Stage::Off);
        }
        return Ok(CycleResult {
            end_state: xk,
            duty: 0.0,
        });
    }

    record(0.0, x, Stage::On);
    let mut xk = x.clone();
    let mut crossing: Option<(usize, DVector<f64>, f64)> = None;
    for k in 1..=CHECKPOINTS {
        let x_next = &cache.e_on * &xk + &cache.w_on;
        let t_k = k as f64 * cache.dt;
        let g = sys.comparator(&x_next) - cache.ramp(t_k);
        if g <= 0.0 {
            crossing = Some((k, xk.clone(), t_k - cache.dt));
            break;
        }
        xk = x_next;
        record(t_k, &xk, Stage::On);
    }

    let (k_cross, x_base, t_base) = match crossing {
        None => {
            // Switch stays on for the whole period.
            return Ok(CycleResult {
                end_state: xk,
                duty: 1.0,
            });
        }
        Some(v) => v,
    };

    // Refine the crossing inside [t_base, t_base + dt] by bisection with
    // secant acceleration on g(tau) from the bracketing state.
    let g_at = |tau: f64| -> f64 {
        let (e, w) = affine_step(&sys.a, &sys.b_on, tau);
        let xs = &e * &x_base + &w;
        sys.comparator(&xs) - cache.ramp(t_base + tau)
    };
    let tol = CROSSING_RTOL * period;
    let (mut lo, mut hi) = (0.0_f64, cache.dt);
    let mut g_lo = sys.comparator(&x_base) - cache.ramp(t_base);
    let mut tau = hi;
    let mut g_tau = g_at(tau);
    for _ in 0..80 {
        if hi - lo <= tol {
            break;
        }
        // secant candidate from the bracket ends, else bisect
        let cand = if g_tau != g_lo {
            let s = lo - g_lo * (tau - lo) / (g_tau - g_lo);
            if s > lo + 0.01 * tol && s < hi - 0.01 * tol {
                s
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let g_c = g_at(cand);
        if g_c > 0.0 {
            lo = cand;
            g_lo = g_c;
        } else {
            hi = cand;
        }
        tau = cand;
        g_tau = g_c;
    }
    let t_cross = t_base + hi;
    let (e_c, w_c) = affine_step(&sys.a, &sys.b_on, hi);
    let x_cross = &e_c * &x_base + &w_c;
    record(t_cross, &x_cross, Stage::On);

    // Stage S2: align to the checkpoint grid, then cached steps to the end.
    let t_align = k_cross as f64 * cache.dt;
    let (e_a, w_a) = affine_step(&sys.a, &sys.b_off, t_align - t_cross);
    let mut xs = &e_a * &x_cross + &w_a;
    if dcm_guard {
        dcm_check(&xs, t_align)?;
    }
    record(t_align, &xs, Stage::Off);
    for k in (k_cross + 1)..=CHECKPOINTS {
        xs = &cache.e_off * &xs + &cache.w_off;
        if dcm_guard {
            dcm_check(&xs, k as f64 * cache.dt)?;
        }
        record(k as f64 * cache.dt, &xs, Stage::Off);
    }
    Ok(CycleResult {
        end_state: xs,
        duty: t_cross / period,
    })
}

/// Simulate `n` full periods from `x0`, recording checkpoint samples and the
/// per-cycle duty sequence.
pub fn simulate_cycles(
    sys: &PwlSystem,
    spec: &ConverterSpec,
    x0: &DVector<f64>,
    n: usize,
) -> Result<Trajectory, SimError> {
    if x0.len() != sys.state_dim {
        return Err(SimError::DimensionMismatch {
            expected: sys.state_dim,
            got: x0.len(),
        });
    }
    let cache = CycleCache::new(sys, spec);
    let mut samples = Vec::with_capacity(n * (CHECKPOINTS + 2));
    let mut duties = Vec::with_capacity(n);
    let mut x = x0.clone();
    for cycle in 0..n {
        let t0 = cycle as f64 * spec.t;
        let res = one_cycle(sys, &cache, &x, Some((&mut samples, t0)), true)?;
        duties.push(res.duty);
        x = res.end_state;
    }
    Ok(Trajectory {
        samples,
        duties,
        end_state: x,
    })
}

/// The stroboscopic map: state advance over exactly one period.
pub fn strobe_map(
    sys: &PwlSystem,
    spec: &ConverterSpec,
    x: &DVector<f64>,
) -> Result<DVector<f64>, SimError> {
    let cache = CycleCache::new(sys, spec);
    Ok(one_cycle(sys, &cache, x, None, true)?.end_state)
}

/// A fixed point of the stroboscopic map.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub x0: DVector<f64>,
    pub duty: f64,
    pub multipliers: Vec<Complex64>,
    /// |P(x0) - x0|.
    pub residual: f64,
    /// Duty pinned at 0 or 1.
    pub saturated: bool,
    pub iterations: usize,
}

impl PeriodicOrbit {
    pub fn max_multiplier_norm(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|m| m.norm())
            .fold(0.0, f64::max)
    }

    /// Largest real part among the multipliers, the fold indicator.
    pub fn max_multiplier_real(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|m| m.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_multiplier_norm() < 1.0
    }

    /// True when the leading multiplier sits within `tol` of +1, the
    /// saddle-node signature.
    pub fn is_near_fold(&self, tol: f64) -> bool {
        (self.max_multiplier_real() - 1.0).abs() <= tol
    }
}

fn strobe_jacobian(
    sys: &PwlSystem,
    cache: &CycleCache,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>, SimError> {
    let n = x.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let h = (1e-6 * x[i].abs()).max(1e-9);
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let fp = one_cycle(sys, cache, &xp, None, false)?.end_state;
        let fm = one_cycle(sys, cache, &xm, None, false)?.end_state;
        j.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(j)
}

/// Newton solve for a periodic orbit (stable or unstable) from a guess.
///
/// The Jacobian of the stroboscopic map is taken by central finite
/// differences, which is robust to the switching discontinuity; steps are
/// damped when the residual would grow.
pub fn find_orbit(
    sys: &PwlSystem,
    spec: &ConverterSpec,
    x_guess: &DVector<f64>,
) -> Result<PeriodicOrbit, SimError> {
    if x_guess.len() != sys.state_dim {
        return Err(SimError::DimensionMismatch {
            expected: sys.state_dim,
            got: x_guess.len(),
        });
    }
    let cache = CycleCache::new(sys, spec);
    let mut x = x_guess.clone();
    let mut res = one_cycle(sys, &cache, &x, None, false)?;
    let mut f = &res.end_state - &x;
    let mut fnorm = f.norm();
    let max_iters = 50;
    for iter in 0..max_iters {
        let tol = 1e-10 * (1.0 + x.norm());
        if fnorm <= tol {
            let jac = strobe_jacobian(sys, &cache, &x)?;
            let multipliers: Vec<Complex64> = jac
                .complex_eigenvalues()
                .iter()
                .map(|e| Complex64::new(e.re, e.im))
                .collect();
            let saturated = res.duty <= 0.0 || res.duty >= 1.0;
            // Re-verify with the conduction guard on.
            one_cycle(sys, &cache, &x, None, true)?;
            return Ok(PeriodicOrbit {
                x0: x,
                duty: res.duty,
                multipliers,
                residual: fnorm,
                saturated,
                iterations: iter,
            });
        }
        let jac = strobe_jacobian(sys, &cache, &x)?;
        let n = x.len();
        let mut jf = jac - DMatrix::<f64>::identity(n, n);
        let delta = loop {
            match jf.clone().lu().solve(&f) {
                Some(d) => break d,
                None => {
                    // regularize a singular map (exactly at a fold)
                    jf += DMatrix::<f64>::identity(n, n) * 1e-8;
                }
            }
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let x_try = &x - &delta * step;
            let res_try = one_cycle(sys, &cache, &x_try, None, false)?;
            let f_try = &res_try.end_state - &x_try;
            if f_try.norm() < fnorm || step < 1e-3 {
                x = x_try;
                res = res_try;
                f = f_try;
                fnorm = f.norm();
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(SimError::NoConvergence {
        iters: max_iters,
        residual: fnorm,
    })
}

/// Periodic steady state when the duty is fixed (no comparator): the fixed
/// point of x -> E_off(T - d) (E_on(d) x + w_on) + w_off.
pub fn fixed_duty_steady_state(
    sys: &PwlSystem,
    d: f64,
    period: f64,
) -> Result<DVector<f64>, SimError> {
    let (e1, w1) = affine_step(&sys.a, &sys.b_on, d);
    let (e2, w2) = affine_step(&sys.a, &sys.b_off, period - d);
    let e = &e2 * &e1;
    let w = &e2 * &w1 + &w2;
    let n = sys.state_dim;
    (DMatrix::<f64>::identity(n, n) - e)
        .lu()
        .solve(&w)
        .ok_or(SimError::NoConvergence {
            iters: 0,
            residual: f64::INFINITY,
        })
}

/// Exact average of v_o over one period starting at `x` (the state must be
/// close to periodic for the average to mean anything).
pub fn cycle_average_vo(
    sys: &PwlSystem,
    spec: &ConverterSpec,
    x: &DVector<f64>,
) -> Result<(f64, f64), SimError> {
    let cache = CycleCache::new(sys, spec);
    let res = one_cycle(sys, &cache, x, None, false)?;
    let d = res.duty * spec.t;
    // Integrate the state exactly over both stages.
    let (x_mid, int1) = affine_step_with_integral(&sys.a, &sys.b_on, d, x);
    let (_, int2) = affine_step_with_integral(&sys.a, &sys.b_off, spec.t - d, &x_mid);
    let mean_state = (int1 + int2) / spec.t;
    Ok((sys.vo_row.dot(&mean_state), res.duty))
}

/// Sweep direction for hysteresis runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitClass {
    PeriodicInterior,
    SaturatedOn,
    SaturatedOff,
}

impl OrbitClass {
    pub fn label(&self) -> &'static str {
        match self {
            OrbitClass::PeriodicInterior => "periodic",
            OrbitClass::SaturatedOn => "saturated_on",
            OrbitClass::SaturatedOff => "saturated_off",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub v_s: f64,
    pub v_o_avg: f64,
    pub duty: f64,
    pub classification: OrbitClass,
}

/// Step the source voltage across a range, seeding each step with the
/// previous settled state, and record the settled orbit per step. Jumps
/// between coexisting branches show up as discontinuities in v_o.
pub fn sweep_hysteresis(
    spec: &ConverterSpec,
    v_s_range: (f64, f64),
    steps: usize,
    direction: SweepDirection,
    settle_cycles: usize,
) -> Result<Vec<SweepPoint>, SimError> {
    assert!(
        steps >= 2 && v_s_range.1 > v_s_range.0,
        "need an ascending range"
    );
    let mut values: Vec<f64> = (0..steps)
        .map(|i| v_s_range.0 + (v_s_range.1 - v_s_range.0) * i as f64 / (steps - 1) as f64)
        .collect();
    if direction == SweepDirection::Down {
        values.reverse();
    }
    let mut out = Vec::with_capacity(steps);
    let mut state: Option<DVector<f64>> = None;
    for v_s in values {
        let spec_v = ConverterSpec {
            v_s,
            ..spec.clone()
        };
        let sys = build_pwl(&spec_v)?;
        let cache = CycleCache::new(&sys, &spec_v);
        let mut x = state.unwrap_or_else(|| DVector::zeros(sys.state_dim));
        for _ in 0..settle_cycles {
            let res = one_cycle(&sys, &cache, &x, None, true)?;
            x = res.end_state;
        }
        let (v_o_avg, duty_final) = cycle_average_vo(&sys, &spec_v, &x)?;
        let classification = if duty_final >= 1.0 {
            OrbitClass::SaturatedOn
        } else if duty_final <= 0.0 {
            OrbitClass::SaturatedOff
        } else {
            OrbitClass::PeriodicInterior
        };
        out.push(SweepPoint {
            v_s,
            v_o_avg,
            duty: duty_final,
            classification,
        });
        state = Some(x);
    }
    Ok(out)
}

/// Find jump edges in a sweep: pairs (v_s at the step after the jump,
/// v_o before, v_o after).
pub fn jump_edges(points: &[SweepPoint], threshold: f64) -> Vec<(f64, f64, f64)> {
    let mut edges = Vec::new();
    for w in points.windows(2) {
        if (w[1].v_o_avg - w[0].v_o_avg).abs() > threshold {
            edges.push((w[1].v_s, w[0].v_o_avg, w[1].v_o_avg));
        }
    }
    edges
}

/// One point of the simulated branch.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// Target switching instant, seconds.
    pub d: f64,
    pub duty_target: f64,
    /// Source voltage from the harmonic-balance branch.
    pub v_s: f64,
    pub orbit: PeriodicOrbit,
    pub v_o_avg: f64,
    /// |simulated duty - target duty|; flagged when above 1e-3.
    pub duty_mismatch: f64,
    pub flagged: bool,
}

/// Trace the full S-shaped solution branch, including its unstable segment,
/// by seeding Newton from the harmonic-balance steady state at each duty.
pub fn branch_curve(spec: &ConverterSpec, d_grid: &[f64]) -> Result<Vec<BranchPoint>, SimError> {
    let hs = HarmonicSums::new(spec)?;
    let mut out = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        let v_s = hs.vs_of_d(spec, d)?;
        let spec_v = ConverterSpec {
            v_s,
            ..spec.clone()
        };
        let sys = build_pwl(&spec_v)?;
        let seed = fixed_duty_steady_state(&sys, d, spec_v.t)?;
        let orbit = find_orbit(&sys, &spec_v, &seed)?;
        let (v_o_avg, _) = cycle_average_vo(&sys, &spec_v, &orbit.x0)?;
        let duty_mismatch = (orbit.duty - d / spec.t).abs();
        out.push(BranchPoint {
            d,
            duty_target: d / spec.t,
            v_s,
            flagged: duty_mismatch > 1e-3,
            orbit,
            v_o_avg,
            duty_mismatch,
        });
    }
    Ok(out)
}
