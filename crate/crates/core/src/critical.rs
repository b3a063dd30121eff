//! Steady-state branches and saddle-node critical conditions.
//!
//! The periodic-solution balance and its tangency condition are evaluated
//! through harmonic sums over the loop transfer function G:
//!
//!   balance:   g0_ref v_r - v_s sum_n c_n e^{j n w_s d} G(j n w_s) = h(d)
//!   tangency:  -(2 v_s / T) Re sum_{n>=1} e^{j 2 pi n D} G(j n w_s)
//!              - v_s G(0) / T = m_a
//!
//! The tangency left side is the S-plot ordinate; its root along the branch
//! v_s(d) is exactly the fold of v_s(d) (the stationarity of the balance).
//!
//! Sums are truncated after subtracting the two leading high-frequency
//! orders a1/s + a2/s^2 of G, whose contributions are added back in closed
//! form (Bernoulli-polynomial Fourier sums). The remainder decays like
//! 1/n^3 against 1/n weights, so the default 20000 terms leave a certified
//! tail below 1e-12 of the sum scale. This path deliberately avoids the
//! csch-based calculus in `ftransform` so the two stay independent checks.

use crate::converter::{build_loop_gain, ControlScheme, ConverterSpec};
use crate::error::{CriticalError, FtError};
use crate::tf::{dc_gain, DcGain, RationalTf};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Default harmonic count for the steady-state and tangency sums.
pub const DEFAULT_SERIES_TERMS: usize = 20_000;

/// Relative half-width of the boundary band in stability hints.
pub const SNB_BOUNDARY_TOL: f64 = 1e-4;

/// Precomputed harmonic table for one converter's loop gain.
///
/// The table holds G3(j n w_s) = G - a1/s - a2/s^2 for n = 1..N and is
/// independent of v_s, v_r, and the ramp, so one table serves a whole branch
/// scan or source-voltage sweep.
pub struct HarmonicSums {
    g: RationalTf,
    g0: f64,
    a1: f64,
    a2: f64,
    omega_s: f64,
    table: Vec<Complex64>,
    /// Bound on sup_{n > N} n^3 |G3(j n w_s)|.
    m3: f64,
}

impl HarmonicSums {
    pub fn new(spec: &ConverterSpec) -> Result<Self, CriticalError> {
        Self::with_terms(spec, DEFAULT_SERIES_TERMS)
    }

    pub fn with_terms(spec: &ConverterSpec, n_terms: usize) -> Result<Self, CriticalError> {
        let (g, _) = build_loop_gain(spec)?;
        let omega_s = spec.omega_s();
        if g.is_zero() {
            return Ok(Self {
                g,
                g0: 0.0,
                a1: 0.0,
                a2: 0.0,
                omega_s,
                table: Vec::new(),
                m3: 0.0,
            });
        }
        if g.relative_degree() == 0 {
            return Err(CriticalError::NotStrictlyProper);
        }
        let g0 = match dc_gain(&g)? {
            DcGain::Finite(v) => v,
            DcGain::Infinite => return Err(CriticalError::NonFiniteDcGain),
        };
        let (a1, a2) = g.asymptotic_coeffs();
        let g3_at = |x: f64| -> Result<Complex64, CriticalError> {
            let s = Complex64::new(0.0, x * omega_s);
            Ok(g.eval(s)? - a1 / s - a2 / (s * s))
        };
        // Certify the tail: the remainder beyond the subtracted asymptote
        // decays at least like 1/n^3 for a strictly proper G.
        let sum_scale = g0.abs() + a1.abs() / omega_s + a2.abs() / (omega_s * omega_s) + 1e-300;
        let mut n = n_terms.max(16);
        loop {
            let mut m3 = 0.0_f64;
            for mult in [1.0, 2.0, 4.0, 16.0, 64.0] {
                let x = n as f64 * mult + 1.0;
                m3 = m3.max(x.powi(3) * g3_at(x)?.norm());
            }
            m3 *= 1.5;
            let tail = m3 / (2.0 * (n as f64).powi(2));
            if tail <= 1e-12 * sum_scale || n >= 32 * n_terms.max(16) {
                assert!(
                    tail <= 1e-12 * sum_scale,
                    "harmonic tail {tail:.3e} not certifiable below 1e-12 of scale {sum_scale:.3e}"
                );
                let mut table = Vec::with_capacity(n);
                for k in 1..=n {
                    table.push(g3_at(k as f64)?);
                }
                return Ok(Self {
                    g,
                    g0,
                    a1,
                    a2,
                    omega_s,
                    table,
                    m3,
                });
            }
            n *= 2;
        }
    }

    pub fn loop_transfer(&self) -> &RationalTf {
        &self.g
    }

    /// Exact G(0).
    pub fn g_dc(&self) -> f64 {
        self.g0
    }

    pub fn terms(&self) -> usize {
        self.table.len()
    }

    /// Certified bound on the truncated tail of the tangency sum.
    pub fn tail_bound(&self) -> f64 {
        if self.table.is_empty() {
            0.0
        } else {
            self.m3 / (2.0 * (self.table.len() as f64).powi(2))
        }
    }

    /// Both harmonic sums at duty ratio `duty` in one pass:
    ///
    /// - `steady`: sum_{n in Z} c_n e^{j n theta} G_n (real by symmetry),
    ///   the denominator of the source-voltage branch;
    /// - `tangency`: sum_{n>=1} Re[e^{j n theta} G_n], the series in the
    ///   critical condition.
    fn sums_at(&self, duty: f64) -> (f64, f64) {
        let theta = 2.0 * PI * duty;
        let ws = self.omega_s;
        let mut steady = duty * self.g0;
        let mut tangency = 0.0;
        if self.g.is_zero() {
            return (0.0, 0.0);
        }
        let step = Complex64::from_polar(1.0, theta);
        let mut phase = step;
        for (idx, g3) in self.table.iter().enumerate() {
            let n = (idx + 1) as f64;
            if (idx + 1) % 4096 == 0 {
                phase = Complex64::from_polar(1.0, theta * (idx + 1) as f64);
            }
            // pair sum of c_n e^{j n theta} G_n over +/- n
            steady += ((phase - 1.0) * g3).im / (n * PI);
            tangency += (phase * g3).re;
            phase *= step;
        }
        // Closed-form contributions of the subtracted a1/s + a2/s^2:
        //   sum (1 - cos n t)/n^2 = t (2 pi - t)/4
        //   sum sin(n t)/n        = (pi - t)/2
        //   sum cos(n t)/n^2      = pi^2/6 - pi t/2 + t^2/4
        //   sum sin(n t)/n^3      = pi^2 t/6 - pi t^2/4 + t^3/12
        let ws2 = ws * ws;
        steady += self.a1 * PI * duty * (1.0 - duty) / ws;
        steady -= self.a2 / (PI * ws2)
            * (PI * PI * theta / 6.0 - PI * theta * theta / 4.0 + theta.powi(3) / 12.0);
        tangency += self.a1 * (PI - theta) / (2.0 * ws);
        tangency -= self.a2 / ws2 * (PI * PI / 6.0 - PI * theta / 2.0 + theta * theta / 4.0);
        (steady, tangency)
    }

    fn check_d(&self, spec: &ConverterSpec, d: f64) -> Result<f64, CriticalError> {
        let duty = d / spec.t;
        if !(duty > 0.0 && duty < 1.0) {
            return Err(FtError::DutyRange(duty).into());
        }
        Ok(duty)
    }

    /// Imbalance of the periodic-solution equation at (d, v_s), in volts.
    pub fn steady_residual(
        &self,
        spec: &ConverterSpec,
        d: f64,
        v_s: f64,
    ) -> Result<f64, CriticalError> {
        let duty = self.check_d(spec, d)?;
        let (steady, _) = self.sums_at(duty);
        let offset = spec.dc_offset_gain()? * spec.v_r;
        Ok(offset - v_s * steady - spec.v_m * duty)
    }

    /// Source voltage implied by a periodic solution switching at d.
    pub fn vs_of_d(&self, spec: &ConverterSpec, d: f64) -> Result<f64, CriticalError> {
        let duty = self.check_d(spec, d)?;
        let (steady, _) = self.sums_at(duty);
        let scale = self.g0.abs() + self.a1.abs() / self.omega_s + 1e-300;
        if steady.abs() < 1e-13 * scale {
            return Err(CriticalError::DenominatorZero { d, value: steady });
        }
        let offset = spec.dc_offset_gain()? * spec.v_r;
        Ok((offset - spec.v_m * duty) / steady)
    }

    /// Left side of the tangency condition (the S-plot ordinate), in V/s.
    pub fn snb_lhs(&self, spec: &ConverterSpec, d: f64, v_s: f64) -> Result<f64, CriticalError> {
        let duty = self.check_d(spec, d)?;
        let (_, tangency) = self.sums_at(duty);
        Ok(-(2.0 * v_s / spec.t) * tangency - v_s * self.g0 / spec.t)
    }

    fn fold_residual(&self, spec: &ConverterSpec, d: f64) -> Result<f64, CriticalError> {
        let v_s = self.vs_of_d(spec, d)?;
        Ok(self.snb_lhs(spec, d, v_s)? - spec.ramp_slope())
    }
}

/// Imbalance of the steady-state equation at a trial (d, v_s); zero on the
/// periodic branch.
pub fn steady_residual(spec: &ConverterSpec, d: f64, v_s: f64) -> Result<f64, CriticalError> {
    HarmonicSums::new(spec)?.steady_residual(spec, d, v_s)
}

/// The branch v_s(d): the source voltage for which a periodic solution
/// switches at d.
pub fn vs_of_d(spec: &ConverterSpec, d: f64) -> Result<f64, CriticalError> {
    HarmonicSums::new(spec)?.vs_of_d(spec, d)
}

/// S-plot ordinate at (d, v_s); the saddle-node condition is
/// `snb_lhs = m_a`.
pub fn snb_lhs(spec: &ConverterSpec, d: f64, v_s: f64) -> Result<f64, CriticalError> {
    HarmonicSums::new(spec)?.snb_lhs(spec, d, v_s)
}

/// How a saddle-node solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnbMethod {
    ExactSeries,
    ClosedForm15,
    ClosedForm17,
    ClosedForm18,
}

/// A located saddle-node point.
#[derive(Debug, Clone)]
pub struct SnbSolution {
    /// Switching instant at the fold, seconds.
    pub d_star: f64,
    /// Duty ratio d_star / T.
    pub duty: f64,
    /// Source voltage at the fold.
    pub v_s_star: f64,
    pub method: SnbMethod,
    /// Ramp slope the condition was solved against, V/s.
    pub m_a_used: f64,
    /// Steady-state imbalance at the solution, volts.
    pub residual_5: f64,
    /// Tangency imbalance at the solution, V/s.
    pub residual_8: f64,
}

/// Scan the branch for saddle-node points.
///
/// The duty grid starts at 2000 points and doubles until the root count is
/// reproduced on the next finer grid; each bracket is polished by bisection
/// followed by secant steps. An empty result means no fold in (0, T).
pub fn find_snb(spec: &ConverterSpec) -> Result<Vec<SnbSolution>, CriticalError> {
    let hs = HarmonicSums::new(spec)?;
    find_snb_with(&hs, spec, 2000)
}

pub fn find_snb_with(
    hs: &HarmonicSums,
    spec: &ConverterSpec,
    base_grid: usize,
) -> Result<Vec<SnbSolution>, CriticalError> {
    let m_a = spec.ramp_slope();
    let t = spec.t;

    let scan = |m: usize| -> Result<(Vec<(f64, f64)>, f64), CriticalError> {
        let mut brackets = Vec::new();
        let mut r_scale = 0.0_f64;
        let mut prev: Option<(f64, f64)> = None;
        for i in 1..=m {
            let d = t * i as f64 / (m + 1) as f64;
            match hs.fold_residual(spec, d) {
                Ok(r) => {
                    r_scale = r_scale.max(r.abs());
                    if let Some((dp, rp)) = prev {
                        if rp == 0.0 {
                            brackets.push((dp, dp));
                        } else if rp * r < 0.0 {
                            brackets.push((dp, d));
                        }
                    }
                    prev = Some((d, r));
                }
                Err(CriticalError::DenominatorZero { .. }) => prev = None,
                Err(e) => return Err(e),
            }
        }
        Ok((brackets, r_scale))
    };

    let mut m = base_grid;
    let (mut brackets, mut r_scale) = scan(m)?;
    while m < 8 * base_grid {
        let (next, ns) = scan(2 * m)?;
        let stable = next.len() == brackets.len();
        brackets = next;
        r_scale = ns;
        m *= 2;
        if stable {
            break;
        }
    }

    let tol = if m_a > 0.0 {
        1e-6 * m_a
    } else {
        1e-9 * r_scale.max(1e-300)
    };

    let mut solutions = Vec::new();
    for (mut lo, mut hi) in brackets {
        let mut r_lo = hs.fold_residual(spec, lo)?;
        // Bisection to 1e-4 relative, then secant polishing.
        while hi - lo > 1e-4 * t {
            let mid = 0.5 * (lo + hi);
            let r_mid = hs.fold_residual(spec, mid)?;
            if r_lo * r_mid <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                r_lo = r_mid;
            }
        }
        let mut a = lo;
        let mut b = hi;
        let mut fa = hs.fold_residual(spec, a)?;
        let mut fb = hs.fold_residual(spec, b)?;
        for _ in 0..60 {
            if fa.abs() <= tol || (b - a).abs() < 1e-15 * t {
                break;
            }
            let mid = if fb != fa {
                let s = a - fa * (b - a) / (fb - fa);
                if s > lo && s < hi {
                    s
                } else {
                    0.5 * (a + b)
                }
            } else {
                0.5 * (a + b)
            };
            let fm = hs.fold_residual(spec, mid)?;
            b = a;
            fb = fa;
            a = mid;
            fa = fm;
        }
        let d_star = if fa.abs() <= fb.abs() { a } else { b };
        let v_s_star = hs.vs_of_d(spec, d_star)?;
        solutions.push(SnbSolution {
            d_star,
            duty: d_star / t,
            v_s_star,
            method: SnbMethod::ExactSeries,
            m_a_used: m_a,
            residual_5: hs.steady_residual(spec, d_star, v_s_star)?,
            residual_8: hs.snb_lhs(spec, d_star, v_s_star)? - m_a,
        });
    }
    solutions.sort_by(|a, b| a.d_star.partial_cmp(&b.d_star).unwrap());
    solutions.dedup_by(|a, b| (a.d_star - b.d_star).abs() < 1e-9 * t);
    Ok(solutions)
}

/// Stability classification of a branch point from the sign rule; the
/// simulator has the final say.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityHint {
    Stable,
    Unstable,
    Boundary,
}

/// One steady-state candidate on the duty-parameterized branch.
#[derive(Debug, Clone)]
pub struct HbPoint {
    /// Switching instant, seconds.
    pub d: f64,
    pub duty: f64,
    /// Source voltage implied by the balance; `None` at a branch asymptote.
    pub v_s_implied: Option<f64>,
    /// S-plot ordinate, V/s.
    pub s_value: f64,
    /// Steady-state imbalance at (d, v_s), volts.
    pub residual_5: f64,
    pub stable_hint: StabilityHint,
}

/// Evaluate the S-plot along a duty grid.
///
/// Points where the branch denominator vanishes are emitted with
/// `v_s_implied = None` and the S value computed at the spec's own source
/// voltage.
pub fn s_curve(spec: &ConverterSpec, d_grid: &[f64]) -> Result<Vec<HbPoint>, CriticalError> {
    let hs = HarmonicSums::new(spec)?;
    s_curve_with(&hs, spec, d_grid)
}

pub fn s_curve_with(
    hs: &HarmonicSums,
    spec: &ConverterSpec,
    d_grid: &[f64],
) -> Result<Vec<HbPoint>, CriticalError> {
    let m_a = spec.ramp_slope();
    d_grid
        .iter()
        .map(|&d| {
            let implied = match hs.vs_of_d(spec, d) {
                Ok(v) => Some(v),
                Err(CriticalError::DenominatorZero { .. }) => None,
                Err(e) => return Err(e),
            };
            let v = implied.unwrap_or(spec.v_s);
            let s_value = hs.snb_lhs(spec, d, v)?;
            let residual_5 = hs.steady_residual(spec, d, v)?;
            let stable_hint = if (s_value - m_a).abs() <= SNB_BOUNDARY_TOL * m_a.max(s_value.abs())
            {
                StabilityHint::Boundary
            } else if s_value < m_a {
                StabilityHint::Stable
            } else {
                StabilityHint::Unstable
            };
            Ok(HbPoint {
                d,
                duty: d / spec.t,
                v_s_implied: implied,
                s_value,
                residual_5,
                stable_hint,
            })
        })
        .collect()
}

/// Maximum of the S-plot over the duty range: the minimum ramp slope that
/// stabilizes the converter everywhere on the branch.
pub fn min_stabilizing_ramp(spec: &ConverterSpec) -> Result<f64, CriticalError> {
    let hs = HarmonicSums::new(spec)?;
    min_stabilizing_ramp_with(&hs, spec)
}

pub fn min_stabilizing_ramp_with(
    hs: &HarmonicSums,
    spec: &ConverterSpec,
) -> Result<f64, CriticalError> {
    let t = spec.t;
    let m = 2000;
    let s_at = |d: f64| -> Result<Option<f64>, CriticalError> {
        match hs.vs_of_d(spec, d) {
            Ok(v) => Ok(Some(hs.snb_lhs(spec, d, v)?)),
            Err(CriticalError::DenominatorZero { .. }) => Ok(Some(0.0)),
            Err(e) => Err(e),
        }
    };
    let mut best = (t * 0.5, f64::NEG_INFINITY);
    for i in 1..=m {
        let d = t * i as f64 / (m + 1) as f64;
        if let Some(s) = s_at(d)? {
            if s > best.1 {
                best = (d, s);
            }
        }
    }
    if hs.loop_transfer().is_zero() {
        return Ok(0.0);
    }
    // Golden-section polish around the discrete maximum.
    let h = t / (m + 1) as f64;
    let (mut a, mut b) = (
        (best.0 - h).max(1e-9 * t),
        (best.0 + h).min(t * (1.0 - 1e-9)),
    );
    let phi = 0.5 * (3.0 - 5f64.sqrt());
    let mut x1 = a + phi * (b - a);
    let mut x2 = b - phi * (b - a);
    let mut f1 = s_at(x1)?.unwrap_or(f64::NEG_INFINITY);
    let mut f2 = s_at(x2)?.unwrap_or(f64::NEG_INFINITY);
    for _ in 0..60 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + phi * (b - a);
            f1 = s_at(x1)?.unwrap_or(f64::NEG_INFINITY);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - phi * (b - a);
            f2 = s_at(x2)?.unwrap_or(f64::NEG_INFINITY);
        }
    }
    Ok(best.1.max(f1).max(f2))
}

/// Closed-form critical condition for multi-loop state feedback.
///
/// `splot_15` is the approximate S-plot
///   (v_s k_i / L)(D - (K+1)/2) + (v_s k_v / T)(-1 + T^2 (1 - 6D + 6D^2)/(12 L C))
/// and `duty_17` the explicit duty
///   D = (K+1)/2 + L m_a/(v_s k_i) + L k_v/(T k_i)
/// valid when T^2 << 12 L C (see `ripple_warning`).
#[derive(Debug, Clone)]
pub struct StateFeedbackClosedForm {
    pub k_i: f64,
    pub k_v: f64,
    v_s: f64,
    l: f64,
    c: f64,
    t: f64,
    k_load: f64,
    m_a: f64,
}

impl StateFeedbackClosedForm {
    pub fn new(spec: &ConverterSpec) -> Result<Self, CriticalError> {
        let (k_i, k_v) = match &spec.scheme {
            ControlScheme::StateFeedback { k_i, k_v } => (*k_i, *k_v),
            ControlScheme::Cmc => (1.0, 0.0),
            _ => {
                return Err(CriticalError::UnsupportedParameter(
                    "closed forms require state-feedback or current-mode control".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(Self {
            k_i,
            k_v,
            v_s: spec.v_s,
            l: spec.l,
            c: spec.c,
            t: spec.t,
            k_load: spec.k_load(),
            m_a: spec.ramp_slope(),
        })
    }

    /// Approximate S-plot left side at duty D, in V/s.
    pub fn splot_15(&self, duty: f64) -> f64 {
        let current = self.v_s * self.k_i / self.l * (duty - (self.k_load + 1.0) / 2.0);
        let ripple =
            self.t * self.t * (1.0 - 6.0 * duty + 6.0 * duty * duty) / (12.0 * self.l * self.c);
        let voltage = self.v_s * self.k_v / self.t * (-1.0 + ripple);
        current + voltage
    }

    /// Explicit critical duty, ignoring the output-ripple term.
    pub fn duty_17(&self) -> Result<f64, CriticalError> {
        if self.k_i == 0.0 {
            return Err(CriticalError::UnsupportedParameter(
                "duty closed form requires k_i != 0".into(),
            ));
        }
        Ok((self.k_load + 1.0) / 2.0
            + self.l * self.m_a / (self.v_s * self.k_i)
            + self.l * self.k_v / (self.t * self.k_i))
    }

    /// T^2/(12 L C), the size of the neglected ripple term.
    pub fn ripple_term_ratio(&self) -> f64 {
        self.t * self.t / (12.0 * self.l * self.c)
    }

    /// True when the explicit duty form is outside its validity range.
    pub fn ripple_warning(&self) -> bool {
        self.ripple_term_ratio() > 0.05
    }
}

/// Critical duty for current-mode control: D* = (K+1)/2 + L m_a / v_s.
/// Values at or above 1 mean no fold inside the valid duty range.
pub fn closed_form_cmc(spec: &ConverterSpec) -> Result<f64, CriticalError> {
    if !matches!(spec.scheme, ControlScheme::Cmc) {
        return Err(CriticalError::UnsupportedParameter(
            "CMC closed form requires the CMC scheme".into(),
        ));
    }
    spec.validate()?;
    Ok((spec.k_load() + 1.0) / 2.0 + spec.l * spec.ramp_slope() / spec.v_s)
}

/// A converter parameter that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Vs,
    R,
    L,
    C,
    Rc,
    T,
    Vm,
    Vr,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self, CriticalError> {
        Ok(match name {
            "v_s" => SweepParam::Vs,
            "R" => SweepParam::R,
            "L" => SweepParam::L,
            "C" => SweepParam::C,
            "R_c" => SweepParam::Rc,
            "T" => SweepParam::T,
            "V_m" => SweepParam::Vm,
            "v_r" => SweepParam::Vr,
            other => return Err(CriticalError::UnsupportedParameter(other.into())),
        })
    }

    pub fn apply(&self, spec: &ConverterSpec, value: f64) -> ConverterSpec {
        let mut s = spec.clone();
        match self {
            SweepParam::Vs => s.v_s = value,
            SweepParam::R => s.r = value,
            SweepParam::L => s.l = value,
            SweepParam::C => s.c = value,
            SweepParam::Rc => s.r_c = value,
            SweepParam::T => s.t = value,
            SweepParam::Vm => s.v_m = value,
            SweepParam::Vr => s.v_r = value,
        }
        s
    }
}

/// A parameter axis for boundary tracing.
#[derive(Debug, Clone, Copy)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StableSide {
    LowY,
    HighY,
}

/// One column of the traced critical boundary; `y` is `None` where the
/// stability indicator does not change sign over the y range.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: Option<f64>,
    pub stable_side: Option<StableSide>,
}

/// Signed distance of the operating source voltage from the fold: positive
/// while a periodic solution survives (spec.v_s below every fold).
fn stability_indicator(spec: &ConverterSpec, grid: usize) -> Result<f64, CriticalError> {
    let hs = HarmonicSums::new(spec)?;
    let folds = find_snb_with(&hs, spec, grid)?;
    let v_star = folds
        .iter()
        .map(|s| s.v_s_star)
        .fold(f64::NEG_INFINITY, f64::max);
    if v_star == f64::NEG_INFINITY {
        Ok(f64::INFINITY)
    } else {
        Ok(v_star - spec.v_s)
    }
}

/// Trace the saddle-node boundary over a two-parameter rectangle.
///
/// For each x-grid value the y axis is bisected on the sign change of the
/// stability indicator. When y is the source voltage itself the fold value
/// is taken directly from the branch scan.
pub fn trace_boundary(
    spec: &ConverterSpec,
    x_axis: SweepAxis,
    y_axis: SweepAxis,
    resolution: usize,
) -> Result<Vec<BoundaryPoint>, CriticalError> {
    let resolution = resolution.max(2);
    let grid = 600;
    let xs: Vec<f64> = (0..resolution)
        .map(|i| x_axis.min + (x_axis.max - x_axis.min) * i as f64 / (resolution - 1) as f64)
        .collect();
    let columns: Vec<Result<BoundaryPoint, CriticalError>> = xs
        .par_iter()
        .map(|&x| {
            let sx = x_axis.param.apply(spec, x);
            if y_axis.param == SweepParam::Vs {
                let hs = HarmonicSums::new(&sx)?;
                let folds = find_snb_with(&hs, &sx, grid)?;
                let v_star = folds
                    .iter()
                    .map(|s| s.v_s_star)
                    .fold(f64::NEG_INFINITY, f64::max);
                let inside = v_star.is_finite() && v_star >= y_axis.min && v_star <= y_axis.max;
                return Ok(BoundaryPoint {
                    x,
                    y: inside.then_some(v_star),
                    stable_side: inside.then_some(StableSide::LowY),
                });
            }
            let f = |y: f64| stability_indicator(&y_axis.param.apply(&sx, y), grid);
            let f_lo = f(y_axis.min)?;
            let f_hi = f(y_axis.max)?;
            if f_lo.signum() == f_hi.signum() || !(f_lo.is_finite() || f_hi.is_finite()) {
                return Ok(BoundaryPoint {
                    x,
                    y: None,
                    stable_side: None,
                });
            }
            let (mut lo, mut hi, mut s_lo) = (y_axis.min, y_axis.max, f_lo);
            for _ in 0..40 {
                if (hi - lo).abs() <= 1e-9 * (y_axis.max - y_axis.min) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if fm.signum() == s_lo.signum() {
                    lo = mid;
                    s_lo = fm;
                } else {
                    hi = mid;
                }
            }
            let side = if f_lo > 0.0 {
                StableSide::LowY
            } else {
                StableSide::HighY
            };
            Ok(BoundaryPoint {
                x,
                y: Some(0.5 * (lo + hi)),
                stable_side: Some(side),
            })
        })
        .collect();
    columns.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::multiloop_example;

    fn cmc_light_load() -> ConverterSpec {
        // K = 2L/(RT) = 0.5, m_a = V_m/T = 1e4 V/s.
        ConverterSpec {
            v_s: 10.0,
            r: 20.0,
            l: 100e-6,
            c: 100e-6,
            r_c: 0.0,
            t: 20e-6,
            v_m: 0.2,
            v_r: 0.6,
            scheme: ControlScheme::Cmc,
        }
    }

    /// Brute-force oracles: the raw pair-sums without asymptote subtraction,
    /// taken far enough that their own tails are negligible.
    fn brute_sums(spec: &ConverterSpec, duty: f64, n: usize) -> (f64, f64) {
        let (g, _) = build_loop_gain(spec).unwrap();
        let g0 = dc_gain(&g).unwrap().finite().unwrap();
        let ws = spec.omega_s();
        let theta = 2.0 * PI * duty;
        let mut steady = duty * g0;
        let mut tangency = 0.0;
        for k in 1..=n {
            let phase = Complex64::from_polar(1.0, theta * k as f64);
            let gn = g.eval(Complex64::new(0.0, k as f64 * ws)).unwrap();
            steady += ((phase - 1.0) * gn).im / (k as f64 * PI);
            tangency += (phase * gn).re;
        }
        (steady, tangency)
    }

    #[test]
    fn accelerated_sums_match_brute_force() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        for duty in [0.31, 0.55, 0.7, 0.88] {
            let (bs, bt) = brute_sums(&spec, duty, 2_000_000);
            let (s, t) = hs.sums_at(duty);
            assert!(
                (s - bs).abs() < 1e-8 * (1.0 + bs.abs()),
                "steady at {duty}: {s} vs {bs}"
            );
            assert!(
                (t - bt).abs() < 1e-7 * (1.0 + bt.abs()),
                "tangency at {duty}: {t} vs {bt}"
            );
        }
    }

    #[test]
    fn branch_hits_worked_example_fold() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        // v_s(0.7 T) is the published fold voltage.
        let v = hs.vs_of_d(&spec, 0.7 * spec.t).unwrap();
        assert!((v - 20.0).abs() < 0.1, "v_s(0.7T) = {v}");
        // The S-plot crosses the ramp slope there.
        let s = hs.snb_lhs(&spec, 0.7 * spec.t, v).unwrap();
        assert!((s - 2500.0).abs() < 25.0, "S(0.7T) = {s}");
        // Residual of the balance at the printed operating point. The
        // published parameters are rounded to ~4 digits, so the residual is
        // bounded by that rounding, not by machine precision.
        let r = hs.steady_residual(&spec, 0.7 * spec.t, 20.0).unwrap();
        assert!(r.abs() < 1e-3 * spec.v_m, "residual {r}");
    }

    #[test]
    fn residual_is_zero_on_constructed_branch() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        for i in 0..50 {
            let d = spec.t * (0.25 + 0.5 * i as f64 / 49.0);
            if let Ok(v) = hs.vs_of_d(&spec, d) {
                let r = hs.steady_residual(&spec, d, v).unwrap();
                assert!(r.abs() < 1e-9 * spec.v_m, "d = {d}: residual {r}");
            }
        }
    }

    #[test]
    fn residual_scales_affinely_with_reference() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        let d = 0.6 * spec.t;
        let v1 = hs.vs_of_d(&spec, d).unwrap();
        // Double v_r and V_m: the implied v_s doubles and the residual stays 0.
        let mut spec2 = spec.clone();
        spec2.v_r *= 2.0;
        spec2.v_m *= 2.0;
        let hs2 = HarmonicSums::new(&spec2).unwrap();
        let v2 = hs2.vs_of_d(&spec2, d).unwrap();
        assert!((v2 - 2.0 * v1).abs() < 1e-9 * v1.abs());
        assert!(hs2.steady_residual(&spec2, d, v2).unwrap().abs() < 1e-9 * spec2.v_m);
    }

    #[test]
    fn zero_reference_numerator_gives_zero_source() {
        // v_r chosen so the balance numerator vanishes at d: v_s = 0.
        let mut spec = multiloop_example();
        let d = 0.4 * spec.t;
        spec.v_r = spec.v_m * 0.4; // offset gain is 1 for state feedback
        let hs = HarmonicSums::new(&spec).unwrap();
        let v = hs.vs_of_d(&spec, d).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn residual_limit_at_small_duty() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        let r = hs.steady_residual(&spec, 1e-9 * spec.t, 20.0).unwrap();
        let offset = spec.dc_offset_gain().unwrap() * spec.v_r;
        assert!((r - offset).abs() < 1e-5, "r -> G_c(0) v_r, got {r}");
    }

    #[test]
    fn find_snb_locates_worked_example() {
        let spec = multiloop_example();
        let sols = find_snb(&spec).unwrap();
        assert!(!sols.is_empty());
        let primary = sols
            .iter()
            .max_by(|a, b| a.v_s_star.partial_cmp(&b.v_s_star).unwrap())
            .unwrap();
        assert!(
            (primary.duty - 0.7).abs() < 0.005,
            "duty {} at fold",
            primary.duty
        );
        assert!((primary.v_s_star - 20.0).abs() < 0.1);
        assert!(primary.residual_8.abs() <= 1e-6 * spec.ramp_slope());
        assert!(primary.residual_5.abs() <= 1e-9 * spec.v_m);
    }

    #[test]
    fn fold_is_extremum_of_branch() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        let sols = find_snb(&spec).unwrap();
        let primary = sols
            .iter()
            .max_by(|a, b| a.v_s_star.partial_cmp(&b.v_s_star).unwrap())
            .unwrap();
        let h = 1e-6 * spec.t;
        let vm = hs.vs_of_d(&spec, primary.d_star - h).unwrap();
        let vp = hs.vs_of_d(&spec, primary.d_star + h).unwrap();
        let dv = (vp - vm) / (2.0 * h);
        // dv_s/dd vanishes at the fold; compare against the branch slope scale.
        let slope_scale = {
            let far = hs.vs_of_d(&spec, primary.d_star - 0.1 * spec.t).unwrap();
            ((far - primary.v_s_star) / (0.1 * spec.t)).abs()
        };
        assert!(
            dv.abs() < 1e-3 * slope_scale.max(1.0),
            "dv/dd at fold = {dv}, scale {slope_scale}"
        );
    }

    #[test]
    fn two_branch_points_below_fold() {
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        // At v_s = 19.5 the branch is crossed twice (stable + unstable).
        let mut crossings = 0;
        let m = 4000;
        let mut prev: Option<f64> = None;
        for i in 1..m {
            let d = spec.t * i as f64 / m as f64;
            let v = match hs.vs_of_d(&spec, d) {
                Ok(v) => v,
                Err(_) => {
                    prev = None;
                    continue;
                }
            };
            if let Some(p) = prev {
                if (p - 19.5) * (v - 19.5) < 0.0 && d / spec.t > 0.05 && d / spec.t < 0.98 {
                    crossings += 1;
                }
            }
            prev = Some(v);
        }
        assert_eq!(crossings, 2, "expected a stable/unstable pair at 19.5 V");
    }

    #[test]
    fn splot_crossing_and_minimum_ramp() {
        let spec = multiloop_example();
        let grid: Vec<f64> = (1..800).map(|i| spec.t * i as f64 / 800.0).collect();
        let pts = s_curve(&spec, &grid).unwrap();
        // Crossing of m_a = 2500 at D = 0.7.
        let mut cross = None;
        for w in pts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if (a.s_value - 2500.0) * (b.s_value - 2500.0) <= 0.0 && a.duty > 0.5 && a.duty < 0.8 {
                cross = Some(0.5 * (a.duty + b.duty));
                break;
            }
        }
        assert!((cross.expect("crossing") - 0.7).abs() < 0.005);
        // Hints flip from stable to unstable across the crossing.
        let below: Vec<_> = pts.iter().filter(|p| p.duty < 0.65).collect();
        assert!(below
            .iter()
            .filter(|p| p.duty > 0.3)
            .all(|p| p.stable_hint == StabilityHint::Stable));

        let ramp = min_stabilizing_ramp(&spec).unwrap();
        assert!(
            (ramp - 2898.0).abs() < 0.02 * 2898.0,
            "minimum stabilizing ramp {ramp}"
        );
    }

    #[test]
    fn open_loop_curve_is_flat_zero() {
        let spec = ConverterSpec {
            scheme: ControlScheme::Custom {
                f: RationalTf::zero(),
                dc_offset_gain: 1.0,
            },
            ..multiloop_example()
        };
        let grid: Vec<f64> = (1..50).map(|i| spec.t * i as f64 / 50.0).collect();
        let pts = s_curve(&spec, &grid).unwrap();
        for p in &pts {
            assert_eq!(p.s_value, 0.0);
            assert_eq!(p.stable_hint, StabilityHint::Stable);
        }
        assert_eq!(min_stabilizing_ramp(&spec).unwrap(), 0.0);
        assert!(find_snb(&spec).unwrap().is_empty());
    }

    #[test]
    fn closed_forms_match_worked_example() {
        let spec = multiloop_example();
        let cf = StateFeedbackClosedForm::new(&spec).unwrap();
        let d17 = cf.duty_17().unwrap();
        assert!((d17 - 0.713014).abs() < 1e-4, "duty_17 = {d17}");
        // Eq-15 S-plot at the published crossing.
        let s = cf.splot_15(0.7);
        assert!((s - 2500.0).abs() < 30.0, "splot_15(0.7) = {s}");
        assert!(!cf.ripple_warning());
    }

    #[test]
    fn closed_form_reduces_to_cmc() {
        // With k_v = 0, k_i = 1 the explicit duty reduces exactly to the
        // CMC form (K+1)/2 + L m_a / v_s.
        let spec = cmc_light_load();
        let sf = ConverterSpec {
            scheme: ControlScheme::StateFeedback { k_i: 1.0, k_v: 0.0 },
            ..spec.clone()
        };
        let a = StateFeedbackClosedForm::new(&sf)
            .unwrap()
            .duty_17()
            .unwrap();
        let b = closed_form_cmc(&spec).unwrap();
        assert_eq!(a, b);
        assert!((b - 0.85).abs() < 1e-12);
    }

    #[test]
    fn approximate_and_exact_splot_agree() {
        // The left side of the explicit form reproduces the exact S-plot
        // within a fraction of a percent of the ramp scale.
        let spec = multiloop_example();
        let hs = HarmonicSums::new(&spec).unwrap();
        let cf = StateFeedbackClosedForm::new(&spec).unwrap();
        let d = 0.7 * spec.t;
        let v = hs.vs_of_d(&spec, d).unwrap();
        let exact = hs.snb_lhs(&spec, d, v).unwrap();
        let approx = StateFeedbackClosedForm {
            v_s: v,
            ..cf.clone()
        }
        .splot_15(0.7);
        assert!(
            (exact - approx).abs() < 1e-3 * spec.ramp_slope(),
            "exact {exact} vs approx {approx}"
        );
    }

    #[test]
    fn identity_between_normalized_and_ramp_forms() {
        // m_a ((14)L - (14)R + 1) == (15)L - m_a for random parameters.
        let mut seed = 0x9e3779b97f4a7c15_u64;
        let mut rnd = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let spec = ConverterSpec {
                v_s: 5.0 + 40.0 * rnd(),
                r: 5.0 + 45.0 * rnd(),
                l: 1e-3 * (1.0 + 30.0 * rnd()),
                c: 1e-6 * (10.0 + 200.0 * rnd()),
                r_c: 0.0,
                t: 1e-6 * (50.0 + 500.0 * rnd()),
                v_m: 0.5 + 2.0 * rnd(),
                v_r: rnd(),
                scheme: ControlScheme::StateFeedback {
                    k_i: 0.2 + 3.0 * rnd(),
                    k_v: 0.4 * rnd() - 0.2,
                },
            };
            let duty = 0.1 + 0.8 * rnd();
            let (k_i, k_v) = match spec.scheme {
                ControlScheme::StateFeedback { k_i, k_v } => (k_i, k_v),
                _ => unreachable!(),
            };
            let ws = spec.omega_s();
            let a0 = crate::ftransform::alpha_taylor(duty, 0).unwrap();
            let a1 = crate::ftransform::alpha_taylor(duty, 1).unwrap();
            let lhs14 = spec.v_s / spec.v_m
                * (k_i * a0 / (spec.l * ws) + k_v * a1 / (spec.l * spec.c * ws * ws));
            let rhs14 = spec.v_s / spec.v_m * (k_i / spec.r + k_v) + 1.0;
            let m_a = spec.ramp_slope();
            let lhs15 = StateFeedbackClosedForm::new(&spec).unwrap().splot_15(duty);
            let left = m_a * (lhs14 - rhs14 + 1.0);
            let right = lhs15; // identity: lhs15 - m_a == m_a (lhs14 - rhs14)
            assert!(
                (left - right).abs() <= 1e-9 * (left.abs().max(right.abs()) + m_a),
                "identity violated: {left} vs {right}"
            );
        }
    }

    #[test]
    fn cmc_fold_against_closed_form() {
        // Exact scan vs D* = (K+1)/2 + L m_a / v_s = 0.85, with the
        // reference chosen to put the fold at the nominal source voltage.
        let mut spec = cmc_light_load();
        let hs = HarmonicSums::new(&spec).unwrap();
        // Choose v_r = i_c so the fold lands at v_s = spec.v_s: first find
        // the duty solving the tangency condition at fixed v_s.
        let m_a = spec.ramp_slope();
        let mut lo = 0.70 * spec.t;
        let mut hi = 0.95 * spec.t;
        let f = |d: f64| hs.snb_lhs(&spec, d, spec.v_s).unwrap() - m_a;
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d_star = 0.5 * (lo + hi);
        let (steady, _) = hs.sums_at(d_star / spec.t);
        spec.v_r = spec.v_s * steady + spec.v_m * d_star / spec.t;

        let sols = find_snb(&spec).unwrap();
        let fold = sols
            .iter()
            .min_by(|a, b| {
                (a.v_s_star - spec.v_s)
                    .abs()
                    .partial_cmp(&(b.v_s_star - spec.v_s).abs())
                    .unwrap()
            })
            .expect("fold");
        assert!((fold.v_s_star - spec.v_s).abs() < 1e-3 * spec.v_s);
        let d18 = closed_form_cmc(&spec).unwrap();
        assert!(
            (fold.duty - d18).abs() < 0.01,
            "exact duty {} vs closed form {d18}",
            fold.duty
        );
    }

    #[test]
    fn cmc_without_ramp_folds_at_half_k_plus_one() {
        // V_m = 0: infinite loop gain, ramp-slope form only; the critical
        // duty collapses to (K+1)/2 independent of v_s.
        let spec = ConverterSpec {
            v_m: 0.0,
            ..cmc_light_load()
        };
        let sols = find_snb(&spec).unwrap();
        assert!(!sols.is_empty());
        let want = (spec.k_load() + 1.0) / 2.0;
        let got = sols
            .iter()
            .min_by(|a, b| {
                (a.duty - want)
                    .abs()
                    .partial_cmp(&(b.duty - want).abs())
                    .unwrap()
            })
            .unwrap();
        assert!(
            (got.duty - want).abs() < 0.01,
            "duty {} vs {want}",
            got.duty
        );
    }

    #[test]
    fn heavy_load_cmc_has_no_fold_in_range() {
        // K >= 1 pushes the ramp-free critical duty past 1.
        let spec = ConverterSpec {
            r: 5.0,
            v_m: 0.0,
            ..cmc_light_load()
        };
        assert!(spec.k_load() >= 1.0);
        let d = (spec.k_load() + 1.0) / 2.0;
        assert!(d >= 1.0);
        assert!(find_snb(&spec).unwrap().is_empty());
    }

    #[test]
    fn boundary_recovers_fold_voltage() {
        let spec = multiloop_example();
        let pts = trace_boundary(
            &spec,
            SweepAxis {
                param: SweepParam::R,
                min: 22.0,
                max: 22.0,
            },
            SweepAxis {
                param: SweepParam::Vs,
                min: 15.0,
                max: 25.0,
            },
            2,
        )
        .unwrap();
        for p in &pts {
            let y = p.y.expect("boundary point");
            assert!((y - 20.0).abs() < 0.1, "boundary at {y}");
            assert_eq!(p.stable_side, Some(StableSide::LowY));
        }
    }

    #[test]
    fn boundary_empty_when_stability_constant() {
        let spec = ConverterSpec {
            scheme: ControlScheme::Custom {
                f: RationalTf::zero(),
                dc_offset_gain: 1.0,
            },
            ..multiloop_example()
        };
        let pts = trace_boundary(
            &spec,
            SweepAxis {
                param: SweepParam::R,
                min: 10.0,
                max: 30.0,
            },
            SweepAxis {
                param: SweepParam::L,
                min: 1e-3,
                max: 50e-3,
            },
            3,
        )
        .unwrap();
        assert!(pts.iter().all(|p| p.y.is_none()));
    }

    #[test]
    fn cmc_boundary_in_load_resistance_matches_rearranged_closed_form() {
        // Where the CMC fold exits the duty range (D* -> 1 at the fold
        // voltage v_s) the critical load satisfies
        // R = 2L / (T (1 - 2 L m_a / v_s)): the tangency condition at fixed
        // v_s stops having a root inside (0, 1) exactly there.
        let spec = cmc_light_load();
        let r_star = 2.0 * spec.l / (spec.t * (1.0 - 2.0 * spec.l * spec.ramp_slope() / spec.v_s));
        let tangency_margin = |r: f64| {
            let s = SweepParam::R.apply(&spec, r);
            let hs = HarmonicSums::new(&s).unwrap();
            hs.snb_lhs(&s, 0.999 * s.t, s.v_s).unwrap() - s.ramp_slope()
        };
        // The +/-10% margin covers the gap between the exact series and the
        // first-harmonic closed form behind r_star.
        assert!(
            tangency_margin(r_star * 0.90) < 0.0,
            "heavy load keeps D* > 1"
        );
        assert!(
            tangency_margin(r_star * 1.10) > 0.0,
            "light load pulls D* < 1"
        );
        // And on the light side the fixed-v_s tangency root sits near the
        // closed-form duty.
        let light = SweepParam::R.apply(&spec, r_star * 1.10);
        let hs = HarmonicSums::new(&light).unwrap();
        let m_a = light.ramp_slope();
        let f = |d: f64| hs.snb_lhs(&light, d, light.v_s).unwrap() - m_a;
        let (mut lo, mut hi) = (0.6 * light.t, 0.999 * light.t);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d_star = 0.5 * (lo + hi) / light.t;
        let want = (light.k_load() + 1.0) / 2.0 + light.l * m_a / light.v_s;
        assert!((d_star - want).abs() < 0.01, "duty {d_star} vs {want}");
    }
}
