//! Shoot-and-scale: one `lambda = 1` shot per starting height `alpha`, the
//! first zero `R`, and the rescaling `u(r) = v(R r)` that turns it into a
//! solution of the Dirichlet problem on the unit ball with `lambda = R^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ivp::{self, EventKind, Frame, IntegratorSettings, RadialProfile, Termination, SHOOT_EVENTS};
use crate::model::NonlinearityModel;
use crate::ode::{self, Crossing, Direction, StepControl, Stop};

/// Why a shot never reached `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoDescentReason {
    /// `u'` vanished with `u > 0`.
    Stalled,
    RangeExceeded,
    Blowup,
    RMaxReached,
}

impl NoDescentReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoDescentReason::Stalled => "stalled",
            NoDescentReason::RangeExceeded => "range_exceeded",
            NoDescentReason::Blowup => "blowup",
            NoDescentReason::RMaxReached => "r_max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShotOutcome {
    Zero { radius: f64 },
    NoDescent { reason: NoDescentReason, r: f64, u: f64, du: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotResult {
    pub alpha: f64,
    pub outcome: ShotOutcome,
    /// The unscaled `lambda = 1` profile.
    pub profile: RadialProfile,
}

/// A solution of the Dirichlet problem on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpSolution {
    pub lambda: f64,
    pub profile: RadialProfile,
}

fn check_alpha(model: &NonlinearityModel, alpha: f64) -> Result<()> {
    let ok = alpha.is_finite() && alpha > 0.0;
    if !ok {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha} for {model}")));
    }
    Ok(())
}

fn outcome_of(profile: &RadialProfile) -> ShotOutcome {
    let last = profile.last();
    let no_descent = |reason| ShotOutcome::NoDescent { reason, r: last.r, u: last.u, du: last.du };
    match profile.termination {
        Termination::Event(EventKind::ZeroCrossing) => ShotOutcome::Zero { radius: last.r },
        Termination::Event(EventKind::DerivativeZero) => no_descent(NoDescentReason::Stalled),
        Termination::Event(EventKind::RangeExceeded) => no_descent(NoDescentReason::RangeExceeded),
        Termination::Event(EventKind::Blowup) => no_descent(NoDescentReason::Blowup),
        Termination::RMax => no_descent(NoDescentReason::RMaxReached),
    }
}

/// Integration frame for a `lambda = 1` shot from `alpha`. For `e^u` the shot
/// from `alpha` is the shot from 0 stopped at level `-alpha`, with `r`
/// stretched by `e^{alpha/2}`; that frame never evaluates `e^alpha`.
struct ShotFrame {
    start: f64,
    frame: Frame,
    /// `r_physical = r_frame * r_scale`
    r_scale: f64,
}

fn shot_frame(model: &NonlinearityModel, alpha: f64, settings: &IntegratorSettings) -> ShotFrame {
    if model.is_translation_invariant() {
        let stretch = (0.5 * alpha).exp();
        ShotFrame {
            start: 0.0,
            frame: Frame { zero_level: -alpha, r_max: settings.r_max * stretch, u_max: settings.u_max - alpha },
            r_scale: 1.0 / stretch,
        }
    } else {
        ShotFrame {
            start: alpha,
            frame: Frame { zero_level: 0.0, r_max: settings.r_max, u_max: settings.u_max },
            r_scale: 1.0,
        }
    }
}

/// Largest height for which `e^u` profiles are stored in the stretched
/// frame; beyond it `s^2` leaves double range.
pub const MAX_STRETCHED_HEIGHT: f64 = 600.0;

/// Integrates with `lambda = 1` from `u(0) = alpha` to the first zero, or
/// until the shot stalls, leaves the admissible range or reaches `r_max`.
pub fn first_zero(model: &NonlinearityModel, alpha: f64, n: u32, settings: &IntegratorSettings) -> Result<ShotResult> {
    check_alpha(model, alpha)?;
    if model.is_translation_invariant() && alpha > MAX_STRETCHED_HEIGHT {
        return Err(Error::Overflow(format!(
            "a stored profile from alpha = {alpha} needs radii beyond double range; lambda_of_alpha works at any height"
        )));
    }
    let sf = shot_frame(model, alpha, settings);
    let mut profile = ivp::integrate_in_frame(model, sf.start, 1.0, n, settings, &SHOOT_EVENTS, &sf.frame)?;
    if sf.r_scale != 1.0 || sf.start != alpha {
        profile.map_frame(sf.r_scale, alpha - sf.start);
        profile.lambda = 1.0;
    }
    let outcome = outcome_of(&profile);
    Ok(ShotResult { alpha, outcome, profile })
}

/// `(lambda, R)` with `lambda = R^2`, or `None` when the shot has no zero.
pub fn lambda_of_alpha(model: &NonlinearityModel, alpha: f64, n: u32, settings: &IntegratorSettings) -> Result<Option<(f64, f64)>> {
    if model.is_translation_invariant() {
        return Ok(match lambda_with_slope(model, alpha, n, settings)? {
            SlopeShot::Zero(s) => Some((s.lambda, s.radius)),
            SlopeShot::NoDescent(_) => None,
        });
    }
    Ok(match first_zero(model, alpha, n, settings)?.outcome {
        ShotOutcome::Zero { radius } => Some((radius * radius, radius)),
        ShotOutcome::NoDescent { .. } => None,
    })
}

/// The Dirichlet solution on `[0, 1]` with `u(0) = alpha`, if the shot reaches zero.
pub fn bvp_profile(model: &NonlinearityModel, alpha: f64, n: u32, settings: &IntegratorSettings) -> Result<Option<BvpSolution>> {
    let shot = first_zero(model, alpha, n, settings)?;
    Ok(match shot.outcome {
        ShotOutcome::Zero { radius } => {
            let profile = shot.profile.rescaled(radius);
            Some(BvpSolution { lambda: radius * radius, profile })
        }
        ShotOutcome::NoDescent { .. } => None,
    })
}

impl BvpSolution {
    /// `u(1)` from integrating the problem afresh with this `lambda` and
    /// `u(0) = alpha`; zero up to integration error.
    pub fn reshoot_residual(&self, model: &NonlinearityModel, settings: &IntegratorSettings) -> Result<f64> {
        let s = IntegratorSettings { r_max: 1.0, h_init: settings.h_init.min(0.5), ..*settings };
        let p = ivp::integrate(model, self.profile.alpha, self.lambda, self.profile.n, &s, &[])?;
        Ok(p.last().u)
    }
}

/// `lambda(alpha)` together with `d lambda / d alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSample {
    pub lambda: f64,
    pub radius: f64,
    pub slope: f64,
}

/// Outcome of a shot that also carries the variational solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeShot {
    Zero(SlopeSample),
    NoDescent(NoDescentReason),
}

/// Shoots `(u, u', v, v')` where `v = du/dalpha` solves the linearized
/// equation with `v(0) = 1`. At the zero `R`, `dR/dalpha = -v(R)/u'(R)` and so
/// `dlambda/dalpha = -2 R v(R) / u'(R)`.
pub fn lambda_with_slope(model: &NonlinearityModel, alpha: f64, n: u32, settings: &IntegratorSettings) -> Result<SlopeShot> {
    check_alpha(model, alpha)?;
    settings.validate()?;
    ivp::check_n(n)?;
    if model.is_translation_invariant() {
        return translation_slope(model, alpha, n, settings);
    }
    let nf = n as f64;
    let d = model.derivs(alpha)?;
    let h0 = ivp::start_radius(model, alpha, 1.0, n, settings)?;
    let a2 = -d.f / (2.0 * nf);
    let a4 = d.f * d.df / (8.0 * nf * (nf + 2.0));
    let b2 = -d.df / (2.0 * nf);
    let b4 = -(d.df * b2 + d.d2f * a2) / (4.0 * (nf + 2.0));
    let h2 = h0 * h0;
    let y0 = [
        alpha + h2 * (a2 + a4 * h2),
        h0 * (2.0 * a2 + 4.0 * a4 * h2),
        1.0 + h2 * (b2 + b4 * h2),
        h0 * (2.0 * b2 + 4.0 * b4 * h2),
    ];
    // with f' singular at 0 the variational part cannot be carried to the zero
    let tail_level = if model.derivative_singular_at_zero() { TAIL_LEVEL * alpha } else { 0.0 };
    let frame = Frame { zero_level: tail_level, r_max: settings.r_max, u_max: settings.u_max };
    let events = ivp::crossings(&SHOOT_EVENTS, settings, &frame, h0);
    let ctl = StepControl {
        abs_tol: settings.abs_tol,
        rel_tol: settings.rel_tol,
        h_init: h0,
        h_min: settings.h_min,
        r_end: settings.r_max,
    };
    let nm1 = nf - 1.0;
    let rhs = |r: f64, y: &[f64; 4]| -> Result<[f64; 4]> {
        let d = model.derivs(y[0])?;
        Ok([y[1], -nm1 / r * y[1] - d.f, y[3], -nm1 / r * y[3] - d.df * y[2]])
    };
    let run = ode::solve(rhs, h0, y0, &ctl, &events, false)?;
    Ok(match run.stop {
        Stop::Event { tag, r, y } => match tag {
            0 if tail_level == 0.0 => {
                let slope = -2.0 * r * y[2] / y[1];
                SlopeShot::Zero(SlopeSample { lambda: r * r, radius: r, slope })
            }
            0 => finish_tail(model, n, settings, r, y)?,
            1 => SlopeShot::NoDescent(NoDescentReason::Stalled),
            _ => SlopeShot::NoDescent(NoDescentReason::RangeExceeded),
        },
        Stop::EndReached => SlopeShot::NoDescent(NoDescentReason::RMaxReached),
        Stop::NonFinite { .. } => SlopeShot::NoDescent(NoDescentReason::Blowup),
    })
}

/// Relative height at which [`lambda_with_slope`] hands over to the tail.
const TAIL_LEVEL: f64 = 1e-6;

/// From the state `y = (eta, p, v, v')` at `r1`, integrates `u` alone to its
/// zero `R`. With `tau = R - r1 ~ -eta / p`, `dR/dalpha = dr1/dalpha +
/// (eta / p^2) dp/dalpha`, exact up to `O(tau^2)` terms.
fn finish_tail(model: &NonlinearityModel, n: u32, settings: &IntegratorSettings, r1: f64, y: [f64; 4]) -> Result<SlopeShot> {
    let [eta, p, v, dv] = y;
    let nm1 = n as f64 - 1.0;
    let events = [Crossing { tag: EventKind::ZeroCrossing.tag(), component: 0, level: 0.0, direction: Direction::Down, after: r1 }];
    let tau_guess = eta / p.abs();
    let ctl = StepControl {
        abs_tol: settings.abs_tol,
        rel_tol: settings.rel_tol,
        h_init: 0.1 * tau_guess,
        h_min: settings.h_min.min(1e-6 * tau_guess),
        r_end: r1 + 100.0 * tau_guess,
    };
    let rhs = |r: f64, y: &[f64; 2]| -> Result<[f64; 2]> { Ok([y[1], -nm1 / r * y[1] - model.value(y[0].max(0.0))?]) };
    let run = ode::solve(rhs, r1, [eta, p], &ctl, &events, false)?;
    let Stop::Event { tag: 0, r, .. } = run.stop else {
        return Ok(SlopeShot::NoDescent(NoDescentReason::Stalled));
    };
    let dr1 = -v / p;
    let d2u = -nm1 / r1 * p - model.value(eta)?;
    let dp = dv + d2u * dr1;
    let dr = dr1 + eta / (p * p) * dp;
    Ok(SlopeShot::Zero(SlopeSample { lambda: r * r, radius: r, slope: 2.0 * r * dr }))
}

/// For `e^u`: `lambda = S^2 e^{-alpha}` where `V(S) = -alpha` on the shot
/// from 0, so `dlambda/dalpha = lambda (-2 / (S V'(S)) - 1)`. The shot runs in
/// `t = ln s` with `P = s V'`, which turns the equation into
/// `V_t = P`, `P_t = -(n-2) P - e^{V + 2t}` and keeps every height in range.
fn translation_slope(model: &NonlinearityModel, alpha: f64, n: u32, settings: &IntegratorSettings) -> Result<SlopeShot> {
    let h0 = ivp::start_radius(model, 0.0, 1.0, n, settings)?;
    let (v0, dv0) = ivp::series_start(model, 0.0, 1.0, n, h0)?;
    let t0 = h0.ln();
    let events = [
        Crossing { tag: EventKind::ZeroCrossing.tag(), component: 0, level: -alpha, direction: Direction::Down, after: t0 },
        Crossing {
            tag: EventKind::DerivativeZero.tag(),
            component: 1,
            level: 0.0,
            direction: Direction::Either,
            after: t0 + 10f64.ln(),
        },
        Crossing {
            tag: EventKind::RangeExceeded.tag(),
            component: 0,
            level: settings.u_max - alpha,
            direction: Direction::Up,
            after: t0,
        },
    ];
    let ctl = StepControl {
        abs_tol: settings.abs_tol,
        rel_tol: settings.rel_tol,
        h_init: 0.1,
        h_min: settings.h_min,
        r_end: settings.r_max.ln() + 0.5 * alpha,
    };
    let m = n as f64 - 2.0;
    let rhs = |t: f64, y: &[f64; 2]| -> Result<[f64; 2]> {
        let e = model.value(y[0] + 2.0 * t)?;
        Ok([y[1], -m * y[1] - e])
    };
    let run = ode::solve(rhs, t0, [v0, h0 * dv0], &ctl, &events, false)?;
    Ok(match run.stop {
        Stop::Event { tag: 0, r: t, y } => {
            let radius = (t - 0.5 * alpha).exp();
            let lambda = radius * radius;
            let slope = lambda * (-2.0 / y[1] - 1.0);
            SlopeShot::Zero(SlopeSample { lambda, radius, slope })
        }
        Stop::Event { tag: 1, .. } => SlopeShot::NoDescent(NoDescentReason::Stalled),
        Stop::Event { .. } => SlopeShot::NoDescent(NoDescentReason::RangeExceeded),
        Stop::EndReached => SlopeShot::NoDescent(NoDescentReason::RMaxReached),
        Stop::NonFinite { .. } => SlopeShot::NoDescent(NoDescentReason::Blowup),
    })
}
