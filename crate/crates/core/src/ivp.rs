//! The radial initial value problem
//!
//! ```text
//! u'' + (n-1)/r u' + lambda f(u) = 0,   u(0) = alpha,  u'(0) = 0
//! ```
//!
//! The coordinate singularity at `r = 0` is stepped over with a two-term
//! Taylor start; from there a Dormand–Prince pair runs until a requested
//! event or `r_max`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NonlinearityModel;
use crate::ode::{self, Crossing, Direction, Segment, StepControl, Stop};

/// Tolerances and limits for every radial integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub r_max: f64,
    pub u_max: f64,
    /// `RangeExceeded` fires below `-u_margin` when zero crossings are not requested.
    pub u_margin: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            h_init: 1e-4,
            h_min: 1e-14,
            r_max: 50.0,
            u_max: 1e6,
            u_margin: 1e-3,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let all_pos = [self.abs_tol, self.rel_tol, self.h_init, self.h_min, self.r_max, self.u_max, self.u_margin]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        if !all_pos {
            return Err(Error::InvalidParameter("integrator settings must be positive and finite".into()));
        }
        if !(self.h_min < self.h_init && self.h_init < self.r_max) {
            return Err(Error::InvalidParameter("integrator settings need h_min < h_init < r_max".into()));
        }
        Ok(())
    }

    /// Same settings with both tolerances multiplied by `factor`.
    pub fn scaled_tolerances(&self, factor: f64) -> Self {
        IntegratorSettings { abs_tol: self.abs_tol * factor, rel_tol: self.rel_tol * factor, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    ZeroCrossing,
    DerivativeZero,
    Blowup,
    RangeExceeded,
}

impl EventKind {
    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> EventKind {
        match tag {
            0 => EventKind::ZeroCrossing,
            1 => EventKind::DerivativeZero,
            2 => EventKind::Blowup,
            _ => EventKind::RangeExceeded,
        }
    }
}

/// Stop set used by the shooting routines.
pub const SHOOT_EVENTS: [EventKind; 4] =
    [EventKind::ZeroCrossing, EventKind::DerivativeZero, EventKind::Blowup, EventKind::RangeExceeded];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileNode {
    pub r: f64,
    pub u: f64,
    pub du: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub r: f64,
    pub u: f64,
    pub du: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Event(EventKind),
    RMax,
}

/// `u = alpha + a2 s^2 + a4 s^4 + u_shift` with `s = r / r_scale`, valid for `r <= h`.
///
/// The coefficients stay in the frame they were computed in so that frame
/// changes never overflow them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Series {
    pub h: f64,
    pub alpha: f64,
    pub a2: f64,
    pub a4: f64,
    pub r_scale: f64,
    pub u_shift: f64,
}

impl Series {
    fn eval(&self, r: f64) -> (f64, f64) {
        let s = r / self.r_scale;
        let s2 = s * s;
        (
            self.alpha + s2 * (self.a2 + self.a4 * s2) + self.u_shift,
            s * (2.0 * self.a2 + 4.0 * self.a4 * s2) / self.r_scale,
        )
    }

    fn eval_deriv(&self, r: f64) -> (f64, f64) {
        let s = r / self.r_scale;
        let s2 = s * s;
        let k = self.r_scale;
        (s * (2.0 * self.a2 + 4.0 * self.a4 * s2) / k, (2.0 * self.a2 + 12.0 * self.a4 * s2) / (k * k))
    }
}

/// A numerically integrated radial solution with its continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub n: u32,
    pub alpha: f64,
    pub lambda: f64,
    pub nodes: Vec<ProfileNode>,
    pub events: Vec<EventRecord>,
    pub termination: Termination,
    pub(crate) series: Series,
    pub(crate) segments: Vec<Segment<2>>,
}

#[derive(Serialize)]
struct ProfileJson<'a> {
    schema_version: &'static str,
    n: u32,
    alpha: f64,
    lambda: f64,
    termination: Termination,
    events: &'a [EventRecord],
    nodes: &'a [ProfileNode],
}

impl RadialProfile {
    pub fn r_end(&self) -> f64 {
        self.nodes.last().map_or(0.0, |p| p.r)
    }

    pub fn last(&self) -> ProfileNode {
        *self.nodes.last().expect("profiles always hold the r = 0 node")
    }

    /// `(u, u')` at `r` from the continuous extension; `None` outside `[0, r_end]`.
    pub fn eval(&self, r: f64) -> Option<(f64, f64)> {
        let end = self.r_end();
        if !(r >= 0.0) || r > end * (1.0 + 1e-12) + 1e-300 {
            return None;
        }
        if r <= self.series.h || self.segments.is_empty() {
            return Some(self.series.eval(r));
        }
        let y = ode::eval_segments(&self.segments, r.min(end))?;
        Some((y[0], y[1]))
    }

    /// `d/dr` of the interpolated `(u, u')`.
    pub(crate) fn eval_deriv(&self, r: f64) -> Option<(f64, f64)> {
        if r <= self.series.h || self.segments.is_empty() {
            return Some(self.series.eval_deriv(r));
        }
        let seg = ode::find_segment(&self.segments, r.min(self.r_end()))?;
        let d = seg.eval_deriv(r);
        Some((d[0], d[1]))
    }

    /// ODE residual of the continuous extension at `r`, for both components.
    pub fn residual(&self, model: &NonlinearityModel, r: f64) -> Result<(f64, f64)> {
        let (u, du) = self.eval(r).ok_or(Error::InvalidParameter(format!("r = {r} outside profile")))?;
        let (du_dense, d2u) = self.eval_deriv(r).expect("inside range");
        let f = model.value(u)?;
        Ok((du_dense - du, d2u + (self.n as f64 - 1.0) / r * du + self.lambda * f))
    }

    /// First `r` where `u(r) = level`, refined on the continuous extension.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        let first = self.nodes.first()?;
        if first.u == level {
            return Some(first.r);
        }
        let s0 = (first.u - level).signum();
        let idx = self.nodes.windows(2).position(|w| (w[1].u - level).signum() != s0)?;
        let (mut a, mut b) = (self.nodes[idx].r, self.nodes[idx + 1].r);
        let g = |r: f64| self.eval(r).map_or(f64::NAN, |(u, _)| u - level);
        let mut ga = g(a);
        if ga == 0.0 {
            return Some(a);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let gm = g(m);
            if gm == 0.0 {
                return Some(m);
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        // one Newton correction with the interpolated slope
        let r = 0.5 * (a + b);
        match self.eval(r) {
            Some((u, du)) if du != 0.0 => {
                let x = r - (u - level) / du;
                Some(if x >= a && x <= b { x } else { r })
            }
            _ => Some(r),
        }
    }

    /// Applies `r -> r * r_scale`, `u -> u + u_shift`, `u' -> u' / r_scale`,
    /// `lambda -> lambda / r_scale^2`. With `u_shift = 0` this maps solutions
    /// to solutions for every family; callers that shift must fix `lambda`.
    pub(crate) fn map_frame(&mut self, r_scale: f64, u_shift: f64) {
        let du_scale = 1.0 / r_scale;
        for p in &mut self.nodes {
            p.r *= r_scale;
            p.u += u_shift;
            p.du *= du_scale;
        }
        for e in &mut self.events {
            e.r *= r_scale;
            e.u += u_shift;
            e.du *= du_scale;
        }
        for s in &mut self.segments {
            s.map_frame(r_scale, &[1.0, du_scale], &[u_shift, 0.0]);
        }
        self.series.h *= r_scale;
        self.series.r_scale *= r_scale;
        self.series.u_shift += u_shift;
        self.alpha += u_shift;
        self.lambda *= du_scale * du_scale;
    }

    /// Multiplies `u` and `u'` by `k`, leaving `r` and `lambda` alone.
    pub(crate) fn scale_values(&mut self, k: f64) {
        for p in &mut self.nodes {
            p.u *= k;
            p.du *= k;
        }
        for e in &mut self.events {
            e.u *= k;
            e.du *= k;
        }
        for s in &mut self.segments {
            s.map_frame(1.0, &[k, k], &[0.0, 0.0]);
        }
        let ser = &mut self.series;
        ser.alpha *= k;
        ser.a2 *= k;
        ser.a4 *= k;
        ser.u_shift *= k;
        self.alpha *= k;
    }

    /// The same solution with `r` divided by `radius` (so a zero at `radius`
    /// moves to 1) and `lambda` multiplied by `radius^2`.
    pub fn rescaled(&self, radius: f64) -> RadialProfile {
        let mut p = self.clone();
        p.map_frame(1.0 / radius, 0.0);
        if let Some(last) = p.nodes.last_mut() {
            if (last.r - 1.0).abs() < 1e-12 {
                last.r = 1.0;
            }
        }
        p
    }

    /// `r,u,du` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,u,du\n");
        for p in &self.nodes {
            let _ = writeln!(s, "{},{},{}", p.r, p.u, p.du);
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ProfileJson {
            schema_version: "1",
            n: self.n,
            alpha: self.alpha,
            lambda: self.lambda,
            termination: self.termination,
            events: &self.events,
            nodes: &self.nodes,
        })
        .expect("profile serialises")
    }
}

/// Two-term Taylor state `(u(h), u'(h))` of the radial problem, error `O(h^6)`.
pub fn series_start(model: &NonlinearityModel, alpha: f64, lambda: f64, n: u32, h: f64) -> Result<(f64, f64)> {
    let s = series(model, alpha, lambda, n, h)?;
    Ok(s.eval(h))
}

fn series(model: &NonlinearityModel, alpha: f64, lambda: f64, n: u32, h: f64) -> Result<Series> {
    let d = model.derivs(alpha)?;
    let n = n as f64;
    let a2 = -lambda * d.f / (2.0 * n);
    let a4 = lambda * lambda * d.f * d.df / (8.0 * n * (n + 2.0));
    Ok(Series { h, alpha, a2, a4, r_scale: 1.0, u_shift: 0.0 })
}

/// Start radius: `h_init`, reduced so that the quadratic and quartic Taylor
/// terms stay small relative to the local scale of the solution.
pub(crate) fn start_radius(model: &NonlinearityModel, alpha: f64, lambda: f64, n: u32, settings: &IntegratorSettings) -> Result<f64> {
    let d = model.derivs(alpha)?;
    let mut h = settings.h_init;
    let curv = lambda * d.f.abs() / n as f64;
    if curv > 0.0 {
        h = h.min(1e-2 / curv.sqrt());
    }
    let lin = lambda * d.df.abs();
    if lin > 0.0 {
        h = h.min(1e-2 / lin.sqrt());
    }
    Ok(h.max(settings.h_min * 10.0))
}

pub(crate) fn check_n(n: u32) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dimension n must be at least 2, got {n}")));
    }
    Ok(())
}

/// Radial right-hand side for `(u, u')`.
pub(crate) fn radial_rhs(model: &NonlinearityModel, lambda: f64, n: u32) -> impl Fn(f64, &[f64; 2]) -> Result<[f64; 2]> + '_ {
    let nm1 = n as f64 - 1.0;
    move |r, y| {
        let f = model.value(y[0])?;
        Ok([y[1], -nm1 / r * y[1] - lambda * f])
    }
}

/// Stop rules in the integration frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    /// Level playing the role of `u = 0`.
    pub zero_level: f64,
    pub r_max: f64,
    pub u_max: f64,
}

pub(crate) fn crossings(stops: &[EventKind], settings: &IntegratorSettings, frame: &Frame, h0: f64) -> Vec<Crossing> {
    let mut out = Vec::new();
    let zero_requested = stops.contains(&EventKind::ZeroCrossing);
    if zero_requested {
        out.push(Crossing {
            tag: EventKind::ZeroCrossing.tag(),
            component: 0,
            level: frame.zero_level,
            direction: Direction::Down,
            after: 0.0,
        });
    }
    if stops.contains(&EventKind::DerivativeZero) {
        out.push(Crossing {
            tag: EventKind::DerivativeZero.tag(),
            component: 1,
            level: 0.0,
            direction: Direction::Either,
            after: (10.0 * settings.h_init).max(10.0 * h0),
        });
    }
    if stops.contains(&EventKind::RangeExceeded) {
        out.push(Crossing {
            tag: EventKind::RangeExceeded.tag(),
            component: 0,
            level: frame.u_max,
            direction: Direction::Up,
            after: 0.0,
        });
        if !zero_requested {
            out.push(Crossing {
                tag: EventKind::RangeExceeded.tag(),
                component: 0,
                level: frame.zero_level - settings.u_margin,
                direction: Direction::Down,
                after: 0.0,
            });
        }
    }
    out
}

/// Integrates the radial problem; stops at the first event in `stops` or at `r_max`.
pub fn integrate(
    model: &NonlinearityModel,
    alpha: f64,
    lambda: f64,
    n: u32,
    settings: &IntegratorSettings,
    stops: &[EventKind],
) -> Result<RadialProfile> {
    let frame = Frame { zero_level: 0.0, r_max: settings.r_max, u_max: settings.u_max };
    integrate_in_frame(model, alpha, lambda, n, settings, stops, &frame)
}

pub(crate) fn integrate_in_frame(
    model: &NonlinearityModel,
    alpha: f64,
    lambda: f64,
    n: u32,
    settings: &IntegratorSettings,
    stops: &[EventKind],
    frame: &Frame,
) -> Result<RadialProfile> {
    settings.validate()?;
    check_n(n)?;
    if !(alpha.is_finite() && lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("need finite alpha and lambda > 0, got alpha={alpha} lambda={lambda}")));
    }
    let h0 = start_radius(model, alpha, lambda, n, settings)?;
    let ser = series(model, alpha, lambda, n, h0)?;
    let (u0, du0) = ser.eval(h0);
    let ctl = StepControl {
        abs_tol: settings.abs_tol,
        rel_tol: settings.rel_tol,
        h_init: h0,
        h_min: settings.h_min,
        r_end: frame.r_max,
    };
    let events = crossings(stops, settings, frame, h0);
    let run = ode::solve(radial_rhs(model, lambda, n), h0, [u0, du0], &ctl, &events, true)?;

    let mut nodes = Vec::with_capacity(run.nodes.len() + 1);
    nodes.push(ProfileNode { r: 0.0, u: alpha, du: 0.0 });
    nodes.extend(run.nodes.iter().map(|(r, y)| ProfileNode { r: *r, u: y[0], du: y[1] }));

    let (termination, events) = match run.stop {
        Stop::Event { tag, r, y } => {
            let kind = EventKind::from_tag(tag);
            (Termination::Event(kind), vec![EventRecord { kind, r, u: y[0], du: y[1] }])
        }
        Stop::EndReached => (Termination::RMax, Vec::new()),
        Stop::NonFinite { r, y } => {
            if stops.contains(&EventKind::Blowup) {
                let rec = EventRecord { kind: EventKind::Blowup, r, u: y[0], du: y[1] };
                (Termination::Event(EventKind::Blowup), vec![rec])
            } else {
                return Err(Error::NonFiniteState { r });
            }
        }
    };
    Ok(RadialProfile { n, alpha, lambda, nodes, events, termination, series: ser, segments: run.segments })
}
