//! Bifurcation curves `lambda(alpha)` traced by shooting, their turning
//! points, shape classification and multiplicity queries at fixed `lambda`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::ivp::{IntegratorSettings, RadialProfile};
use crate::linearized::CertificateReport;
use crate::model::{Family, NonlinearityModel};
use crate::roots;
use crate::shoot::{self, NoDescentReason, SlopeShot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Geometric,
    Linear,
}

/// Sampling and refinement knobs for [`trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub grid_points: usize,
    pub spacing: Spacing,
    /// Width to which Zero/NoDescent boundaries are bisected.
    pub gap_resolution: f64,
    /// Allowed deviation of the sampled curve from its chords, relative to `lambda`.
    pub curvature_budget: f64,
    pub max_passes: usize,
    pub max_points: usize,
    /// Golden-section tolerance in `alpha` for the fallback fold search.
    pub fold_tolerance: f64,
    /// Turning points whose `lambda` excursion is below `prominence * lambda` are dropped.
    pub prominence: f64,
    pub settings: IntegratorSettings,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            grid_points: 200,
            spacing: Spacing::Geometric,
            gap_resolution: 1e-6,
            curvature_budget: 2e-3,
            max_passes: 8,
            max_points: 5000,
            fold_tolerance: 1e-8,
            prominence: 1e-7,
            settings: IntegratorSettings::default(),
        }
    }
}

impl TraceOptions {
    /// Defaults adjusted to the family: the cubic's upper branch lives in a
    /// narrow band just below `c`, which a geometric grid undersamples.
    pub fn for_model(model: &NonlinearityModel) -> Self {
        match model.family() {
            Family::Cubic { .. } => TraceOptions { grid_points: 400, spacing: Spacing::Linear, ..Default::default() },
            _ => Default::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if self.grid_points < 3 {
            return Err(Error::InvalidParameter(format!("grid_points must be at least 3, got {}", self.grid_points)));
        }
        let positive = [
            ("gap_resolution", self.gap_resolution),
            ("curvature_budget", self.curvature_budget),
            ("fold_tolerance", self.fold_tolerance),
            ("prominence", self.prominence),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// The `alpha` window used when none is given.
pub fn default_alpha_range(model: &NonlinearityModel) -> (f64, f64) {
    match model.family() {
        // the second fold moves out like 1/eps^2
        Family::PerturbedGelfand { epsilon } => (1e-3, (3.0 / (epsilon * epsilon)).max(200.0)),
        // heights are eps^2 times the perturbed-Gelfand ones
        Family::MuForm { epsilon } => {
            let e2 = epsilon * epsilon;
            (1e-3 * e2, (200.0 * e2).max(3.0))
        }
        Family::Cubic { c, .. } => (1e-3 * c, c * (1.0 - 1e-3)),
        Family::Limiting => (0.2, 20.0),
        Family::Constant { .. } => (0.1, 10.0),
        _ => (1e-3, 200.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub lambda: f64,
    /// `d lambda / d alpha`
    pub slope: f64,
}

/// A sample whose shot never reached zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub alpha: f64,
    pub reason: NoDescentReason,
}

/// An `alpha` interval with no solution; ends are the outermost NoDescent samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
    pub reason: NoDescentReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    /// `lambda` maximum: the curve turns to the left.
    Max,
    /// `lambda` minimum: the curve turns to the right.
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub alpha_star: f64,
    pub lambda_star: f64,
    pub kind: TurnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateReport>,
}

/// A maximal run of solutions between gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub turning_points: Vec<TurningPoint>,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Monotone,
    SShaped,
    MultiTurn(usize),
    Disconnected(Vec<Segment>),
}

impl Shape {
    pub fn label(&self) -> String {
        match self {
            Shape::Monotone => "monotone".into(),
            Shape::SShaped => "S-shaped".into(),
            Shape::MultiTurn(k) => format!("multi-turn({k})"),
            Shape::Disconnected(_) => "disconnected".into(),
        }
    }

    fn of_turns(tps: &[TurningPoint]) -> Shape {
        match tps {
            [] => Shape::Monotone,
            [a, b] if a.kind == TurnKind::Max && b.kind == TurnKind::Min => Shape::SShaped,
            _ => Shape::MultiTurn(tps.len()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Shape::Disconnected(segs) => json!({
                "kind": "disconnected",
                "segments": segs.iter().map(|s| json!({
                    "alpha_lo": s.alpha_lo,
                    "alpha_hi": s.alpha_hi,
                    "shape": s.shape.label(),
                    "turning_points": s.turning_points,
                })).collect::<Vec<_>>(),
            }),
            other => json!({ "kind": other.label() }),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationCurve {
    pub model: NonlinearityModel,
    pub n: u32,
    pub alpha_range: (f64, f64),
    /// Solutions, strictly increasing in `alpha`.
    pub points: Vec<CurvePoint>,
    pub rejected: Vec<Rejected>,
    pub gaps: Vec<Gap>,
    pub turning_points: Vec<TurningPoint>,
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Zero { lambda: f64, slope: f64 },
    NoDescent(NoDescentReason),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    alpha: f64,
    outcome: Outcome,
}

impl Sample {
    fn is_zero(&self) -> bool {
        matches!(self.outcome, Outcome::Zero { .. })
    }

    fn zero(&self) -> Option<(f64, f64)> {
        match self.outcome {
            Outcome::Zero { lambda, slope } => Some((lambda, slope)),
            Outcome::NoDescent(_) => None,
        }
    }
}

fn sample(model: &NonlinearityModel, alpha: f64, n: u32, settings: &IntegratorSettings) -> Result<Sample> {
    let outcome = match shoot::lambda_with_slope(model, alpha, n, settings)? {
        SlopeShot::Zero(s) => Outcome::Zero { lambda: s.lambda, slope: s.slope },
        SlopeShot::NoDescent(reason) => Outcome::NoDescent(reason),
    };
    Ok(Sample { alpha, outcome })
}

fn sample_all(model: &NonlinearityModel, alphas: &[f64], n: u32, settings: &IntegratorSettings) -> Result<Vec<Sample>> {
    alphas.par_iter().map(|&a| sample(model, a, n, settings)).collect()
}

fn merge(samples: &mut Vec<Sample>, new: Vec<Sample>) {
    samples.extend(new);
    samples.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    samples.dedup_by(|a, b| a.alpha == b.alpha);
}

fn grid(lo: f64, hi: f64, count: usize, spacing: Spacing) -> Vec<f64> {
    let last = count - 1;
    let mut g: Vec<f64> = (0..count)
        .map(|i| {
            let t = i as f64 / last as f64;
            match spacing {
                Spacing::Linear => lo + t * (hi - lo),
                Spacing::Geometric => lo * (hi / lo).powf(t),
            }
        })
        .collect();
    g[last] = hi;
    g
}

/// Bisects every Zero/NoDescent boundary wider than the gap resolution.
fn resolve_edges(model: &NonlinearityModel, n: u32, opts: &TraceOptions, samples: &mut Vec<Sample>) -> Result<()> {
    let edges: Vec<(Sample, Sample)> = samples
        .windows(2)
        .filter(|w| w[0].is_zero() != w[1].is_zero() && w[1].alpha - w[0].alpha > opts.gap_resolution)
        .map(|w| (w[0], w[1]))
        .collect();
    let found: Vec<Vec<Sample>> = edges
        .par_iter()
        .map(|&(a, b)| -> Result<Vec<Sample>> {
            let (mut lo, mut hi) = (a, b);
            while hi.alpha - lo.alpha > opts.gap_resolution {
                let mid = 0.5 * (lo.alpha + hi.alpha);
                if mid <= lo.alpha || mid >= hi.alpha {
                    break;
                }
                let s = sample(model, mid, n, &opts.settings)?;
                if s.is_zero() == lo.is_zero() {
                    lo = s;
                } else {
                    hi = s;
                }
            }
            Ok(vec![lo, hi])
        })
        .collect::<Result<_>>()?;
    merge(samples, found.into_iter().flatten().collect());
    Ok(())
}

/// Roots in `(0, 1)` of the derivative of the cubic Hermite interpolant.
fn hermite_extrema(l0: f64, l1: f64, m0: f64, m1: f64) -> Vec<(f64, f64)> {
    let d = l1 - l0;
    let b = 3.0 * d - 2.0 * m0 - m1;
    let c = -2.0 * d + m0 + m1;
    let value = |t: f64| l0 + t * (m0 + t * (b + t * c));
    // H'(t) = m0 + 2 b t + 3 c t^2
    let (qa, qb, qc) = (3.0 * c, 2.0 * b, m0);
    let mut ts = Vec::new();
    if qa.abs() < 1e-300 {
        if qb != 0.0 {
            ts.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            if q != 0.0 {
                ts.push(q / qa);
                ts.push(qc / q);
            } else {
                ts.push(0.0);
            }
        }
    }
    ts.into_iter().filter(|t| *t > 0.0 && *t < 1.0).map(|t| (t, value(t))).collect()
}

/// Midpoints of intervals whose Hermite interpolant bends more than the
/// budget allows or hides an extremum between two samples of equal slope sign.
fn refinement_midpoints(samples: &[Sample], opts: &TraceOptions) -> Vec<f64> {
    let mut out = Vec::new();
    for w in samples.windows(2) {
        let (Some((l0, s0)), Some((l1, s1))) = (w[0].zero(), w[1].zero()) else { continue };
        let (a0, a1) = (w[0].alpha, w[1].alpha);
        let d = a1 - a0;
        if d <= 1e-9 * a1.abs().max(1.0) {
            continue;
        }
        let scale = l0.abs().max(l1.abs());
        let bend = d * (s0 - s1).abs() / 8.0;
        let mut split = bend > opts.curvature_budget * scale;
        if !split && s0 * s1 > 0.0 {
            let thr = opts.prominence * scale;
            split = hermite_extrema(l0, l1, d * s0, d * s1)
                .iter()
                .any(|&(_, v)| (v - l0).abs() > thr && (v - l1).abs() > thr);
        }
        if split {
            out.push(0.5 * (a0 + a1));
        }
    }
    out
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(Error::InvalidParameter(format!("alpha range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Samples `lambda(alpha)` on `[alpha_lo, alpha_hi]`, resolves gaps, refines
/// turning points and classifies the result.
pub fn trace(model: &NonlinearityModel, n: u32, alpha_lo: f64, alpha_hi: f64, opts: &TraceOptions) -> Result<BifurcationCurve> {
    check_range(alpha_lo, alpha_hi)?;
    opts.validate()?;
    let mut samples = sample_all(model, &grid(alpha_lo, alpha_hi, opts.grid_points, opts.spacing), n, &opts.settings)?;
    resolve_edges(model, n, opts, &mut samples)?;
    for _ in 0..opts.max_passes {
        let mids = refinement_midpoints(&samples, opts);
        if mids.is_empty() || samples.len() + mids.len() > opts.max_points {
            break;
        }
        let new = sample_all(model, &mids, n, &opts.settings)?;
        merge(&mut samples, new);
        resolve_edges(model, n, opts, &mut samples)?;
    }
    if !samples.iter().any(Sample::is_zero) {
        return Err(Error::EmptyCurve { lo: alpha_lo, hi: alpha_hi });
    }
    let mut curve = assemble(model, n, (alpha_lo, alpha_hi), &samples);
    curve.turning_points = refine_with(&curve, model, n, opts)?;
    curve.shape = classify_with(&curve, opts.prominence);
    curve.turning_points = segments_of(&curve, opts.prominence).into_iter().flat_map(|s| s.turning_points).collect();
    Ok(curve)
}

/// [`trace`] over the family's default window and options.
pub fn trace_default(model: &NonlinearityModel, n: u32) -> Result<BifurcationCurve> {
    let (lo, hi) = default_alpha_range(model);
    trace(model, n, lo, hi, &TraceOptions::for_model(model))
}

fn assemble(model: &NonlinearityModel, n: u32, range: (f64, f64), samples: &[Sample]) -> BifurcationCurve {
    let mut points = Vec::new();
    let mut rejected = Vec::new();
    let mut gaps: Vec<Gap> = Vec::new();
    let mut open = false;
    for s in samples {
        match s.outcome {
            Outcome::Zero { lambda, slope } => {
                points.push(CurvePoint { alpha: s.alpha, lambda, slope });
                open = false;
            }
            Outcome::NoDescent(reason) => {
                rejected.push(Rejected { alpha: s.alpha, reason });
                match gaps.last_mut() {
                    Some(g) if open => g.hi = s.alpha,
                    _ => gaps.push(Gap { lo: s.alpha, hi: s.alpha, reason }),
                }
                open = true;
            }
        }
    }
    BifurcationCurve {
        model: *model,
        n,
        alpha_range: range,
        points,
        rejected,
        gaps,
        turning_points: Vec::new(),
        shape: Shape::Monotone,
    }
}

impl BifurcationCurve {
    /// Index ranges into `points` of the runs between gaps.
    fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=self.points.len() {
            let split = i == self.points.len()
                || self.gaps.iter().any(|g| g.lo > self.points[i - 1].alpha && g.hi < self.points[i].alpha);
            if split {
                runs.push((start, i - 1));
                start = i;
            }
        }
        runs
    }

    /// `lambda` by cubic Hermite interpolation of the samples; `None` outside
    /// the sampled runs.
    pub fn interpolate(&self, alpha: f64) -> Option<f64> {
        let i = self.points.partition_point(|p| p.alpha <= alpha);
        if i == 0 || i == self.points.len() {
            return (self.points.last()?.alpha == alpha).then(|| self.points.last().unwrap().lambda);
        }
        let (p, q) = (self.points[i - 1], self.points[i]);
        if self.gaps.iter().any(|g| g.lo > p.alpha && g.hi < q.alpha) {
            return None;
        }
        let d = q.alpha - p.alpha;
        let t = (alpha - p.alpha) / d;
        let (h00, h10) = ((1.0 + 2.0 * t) * (1.0 - t).powi(2), t * (1.0 - t).powi(2));
        let (h01, h11) = (t * t * (3.0 - 2.0 * t), t * t * (t - 1.0));
        Some(h00 * p.lambda + h10 * d * p.slope + h01 * q.lambda + h11 * d * q.slope)
    }

    /// CSV with columns `alpha,lambda,outcome`; NoDescent rows leave `lambda` empty.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(f64, Option<f64>, &str)> = self
            .points
            .iter()
            .map(|p| (p.alpha, Some(p.lambda), "zero"))
            .chain(self.rejected.iter().map(|r| (r.alpha, None, r.reason.as_str())))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["alpha", "lambda", "outcome"]).expect("in-memory write");
        for (a, l, o) in rows {
            let l = l.map(|l| format!("{l:.17e}")).unwrap_or_default();
            w.write_record([format!("{a:.17e}"), l, o.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema_version": "1",
            "model": self.model,
            "n": self.n,
            "alpha_range": [self.alpha_range.0, self.alpha_range.1],
            "points": self.points,
            "gaps": self.gaps,
            "turning_points": self.turning_points,
            "shape": self.shape.to_json(),
        })
    }
}

/// Drops turning points whose `lambda` excursion to a neighbour (another
/// turning point or the end of the run) is below `rel * scale`, and restores
/// max/min alternation.
fn prune(tps: &mut Vec<TurningPoint>, ends: (f64, f64), rel: f64) {
    loop {
        let scale = tps.iter().map(|t| t.lambda_star.abs()).fold(ends.0.abs().max(ends.1.abs()), f64::max);
        let thr = rel * scale;
        if let Some(i) = tps.windows(2).position(|w| w[0].kind == w[1].kind) {
            let keep_first = match tps[i].kind {
                TurnKind::Max => tps[i].lambda_star >= tps[i + 1].lambda_star,
                TurnKind::Min => tps[i].lambda_star <= tps[i + 1].lambda_star,
            };
            tps.remove(if keep_first { i + 1 } else { i });
            continue;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        let mut consider = |d: f64, lo: usize, len: usize| {
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, lo, len));
            }
        };
        for i in 0..tps.len().saturating_sub(1) {
            consider((tps[i].lambda_star - tps[i + 1].lambda_star).abs(), i, 2);
        }
        if let (Some(first), Some(last)) = (tps.first(), tps.last()) {
            consider((first.lambda_star - ends.0).abs(), 0, 1);
            consider((last.lambda_star - ends.1).abs(), tps.len() - 1, 1);
        }
        match best {
            Some((d, i, len)) if d < thr => {
                tps.drain(i..i + len);
            }
            _ => break,
        }
    }
}

fn candidate_brackets(curve: &BifurcationCurve, prominence: f64) -> Vec<(usize, TurningPoint)> {
    let mut out = Vec::new();
    for (lo, hi) in curve.runs() {
        let pts = &curve.points[lo..=hi];
        let mut tps = Vec::new();
        for (k, w) in pts.windows(2).enumerate() {
            if w[0].slope * w[1].slope < 0.0 || (w[0].slope != 0.0 && w[1].slope == 0.0) {
                let kind = if w[0].slope > 0.0 { TurnKind::Max } else { TurnKind::Min };
                let lambda_star = match kind {
                    TurnKind::Max => w[0].lambda.max(w[1].lambda),
                    TurnKind::Min => w[0].lambda.min(w[1].lambda),
                };
                // alpha_star temporarily holds the bracket index
                tps.push(TurningPoint { alpha_star: (lo + k) as f64, lambda_star, kind, certificates: Vec::new() });
            }
        }
        prune(&mut tps, (pts[0].lambda, pts[pts.len() - 1].lambda), prominence);
        out.extend(tps.into_iter().map(|t| (t.alpha_star as usize, t)));
    }
    out
}

fn refine_one(model: &NonlinearityModel, n: u32, opts: &TraceOptions, a: CurvePoint, b: CurvePoint, kind: TurnKind) -> Result<TurningPoint> {
    let sign = if kind == TurnKind::Max { 1.0 } else { -1.0 };
    let lost = || Error::BracketLost { lo: a.alpha, hi: b.alpha };
    let eval = |x: f64| -> Result<(f64, f64)> {
        match sample(model, x, n, &opts.settings)?.outcome {
            Outcome::Zero { lambda, slope } => Ok((lambda, slope)),
            Outcome::NoDescent(_) => Err(lost()),
        }
    };
    let xtol = 1e-14 * b.alpha.abs().max(1.0);
    let alpha_star = if a.slope * b.slope < 0.0 {
        // lambda is flat at the fold, so the slope root is far better conditioned than a golden search
        roots::illinois(|x| Ok(eval(x)?.1), a.alpha, b.alpha, a.slope, b.slope, xtol)?
    } else {
        golden_polish(&eval, sign, a.alpha, b.alpha, opts.fold_tolerance, xtol).map_err(|_| lost())?
    };
    if !(alpha_star >= a.alpha && alpha_star <= b.alpha) {
        return Err(lost());
    }
    let (lambda_star, _) = eval(alpha_star)?;
    Ok(TurningPoint { alpha_star, lambda_star, kind, certificates: Vec::new() })
}

fn golden_polish(eval: &dyn Fn(f64) -> Result<(f64, f64)>, sign: f64, lo: f64, hi: f64, tol: f64, xtol: f64) -> Result<f64> {
    let (g0, g1) = roots::golden_max(|x| Ok(sign * eval(x)?.0), lo, hi, tol)?;
    let (l0, s0) = eval(g0)?;
    let (l1, s1) = eval(g1)?;
    if s0 * s1 < 0.0 {
        return roots::illinois(|x| Ok(eval(x)?.1), g0, g1, s0, s1, xtol);
    }
    // an optimum pinned to the bracket edge is not a fold
    if (g0 - lo).abs() < 2.0 * tol || (hi - g1).abs() < 2.0 * tol {
        return Err(Error::BracketLost { lo, hi });
    }
    Ok(if sign * l0 >= sign * l1 { g0 } else { g1 })
}

fn refine_with(curve: &BifurcationCurve, model: &NonlinearityModel, n: u32, opts: &TraceOptions) -> Result<Vec<TurningPoint>> {
    let cands = candidate_brackets(curve, opts.prominence);
    cands
        .par_iter()
        .map(|(i, t)| refine_one(model, n, opts, curve.points[*i], curve.points[*i + 1], t.kind))
        .collect()
}

/// Refines each candidate fold on the root of the exact slope, falling back
/// to golden-section search on `lambda(alpha)` when the bracket ends share a sign.
pub fn refine_turning_points(curve: &BifurcationCurve, model: &NonlinearityModel, n: u32, opts: &TraceOptions) -> Result<Vec<TurningPoint>> {
    let tps = refine_with(curve, model, n, opts)?;
    let mut out = Vec::new();
    for (lo, hi) in curve.runs() {
        let (a, b) = (curve.points[lo], curve.points[hi]);
        let mut run: Vec<TurningPoint> = tps.iter().filter(|t| t.alpha_star >= a.alpha && t.alpha_star <= b.alpha).cloned().collect();
        prune(&mut run, (a.lambda, b.lambda), opts.prominence);
        out.extend(run);
    }
    Ok(out)
}

fn segments_of(curve: &BifurcationCurve, prominence: f64) -> Vec<Segment> {
    curve
        .runs()
        .into_iter()
        .map(|(lo, hi)| {
            let (a, b) = (curve.points[lo], curve.points[hi]);
            let mut tps: Vec<TurningPoint> =
                curve.turning_points.iter().filter(|t| t.alpha_star >= a.alpha && t.alpha_star <= b.alpha).cloned().collect();
            prune(&mut tps, (a.lambda, b.lambda), prominence);
            let shape = Shape::of_turns(&tps);
            Segment { alpha_lo: a.alpha, alpha_hi: b.alpha, turning_points: tps, shape }
        })
        .collect()
}

fn classify_with(curve: &BifurcationCurve, prominence: f64) -> Shape {
    let mut segs = segments_of(curve, prominence);
    if segs.len() == 1 {
        segs.pop().map(|s| s.shape).unwrap_or(Shape::Monotone)
    } else {
        Shape::Disconnected(segs)
    }
}

/// Shape of a traced curve after suppressing turning points with `lambda`
/// prominence below `1e-7 lambda`.
pub fn classify(curve: &BifurcationCurve) -> Shape {
    classify_with(curve, TraceOptions::default().prominence)
}

/// One solution of the Dirichlet problem at a queried `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: f64,
    pub lambda: f64,
    pub profile: RadialProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub lambda: f64,
    /// Increasing in `alpha`.
    pub solutions: Vec<Solution>,
    /// Whether consecutive profiles are strictly ordered on the shared grid.
    pub ordered: bool,
    /// Smallest `u_{k+1}(r) - u_k(r)` over the grid and all pairs.
    pub min_separation: f64,
}

/// Number of nodes in `[0, 1)` for the ordering check.
pub const ORDERING_NODES: usize = 1000;

/// Every `alpha` with `lambda(alpha) = lambda_query`, found by bracketed root
/// finding on each monotone piece of the traced curve.
pub fn solutions_at(curve: &BifurcationCurve, model: &NonlinearityModel, n: u32, lambda_query: f64, settings: &IntegratorSettings) -> Result<SolutionSet> {
    let mut alphas: Vec<f64> = Vec::new();
    let tie = 1e-12 * lambda_query.abs().max(1e-300);
    for (lo, hi) in curve.runs() {
        // nodes: samples plus the refined turning points, in alpha order
        let mut nodes: Vec<(f64, f64)> = curve.points[lo..=hi].iter().map(|p| (p.alpha, p.lambda)).collect();
        let (a, b) = (nodes[0].0, nodes[nodes.len() - 1].0);
        nodes.extend(curve.turning_points.iter().filter(|t| t.alpha_star > a && t.alpha_star < b).map(|t| (t.alpha_star, t.lambda_star)));
        nodes.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (k, &(x, l)) in nodes.iter().enumerate() {
            if (l - lambda_query).abs() <= tie {
                alphas.push(x);
                continue;
            }
            let Some(&(x1, l1)) = nodes.get(k + 1) else { continue };
            let (d0, d1) = (l - lambda_query, l1 - lambda_query);
            if d0 * d1 < 0.0 && (l1 - lambda_query).abs() > tie {
                let f = |t: f64| -> Result<f64> {
                    match shoot::lambda_of_alpha(model, t, n, settings)? {
                        Some((lam, _)) => Ok(lam - lambda_query),
                        None => Err(Error::BracketLost { lo: x, hi: x1 }),
                    }
                };
                alphas.push(roots::illinois(f, x, x1, d0, d1, 1e-13 * x1.abs().max(1.0))?);
            }
        }
    }
    alphas.sort_by(f64::total_cmp);
    alphas.dedup_by(|b, a| (*b - *a).abs() <= 1e-7 * a.abs().max(1.0));

    let solutions: Vec<Solution> = alphas
        .par_iter()
        .map(|&alpha| -> Result<Option<Solution>> {
            Ok(shoot::bvp_profile(model, alpha, n, settings)?.map(|s| Solution { alpha, lambda: s.lambda, profile: s.profile }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut min_separation = f64::INFINITY;
    for w in solutions.windows(2) {
        for k in 0..ORDERING_NODES {
            let r = k as f64 / ORDERING_NODES as f64;
            let lo = w[0].profile.eval(r).map_or(f64::NAN, |v| v.0);
            let hi = w[1].profile.eval(r).map_or(f64::NAN, |v| v.0);
            min_separation = min_separation.min(if (hi - lo).is_nan() { f64::NEG_INFINITY } else { hi - lo });
        }
    }
    Ok(SolutionSet { lambda: lambda_query, ordered: min_separation > 0.0, min_separation, solutions })
}

/// One row of an `epsilon` scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub epsilon: f64,
    pub shape: Shape,
    pub turning_points: Vec<TurningPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// Places where the number of turning points grew with `epsilon`.
    pub warnings: Vec<String>,
}

impl ScanTable {
    /// CSV with columns `epsilon,shape,n_turns`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epsilon", "shape", "n_turns"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.epsilon.to_string(), r.shape.label(), r.turning_points.len().to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema_version": "1",
            "rows": self.rows.iter().map(|r| json!({
                "epsilon": r.epsilon,
                "shape": r.shape.to_json(),
                "n_turns": r.turning_points.len(),
                "turning_points": r.turning_points,
            })).collect::<Vec<_>>(),
            "warnings": self.warnings,
        })
    }
}

/// Traces and classifies the template family at each `epsilon`. When
/// `alpha_range` is `None` each trace uses the default window for its `epsilon`.
pub fn scan_epsilon(template: &NonlinearityModel, epsilons: &[f64], n: u32, alpha_range: Option<(f64, f64)>, opts: &TraceOptions) -> Result<ScanTable> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    let models: Vec<NonlinearityModel> = epsilons.iter().map(|&e| template.with_epsilon(e)).collect::<Result<_>>()?;
    let rows: Vec<ScanRow> = models
        .par_iter()
        .zip(epsilons.par_iter())
        .map(|(m, &epsilon)| -> Result<ScanRow> {
            let (lo, hi) = alpha_range.unwrap_or_else(|| default_alpha_range(m));
            let c = trace(m, n, lo, hi, opts)?;
            Ok(ScanRow { epsilon, shape: c.shape, turning_points: c.turning_points })
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    for w in rows.windows(2) {
        if w[1].epsilon > w[0].epsilon && w[1].turning_points.len() > w[0].turning_points.len() {
            warnings.push(format!(
                "turning points increase from {} at epsilon={} to {} at epsilon={}",
                w[0].turning_points.len(),
                w[0].epsilon,
                w[1].turning_points.len(),
                w[1].epsilon
            ));
        }
    }
    Ok(ScanTable { rows, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilon0 {
    pub epsilon0: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Epsilon0 {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bisection tolerance on `epsilon` for [`find_epsilon0`].
pub const EPSILON0_TOLERANCE: f64 = 1e-3;

/// Bisects `epsilon` between an S-shaped and a non-S-shaped classification.
pub fn find_epsilon0(template: &NonlinearityModel, bracket: (f64, f64), n: u32, opts: &TraceOptions) -> Result<Epsilon0> {
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!("epsilon bracket must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let is_s = |e: f64| -> Result<(bool, Shape)> {
        let m = template.with_epsilon(e)?;
        let (a, b) = default_alpha_range(&m);
        let shape = trace(&m, n, a, b, opts)?.shape;
        Ok((shape == Shape::SShaped, shape))
    };
    let (end_lo, end_hi) = rayon::join(|| is_s(lo), || is_s(hi));
    let ((s_lo, shape_lo), (s_hi, _)) = (end_lo?, end_hi?);
    if s_lo == s_hi {
        return Err(Error::SameClassAtEnds(shape_lo.label()));
    }
    while hi - lo > EPSILON0_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if is_s(mid)?.0 == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Epsilon0 { epsilon0: 0.5 * (lo + hi), lo, hi })
}
