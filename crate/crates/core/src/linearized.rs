//! The linearized equation `w'' + (n-1)/r w' + lambda f'(u) w = 0` along a
//! solution, and the floating-point certificates built on it: positivity of
//! the kernel, the two non-degeneracy integrals, the `z = r u' + abar` test
//! function and the Sturm non-singularity guard.

use serde::{Deserialize, Serialize};

use crate::curve::TurningPoint;
use crate::error::{Error, Result};
use crate::ivp::IntegratorSettings;
use crate::model::NonlinearityModel;
use crate::ode::{self, Segment, StepControl};
use crate::roots;
use crate::shoot::{self, BvpSolution};

/// Width of the neighbourhoods of `0`, `xi` and `1` left out of sign checks.
pub const DELTA_EDGE: f64 = 1e-3;
/// Largest `|w(1)| / w(0)` for which a profile counts as a kernel element.
pub const CRITICAL_THRESHOLD: f64 = 1e-3;
/// Smallest `|w(1)| / w(0)` for which the linearized problem counts as non-singular.
pub const NONSINGULAR_THRESHOLD: f64 = 1e-4;
/// Non-degeneracy thresholds relative to the integral of `|integrand|`.
pub const QUADRATURE_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedNode {
    pub r: f64,
    pub w: f64,
    pub dw: f64,
}

/// `w` along a Dirichlet solution, normalized by `w(0) = w0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedProfile {
    pub base: BvpSolution,
    pub w_nodes: Vec<LinearizedNode>,
    pub w_at_1: f64,
    scale: f64,
    h0: f64,
    b2: f64,
    b4: f64,
    segments: Vec<Segment<2>>,
}

impl LinearizedProfile {
    pub fn w0(&self) -> f64 {
        self.scale
    }

    /// `(w, w')` at `r` in `[0, 1]`.
    pub fn eval(&self, r: f64) -> Option<(f64, f64)> {
        if !(0.0..=1.0 + 1e-12).contains(&r) {
            return None;
        }
        if r <= self.h0 || self.segments.is_empty() {
            let r2 = r * r;
            return Some((self.scale * (1.0 + r2 * (self.b2 + self.b4 * r2)), self.scale * r * (2.0 * self.b2 + 4.0 * self.b4 * r2)));
        }
        let y = ode::eval_segments(&self.segments, r.min(1.0))?;
        Some((self.scale * y[0], self.scale * y[1]))
    }

    /// The same kernel candidate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> LinearizedProfile {
        let mut p = self.clone();
        p.scale *= c;
        p.w_at_1 *= c;
        for node in &mut p.w_nodes {
            node.w *= c;
            node.dw *= c;
        }
        p
    }

    /// `|w(1)| / |w(0)|`
    pub fn relative_w_at_1(&self) -> f64 {
        (self.w_at_1 / self.scale).abs()
    }

    /// Integrator nodes together with a uniform grid of `count` points on `[0, 1]`.
    fn sample_nodes(&self, count: usize) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.w_nodes.iter().map(|p| (p.r, p.w)).collect();
        for k in 0..=count {
            let r = k as f64 / count as f64;
            if let Some((w, _)) = self.eval(r) {
                pts.push((r, w));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }
}

/// Integrates the linearized equation with `w(0) = 1`, `w'(0) = 0` along
/// `bvp`, reading `u(r)` from the base profile's continuous extension.
pub fn solve_linearized(model: &NonlinearityModel, bvp: &BvpSolution, n: u32, settings: &IntegratorSettings) -> Result<LinearizedProfile> {
    settings.validate()?;
    let base = &bvp.profile;
    if base.n != n {
        return Err(Error::InvalidParameter(format!("profile has n = {}, asked for n = {n}", base.n)));
    }
    if (base.r_end() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("profile ends at r = {}, expected 1", base.r_end())));
    }
    let lambda = bvp.lambda;
    let nf = n as f64;
    let d = model.derivs(base.alpha)?;
    let a2 = -lambda * d.f / (2.0 * nf);
    let b2 = -lambda * d.df / (2.0 * nf);
    let b4 = -(lambda * d.df * b2 + lambda * d.d2f * a2) / (4.0 * (nf + 2.0));
    let mut h0 = settings.h_init.min(0.5);
    if b2 != 0.0 {
        h0 = h0.min(1e-2 / b2.abs().sqrt());
    }
    h0 = h0.min(base.series.h);
    // very tall profiles have a core far below the absolute step floor
    let h_min = settings.h_min.min(1e-3 * h0);
    h0 = h0.max(10.0 * h_min);
    let h2 = h0 * h0;
    let y0 = [1.0 + h2 * (b2 + b4 * h2), h0 * (2.0 * b2 + 4.0 * b4 * h2)];
    let ctl = StepControl { abs_tol: settings.abs_tol, rel_tol: settings.rel_tol, h_init: h0, h_min, r_end: 1.0 };
    let nm1 = nf - 1.0;
    let rhs = |r: f64, y: &[f64; 2]| -> Result<[f64; 2]> {
        let (u, _) = base.eval(r).ok_or(Error::NonFiniteState { r })?;
        let fp = model.derivs(u)?.df;
        Ok([y[1], -nm1 / r * y[1] - lambda * fp * y[0]])
    };
    let run = ode::solve(rhs, h0, y0, &ctl, &[], true)?;
    if let ode::Stop::NonFinite { r, .. } = run.stop {
        return Err(Error::NonFiniteState { r });
    }
    let mut w_nodes = vec![LinearizedNode { r: 0.0, w: 1.0, dw: 0.0 }];
    w_nodes.extend(run.nodes.iter().map(|(r, y)| LinearizedNode { r: *r, w: y[0], dw: y[1] }));
    let w_at_1 = run.end_y[0];
    Ok(LinearizedProfile { base: bvp.clone(), w_nodes, w_at_1, scale: 1.0, h0, b2, b4, segments: run.segments })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Positivity,
    Nondegeneracy,
    TestFunction,
    SturmNonsingularity,
    MuMonotonicity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    pub pass: bool,
    pub margins: Vec<Margin>,
    pub details: String,
}

impl CertificateReport {
    pub(crate) fn new(kind: CertificateKind, pass: bool, margins: &[(&str, f64)], details: impl Into<String>) -> Self {
        CertificateReport {
            kind,
            pass,
            margins: margins.iter().map(|(n, v)| Margin { name: (*n).to_string(), value: *v }).collect(),
            details: details.into(),
        }
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.margins.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

fn require_critical(lin: &LinearizedProfile) -> Result<()> {
    if lin.relative_w_at_1() > CRITICAL_THRESHOLD {
        return Err(Error::NotNearCritical { w_at_1: lin.w_at_1 / lin.scale });
    }
    Ok(())
}

/// Passes iff `w > 0` on `[0, 1 - DELTA_EDGE]` (with `w(0) > 0`).
pub fn positivity_certificate(lin: &LinearizedProfile) -> Result<CertificateReport> {
    require_critical(lin)?;
    let sign = lin.scale.signum();
    let min_w = lin
        .sample_nodes(1000)
        .into_iter()
        .filter(|(r, _)| *r <= 1.0 - DELTA_EDGE)
        .map(|(_, w)| sign * w)
        .fold(f64::INFINITY, f64::min);
    let pass = min_w > 0.0;
    Ok(CertificateReport::new(
        CertificateKind::Positivity,
        pass,
        &[("min_w", min_w), ("w_at_1", lin.w_at_1)],
        format!("min of w on [0, {}]", 1.0 - DELTA_EDGE),
    ))
}

// Gauss-Kronrod 7-15 abscissae and weights on [-1, 1].
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// `(kronrod, |gauss - kronrod|, kronrod of |g|)` on `[a, b]`.
fn gk15<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = g(c);
    let mut k = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (g(c - x), g(c + x));
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - gauss) * h).abs(), abs * h)
}

/// Globally adaptive GK15 over the given breakpoints: the interval with the
/// largest error estimate is bisected until the summed estimate meets
/// `rel * int |g|` or the interval budget runs out. Returns
/// `(integral, integral of |g|)`.
fn integrate<G: Fn(f64) -> f64>(g: &G, breaks: &[f64], rel: f64) -> (f64, f64) {
    struct Piece {
        a: f64,
        b: f64,
        k: f64,
        err: f64,
        abs: f64,
    }
    let eval = |a: f64, b: f64| {
        let (k, err, abs) = gk15(g, a, b);
        // a NaN estimate must not stall the loop
        Piece { a, b, k, err: if err.is_nan() { f64::INFINITY } else { err }, abs }
    };
    let mut pieces: Vec<Piece> = breaks.windows(2).filter(|w| w[1] > w[0]).map(|w| eval(w[0], w[1])).collect();
    let budget = pieces.len() + 4000;
    loop {
        let abs: f64 = pieces.iter().map(|p| p.abs).sum();
        let err: f64 = pieces.iter().map(|p| p.err).sum();
        let floor = 50.0 * f64::EPSILON * abs;
        if err <= (rel * abs).max(floor) || pieces.len() >= budget {
            return (pieces.iter().map(|p| p.k).sum(), abs);
        }
        let (i, _) = pieces.iter().enumerate().max_by(|x, y| x.1.err.total_cmp(&y.1.err)).expect("nonempty");
        let p = pieces.swap_remove(i);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval exhausted at this precision; keep it and stop refining
            pieces.push(Piece { err: 0.0, ..p });
            continue;
        }
        pieces.push(eval(p.a, m));
        pieces.push(eval(m, p.b));
    }
}

fn quadrature_breaks(lin: &LinearizedProfile, split: usize) -> Vec<f64> {
    let mut b: Vec<f64> = std::iter::once(0.0)
        .chain(lin.w_nodes.iter().map(|p| p.r))
        .chain(lin.base.profile.nodes.iter().map(|p| p.r))
        .filter(|r| (0.0..=1.0).contains(r))
        .collect();
    b.push(1.0);
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    if split > 1 {
        let mut fine = Vec::with_capacity(b.len() * split);
        for w in b.windows(2) {
            for k in 0..split {
                fine.push(w[0] + (w[1] - w[0]) * k as f64 / split as f64);
            }
        }
        fine.push(1.0);
        b = fine;
    }
    b
}

/// `I1 = int f(u) w r^{n-1}` and `I2 = int f''(u) w^3 r^{n-1}` over `[0, 1]`,
/// each with the integral of its absolute integrand.
pub fn nondegeneracy_integrals(model: &NonlinearityModel, lin: &LinearizedProfile, split: usize) -> Result<[(f64, f64); 2]> {
    let base = &lin.base.profile;
    let n = base.n as i32;
    let breaks = quadrature_breaks(lin, split.max(1));
    let failed = std::cell::Cell::new(None);
    let at = |r: f64| -> (f64, f64) {
        let (u, _) = base.eval(r).unwrap_or((f64::NAN, 0.0));
        let (w, _) = lin.eval(r).unwrap_or((f64::NAN, 0.0));
        match model.derivs(u.max(0.0)) {
            Ok(d) => {
                let wt = r.powi(n - 1);
                (d.f * w * wt, d.d2f * w * w * w * wt)
            }
            Err(e) => {
                failed.set(Some(e));
                (0.0, 0.0)
            }
        }
    };
    let i1 = integrate(&|r| at(r).0, &breaks, 1e-13);
    let i2 = integrate(&|r| at(r).1, &breaks, 1e-13);
    if let Some(e) = failed.take() {
        return Err(e);
    }
    Ok([i1, i2])
}

/// Passes iff `|I1| > tau1` and `|I2| > tau2`, `tau = 1e-8 * int |integrand|`.
pub fn nondegeneracy(model: &NonlinearityModel, lin: &LinearizedProfile) -> Result<CertificateReport> {
    require_critical(lin)?;
    let [(i1, a1), (i2, a2)] = nondegeneracy_integrals(model, lin, 1)?;
    let (t1, t2) = (QUADRATURE_REL * a1, QUADRATURE_REL * a2);
    let pass1 = i1.abs() > t1;
    let pass2 = i2.abs() > t2;
    let details = match (pass1, pass2) {
        (true, true) => "both integrals are nonzero".to_string(),
        (false, true) => "I1 vanishes to quadrature accuracy".to_string(),
        (true, false) => "I2 vanishes to quadrature accuracy".to_string(),
        (false, false) => "I1 and I2 vanish to quadrature accuracy".to_string(),
    };
    Ok(CertificateReport::new(
        CertificateKind::Nondegeneracy,
        pass1 && pass2,
        &[("I1", i1), ("tau1", t1), ("I2", i2), ("tau2", t2)],
        details,
    ))
}

/// Searches `abar > 0` so that `z = r u' + abar` and `g = -2 + abar h'(u)`
/// (which carries the sign of `L[z] = lambda f g`) change sign at the same
/// `xi`, then checks `z > 0, L[z] < 0` on `(0, xi)` and `z < 0, L[z] > 0` on
/// `(xi, 1)`. When `g` stays negative even for the largest admissible `abar`
/// the result is reported with `xi = 1` and only the left conditions.
pub fn test_function_search(model: &NonlinearityModel, bvp: &BvpSolution) -> Result<CertificateReport> {
    let p = &bvp.profile;
    if p.n != 2 {
        return Err(Error::InvalidParameter(format!("the test function construction needs n = 2, got n = {}", p.n)));
    }
    // precondition: strict log-concavity and h' > 0 on the range of u
    let us: Vec<f64> = (0..=200).map(|k| p.alpha * k as f64 / 200.0).filter(|u| *u > 0.0).collect();
    for &u in &us {
        let (h1, h2) = model.log_derivs(u)?;
        if !(h2 < 0.0 && h1 > 0.0) {
            return Err(Error::NotApplicable(format!("{model} is not strictly log-concave and increasing at u = {u}")));
        }
    }
    let lambda = bvp.lambda;
    let count = 4000;
    let grid: Vec<(f64, f64, f64)> = (0..=count)
        .map(|k| {
            let r = k as f64 / count as f64;
            let (u, du) = p.eval(r).unwrap_or((0.0, 0.0));
            (r, u, du)
        })
        .collect();
    let hp = |u: f64| model.log_derivs(u).map(|d| d.0).unwrap_or(f64::INFINITY);
    let du1 = p.eval(1.0).map(|v| v.1).unwrap_or(f64::NAN);
    let abar_max = -du1;
    if !(abar_max > 0.0) {
        return Err(Error::NotApplicable(format!("u'(1) = {du1} is not negative")));
    }
    // z decreasing in r, g increasing in r
    let z_root = |abar: f64| -> f64 {
        let i = grid.partition_point(|&(r, _, du)| r * du + abar > 0.0);
        if i == 0 {
            0.0
        } else if i > count {
            1.0
        } else {
            let z = |r: f64| r * p.eval(r).map_or(0.0, |v| v.1) + abar;
            roots::bisect(|r| Ok(z(r) > 0.0), grid[i - 1].0, grid[i].0, true, 1e-14).map(|(a, b)| 0.5 * (a + b)).unwrap_or(grid[i].0)
        }
    };
    let g_root = |abar: f64| -> f64 {
        let i = grid.partition_point(|&(_, u, _)| -2.0 + abar * hp(u.max(1e-300)) < 0.0);
        if i == 0 {
            0.0
        } else if i > count {
            1.0
        } else {
            let (ra, ua, _) = grid[i - 1];
            let (rb, _, _) = grid[i];
            let gfun = |r: f64| -2.0 + abar * hp(p.eval(r).map_or(ua, |v| v.0).max(1e-300));
            roots::bisect(|r| Ok(gfun(r) < 0.0), ra, rb, true, 1e-14).map(|(a, b)| 0.5 * (a + b)).unwrap_or(ra)
        }
    };
    let case1 = g_root(abar_max) >= 1.0;
    let (abar, xi) = if case1 {
        (abar_max, 1.0)
    } else {
        let (lo, hi) = roots::bisect(|a| Ok(z_root(a) < g_root(a)), 0.0, abar_max, true, 1e-13 * abar_max)?;
        let abar = 0.5 * (lo + hi);
        (abar, 0.5 * (z_root(abar) + g_root(abar)))
    };
    let (mut min_z_l, mut max_g_l, mut max_lz_l) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut max_z_r, mut min_g_r, mut min_lz_r) = (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    for &(r, u, du) in &grid {
        if r < DELTA_EDGE || r > 1.0 - DELTA_EDGE || (r - xi).abs() < DELTA_EDGE {
            continue;
        }
        let z = r * du + abar;
        let g = -2.0 + abar * hp(u);
        let lz = lambda * model.value(u)? * g;
        if r < xi {
            min_z_l = min_z_l.min(z);
            max_g_l = max_g_l.max(g);
            max_lz_l = max_lz_l.max(lz);
        } else {
            max_z_r = max_z_r.max(z);
            min_g_r = min_g_r.min(g);
            min_lz_r = min_lz_r.min(lz);
        }
    }
    let left = min_z_l > 0.0 && max_g_l < 0.0;
    let right = case1 || (max_z_r < 0.0 && min_g_r > 0.0);
    let details = if case1 {
        "g has no sign change for admissible abar; xi = 1, only the left conditions apply".to_string()
    } else {
        format!("roots of z and g coincide at xi = {xi:.9}")
    };
    Ok(CertificateReport::new(
        CertificateKind::TestFunction,
        left && right,
        &[
            ("alpha_bar", abar),
            ("xi_bar", xi),
            ("min_z_left", min_z_l),
            ("max_g_left", max_g_l),
            ("max_Lz_left", max_lz_l),
            ("max_z_right", max_z_r),
            ("min_g_right", min_g_r),
            ("min_Lz_right", min_lz_r),
        ],
        details,
    ))
}

/// Checks that `u f'(u) - f(u)` keeps one strict sign on `(0, alpha)` (a
/// tangential zero is allowed), then passes iff `|w(1)| > 1e-4 w(0)`.
pub fn sturm_nonsingularity_check(model: &NonlinearityModel, lin: &LinearizedProfile) -> Result<CertificateReport> {
    let alpha = lin.base.profile.alpha;
    let count = 4000;
    let mut sign = 0.0;
    let mut min_abs = f64::INFINITY;
    for k in 1..count {
        let u = alpha * k as f64 / count as f64;
        let s = model.sturm_function(u)?;
        min_abs = min_abs.min(s.abs());
        if s == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = s.signum();
        } else if s.signum() != sign {
            return Err(Error::PreconditionFails(format!("u f'(u) - f(u) changes sign in (0, {alpha}) for {model}")));
        }
    }
    let sign_changing_root = model.sturm_roots().into_iter().any(|u0| {
        u0 > 0.0 && u0 < alpha && {
            let d = 1e-6 * u0;
            let a = model.sturm_function(u0 - d).unwrap_or(0.0);
            let b = model.sturm_function(u0 + d).unwrap_or(0.0);
            a * b < 0.0
        }
    });
    if sign_changing_root || sign == 0.0 {
        return Err(Error::PreconditionFails(format!("u f'(u) - f(u) has no strict sign on (0, {alpha}) for {model}")));
    }
    let rel = lin.relative_w_at_1();
    Ok(CertificateReport::new(
        CertificateKind::SturmNonsingularity,
        rel > NONSINGULAR_THRESHOLD,
        &[("w_at_1", lin.w_at_1 / lin.scale), ("sturm_sign", sign)],
        if sign > 0.0 { "u f' > f on the range" } else { "u f' < f on the range" },
    ))
}

/// All applicable certificates at a refined turning point.
pub fn certify_turning_point(model: &NonlinearityModel, n: u32, tp: &TurningPoint, settings: &IntegratorSettings) -> Result<Vec<CertificateReport>> {
    let bvp = shoot::bvp_profile(model, tp.alpha_star, n, settings)?
        .ok_or_else(|| Error::NotApplicable(format!("no solution at alpha = {}", tp.alpha_star)))?;
    let lin = solve_linearized(model, &bvp, n, settings)?;
    let mut out = vec![positivity_certificate(&lin)?, nondegeneracy(model, &lin)?];
    if n == 2 {
        match test_function_search(model, &bvp) {
            Ok(c) => out.push(c),
            Err(Error::NotApplicable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shoot::bvp_profile;

    fn s() -> IntegratorSettings {
        IntegratorSettings::default()
    }

    fn lin_at(m: &NonlinearityModel, alpha: f64, n: u32) -> LinearizedProfile {
        let bvp = bvp_profile(m, alpha, n, &s()).unwrap().unwrap();
        solve_linearized(m, &bvp, n, &s()).unwrap()
    }

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let (v, _, _) = gk15(&|x: f64| x.powi(20), 0.0, 1.0);
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
        // the embedded Gauss rule is exact to degree 13, so the error estimate vanishes
        let (v, err, _) = gk15(&|x: f64| x.powi(13), 0.0, 1.0);
        assert!((v - 1.0 / 14.0).abs() < 1e-15 && err < 1e-15);
        let (v, _) = integrate(&|x: f64| (10.0 * x).sin(), &[0.0, 0.3, 1.0], 1e-13);
        assert!((v - (1.0 - 10f64.cos()) / 10.0).abs() < 1e-13);
    }

    #[test]
    fn constant_kernel_is_one() {
        let m = NonlinearityModel::constant(1.0).unwrap();
        let lin = lin_at(&m, 1.0, 2);
        assert_eq!(lin.w_at_1, 1.0);
        assert!(lin.w_nodes.iter().all(|p| p.w == 1.0));
        assert!(matches!(positivity_certificate(&lin), Err(Error::NotNearCritical { .. })));
    }

    #[test]
    fn gelfand_fold_has_kernel() {
        let m = NonlinearityModel::gelfand();
        let lin = lin_at(&m, 2.0 * 2f64.ln(), 2);
        assert!(lin.w_at_1.abs() < 1e-5, "{}", lin.w_at_1);
        let pos = positivity_certificate(&lin).unwrap();
        assert!(pos.pass && pos.margin("min_w").unwrap() > 0.0);
        // closed form at the fold: w = (1 - r^2)/(1 + r^2)
        for r in [0.2, 0.5, 0.9] {
            let (w, _) = lin.eval(r).unwrap();
            assert!((w - (1.0 - r * r) / (1.0 + r * r)).abs() < 1e-6, "r={r} w={w}");
        }
    }

    #[test]
    fn linearized_matches_finite_differences() {
        let settings = s();
        let cases = [
            (NonlinearityModel::perturbed_gelfand(0.22).unwrap(), 2, 3.0),
            (NonlinearityModel::limiting(), 2, 1.2),
            (NonlinearityModel::gelfand(), 3, 1.0),
        ];
        for (m, n, alpha) in cases {
            let bvp = bvp_profile(&m, alpha, n, &settings).unwrap().unwrap();
            let lin = solve_linearized(&m, &bvp, n, &settings).unwrap();
            let delta = 1e-5;
            let up = crate::ivp::integrate(&m, alpha + delta, bvp.lambda, n, &IntegratorSettings { r_max: 1.0, ..settings }, &[]).unwrap();
            let dn = crate::ivp::integrate(&m, alpha - delta, bvp.lambda, n, &IntegratorSettings { r_max: 1.0, ..settings }, &[]).unwrap();
            for r in [0.1, 0.4, 0.7, 1.0] {
                let fd = (up.eval(r).unwrap().0 - dn.eval(r).unwrap().0) / (2.0 * delta);
                let (w, _) = lin.eval(r).unwrap();
                assert!((fd - w).abs() < 1e-4 * w.abs().max(1e-2), "{m} r={r}: {fd} vs {w}");
            }
        }
    }

    #[test]
    fn constant_fails_second_integral() {
        let m = NonlinearityModel::constant(1.0).unwrap();
        let bvp = bvp_profile(&m, 1.0, 2, &s()).unwrap().unwrap();
        let lin = solve_linearized(&m, &bvp, 2, &s()).unwrap();
        let [(i1, _), (i2, a2)] = nondegeneracy_integrals(&m, &lin, 1).unwrap();
        // int_0^1 r dr = 1/2
        assert!((i1 - 0.5).abs() < 1e-12);
        assert_eq!((i2, a2), (0.0, 0.0));
        assert!(matches!(test_function_search(&m, &bvp), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn certificates_scale_invariant() {
        let m = NonlinearityModel::gelfand();
        let lin = lin_at(&m, 2.0 * 2f64.ln(), 2);
        for c in [1e-3, 0.5, 7.0] {
            let scaled = lin.scaled(c);
            assert_eq!(positivity_certificate(&scaled).unwrap().pass, positivity_certificate(&lin).unwrap().pass);
            assert_eq!(nondegeneracy(&m, &scaled).unwrap().pass, nondegeneracy(&m, &lin).unwrap().pass);
        }
    }

    #[test]
    fn sturm_examples() {
        let lim = NonlinearityModel::limiting();
        let c = sturm_nonsingularity_check(&lim, &lin_at(&lim, 0.3, 2)).unwrap();
        assert!(c.pass);
        let pg = NonlinearityModel::perturbed_gelfand(0.30).unwrap();
        for alpha in [0.5, 5.0, 50.0] {
            assert!(sturm_nonsingularity_check(&pg, &lin_at(&pg, alpha, 2)).unwrap().pass);
        }
        let pg22 = NonlinearityModel::perturbed_gelfand(0.22).unwrap();
        assert!(matches!(sturm_nonsingularity_check(&pg22, &lin_at(&pg22, 3.42, 2)), Err(Error::PreconditionFails(_))));
    }
}
