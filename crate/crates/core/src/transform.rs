//! The `mu`-form rescaling of the perturbed Gelfand problem, and the map that
//! turns limiting-problem solutions into `mu`-form solutions.
//!
//! With `w = eps^2 u` and `mu = lambda eps^2 e^(1/eps)` the perturbed Gelfand
//! equation becomes `w'' + w'/r + mu exp(-1/(w + eps)) = 0`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{self, TraceOptions, TurnKind};
use crate::error::{Error, Result};
use crate::ivp::{self, IntegratorSettings};
use crate::linearized::{CertificateKind, CertificateReport};
use crate::model::NonlinearityModel;
use crate::shoot::{self, BvpSolution};

/// Below this `e^(1/eps)` is no longer representable.
pub const MIN_EPSILON: f64 = 1.0 / 700.0;

/// Only the limiting problem in the plane maps onto the `mu`-form.
const DIM: u32 = 2;

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

fn mu_factor(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if epsilon < MIN_EPSILON {
        return Err(Error::Overflow(format!("e^(1/eps) overflows for eps = {epsilon:e} < 1/700")));
    }
    Ok(epsilon * epsilon * (1.0 / epsilon).exp())
}

/// `mu = lambda eps^2 e^(1/eps)`.
pub fn lambda_to_mu(epsilon: f64, lambda: f64) -> Result<f64> {
    Ok(lambda * mu_factor(epsilon)?)
}

pub fn mu_to_lambda(epsilon: f64, mu: f64) -> Result<f64> {
    Ok(mu / mu_factor(epsilon)?)
}

/// A perturbed-Gelfand solution written in `mu`-form variables.
pub fn to_mu(epsilon: f64, sol: &BvpSolution) -> Result<BvpSolution> {
    let mu = lambda_to_mu(epsilon, sol.lambda)?;
    let mut profile = sol.profile.clone();
    profile.scale_values(epsilon * epsilon);
    profile.lambda = mu;
    Ok(BvpSolution { lambda: mu, profile })
}

/// Inverse of [`to_mu`].
pub fn from_mu(epsilon: f64, sol: &BvpSolution) -> Result<BvpSolution> {
    let lambda = mu_to_lambda(epsilon, sol.lambda)?;
    let mut profile = sol.profile.clone();
    profile.scale_values(1.0 / (epsilon * epsilon));
    profile.lambda = lambda;
    Ok(BvpSolution { lambda, profile })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MuSource {
    DirectShot,
    /// Obtained from the limiting solution of height `alpha`, cut where it
    /// first reaches `eps` at radius `a`.
    Lemma42Map { alpha: f64, a: f64 },
}

impl MuSource {
    fn describe(&self) -> String {
        match self {
            MuSource::DirectShot => "direct".into(),
            MuSource::Lemma42Map { alpha, a } => format!("lemma42_map alpha={alpha} a={a}"),
        }
    }
}

/// A point `(w0, mu)` on the `mu`-form bifurcation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuPoint {
    pub mu: f64,
    pub w0: f64,
    pub source: MuSource,
}

/// `w0,mu,source` rows.
pub fn mu_points_to_csv(points: &[MuPoint]) -> String {
    let mut s = String::from("w0,mu,source\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.w0, p.mu, p.source.describe());
    }
    s
}

/// Maps a limiting solution `v` (with eigenvalue `eta`) to the `mu`-form
/// solution `w(t) = v(a t) - eps`, where `a` is the first radius with
/// `v(a) = eps`. Then `mu = eta a^2` and `w0 = v(0) - eps`.
pub fn lemma42_map(limiting: &BvpSolution, epsilon: f64) -> Result<MuPoint> {
    check_epsilon(epsilon)?;
    let alpha = limiting.profile.alpha;
    if epsilon >= alpha {
        return Err(Error::LevelNotReached { level: epsilon });
    }
    let a = limiting.profile.first_crossing(epsilon).ok_or(Error::LevelNotReached { level: epsilon })?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::LevelNotReached { level: epsilon });
    }
    Ok(MuPoint { mu: limiting.lambda * a * a, w0: alpha - epsilon, source: MuSource::Lemma42Map { alpha, a } })
}

/// `|w(1)|` from a fresh `mu`-form integration started at `(w0, mu)`.
pub fn reintegration_residual(point: &MuPoint, epsilon: f64, settings: &IntegratorSettings) -> Result<f64> {
    let model = NonlinearityModel::mu_form(epsilon)?;
    let s = IntegratorSettings { r_max: 1.0, h_init: settings.h_init.min(0.5), ..*settings };
    let p = ivp::integrate(&model, point.w0, point.mu, DIM, &s, &[])?;
    Ok(p.last().u.abs())
}

/// `mu` from shooting the `mu`-form directly at height `w0`.
pub fn direct_mu(epsilon: f64, w0: f64, settings: &IntegratorSettings) -> Result<MuPoint> {
    let model = NonlinearityModel::mu_form(epsilon)?;
    match shoot::lambda_of_alpha(&model, w0, DIM, settings)? {
        Some((mu, _)) => Ok(MuPoint { mu, w0, source: MuSource::DirectShot }),
        None => Err(Error::PreconditionFails(format!("mu-form shot from w0 = {w0} never reaches zero"))),
    }
}

/// Relative difference between a mapped `mu` and the directly shot one.
pub fn cross_validate(point: &MuPoint, epsilon: f64, settings: &IntegratorSettings) -> Result<f64> {
    let d = direct_mu(epsilon, point.w0, settings)?;
    Ok((d.mu - point.mu).abs() / point.mu.abs())
}

/// Applies [`lemma42_map`] to limiting solutions, checking `eps` against the
/// height `v0(0)` of the limiting curve's fold. That height is traced once
/// per mapper and reused.
#[derive(Debug)]
pub struct LimitingMapper {
    settings: IntegratorSettings,
    fold: OnceLock<Result<(f64, f64)>>,
}

impl Default for LimitingMapper {
    fn default() -> Self {
        Self::new(IntegratorSettings::default())
    }
}

impl LimitingMapper {
    pub fn new(settings: IntegratorSettings) -> Self {
        LimitingMapper { settings, fold: OnceLock::new() }
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    /// `(v0(0), eta*)` at the limiting curve's fold.
    pub fn limiting_fold(&self) -> Result<(f64, f64)> {
        self.fold
            .get_or_init(|| {
                let model = NonlinearityModel::limiting();
                let (lo, hi) = curve::default_alpha_range(&model);
                let opts = TraceOptions { settings: self.settings, ..TraceOptions::for_model(&model) };
                let c = curve::trace(&model, DIM, lo, hi, &opts)?;
                let tp = c
                    .turning_points
                    .iter()
                    .find(|t| t.kind == TurnKind::Min)
                    .ok_or_else(|| Error::PreconditionFails("limiting curve has no fold".into()))?;
                Ok((tp.alpha_star, tp.lambda_star))
            })
            .clone()
    }

    pub fn fold_height(&self) -> Result<f64> {
        Ok(self.limiting_fold()?.0)
    }

    /// Maps the limiting solution of height `alpha`; requires `eps < v0(0)`.
    pub fn map(&self, alpha: f64, epsilon: f64) -> Result<MuPoint> {
        check_epsilon(epsilon)?;
        let v0 = self.fold_height()?;
        if epsilon >= v0 {
            return Err(Error::PreconditionFails(format!("eps = {epsilon} is not below the fold height v0(0) = {v0}")));
        }
        let model = NonlinearityModel::limiting();
        let sol = shoot::bvp_profile(&model, alpha, DIM, &self.settings)?
            .ok_or_else(|| Error::PreconditionFails(format!("limiting shot from alpha = {alpha} has no zero")))?;
        lemma42_map(&sol, epsilon)
    }

    pub fn map_all(&self, alphas: &[f64], epsilon: f64) -> Result<Vec<MuPoint>> {
        self.fold_height()?;
        alphas.par_iter().map(|&a| self.map(a, epsilon)).collect()
    }
}

/// Maps the limiting solutions at `alphas` and checks that `mu` and the cut
/// radius `a` both increase strictly with the height.
pub fn mu_monotonicity_check(mapper: &LimitingMapper, epsilon: f64, alphas: &[f64]) -> Result<CertificateReport> {
    if alphas.len() < 2 {
        return Err(Error::InvalidParameter("need at least two heights".into()));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pts = mapper.map_all(&sorted, epsilon)?;
    let mut min_dmu = f64::INFINITY;
    let mut min_da = f64::INFINITY;
    for w in pts.windows(2) {
        min_dmu = min_dmu.min((w[1].mu - w[0].mu) / w[0].mu);
        if let (MuSource::Lemma42Map { a: a0, .. }, MuSource::Lemma42Map { a: a1, .. }) = (w[0].source, w[1].source) {
            min_da = min_da.min(a1 - a0);
        }
    }
    let pass = min_dmu > 0.0 && min_da > 0.0;
    let details = format!(
        "eps = {epsilon}, {} heights in [{}, {}], mu from {} to {}",
        pts.len(),
        sorted[0],
        sorted[sorted.len() - 1],
        pts[0].mu,
        pts[pts.len() - 1].mu
    );
    Ok(CertificateReport::new(
        CertificateKind::MuMonotonicity,
        pass,
        &[("min_relative_mu_increment", min_dmu), ("min_a_increment", min_da)],
        details,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    }

    #[test]
    fn mu_round_trip() {
        let m = NonlinearityModel::perturbed_gelfand(0.22).unwrap();
        let s = IntegratorSettings::default();
        let sol = shoot::bvp_profile(&m, 3.0, 2, &s).unwrap().unwrap();
        let mu = to_mu(0.22, &sol).unwrap();
        assert!((mu.profile.alpha - 0.0484 * 3.0).abs() < 1e-14);
        let mf = NonlinearityModel::mu_form(0.22).unwrap();
        assert!(mu.reshoot_residual(&mf, &s).unwrap().abs() < 1e-8);
        let (u, _) = mu.profile.eval(0.5).unwrap();
        let (u0, _) = sol.profile.eval(0.5).unwrap();
        assert!((u - 0.0484 * u0).abs() < 1e-13);
        let back = from_mu(0.22, &mu).unwrap();
        assert!((back.lambda - sol.lambda).abs() < 1e-12 * sol.lambda);
        assert!((back.profile.alpha - 3.0).abs() < 1e-13);
    }

    #[test]
    fn tiny_epsilon_overflows() {
        assert!(matches!(lambda_to_mu(1e-5, 1.0), Err(Error::Overflow(_))));
        assert!(lambda_to_mu(0.0015, 1.0).unwrap().is_finite());
        assert!(matches!(lambda_to_mu(-1.0, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn mapped_points_solve_the_mu_form() {
        let mapper = LimitingMapper::default();
        let s = *mapper.settings();
        for &alpha in &[1.6, 3.0, 8.0] {
            let p = mapper.map(alpha, 0.22).unwrap();
            assert!(reintegration_residual(&p, 0.22, &s).unwrap() < 1e-8);
            assert!(cross_validate(&p, 0.22, &s).unwrap() < 1e-6, "alpha {alpha}");
        }
    }

    #[test]
    fn mapper_enforces_fold_height() {
        let mapper = LimitingMapper::default();
        let v0 = mapper.fold_height().unwrap();
        assert!((v0 - 1.51874).abs() < 1e-4);
        assert!(matches!(mapper.map(3.0, 2.0), Err(Error::PreconditionFails(_))));
    }

    #[test]
    fn level_above_height_is_not_reached() {
        let m = NonlinearityModel::limiting();
        let sol = shoot::bvp_profile(&m, 1.0, 2, &IntegratorSettings::default()).unwrap().unwrap();
        assert!(matches!(lemma42_map(&sol, 1.5), Err(Error::LevelNotReached { .. })));
    }

    #[test]
    fn small_epsilon_leaves_eta_nearly_unchanged() {
        let mapper = LimitingMapper::default();
        let m = NonlinearityModel::limiting();
        let sol = shoot::bvp_profile(&m, 3.0, 2, mapper.settings()).unwrap().unwrap();
        let p = lemma42_map(&sol, 1e-4).unwrap();
        assert!((p.mu / sol.lambda - 1.0).abs() < 1e-2);
    }

    #[test]
    fn monotone_above_fold() {
        let mapper = LimitingMapper::default();
        let rep = mu_monotonicity_check(&mapper, 0.22, &grid(1.6, 10.0, 25)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let pts = [
            MuPoint { mu: 1.0, w0: 0.5, source: MuSource::DirectShot },
            MuPoint { mu: 2.0, w0: 0.7, source: MuSource::Lemma42Map { alpha: 0.92, a: 0.9 } },
        ];
        let csv = mu_points_to_csv(&pts);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "w0,mu,source");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("0.7,2,lemma42_map"));
    }
}
