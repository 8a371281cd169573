//! Nonlinearity families `f(u)` with closed-form first and second derivatives,
//! plus the pointwise structural predicates used by the certificates:
//! log-concavity, convexity changes and the `u f'(u) = f(u)` root set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent arguments above this are rejected as non-finite.
pub const EXP_CLAMP: f64 = 700.0;

/// The supported families. Parameters are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `exp(u / (1 + eps u))`
    PerturbedGelfand { epsilon: f64 },
    /// `exp(u)`, the `eps = 0` end of the perturbed family.
    Gelfand,
    /// `exp(-1 / (eps + w))`, the problem after the `w = eps^2 u` change of variables.
    MuForm { epsilon: f64 },
    /// `exp(-1 / v)`, extended by zero for `v <= 0`.
    Limiting,
    /// `(u - eps)(u - b)(c - u)`
    Cubic { epsilon: f64, b: f64, c: f64 },
    /// `u^p + u^q`
    PowerSum { p: f64, q: f64 },
    /// `exp(-1 / (u + a))`
    ExpShift { a: f64 },
    /// `c0`
    Constant { c0: f64 },
}

/// Value and the first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

/// An immutable, validated nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct NonlinearityModel {
    family: Family,
}

impl TryFrom<Family> for NonlinearityModel {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        Self::new(family)
    }
}

impl From<NonlinearityModel> for Family {
    fn from(m: NonlinearityModel) -> Family {
        m.family
    }
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

fn guarded_exp(x: f64, u: f64) -> Result<f64> {
    if !(x <= EXP_CLAMP) {
        return Err(Error::NonFinite { what: "exp", u });
    }
    Ok(x.exp())
}

impl NonlinearityModel {
    pub fn new(family: Family) -> Result<Self> {
        let finite = |x: f64, name: &str| require(x.is_finite(), format!("{name} must be finite"));
        match family {
            Family::PerturbedGelfand { epsilon } | Family::MuForm { epsilon } => {
                finite(epsilon, "epsilon")?;
                require(epsilon > 0.0, "epsilon must be positive")?;
            }
            Family::Cubic { epsilon, b, c } => {
                finite(epsilon, "epsilon")?;
                finite(b, "b")?;
                finite(c, "c")?;
                require(0.0 < epsilon && epsilon < b && b < c, "cubic requires 0 < epsilon < b < c")?;
            }
            Family::PowerSum { p, q } => {
                finite(p, "p")?;
                finite(q, "q")?;
                require(p > 0.0 && q > 0.0 && p != q, "power sum requires p, q > 0 and p != q")?;
            }
            Family::ExpShift { a } => {
                finite(a, "a")?;
                require(a >= 0.0, "shift a must be non-negative")?;
            }
            Family::Constant { c0 } => {
                finite(c0, "c0")?;
                require(c0 > 0.0, "constant must be positive")?;
            }
            Family::Gelfand | Family::Limiting => {}
        }
        Ok(NonlinearityModel { family })
    }

    pub fn perturbed_gelfand(epsilon: f64) -> Result<Self> {
        Self::new(Family::PerturbedGelfand { epsilon })
    }

    pub fn gelfand() -> Self {
        NonlinearityModel { family: Family::Gelfand }
    }

    pub fn mu_form(epsilon: f64) -> Result<Self> {
        Self::new(Family::MuForm { epsilon })
    }

    pub fn limiting() -> Self {
        NonlinearityModel { family: Family::Limiting }
    }

    pub fn cubic(epsilon: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(Family::Cubic { epsilon, b, c })
    }

    pub fn power_sum(p: f64, q: f64) -> Result<Self> {
        Self::new(Family::PowerSum { p, q })
    }

    pub fn exp_shift(a: f64) -> Result<Self> {
        Self::new(Family::ExpShift { a })
    }

    pub fn constant(c0: f64) -> Result<Self> {
        Self::new(Family::Constant { c0 })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// The secondary parameter `epsilon`, for the families that have one.
    pub fn epsilon(&self) -> Option<f64> {
        match self.family {
            Family::PerturbedGelfand { epsilon } | Family::MuForm { epsilon } | Family::Cubic { epsilon, .. } => Some(epsilon),
            _ => None,
        }
    }

    /// The same family with `epsilon` replaced.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        match self.family {
            Family::PerturbedGelfand { .. } => Self::perturbed_gelfand(epsilon),
            Family::MuForm { .. } => Self::mu_form(epsilon),
            Family::Cubic { b, c, .. } => Self::cubic(epsilon, b, c),
            _ => Err(Error::InvalidParameter(format!("family `{}` has no epsilon", self.family_name()))),
        }
    }

    /// Shift inside `exp(-1/(shift + u))` for the families of that shape.
    fn inverse_exp_shift(&self) -> Option<f64> {
        match self.family {
            Family::MuForm { epsilon } => Some(epsilon),
            Family::Limiting => Some(0.0),
            Family::ExpShift { a } => Some(a),
            _ => None,
        }
    }

    /// `f`, `f'` and `f''` at `u`.
    pub fn derivs(&self, u: f64) -> Result<Derivs> {
        if u.is_nan() {
            return Err(Error::NonFinite { what: "argument", u });
        }
        let d = match self.family {
            Family::PerturbedGelfand { epsilon } => {
                let s = 1.0 + epsilon * u;
                if s <= 0.0 {
                    return Err(Error::NonFinite { what: "u/(1+eps u)", u });
                }
                let f = guarded_exp(u / s, u)?;
                let h1 = 1.0 / (s * s);
                let h2 = -2.0 * epsilon / (s * s * s);
                Derivs { f, df: f * h1, d2f: f * (h1 * h1 + h2) }
            }
            Family::Gelfand => {
                let f = guarded_exp(u, u)?;
                Derivs { f, df: f, d2f: f }
            }
            Family::MuForm { .. } | Family::Limiting | Family::ExpShift { .. } => {
                let s = u + self.inverse_exp_shift().unwrap_or(0.0);
                if s <= 0.0 {
                    Derivs { f: 0.0, df: 0.0, d2f: 0.0 }
                } else {
                    let f = (-1.0 / s).exp();
                    let inv = 1.0 / s;
                    let inv2 = inv * inv;
                    Derivs { f, df: f * inv2, d2f: f * inv2 * inv2 * (1.0 - 2.0 * s) }
                }
            }
            Family::Cubic { epsilon, b, c } => {
                let s1 = epsilon + b + c;
                let s2 = epsilon * b + epsilon * c + b * c;
                Derivs {
                    f: (u - epsilon) * (u - b) * (c - u),
                    df: -(3.0 * u * u - 2.0 * s1 * u + s2),
                    d2f: -(6.0 * u - 2.0 * s1),
                }
            }
            Family::PowerSum { p, q } => {
                if u <= 0.0 {
                    Derivs { f: 0.0, df: 0.0, d2f: 0.0 }
                } else {
                    let term = |e: f64| (u.powf(e), e * u.powf(e - 1.0), e * (e - 1.0) * u.powf(e - 2.0));
                    let (a0, a1, a2) = term(p);
                    let (b0, b1, b2) = term(q);
                    Derivs { f: a0 + b0, df: a1 + b1, d2f: a2 + b2 }
                }
            }
            Family::Constant { c0 } => Derivs { f: c0, df: 0.0, d2f: 0.0 },
        };
        if !(d.f.is_finite() && d.df.is_finite() && d.d2f.is_finite()) {
            return Err(Error::NonFinite { what: "f", u });
        }
        Ok(d)
    }

    /// `f(u)`, `f'(u)` or `f''(u)` for `order` 0, 1 or 2.
    pub fn eval(&self, u: f64, order: u8) -> Result<f64> {
        if order > 2 {
            return Err(Error::InvalidOrder(order));
        }
        let d = self.derivs(u)?;
        Ok(match order {
            0 => d.f,
            1 => d.df,
            _ => d.d2f,
        })
    }

    pub fn value(&self, u: f64) -> Result<f64> {
        self.eval(u, 0)
    }

    /// `(h', h'')` where `f = exp(h)`. Requires `f(u) > 0`.
    pub fn log_derivs(&self, u: f64) -> Result<(f64, f64)> {
        match self.family {
            Family::PerturbedGelfand { epsilon } => {
                let s = 1.0 + epsilon * u;
                if s <= 0.0 {
                    return Err(Error::NonFinite { what: "u/(1+eps u)", u });
                }
                Ok((1.0 / (s * s), -2.0 * epsilon / (s * s * s)))
            }
            Family::Gelfand => Ok((1.0, 0.0)),
            Family::MuForm { .. } | Family::Limiting | Family::ExpShift { .. } => {
                let s = u + self.inverse_exp_shift().unwrap_or(0.0);
                if s <= 0.0 {
                    return Err(Error::NotApplicable(format!("f vanishes at u = {u}")));
                }
                Ok((1.0 / (s * s), -2.0 / (s * s * s)))
            }
            _ => {
                let d = self.derivs(u)?;
                if d.f <= 0.0 {
                    return Err(Error::NotApplicable(format!("f(u) = {} is not positive at u = {u}", d.f)));
                }
                let h1 = d.df / d.f;
                Ok((h1, d.d2f / d.f - h1 * h1))
            }
        }
    }

    /// `f''(u) f(u) - f'(u)^2`; negative where `f` is log-concave.
    pub fn log_concavity_margin(&self, u: f64) -> Result<f64> {
        let d = self.derivs(u)?;
        match self.family {
            Family::Cubic { .. } if d.f <= 0.0 => Err(Error::NotApplicable(format!(
                "cubic is not positive at u = {u}"
            ))),
            Family::PerturbedGelfand { .. }
            | Family::Gelfand
            | Family::MuForm { .. }
            | Family::Limiting
            | Family::ExpShift { .. } => {
                // f^2 h'' avoids the cancellation in f'' f - f'^2
                if d.f == 0.0 {
                    return Ok(0.0);
                }
                let (_, h2) = self.log_derivs(u)?;
                Ok(d.f * d.f * h2)
            }
            _ => Ok(d.d2f * d.f - d.df * d.df),
        }
    }

    /// Strict log-concavity at `u`, decided from the sign of `(log f)''` so that
    /// underflow of `f^2` cannot hide it.
    pub fn log_concave_at(&self, u: f64) -> Result<bool> {
        Ok(self.log_derivs(u)?.1 < 0.0)
    }

    /// A function with the sign of `u f'(u) - f(u)` for `u > 0`.
    pub fn sturm_function(&self, u: f64) -> Result<f64> {
        match self.family {
            Family::PerturbedGelfand { .. }
            | Family::Gelfand
            | Family::MuForm { .. }
            | Family::Limiting
            | Family::ExpShift { .. } => match self.log_derivs(u) {
                Ok((h1, _)) => Ok(u * h1 - 1.0),
                Err(Error::NotApplicable(_)) => Ok(0.0),
                Err(e) => Err(e),
            },
            _ => {
                let d = self.derivs(u)?;
                Ok(u * d.df - d.f)
            }
        }
    }

    /// All `u > 0` with `u f'(u) = f(u)`.
    ///
    /// Closed form for the perturbed Gelfand family (roots of
    /// `eps^2 u^2 + (2 eps - 1) u + 1`); a sign-change scan with bisection
    /// otherwise, which cannot see tangential roots.
    pub fn sturm_roots(&self) -> Vec<f64> {
        match self.family {
            Family::PerturbedGelfand { epsilon } => {
                let disc = 1.0 - 4.0 * epsilon;
                let a = epsilon * epsilon;
                let b = 2.0 * epsilon - 1.0;
                if disc < 0.0 {
                    Vec::new()
                } else if disc == 0.0 {
                    vec![-b / (2.0 * a)]
                } else {
                    let sq = disc.sqrt();
                    // stable quadratic roots; both positive since the product is 1/eps^2
                    let big = (-b + sq) / (2.0 * a);
                    let small = 1.0 / (a * big);
                    vec![small, big]
                }
            }
            _ => scan_sign_changes(|u| self.sturm_function(u)),
        }
    }

    /// All `u > 0` where `f''` changes sign.
    pub fn inflection_points(&self) -> Vec<f64> {
        match self.family {
            Family::MuForm { .. } | Family::Limiting | Family::ExpShift { .. } => {
                let shift = self.inverse_exp_shift().unwrap_or(0.0);
                if shift < 0.5 {
                    vec![0.5 - shift]
                } else {
                    Vec::new()
                }
            }
            Family::PerturbedGelfand { epsilon } => {
                if epsilon < 0.5 {
                    vec![(1.0 - 2.0 * epsilon) / (2.0 * epsilon * epsilon)]
                } else {
                    Vec::new()
                }
            }
            Family::Cubic { epsilon, b, c } => vec![(epsilon + b + c) / 3.0],
            Family::Gelfand | Family::Constant { .. } => Vec::new(),
            Family::PowerSum { .. } => scan_sign_changes(|u| self.eval(u, 2)),
        }
    }

    /// Whether the cubic satisfies `c > 2b`; `None` for other families.
    pub fn cubic_hypothesis_holds(&self) -> Option<bool> {
        match self.family {
            Family::Cubic { b, c, .. } => Some(c > 2.0 * b),
            _ => None,
        }
    }

    /// `f'` is unbounded as `u -> 0+` (powers below one).
    pub(crate) fn derivative_singular_at_zero(&self) -> bool {
        matches!(self.family, Family::PowerSum { p, q } if p.min(q) < 1.0)
    }

    /// Whether the family is invariant under `u -> u + s` up to a factor,
    /// i.e. `f(u + s) = e^s f(u)`.
    pub(crate) fn is_translation_invariant(&self) -> bool {
        matches!(self.family, Family::Gelfand)
    }

    /// Short name used in config files and reports.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::PerturbedGelfand { .. } => "perturbed_gelfand",
            Family::Gelfand => "gelfand",
            Family::MuForm { .. } => "mu_form",
            Family::Limiting => "limiting",
            Family::Cubic { .. } => "cubic",
            Family::PowerSum { .. } => "power_sum",
            Family::ExpShift { .. } => "exp_shift",
            Family::Constant { .. } => "constant",
        }
    }

    /// Builds a model from `key=value` pairs (`family=cubic epsilon=0.05 b=1 c=2.5`).
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut family = None;
        let mut params: Vec<(&str, f64)> = Vec::new();
        for (k, v) in pairs {
            if k == "family" {
                family = Some(v);
                continue;
            }
            if !["epsilon", "b", "c", "p", "q", "a", "c0"].contains(&k) {
                return Err(Error::Config(format!("unknown model key `{k}`")));
            }
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("`{k}` expects a number, got `{v}`")))?;
            params.retain(|(name, _)| *name != k);
            params.push((k, x));
        }
        let family = family.ok_or_else(|| Error::Config("missing `family`".into()))?;
        let get = |name: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config(format!("family `{family}` requires `{name}`")))
        };
        let allowed: &[&str] = match family {
            "perturbed_gelfand" | "mu_form" => &["epsilon"],
            "cubic" => &["epsilon", "b", "c"],
            "power_sum" => &["p", "q"],
            "exp_shift" => &["a"],
            "constant" => &["c0"],
            "gelfand" | "limiting" => &[],
            other => return Err(Error::Config(format!("unknown family `{other}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(Error::Config(format!("family `{family}` does not take `{k}`")));
        }
        match family {
            "perturbed_gelfand" => Self::perturbed_gelfand(get("epsilon")?),
            "mu_form" => Self::mu_form(get("epsilon")?),
            "cubic" => Self::cubic(get("epsilon")?, get("b")?, get("c")?),
            "power_sum" => Self::power_sum(get("p")?, get("q")?),
            "exp_shift" => Self::exp_shift(get("a")?),
            "constant" => Self::constant(get("c0")?),
            "gelfand" => Ok(Self::gelfand()),
            _ => Ok(Self::limiting()),
        }
    }
}

/// The closed-form global criterion for `u^p + u^q` to be log-concave on `u > 0`:
/// `(p - q)^2 - 2(p + q) + 1 < 0`.
///
/// The left side factors as `((√p - √q)^2 - 1)((√p + √q)^2 - 1)`, so it agrees
/// with the pointwise margin whenever `√p + √q > 1`.
pub fn power_sum_log_concave(p: f64, q: f64) -> bool {
    (p - q).powi(2) - 2.0 * (p + q) + 1.0 < 0.0
}

impl fmt::Display for NonlinearityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "family={}", self.family_name())?;
        match self.family {
            Family::PerturbedGelfand { epsilon } | Family::MuForm { epsilon } => write!(f, " epsilon={epsilon}"),
            Family::Cubic { epsilon, b, c } => write!(f, " epsilon={epsilon} b={b} c={c}"),
            Family::PowerSum { p, q } => write!(f, " p={p} q={q}"),
            Family::ExpShift { a } => write!(f, " a={a}"),
            Family::Constant { c0 } => write!(f, " c0={c0}"),
            Family::Gelfand | Family::Limiting => Ok(()),
        }
    }
}

impl FromStr for NonlinearityModel {
    type Err = Error;

    /// Parses whitespace-separated `key=value` tokens; `#` starts a comment.
    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in s.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("expected key=value, got `{tok}`")))?;
                pairs.push((k.trim(), v.trim()));
            }
        }
        Self::from_pairs(pairs)
    }
}

const SCAN_LO: f64 = 1e-6;
const SCAN_HI: f64 = 1e6;
const SCAN_POINTS: usize = 4001;

fn scan_sign_changes<F>(g: F) -> Vec<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let ratio = (SCAN_HI / SCAN_LO).powf(1.0 / (SCAN_POINTS - 1) as f64);
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..SCAN_POINTS {
        let u = SCAN_LO * ratio.powi(i as i32);
        let Ok(gu) = g(u) else {
            prev = None;
            continue;
        };
        if gu == 0.0 {
            continue;
        }
        if let Some((up, gp)) = prev {
            if gp.signum() != gu.signum() {
                roots.push(bisect_sign(&g, up, u, gp));
            }
        }
        prev = Some((u, gu));
    }
    roots
}

fn bisect_sign<F>(g: &F, mut lo: f64, mut hi: f64, g_lo: f64) -> f64
where
    F: Fn(f64) -> Result<f64>,
{
    let s_lo = g_lo.signum();
    while hi - lo > 1e-10 * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        match g(mid) {
            Ok(0.0) => return mid,
            Ok(gm) if gm.signum() == s_lo => lo = mid,
            _ => hi = mid,
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_models() -> Vec<NonlinearityModel> {
        vec![
            NonlinearityModel::perturbed_gelfand(0.22).unwrap(),
            NonlinearityModel::gelfand(),
            NonlinearityModel::mu_form(0.3).unwrap(),
            NonlinearityModel::limiting(),
            NonlinearityModel::cubic(0.1, 1.0, 2.5).unwrap(),
            NonlinearityModel::power_sum(1.0, 2.5).unwrap(),
            NonlinearityModel::exp_shift(0.2).unwrap(),
            NonlinearityModel::constant(1.5).unwrap(),
        ]
    }

    #[test]
    fn derivatives_match_central_differences() {
        for m in all_models() {
            for &u in &[0.05, 0.35, 0.9, 1.7, 4.0, 12.0, 60.0] {
                if matches!(m.family(), Family::Gelfand) && u > 30.0 {
                    continue;
                }
                let d = m.derivs(u).unwrap();
                let h = 1e-4 * (u * u).min(1.0);
                let fd1 = (m.value(u + h).unwrap() - m.value(u - h).unwrap()) / (2.0 * h);
                let fd2 = (m.eval(u + h, 1).unwrap() - m.eval(u - h, 1).unwrap()) / (2.0 * h);
                let scale1 = d.df.abs().max(1e-6 * d.f.abs()).max(1e-300);
                let scale2 = d.d2f.abs().max(1e-6 * d.df.abs()).max(1e-300);
                assert!((fd1 - d.df).abs() <= 1e-6 * scale1, "{m} f' at {u}: {fd1} vs {}", d.df);
                assert!((fd2 - d.d2f).abs() <= 1e-6 * scale2, "{m} f'' at {u}: {fd2} vs {}", d.d2f);
            }
        }
    }

    #[test]
    fn eval_examples() {
        let pg = NonlinearityModel::perturbed_gelfand(0.25).unwrap();
        assert_eq!(pg.eval(0.0, 0).unwrap(), 1.0);
        // f(4) = e^2 at eps = 1/4, so f'(4) = e^2 / 4
        let expected = std::f64::consts::E.powi(2) / 4.0;
        assert!((pg.eval(4.0, 1).unwrap() - expected).abs() < 1e-14 * expected);
        let h = 1e-6;
        let fd = (pg.value(4.0 + h).unwrap() - pg.value(4.0 - h).unwrap()) / (2.0 * h);
        assert!((fd - expected).abs() / expected < 1e-8);

        assert_eq!(NonlinearityModel::limiting().eval(0.0, 0).unwrap(), 0.0);
        let cubic = NonlinearityModel::cubic(0.1, 1.0, 2.5).unwrap();
        assert_eq!(cubic.eval(1.0, 0).unwrap(), 0.0);
        assert_eq!(pg.eval(1.0, 3), Err(Error::InvalidOrder(3)));
    }

    #[test]
    fn overflow_is_reported() {
        let g = NonlinearityModel::gelfand();
        assert!(matches!(g.value(701.0), Err(Error::NonFinite { .. })));
        assert!(g.value(699.0).is_ok());
    }

    #[test]
    fn limiting_is_flat_at_zero() {
        let m = NonlinearityModel::limiting();
        for order in 0..3 {
            assert_eq!(m.eval(0.0, order).unwrap(), 0.0);
            assert_eq!(m.eval(-1.0, order).unwrap(), 0.0);
            let near = m.eval(1e-3, order).unwrap();
            assert!(near.abs() < 1e-300, "order {order}: {near}");
            assert!(m.eval(0.02, order).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn log_concavity_examples() {
        let pg = NonlinearityModel::perturbed_gelfand(0.22).unwrap();
        let mut u = 1e-3;
        while u <= 1e3 {
            let margin = pg.log_concavity_margin(u).unwrap();
            let Derivs { f, .. } = pg.derivs(u).unwrap();
            let s = 1.0 + 0.22 * u;
            let oracle = f * f * (-2.0 * 0.22 / (s * s * s));
            assert!(margin < 0.0);
            assert!((margin - oracle).abs() <= 1e-12 * oracle.abs());
            u *= 1.3;
        }
        let es = NonlinearityModel::exp_shift(0.0).unwrap();
        for &u in &[0.01, 0.1, 1.0, 10.0, 100.0] {
            assert!(es.log_concavity_margin(u).unwrap() < 0.0);
            assert!(es.log_concave_at(u).unwrap());
        }
        assert!(es.log_concave_at(1e-4).unwrap());
        assert_eq!(NonlinearityModel::constant(1.0).unwrap().log_concavity_margin(3.0).unwrap(), 0.0);
        let cubic = NonlinearityModel::cubic(0.1, 1.0, 2.5).unwrap();
        assert!(matches!(cubic.log_concavity_margin(0.5), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn power_sum_global_and_pointwise_agree() {
        assert!(power_sum_log_concave(1.0, 2.0));
        assert_eq!((1.0f64 - 2.0).powi(2) - 2.0 * 3.0 + 1.0, -4.0);
        let ps = [1.0, 1.5, 2.0, 3.0, 4.5, 6.0];
        for &p in &ps {
            for &q in &ps {
                if p == q {
                    continue;
                }
                let m = NonlinearityModel::power_sum(p, q).unwrap();
                let mut worst = f64::NEG_INFINITY;
                let mut u = 1e-4;
                while u < 1e4 {
                    let (_, h2) = m.log_derivs(u).unwrap();
                    worst = worst.max(h2 * u * u);
                    u *= 1.02;
                }
                let global = power_sum_log_concave(p, q);
                // at the boundary of the criterion the margin touches zero
                let boundary = ((p.sqrt() - q.sqrt()).abs() - 1.0).abs() < 1e-9;
                if !boundary {
                    assert_eq!(global, worst < 0.0, "p={p} q={q} worst={worst}");
                }
            }
        }
    }

    #[test]
    fn sturm_roots_examples() {
        let at = |e| NonlinearityModel::perturbed_gelfand(e).unwrap().sturm_roots();
        assert_eq!(at(0.25), vec![4.0]);
        assert!(at(0.30).is_empty());
        assert!(at(0.26).is_empty());
        let r = at(0.20);
        assert_eq!(r.len(), 2);
        // oracle: roots of 0.04u^2 - 0.6u + 1 via brute-force sign scan
        let g = |u: f64| u / (1.0 + 0.2 * u).powi(2) - 1.0;
        let mut found = Vec::new();
        let mut u = 0.5;
        while u < 30.0 {
            if g(u).signum() != g(u + 1e-4).signum() {
                found.push(u);
            }
            u += 1e-4;
        }
        assert_eq!(found.len(), 2);
        for (a, b) in r.iter().zip(found) {
            assert!((a - b).abs() < 2e-4, "{a} vs {b}");
        }
        assert!((r[0] - 1.909).abs() < 1e-3 && (r[1] - 13.09).abs() < 1e-2);
    }

    #[test]
    fn sturm_roots_empty_iff_eps_above_quarter() {
        for i in 1..60 {
            let eps = 0.01 * i as f64;
            let roots = NonlinearityModel::perturbed_gelfand(eps).unwrap().sturm_roots();
            assert_eq!(roots.is_empty(), eps > 0.25, "eps={eps}");
        }
    }

    #[test]
    fn sturm_roots_by_scan() {
        // u = (u + eps)^2 for the mu form
        let eps: f64 = 0.1;
        let roots = NonlinearityModel::mu_form(eps).unwrap().sturm_roots();
        let d = (1.0 - 4.0 * eps).sqrt();
        let exact = [(1.0 - 2.0 * eps - d) / 2.0, (1.0 - 2.0 * eps + d) / 2.0];
        assert_eq!(roots.len(), 2);
        for (a, b) in roots.iter().zip(exact) {
            assert!((a - b).abs() < 1e-9);
        }
        let lim = NonlinearityModel::limiting().sturm_roots();
        assert_eq!(lim.len(), 1);
        assert!((lim[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inflection_examples() {
        assert_eq!(NonlinearityModel::mu_form(0.1).unwrap().inflection_points(), vec![0.4]);
        assert_eq!(NonlinearityModel::limiting().inflection_points(), vec![0.5]);
        let pg = NonlinearityModel::perturbed_gelfand(0.2).unwrap().inflection_points();
        assert!((pg[0] - 7.5).abs() < 1e-12);
        // sign scan of the closed-form f''
        let m = NonlinearityModel::perturbed_gelfand(0.2).unwrap();
        assert!(m.eval(7.4, 2).unwrap() > 0.0 && m.eval(7.6, 2).unwrap() < 0.0);
        assert!(NonlinearityModel::mu_form(0.6).unwrap().inflection_points().is_empty());
        for i in 1..10 {
            let eps = 0.05 * i as f64;
            let pts = NonlinearityModel::mu_form(eps).unwrap().inflection_points();
            assert!((pts[0] - (0.5 - eps)).abs() <= 1e-12);
        }
    }

    #[test]
    fn change_of_variable_identity() {
        for &eps in &[0.1, 0.22, 0.5, 1.0] {
            let mu = NonlinearityModel::mu_form(eps).unwrap();
            let pg = NonlinearityModel::perturbed_gelfand(eps).unwrap();
            for &u in &[0.0, 0.5, 3.0, 20.0, 150.0] {
                let w = eps * eps * u;
                let lhs = mu.value(w).unwrap();
                let rhs = (-1.0 / eps).exp() * pg.value(u).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs, "eps={eps} u={u}");
            }
        }
    }

    #[test]
    fn invariants_rejected() {
        assert!(NonlinearityModel::perturbed_gelfand(0.0).is_err());
        assert!(NonlinearityModel::cubic(1.0, 1.0, 2.0).is_err());
        assert!(NonlinearityModel::cubic(0.1, 2.0, 1.0).is_err());
        assert!(NonlinearityModel::power_sum(1.0, 1.0).is_err());
        assert!(NonlinearityModel::exp_shift(-0.1).is_err());
        assert!(NonlinearityModel::constant(0.0).is_err());
        // c > 2b is a predicate, not an invariant
        let m = NonlinearityModel::cubic(0.05, 1.0, 1.5).unwrap();
        assert_eq!(m.cubic_hypothesis_holds(), Some(false));
    }

    #[test]
    fn textual_config_round_trip() {
        let m: NonlinearityModel = "family=perturbed_gelfand epsilon=0.22".parse().unwrap();
        assert_eq!(m, NonlinearityModel::perturbed_gelfand(0.22).unwrap());
        let m: NonlinearityModel = "# comment\nfamily=cubic\nepsilon=0.05 b=1\nc=2.5".parse().unwrap();
        assert_eq!(m.to_string().parse::<NonlinearityModel>().unwrap(), m);
        assert!("family=nope".parse::<NonlinearityModel>().is_err());
        assert!("family=gelfand epsilon=0.1".parse::<NonlinearityModel>().is_err());
        assert!("family=cubic epsilon=0.05 b=1".parse::<NonlinearityModel>().is_err());
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<NonlinearityModel>(&json).unwrap(), m);
    }
}
