//! Dormand–Prince 5(4) with PI step control, 4th-order dense output and
//! bracketed event location. Internal engine shared by the radial shots, the
//! variational shots and the linearized solves.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 2_000_000;

pub(crate) type State<const N: usize> = [f64; N];

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Segment<const N: usize> {
    pub r0: f64,
    pub h: f64,
    pub coef: [[f64; 5]; N],
}

impl<const N: usize> Segment<N> {
    pub fn theta(&self, r: f64) -> f64 {
        (r - self.r0) / self.h
    }

    pub fn eval(&self, r: f64) -> State<N> {
        let t = self.theta(r);
        let t1 = 1.0 - t;
        let mut y = [0.0; N];
        for (yi, c) in y.iter_mut().zip(&self.coef) {
            *yi = c[0] + t * (c[1] + t1 * (c[2] + t * (c[3] + t1 * c[4])));
        }
        y
    }

    /// Derivative of the interpolant with respect to `r`.
    pub fn eval_deriv(&self, r: f64) -> State<N> {
        let t = self.theta(r);
        let mut y = [0.0; N];
        for (yi, c) in y.iter_mut().zip(&self.coef) {
            // d/dt of c0 + t c1 + (t - t^2) c2 + (t^2 - t^3) c3 + (t^2 - 2t^3 + t^4) c4
            let d = c[1]
                + (1.0 - 2.0 * t) * c[2]
                + (2.0 * t - 3.0 * t * t) * c[3]
                + (2.0 * t - 6.0 * t * t + 4.0 * t * t * t) * c[4];
            *yi = d / self.h;
        }
        y
    }

    pub fn r_end(&self) -> f64 {
        self.r0 + self.h
    }

    /// Applies `r -> r * r_scale` and `y_i -> y_i * y_scale[i] + y_shift[i]`.
    pub fn map_frame(&mut self, r_scale: f64, y_scale: &[f64; N], y_shift: &[f64; N]) {
        self.r0 *= r_scale;
        self.h *= r_scale;
        for (i, c) in self.coef.iter_mut().enumerate() {
            for x in c.iter_mut() {
                *x *= y_scale[i];
            }
            c[0] += y_shift[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Down,
    Up,
    Either,
}

/// Terminal event: component `component` crosses `level`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Crossing {
    pub tag: u8,
    pub component: usize,
    pub level: f64,
    pub direction: Direction,
    /// Inactive until `r` exceeds this.
    pub after: f64,
}

impl Crossing {
    fn fires(&self, g0: f64, g1: f64) -> bool {
        match self.direction {
            Direction::Down => g0 > 0.0 && g1 <= 0.0,
            Direction::Up => g0 < 0.0 && g1 >= 0.0,
            Direction::Either => (g0 > 0.0 && g1 <= 0.0) || (g0 < 0.0 && g1 >= 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub r_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Stop<const N: usize> {
    Event { tag: u8, r: f64, y: State<N> },
    EndReached,
    /// Right-hand side became non-finite; the last good state is kept.
    NonFinite { r: f64, y: State<N> },
}

#[derive(Debug, Clone)]
pub(crate) struct Run<const N: usize> {
    pub nodes: Vec<(f64, State<N>)>,
    pub segments: Vec<Segment<N>>,
    pub end_r: f64,
    pub end_y: State<N>,
    pub stop: Stop<N>,
}

struct Stages<const N: usize> {
    k: [State<N>; 7],
    y_new: State<N>,
    err: f64,
}

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        *o += h * s;
    }
    out
}

fn all_finite<const N: usize>(y: &State<N>) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn dp_step<const N: usize, F>(rhs: &mut F, r: f64, y: &State<N>, k1: &State<N>, h: f64, ctl: &StepControl) -> Result<Stages<N>>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
{
    let k2 = rhs(r + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = rhs(r + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = rhs(r + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = rhs(r + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = rhs(r + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    if !all_finite(&y_new) {
        return Err(Error::NonFiniteState { r: r + h });
    }
    let k7 = rhs(r + h, &y_new)?;
    let mut err = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sk = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y_new[i].abs());
        err += (e / sk).powi(2);
    }
    let err = (err / N as f64).sqrt();
    Ok(Stages { k: [*k1, k2, k3, k4, k5, k6, k7], y_new, err })
}

fn dense<const N: usize>(r: f64, h: f64, y: &State<N>, st: &Stages<N>) -> Segment<N> {
    let k = &st.k;
    let mut coef = [[0.0; 5]; N];
    for i in 0..N {
        let ydiff = st.y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        coef[i] = [
            y[i],
            ydiff,
            bspl,
            ydiff - h * k[6][i] - bspl,
            h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]),
        ];
    }
    Segment { r0: r, h, coef }
}

/// Root of `seg.eval(r)[c] - level` in `[seg.r0, seg.r_end()]`, by Illinois
/// regula falsi with a bisection fallback.
fn locate_on_segment<const N: usize>(seg: &Segment<N>, c: usize, level: f64) -> f64 {
    let g = |r: f64| seg.eval(r)[c] - level;
    let (mut a, mut b) = (seg.r0, seg.r_end());
    let (mut ga, mut gb) = (g(a), g(b));
    if ga == 0.0 {
        return a;
    }
    if gb == 0.0 || ga.signum() == gb.signum() {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
        let mut x = (a * gb - b * ga) / (gb - ga);
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx.signum() == gb.signum() {
            b = x;
            gb = gx;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            ga = gx;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    if ga.abs() < gb.abs() {
        a
    } else {
        b
    }
}

/// Integrates `y' = rhs(r, y)` from `(r0, y0)` to `ctl.r_end` or the first
/// crossing in `events`. With `store` the full trajectory is kept.
pub(crate) fn solve<const N: usize, F>(
    mut rhs: F,
    r0: f64,
    y0: State<N>,
    ctl: &StepControl,
    events: &[Crossing],
    store: bool,
) -> Result<Run<N>>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
{
    let mut run = Run {
        nodes: Vec::new(),
        segments: Vec::new(),
        end_r: r0,
        end_y: y0,
        stop: Stop::EndReached,
    };
    if store {
        run.nodes.push((r0, y0));
    }
    let mut r = r0;
    let mut y = y0;
    let mut k1 = match rhs(r, &y) {
        Ok(k) => k,
        Err(Error::NonFinite { .. }) | Err(Error::NonFiniteState { .. }) => {
            run.stop = Stop::NonFinite { r, y };
            return Ok(run);
        }
        Err(e) => return Err(e),
    };
    let mut h = ctl.h_init.min(ctl.r_end - r);
    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;

    for _ in 0..MAX_STEPS {
        if r >= ctl.r_end {
            break;
        }
        let last = r + h >= ctl.r_end;
        if last {
            h = ctl.r_end - r;
        }
        let st = match dp_step(&mut rhs, r, &y, &k1, h, ctl) {
            Ok(st) => st,
            Err(Error::NonFinite { .. }) | Err(Error::NonFiniteState { .. }) => {
                // shrink before giving up: an oversized trial step can leave the domain
                if h * 0.25 >= ctl.h_min {
                    h *= 0.25;
                    rejected_last = true;
                    continue;
                }
                run.stop = Stop::NonFinite { r, y };
                break;
            }
            Err(e) => return Err(e),
        };
        let expo = 0.2 - BETA * 0.75;
        let fac11 = st.err.max(1e-300).powf(expo);
        if st.err <= 1.0 {
            let seg = dense(r, h, &y, &st);
            let r_new = if last { ctl.r_end } else { r + h };

            let mut hit: Option<(f64, u8, usize, f64)> = None;
            for ev in events {
                if r_new <= ev.after {
                    continue;
                }
                let g0 = y[ev.component] - ev.level;
                let g1 = st.y_new[ev.component] - ev.level;
                if ev.fires(g0, g1) {
                    let re = locate_on_segment(&seg, ev.component, ev.level);
                    if hit.is_none_or(|(rh, ..)| re < rh) {
                        hit = Some((re, ev.tag, ev.component, ev.level));
                    }
                }
            }
            if let Some((re, tag, comp, level)) = hit {
                let (re, ye) = polish_event(&mut rhs, r, &y, &k1, &seg, re, comp, level, ctl)?;
                if store {
                    let mut s = seg.clone();
                    // keep the segment parametrisation; evaluation is clamped to re
                    s.h = seg.h;
                    run.segments.push(s);
                    run.nodes.push((re, ye));
                }
                run.end_r = re;
                run.end_y = ye;
                run.stop = Stop::Event { tag, r: re, y: ye };
                return Ok(run);
            }

            if store {
                run.segments.push(seg);
                run.nodes.push((r_new, st.y_new));
            }
            r = r_new;
            y = st.y_new;
            k1 = st.k[6];
            run.end_r = r;
            run.end_y = y;

            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            fac_old = st.err.max(1e-4);
            rejected_last = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
        if h < ctl.h_min {
            return Err(Error::StepSizeUnderflow { r, h });
        }
    }
    if r < ctl.r_end && matches!(run.stop, Stop::EndReached) {
        return Err(Error::StepSizeUnderflow { r, h });
    }
    Ok(run)
}

/// Moves a dense-output event estimate onto the discrete solution: a few
/// Newton iterations on the crossing function, each one a single full step
/// from the segment start.
#[allow(clippy::too_many_arguments)]
fn polish_event<const N: usize, F>(
    rhs: &mut F,
    r: f64,
    y: &State<N>,
    k1: &State<N>,
    seg: &Segment<N>,
    r_guess: f64,
    comp: usize,
    level: f64,
    ctl: &StepControl,
) -> Result<(f64, State<N>)>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
{
    let mut best = (r_guess, seg.eval(r_guess));
    let mut dh = r_guess - r;
    if dh <= 0.0 {
        return Ok(best);
    }
    let mut best_g = (best.1[comp] - level).abs();
    for _ in 0..3 {
        let Ok(st) = dp_step(rhs, r, y, k1, dh, ctl) else {
            break;
        };
        let g = st.y_new[comp] - level;
        if g.abs() <= best_g || g == 0.0 {
            best = (r + dh, st.y_new);
            best_g = g.abs();
        }
        if g == 0.0 {
            break;
        }
        let slope = st.k[6][comp];
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = dh - g / slope;
        if !(next > 0.0 && next <= seg.h) {
            break;
        }
        let converged = (next - dh).abs() <= 4.0 * f64::EPSILON * (r + next).abs();
        dh = next;
        if converged {
            break;
        }
    }
    Ok(best)
}

/// Piecewise dense trajectory; evaluation clamps to the covered range.
pub(crate) fn eval_segments<const N: usize>(segments: &[Segment<N>], r: f64) -> Option<State<N>> {
    let seg = find_segment(segments, r)?;
    Some(seg.eval(r))
}

pub(crate) fn find_segment<const N: usize>(segments: &[Segment<N>], r: f64) -> Option<&Segment<N>> {
    if segments.is_empty() {
        return None;
    }
    let idx = segments.partition_point(|s| s.r0 <= r);
    Some(&segments[idx.saturating_sub(1)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(r_end: f64) -> StepControl {
        StepControl { abs_tol: 1e-10, rel_tol: 1e-10, h_init: 1e-3, h_min: 1e-14, r_end }
    }

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let run = solve(|_, y: &State<2>| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], &ctl(10.0), &[], true).unwrap();
        assert!((run.end_y[0] - 10f64.sin()).abs() < 1e-8);
        for i in 0..100 {
            let r = 0.1 * i as f64 + 0.037;
            let y = eval_segments(&run.segments, r).unwrap();
            assert!((y[0] - r.sin()).abs() < 1e-8, "r={r}");
            let d = find_segment(&run.segments, r).unwrap().eval_deriv(r);
            assert!((d[0] - r.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn event_is_located_on_discrete_solution() {
        let ev = Crossing { tag: 7, component: 0, level: 0.0, direction: Direction::Down, after: 0.0 };
        let run = solve(|_, y: &State<2>| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], &ctl(10.0), &[ev], false).unwrap();
        match run.stop {
            Stop::Event { tag, r, y } => {
                assert_eq!(tag, 7);
                assert!((r - std::f64::consts::PI).abs() < 1e-11, "{r}");
                assert!(y[0].abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn map_frame_scales_interpolant() {
        let run = solve(|_, y: &State<2>| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], &ctl(3.0), &[], true).unwrap();
        let mut segs = run.segments.clone();
        for s in &mut segs {
            s.map_frame(0.5, &[1.0, 2.0], &[3.0, 0.0]);
        }
        let y = eval_segments(&segs, 0.5).unwrap();
        assert!((y[0] - (1f64.sin() + 3.0)).abs() < 1e-8);
        assert!((y[1] - 2.0 * 1f64.cos()).abs() < 1e-8);
    }
}
