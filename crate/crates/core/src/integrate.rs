//! ODE integration: classic fixed-step RK4 and the adaptive Dormand–Prince
//! 5(4) embedded pair with continuous (dense) output.
//!
//! Output is sampled on a caller-supplied grid; the adaptive method fills the
//! grid from the 4th-order continuous extension of each accepted step, so
//! sample times never constrain the step sequence. Divergence is an expected
//! outcome, not a panic: when the controller underflows the minimum step or a
//! derivative stops being finite, the trajectory is truncated and tagged
//! [`Termination::BlowUp`]; exceeding the step budget tags
//! [`Termination::StepLimit`].

use crate::error::{Error, Result};
use crate::poly::Poly;

/// Dormand–Prince coefficients (stage nodes C, stage matrix A, embedded
/// error weights E = b − b̂, dense-output vector D). The 5th-order solution
/// weights coincide with the last row of A — the scheme is FSAL, so the
/// 7th stage **is** the candidate solution's derivative.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 6] = [
    &[0.2],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const SHRINK_LIMIT: f64 = 0.2;
const GROW_LIMIT: f64 = 5.0;
/// Default minimum step as a fraction of the integration span.
const MIN_STEP_FRACTION: f64 = 1e-14;

#[derive(Clone, Debug)]
pub enum Method {
    /// Classic RK4 with a fixed step (the step is shortened only to land
    /// exactly on sample times).
    Rk4Fixed { step: f64 },
    /// Dormand–Prince 5(4), PI-free controller with safety 0.9 and step
    /// ratio clamped to [0.2, 5].
    Dp45Adaptive { abs_tol: f64, rel_tol: f64 },
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
    /// Absolute minimum step; `None` means `1e-14 × (t1 − t0)`.
    pub min_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Dp45Adaptive {
                abs_tol: 1e-10,
                rel_tol: 1e-10,
            },
            max_steps: 1_000_000,
            min_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn dp45(abs_tol: f64, rel_tol: f64) -> Self {
        IntegratorConfig {
            method: Method::Dp45Adaptive { abs_tol, rel_tol },
            ..Default::default()
        }
    }

    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed { step },
            ..Default::default()
        }
    }

    fn validate(&self, span: f64) -> Result<f64> {
        match self.method {
            Method::Rk4Fixed { step } => {
                if !(step.is_finite() && step > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "rk4-fixed step must be positive, got {step}"
                    )));
                }
            }
            Method::Dp45Adaptive { abs_tol, rel_tol } => {
                if !(abs_tol.is_finite() && abs_tol > 0.0 && rel_tol.is_finite() && rel_tol >= 0.0)
                {
                    return Err(Error::InvalidConfig(format!(
                        "dp45 tolerances must be positive, got abs {abs_tol}, rel {rel_tol}"
                    )));
                }
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        let min_step = self.min_step.unwrap_or(MIN_STEP_FRACTION * span);
        if !(min_step.is_finite() && min_step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "min_step must be positive, got {min_step}"
            )));
        }
        Ok(min_step)
    }
}

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Reached the end of the requested span.
    Completed,
    /// Step size underflowed or the state/derivative stopped being finite.
    BlowUp,
    /// Step budget exhausted.
    StepLimit,
}

impl Termination {
    pub fn label(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::BlowUp => "blow-up",
            Termination::StepLimit => "step-limit",
        }
    }
}

/// Sampled solution curve. Times are strictly increasing; on truncation the
/// grid is cut at the last reachable sample.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub status: Termination,
    /// Accepted + rejected steps taken.
    pub steps: usize,
    /// Integrator time actually reached; equals the span end when completed,
    /// the truncation time otherwise.
    pub t_end: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last_state(&self) -> Option<(&f64, &Vec<f64>)> {
        self.times.last().zip(self.states.last())
    }
}

/// Where to sample the solution.
#[derive(Clone, Debug)]
pub enum SampleGrid {
    /// `n ≥ 2` uniformly spaced times including both endpoints.
    Count(usize),
    /// Explicit strictly-increasing times inside the span.
    Times(Vec<f64>),
}

impl SampleGrid {
    pub fn materialize(&self, t0: f64, t1: f64) -> Result<Vec<f64>> {
        match self {
            SampleGrid::Count(n) => {
                if *n < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "sample count must be at least 2, got {n}"
                    )));
                }
                let dt = (t1 - t0) / (*n as f64 - 1.0);
                let mut ts: Vec<f64> = (0..*n).map(|i| t0 + dt * i as f64).collect();
                *ts.last_mut().expect("n >= 2") = t1;
                Ok(ts)
            }
            SampleGrid::Times(ts) => {
                if ts.is_empty() {
                    return Err(Error::InvalidConfig("empty sample grid".into()));
                }
                if !ts.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::InvalidConfig(
                        "sample times must be strictly increasing".into(),
                    ));
                }
                if ts[0] < t0 || *ts.last().expect("nonempty") > t1 {
                    return Err(Error::InvalidConfig(
                        "sample times must lie within the integration span".into(),
                    ));
                }
                Ok(ts.clone())
            }
        }
    }
}

/// Integrate `dy/dt = field(t, y)` over `t_span`, sampling on `grid`.
pub fn integrate_ode<F>(
    mut field: F,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    grid: &SampleGrid,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::InvalidConfig(format!(
            "integration span must be finite and increasing, got [{t0}, {t1}]"
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let min_step = cfg.validate(t1 - t0)?;
    let samples = grid.materialize(t0, t1)?;
    match cfg.method {
        Method::Rk4Fixed { step } => rk4_fixed(
            &mut field,
            y0,
            (t0, t1),
            step,
            cfg.max_steps,
            &samples,
        ),
        Method::Dp45Adaptive { abs_tol, rel_tol } => dp45(
            &mut field,
            y0,
            (t0, t1),
            abs_tol,
            rel_tol,
            cfg.max_steps,
            min_step,
            &samples,
        ),
    }
}

fn rk4_fixed<F>(
    field: &mut F,
    y0: &[f64],
    (t0, _t1): (f64, f64),
    step: f64,
    max_steps: usize,
    samples: &[f64],
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Trajectory {
        times: Vec::with_capacity(samples.len()),
        states: Vec::with_capacity(samples.len()),
        status: Termination::Completed,
        steps: 0,
        t_end: t0,
    };
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    let mut emit = samples.iter().peekable();
    if let Some(&&s) = emit.peek() {
        if s <= t0 {
            out.times.push(s);
            out.states.push(y.clone());
            emit.next();
        }
    }
    'outer: while let Some(&&target) = emit.peek() {
        while t < target {
            if out.steps >= max_steps {
                out.status = Termination::StepLimit;
                break 'outer;
            }
            let h = step.min(target - t);
            field(t, &y, &mut k1);
            for i in 0..dim {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            field(t + 0.5 * h, &tmp, &mut k2);
            for i in 0..dim {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            field(t + 0.5 * h, &tmp, &mut k3);
            for i in 0..dim {
                tmp[i] = y[i] + h * k3[i];
            }
            field(t + h, &tmp, &mut k4);
            for i in 0..dim {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
            out.steps += 1;
            if y.iter().any(|v| !v.is_finite()) {
                out.status = Termination::BlowUp;
                break 'outer;
            }
        }
        out.times.push(target);
        out.states.push(y.clone());
        emit.next();
    }
    out.t_end = t;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn dp45<F>(
    field: &mut F,
    y0: &[f64],
    (t0, t1): (f64, f64),
    abs_tol: f64,
    rel_tol: f64,
    max_steps: usize,
    min_step: f64,
    samples: &[f64],
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y_next = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut out = Trajectory {
        times: Vec::with_capacity(samples.len()),
        states: Vec::with_capacity(samples.len()),
        status: Termination::Completed,
        steps: 0,
        t_end: t0,
    };
    let mut emit = samples.iter().peekable();
    if let Some(&&s) = emit.peek() {
        if s <= t0 {
            out.times.push(s);
            out.states.push(y.clone());
            emit.next();
        }
    }

    field(t, &y, &mut k[0]); // FSAL seed
    if k[0].iter().any(|v| !v.is_finite()) {
        out.status = Termination::BlowUp;
        return Ok(out);
    }
    let mut h = ((t1 - t0) * 1e-3).min(t1 - t0);

    while t < t1 {
        if out.steps >= max_steps {
            out.status = Termination::StepLimit;
            break;
        }
        if h < min_step {
            out.status = Termination::BlowUp;
            break;
        }
        if t + h > t1 {
            h = t1 - t;
        }
        out.steps += 1;

        // Stages 2..7 (k[0] is fresh from FSAL).
        let mut finite = true;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, a) in A[s - 1].iter().enumerate() {
                    acc += a * k[j][i];
                }
                tmp[i] = y[i] + h * acc;
            }
            field(t + C[s] * h, &tmp, &mut k[s]);
            if k[s].iter().any(|v| !v.is_finite()) {
                finite = false;
                break;
            }
        }
        // 5th-order candidate is the stage-7 argument (A row 6 equals B).
        if finite {
            y_next.copy_from_slice(&tmp);
        }

        // Scaled RMS error norm.
        let err = if finite {
            let mut acc = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for (j, w) in E.iter().enumerate() {
                    e += w * k[j][i];
                }
                e *= h;
                let scale = abs_tol + rel_tol * y[i].abs().max(y_next[i].abs());
                acc += (e / scale) * (e / scale);
            }
            (acc / dim as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            // Accepted: emit dense output for samples inside (t, t+h].
            while let Some(&&s) = emit.peek() {
                if s > t + h {
                    break;
                }
                let theta = ((s - t) / h).clamp(0.0, 1.0);
                out.times.push(s);
                out.states.push(dense_eval(&y, &y_next, &k, h, theta));
                emit.next();
            }
            t += h;
            y.copy_from_slice(&y_next);
            k.swap(0, 6); // FSAL: last stage is next first stage
            if emit.peek().is_none() {
                break;
            }
        }

        let factor = if err.is_finite() && err > 0.0 {
            SAFETY * err.powf(-0.2)
        } else if err == 0.0 {
            GROW_LIMIT
        } else {
            SHRINK_LIMIT
        };
        h *= factor.clamp(SHRINK_LIMIT, GROW_LIMIT);
    }
    out.t_end = t;
    Ok(out)
}

/// 4th-order continuous extension of an accepted Dormand–Prince step.
fn dense_eval(y0: &[f64], y1: &[f64], k: &[Vec<f64>], h: f64, theta: f64) -> Vec<f64> {
    let dim = y0.len();
    let s = theta;
    let s1 = 1.0 - theta;
    let mut out = vec![0.0; dim];
    for i in 0..dim {
        let ydiff = y1[i] - y0[i];
        let bspl = h * k[0][i] - ydiff;
        let mut dd = 0.0;
        for (j, d) in D.iter().enumerate() {
            dd += d * k[j][i];
        }
        let cont4 = h * dd;
        let cont3 = ydiff - h * k[6][i] - bspl;
        out[i] = y0[i] + (ydiff + (bspl + (cont3 + cont4 * s1) * s) * s1) * s;
    }
    out
}

/// Evaluate a scalar observable along a trajectory.
pub fn observable_along<F>(traj: &Trajectory, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    traj.states.iter().map(|s| f(s)).collect()
}

/// Evaluate a polynomial observable along a trajectory (dimension-checked).
pub fn poly_observable_along(traj: &Trajectory, p: &Poly) -> Result<Vec<f64>> {
    if traj.dim() != p.nvars() && !traj.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory dimension {} vs polynomial over {} variables",
            traj.dim(),
            p.nvars()
        )));
    }
    let c = p.compile();
    Ok(traj.states.iter().map(|s| c.eval(s)).collect())
}
