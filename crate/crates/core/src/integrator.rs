//! Time stepping for the closed-loop swarm.
//!
//! Two schemes are available: an adaptive Dormand–Prince 5(4) pair with FSAL
//! and a classical fixed-step RK4 used for convergence studies. Both watch the
//! minimum pairwise distance after every accepted step and report collision
//! events at step granularity.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::model::{FormationSpec, ModelParams, RhsWorkspace, SwarmState};

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed,
    DormandPrince45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Initial step (adaptive) or the fixed step (RK4).
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_min: f64,
    /// Distance below which a numerical collision is declared.
    pub collision_eps: f64,
    /// Distance below which a near miss is logged.
    pub near_collision_eps: f64,
    pub t_end: f64,
}

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_DT_INIT: f64 = 1e-3;
pub const DEFAULT_DT_MIN: f64 = 1e-8;

impl IntegratorConfig {
    /// Adaptive defaults with collision thresholds scaled to the initial
    /// minimum distance.
    pub fn for_initial(initial: &SwarmState, t_end: f64) -> Self {
        let (d0, _) = min_pairwise_distance(initial);
        Self {
            method: Method::DormandPrince45,
            dt_init: DEFAULT_DT_INIT,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            dt_min: DEFAULT_DT_MIN,
            collision_eps: 1e-7 * d0,
            near_collision_eps: default_near_collision_eps(d0),
            t_end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_init", self.dt_init),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("dt_min", self.dt_min),
            ("collision_eps", self.collision_eps),
            ("t_end", self.t_end),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if !(self.near_collision_eps >= 0.0) {
            return Err(Error::InvalidConfig("near_collision_eps must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn default_near_collision_eps(initial_min_distance: f64) -> f64 {
    (1e-2f64).min(0.5 * initial_min_distance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    NearCollision,
    NumericalCollision,
    StepFloor,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::NearCollision => "near-collision",
            EventKind::NumericalCollision => "numerical-collision",
            EventKind::StepFloor => "step-floor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub agents: Option<(usize, usize)>,
    pub min_distance: f64,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    Collision,
    StepFloor,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: SwarmState,
    pub diagnostics: DiagnosticsRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub termination: Termination,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn last_state(&self) -> &SwarmState {
        &self.samples.last().expect("trajectory has at least one sample").state
    }

    pub fn records(&self) -> impl Iterator<Item = &DiagnosticsRecord> {
        self.samples.iter().map(|s| &s.diagnostics)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Smallest pairwise distance and the lexicographically first pair attaining it.
pub fn min_pairwise_distance(state: &SwarmState) -> (f64, (usize, usize)) {
    min_distance_flat(state.positions(), state.dim())
}

fn min_distance_flat(x: &[f64], dim: usize) -> (f64, (usize, usize)) {
    let n = x.len() / dim;
    let mut best = (f64::INFINITY, (0, 1));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = crate::model::distance(&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim]);
            if d < best.0 {
                best = (d, (i, j));
            }
        }
    }
    best
}

/// Outcome of the step-size controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub accept: bool,
    pub dt_next: f64,
}

/// Step-size controller for the adaptive scheme.
///
/// `error` is the scaled local error norm (1 means exactly on tolerance).
/// `cap` is the largest step the singularity guard allows; pass infinity when
/// the kernel has no singularity. Fails with the demanded step when it would
/// drop below `dt_min`.
pub fn step_controller(error: f64, dt: f64, cap: f64, cfg: &IntegratorConfig) -> Result<StepDecision, f64> {
    debug_assert!(dt > 0.0);
    let factor = if error == 0.0 {
        5.0
    } else {
        (0.9 * error.powf(-0.2)).clamp(0.2, 5.0)
    };
    let dt_next = (dt * factor).min(cap);
    if dt_next < cfg.dt_min || dt_next.is_nan() {
        return Err(dt_next);
    }
    Ok(StepDecision {
        accept: error <= 1.0,
        dt_next,
    })
}

/// Largest step for which no pair of agents closes more than half the current
/// minimum distance, measured in the mean-velocity frame.
fn singularity_guard(x: &[f64], v: &[f64], dim: usize, params: &ModelParams) -> f64 {
    let Some(radius) = params.kernel.singular_radius() else {
        return f64::INFINITY;
    };
    let (d, _) = min_distance_flat(x, dim);
    let vc = crate::model::mean_vector(v, dim);
    let vmax = v
        .chunks_exact(dim)
        .map(|vi| vi.iter().zip(&vc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if vmax == 0.0 {
        return f64::INFINITY;
    }
    // relative speed of a pair is at most 2 vmax
    0.5 * (d - radius) / (2.0 * vmax)
}

// Dormand–Prince 5(4) tableau.
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Packs `(x, v)` into one vector `y = [x | v]` and evaluates `f(y) = [v | a]`.
struct System<'a> {
    params: &'a ModelParams,
    spec: &'a FormationSpec,
    dim: usize,
    half: usize,
    ws: RhsWorkspace,
    evals: usize,
}

impl System<'_> {
    fn eval(&mut self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.evals += 1;
        let (x, v) = y.split_at(self.half);
        let (dx, dv) = out.split_at_mut(self.half);
        dx.copy_from_slice(v);
        self.ws.acceleration(x, v, self.dim, self.params, self.spec, dv)
    }
}

fn combine(y: &[f64], dt: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for (idx, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (coef, k) in terms {
            acc += coef * k[idx];
        }
        *o = y[idx] + dt * acc;
    }
}

/// Collision bookkeeping shared by both schemes.
struct Monitor {
    dim: usize,
    singular: bool,
    collision_eps: f64,
    near_eps: f64,
    near_flags: Vec<bool>,
    events: Vec<Event>,
}

impl Monitor {
    fn new(n: usize, dim: usize, params: &ModelParams, cfg: &IntegratorConfig) -> Self {
        Self {
            dim,
            singular: params.kernel.is_singular(),
            collision_eps: cfg.collision_eps + params.kernel.singular_radius().unwrap_or(0.0),
            near_eps: cfg.near_collision_eps,
            near_flags: vec![false; n * n],
            events: Vec::new(),
        }
    }

    /// Inspect the step `prev -> next`; returns true when the run must stop.
    fn inspect(&mut self, t: f64, prev: &[f64], next: &[f64]) -> bool {
        fn p(x: &[f64], k: usize, dim: usize) -> &[f64] {
            &x[k * dim..(k + 1) * dim]
        }
        let dim = self.dim;
        let n = next.len() / dim;
        let mut stop = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = crate::model::distance(p(next, i, dim), p(next, j, dim));
                let crossed = dim == 1 && (prev[j] - prev[i]) * (next[j] - next[i]) < 0.0;
                if d < self.collision_eps || crossed {
                    let d_prev = crate::model::distance(p(prev, i, dim), p(prev, j, dim));
                    self.events.push(Event {
                        kind: EventKind::NumericalCollision,
                        t,
                        agents: Some((i, j)),
                        min_distance: if crossed { d.min(d_prev) } else { d },
                    });
                    stop |= self.singular;
                }
                let flag = &mut self.near_flags[i * n + j];
                if d < self.near_eps && !*flag {
                    *flag = true;
                    self.events.push(Event {
                        kind: EventKind::NearCollision,
                        t,
                        agents: Some((i, j)),
                        min_distance: d,
                    });
                } else if d > 2.0 * self.near_eps {
                    *flag = false;
                }
            }
        }
        stop
    }
}

fn make_sample(
    t: f64,
    dim: usize,
    y: &[f64],
    params: &ModelParams,
    spec: &FormationSpec,
) -> Result<Sample> {
    let half = y.len() / 2;
    let state = SwarmState::from_parts_unchecked(t, dim, y[..half].to_vec(), y[half..].to_vec());
    let diagnostics = diagnostics::record(&state, params, spec)?;
    Ok(Sample { state, diagnostics })
}

/// Integrate the closed-loop system and keep every accepted step.
pub fn simulate(
    initial: &SwarmState,
    params: &ModelParams,
    spec: &FormationSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut samples = Vec::new();
    let (events, termination, stats) = simulate_with(initial, params, spec, cfg, |s| samples.push(s))?;
    Ok(Trajectory {
        samples,
        events,
        termination,
        stats,
    })
}

/// Integrate the closed-loop system, handing every accepted sample to `observer`
/// on the calling thread. The first sample is the initial state and the last
/// one is the final state.
pub fn simulate_with(
    initial: &SwarmState,
    params: &ModelParams,
    spec: &FormationSpec,
    cfg: &IntegratorConfig,
    mut observer: impl FnMut(Sample),
) -> Result<(Vec<Event>, Termination, RunStats)> {
    params.validate()?;
    cfg.validate()?;
    let n = initial.n();
    let dim = initial.dim();
    spec.check_compatible(n, dim, &params.kernel)?;

    let (d0, (i0, j0)) = min_pairwise_distance(initial);
    let threshold = cfg.collision_eps + params.kernel.singular_radius().unwrap_or(0.0);
    if d0 <= threshold {
        return Err(Error::InitialOverlap {
            i: i0,
            j: j0,
            distance: d0,
            eps: threshold,
        });
    }

    let half = n * dim;
    let mut sys = System {
        params,
        spec,
        dim,
        half,
        ws: RhsWorkspace::default(),
        evals: 0,
    };
    let mut monitor = Monitor::new(n, dim, params, cfg);
    let mut stats = RunStats::default();

    let mut y: Vec<f64> = initial.positions().iter().chain(initial.velocities()).copied().collect();
    let mut t = initial.t;
    let t_end = initial.t + cfg.t_end;
    observer(make_sample(t, dim, &y, params, spec)?);

    let termination = match cfg.method {
        Method::DormandPrince45 => {
            run_dopri(&mut sys, &mut monitor, &mut stats, &mut y, &mut t, t_end, cfg, &mut observer)?
        }
        Method::Rk4Fixed => run_rk4(&mut sys, &mut monitor, &mut stats, &mut y, &mut t, t_end, cfg, &mut observer)?,
    };
    stats.rhs_evals = sys.evals;
    Ok((monitor.events, termination, stats))
}

/// Returns the step that lands exactly on `t_end` when `dt` would overshoot or
/// leave a sliver.
fn clip_to_end(t: f64, dt: f64, t_end: f64) -> (f64, bool) {
    let remaining = t_end - t;
    if dt >= remaining * (1.0 - 1e-12) {
        (remaining, true)
    } else {
        (dt, false)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_dopri(
    sys: &mut System<'_>,
    monitor: &mut Monitor,
    stats: &mut RunStats,
    y: &mut Vec<f64>,
    t: &mut f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    observer: &mut impl FnMut(Sample),
) -> Result<Termination> {
    let len = y.len();
    let half = sys.half;
    let dim = sys.dim;
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut k5 = vec![0.0; len];
    let mut k6 = vec![0.0; len];
    let mut k7 = vec![0.0; len];
    let mut stage = vec![0.0; len];
    let mut y_new = vec![0.0; len];
    sys.eval(y, &mut k1)?;

    let mut dt = cfg.dt_init;
    while *t < t_end {
        let cap = singularity_guard(&y[..half], &y[half..], dim, sys.params);
        dt = dt.min(cap);
        let (h, last) = clip_to_end(*t, dt, t_end);
        if h < cfg.dt_min && !last {
            return Ok(stall(monitor, *t, &y[..half], dim, cap < cfg.dt_min));
        }

        let stages: Result<()> = (|| {
            combine(y, h, &[(A21, &k1)], &mut stage);
            sys.eval(&stage, &mut k2)?;
            combine(y, h, &[(A31, &k1), (A32, &k2)], &mut stage);
            sys.eval(&stage, &mut k3)?;
            combine(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut stage);
            sys.eval(&stage, &mut k4)?;
            combine(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &mut stage);
            sys.eval(&stage, &mut k5)?;
            combine(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], &mut stage);
            sys.eval(&stage, &mut k6)?;
            combine(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], &mut y_new);
            sys.eval(&y_new, &mut k7)?;
            Ok(())
        })();

        if let Err(err) = stages {
            if !matches!(err, Error::Overlap { .. }) {
                return Err(err);
            }
            // a stage landed on the singularity: shrink and retry
            stats.rejected += 1;
            dt = 0.25 * h;
            if dt < cfg.dt_min {
                return Ok(stall(monitor, *t, &y[..half], dim, true));
            }
            continue;
        }

        let mut acc = 0.0;
        for idx in 0..len {
            let e = h * (E1 * k1[idx] + E3 * k3[idx] + E4 * k4[idx] + E5 * k5[idx] + E6 * k6[idx] + E7 * k7[idx]);
            let scale = cfg.abs_tol + cfg.rel_tol * y[idx].abs().max(y_new[idx].abs());
            acc += (e / scale) * (e / scale);
        }
        let error = (acc / len as f64).sqrt();
        let cap_next = singularity_guard(&y_new[..half], &y_new[half..], dim, sys.params);

        let decision = match step_controller(error, h, cap_next, cfg) {
            Ok(decision) => decision,
            Err(_) if error <= 1.0 && last => StepDecision {
                accept: true,
                dt_next: h,
            },
            Err(_) => {
                if error <= 1.0 {
                    // accept the step, then give up on the next one
                    if accept_step(sys, monitor, stats, y, &mut y_new, t, h, observer)? {
                        return Ok(Termination::Collision);
                    }
                    std::mem::swap(&mut k1, &mut k7);
                }
                return Ok(stall(monitor, *t, &y[..half], dim, cap_next < cfg.dt_min));
            }
        };

        if !decision.accept || error.is_nan() {
            stats.rejected += 1;
            dt = decision.dt_next;
            continue;
        }
        let stop = accept_step(sys, monitor, stats, y, &mut y_new, t, h, observer)?;
        std::mem::swap(&mut k1, &mut k7);
        if stop {
            return Ok(Termination::Collision);
        }
        dt = decision.dt_next;
    }
    Ok(Termination::Completed)
}

#[allow(clippy::too_many_arguments)]
fn accept_step(
    sys: &System<'_>,
    monitor: &mut Monitor,
    stats: &mut RunStats,
    y: &mut Vec<f64>,
    y_new: &mut Vec<f64>,
    t: &mut f64,
    h: f64,
    observer: &mut impl FnMut(Sample),
) -> Result<bool> {
    stats.accepted += 1;
    *t += h;
    if y_new.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            t: *t,
            step: stats.accepted,
        });
    }
    let stop = monitor.inspect(*t, &y[..sys.half], &y_new[..sys.half]);
    std::mem::swap(y, y_new);
    let sample = match make_sample(*t, sys.dim, y, sys.params, sys.spec) {
        Ok(s) => s,
        // overlapping agents: diagnostics with an undefined dissipation are
        // only possible once the collision has already been flagged
        Err(Error::Overlap { .. }) if stop => {
            let half = sys.half;
            let state = SwarmState::from_parts_unchecked(*t, sys.dim, y[..half].to_vec(), y[half..].to_vec());
            let mut diagnostics = diagnostics::record(&state, &regularized(sys.params), sys.spec)?;
            diagnostics.dissipation = f64::INFINITY;
            Sample { state, diagnostics }
        }
        Err(e) => return Err(e),
    };
    observer(sample);
    Ok(stop)
}

fn regularized(params: &ModelParams) -> ModelParams {
    ModelParams {
        kernel: crate::model::Kernel::Regular,
        ..*params
    }
}

/// The step size fell below `dt_min`. When the singularity guard forced it
/// there while a pair is within the near-collision distance, that pair is
/// closer than the integrator can resolve and the stop is reported as a
/// collision.
fn stall(monitor: &mut Monitor, t: f64, x: &[f64], dim: usize, guard_bound: bool) -> Termination {
    let (d, pair) = min_distance_flat(x, dim);
    let (kind, termination) = if guard_bound && d < monitor.near_eps.max(monitor.collision_eps) {
        (EventKind::NumericalCollision, Termination::Collision)
    } else {
        (EventKind::StepFloor, Termination::StepFloor)
    };
    monitor.events.push(Event {
        kind,
        t,
        agents: Some(pair),
        min_distance: d,
    });
    termination
}

#[allow(clippy::too_many_arguments)]
fn run_rk4(
    sys: &mut System<'_>,
    monitor: &mut Monitor,
    stats: &mut RunStats,
    y: &mut Vec<f64>,
    t: &mut f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    observer: &mut impl FnMut(Sample),
) -> Result<Termination> {
    let len = y.len();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut stage = vec![0.0; len];
    let mut y_new = vec![0.0; len];
    let steps = ((t_end - *t) / cfg.dt_init).round().max(1.0) as usize;
    let t0 = *t;
    for step in 0..steps {
        let t_next = if step + 1 == steps {
            t_end
        } else {
            t0 + (step + 1) as f64 * cfg.dt_init
        };
        let h = t_next - *t;
        let stages: Result<()> = (|| {
            sys.eval(y, &mut k1)?;
            combine(y, 0.5 * h, &[(1.0, &k1)], &mut stage);
            sys.eval(&stage, &mut k2)?;
            combine(y, 0.5 * h, &[(1.0, &k2)], &mut stage);
            sys.eval(&stage, &mut k3)?;
            combine(y, h, &[(1.0, &k3)], &mut stage);
            sys.eval(&stage, &mut k4)?;
            combine(y, h / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)], &mut y_new);
            Ok(())
        })();
        match stages {
            Ok(()) => {}
            Err(Error::Overlap { i, j, r }) => {
                monitor.events.push(Event {
                    kind: EventKind::NumericalCollision,
                    t: *t,
                    agents: Some((i, j)),
                    min_distance: r,
                });
                return Ok(Termination::Collision);
            }
            Err(e) => return Err(e),
        }
        let stop = accept_step(sys, monitor, stats, y, &mut y_new, t, h, observer)?;
        *t = t_next;
        if stop {
            return Ok(Termination::Collision);
        }
    }
    Ok(Termination::Completed)
}

/// Fixed-step RK4 runs at `dt0, dt0/2, ...` compared against a much finer run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub dts: Vec<f64>,
    pub reference_dt: f64,
    /// Max-norm error of the final `(x, v)` against the reference.
    pub errors: Vec<f64>,
    /// `errors[k] / errors[k + 1]`; about 16 for a fourth-order method.
    pub ratios: Vec<f64>,
}

fn final_state_rk4(
    initial: &SwarmState,
    params: &ModelParams,
    spec: &FormationSpec,
    base: &IntegratorConfig,
    dt: f64,
) -> Result<Vec<f64>> {
    let cfg = IntegratorConfig {
        method: Method::Rk4Fixed,
        dt_init: dt,
        dt_min: base.dt_min.min(dt),
        ..*base
    };
    let mut last = None;
    let (_, termination, _) = simulate_with(initial, params, spec, &cfg, |s| last = Some(s.state))?;
    if termination != Termination::Completed {
        return Err(Error::NoSolution(format!("run at dt = {dt} stopped early ({termination:?})")));
    }
    let s = last.expect("at least the initial sample");
    Ok(s.positions().iter().chain(s.velocities()).copied().collect())
}

pub fn convergence_study(
    initial: &SwarmState,
    params: &ModelParams,
    spec: &FormationSpec,
    cfg: &IntegratorConfig,
    dt0: f64,
    levels: usize,
) -> Result<ConvergenceStudy> {
    if levels < 2 {
        return Err(Error::InvalidConfig("convergence study needs at least two levels".into()));
    }
    let dts: Vec<f64> = (0..levels).map(|k| dt0 / (1u64 << k) as f64).collect();
    let reference_dt = dts[levels - 1] / 16.0;
    let reference = final_state_rk4(initial, params, spec, cfg, reference_dt)?;
    let errors = dts
        .iter()
        .map(|&dt| {
            let y = final_state_rk4(initial, params, spec, cfg, dt)?;
            Ok(y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(ConvergenceStudy {
        dts,
        reference_dt,
        errors,
        ratios,
    })
}
