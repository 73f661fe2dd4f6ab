//! Fixed-step integration of both closed loops, with trajectory logging,
//! per-sample metrics and collision detection.

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bearing::{bearings_of, SEPARATION_EPS};
use crate::control_global::{angle_to_reflection, control_velocity_into};
use crate::control_local::{
    self, advance, body_inputs_all, check_sync_assumption, h_norm, mean_rotation, so3_exp,
    sync_error, Rotation, SyncAssumption,
};
use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::Graph;
use crate::linalg::RANK_TOL;
use crate::target::{compute_target, BearingConstraints};

/// Slack allowed on `V(t_{k+1}) - V(t_k)` before a step counts as an increase.
pub const V_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Global,
    Local,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Mode::Global),
            "local" => Ok(Mode::Local),
            _ => Err(Error::InvalidParameter(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Halt once any sampled pairwise distance drops below this value.
    pub gamma: Option<f64>,
    /// Keep every `record_every`-th step; the final state is always kept.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_end: 10.0,
            mode: Mode::Global,
            seed: 0,
            gamma: None,
            record_every: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "record_every must be at least 1".into(),
            ));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

/// Starting point of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Global(DVector<f64>),
    Local {
        positions: Vec<Vector3<f64>>,
        rotations: Vec<Matrix3<f64>>,
    },
}

impl InitialState {
    pub fn mode(&self) -> Mode {
        match self {
            InitialState::Global(_) => Mode::Global,
            InitialState::Local { .. } => Mode::Local,
        }
    }

    pub fn stacked_positions(&self) -> DVector<f64> {
        match self {
            InitialState::Global(p) => p.clone(),
            InitialState::Local { positions, .. } => stack(positions),
        }
    }
}

fn stack(points: &[Vector3<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        3 * points.len(),
        points.iter().flat_map(|v| v.iter().copied()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleMetrics {
    /// `Σ_k ‖g_k - g_ref_k‖²`.
    pub bearing_error: f64,
    pub delta_norm: f64,
    /// `V = ‖δ‖² / 2`.
    pub lyapunov: f64,
    pub centroid_drift: f64,
    pub scale_drift: f64,
    pub min_pair_distance: f64,
    pub sync_error: Option<f64>,
    pub h_norm: Option<f64>,
    /// Largest `‖Q_iᵀ g_ij - g*_ij‖` over directed edges.
    pub body_bearing_error: Option<f64>,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalEvent {
    /// An edge became shorter than the separation threshold.
    EdgeCollapse {
        time: f64,
        step: usize,
        pair: (usize, usize),
    },
    /// A sampled pairwise distance fell below `gamma`.
    Proximity {
        time: f64,
        step: usize,
        pair: (usize, usize),
        distance: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub mode: Mode,
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    /// Empty in global mode.
    pub rotations: Vec<Vec<Matrix3<f64>>>,
    pub metrics: Vec<SampleMetrics>,
    /// Formation the metrics are measured against.
    pub p_star: DVector<f64>,
    /// Common orientation estimated from the final sample (local mode).
    pub q_star: Option<Matrix3<f64>>,
    /// Largest one-step increase of `V` over every integration step
    /// (global mode).
    pub max_v_increase: Option<f64>,
    pub steps: usize,
    pub event: Option<TerminalEvent>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn agent_count(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len() / self.dim)
    }

    pub fn final_metrics(&self) -> Option<&SampleMetrics> {
        self.metrics.last()
    }
}

/// Integrates the closed loop from `initial` with classical RK4.
///
/// A collapsed edge or a `gamma` violation ends the run early and is
/// recorded in [`SimulationTrace::event`].
pub fn integrate(
    initial: &InitialState,
    constraints: &BearingConstraints,
    graph: &Graph,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    cfg.validate()?;
    if initial.mode() != cfg.mode {
        return Err(Error::InvalidParameter(format!(
            "initial state is for {:?} mode but {:?} was requested",
            initial.mode(),
            cfg.mode
        )));
    }
    let d = constraints.dim();
    let n = graph.vertex_count();
    if constraints.edge_count() != graph.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.edge_count(),
            found: constraints.edge_count(),
        });
    }
    match initial {
        InitialState::Global(p0) => {
            if p0.len() != d * n {
                return Err(Error::DimensionMismatch {
                    expected: d * n,
                    found: p0.len(),
                });
            }
            if p0.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            run_global(p0, constraints, graph, cfg)
        }
        InitialState::Local {
            positions,
            rotations,
        } => {
            if d != 3 {
                return Err(Error::DimensionMismatch {
                    expected: 3,
                    found: d,
                });
            }
            if positions.len() != n || rotations.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: positions.len().min(rotations.len()),
                });
            }
            for r in rotations {
                control_local::Rotation::new(*r)?;
            }
            run_local(positions, rotations, constraints, graph, cfg)
        }
    }
}

fn edge_collapse(err: Error, step: usize, dt: f64) -> Result<TerminalEvent> {
    match err {
        Error::DegenerateEdge(i, j) => Ok(TerminalEvent::EdgeCollapse {
            time: step as f64 * dt,
            step,
            pair: (i, j),
        }),
        other => Err(other),
    }
}

fn proximity(
    p: &[f64],
    d: usize,
    gamma: Option<f64>,
    step: usize,
    dt: f64,
) -> Option<TerminalEvent> {
    let gamma = gamma?;
    let (dist, (i, j)) = geometry::min_pair_distance(p, d);
    (dist < gamma).then_some(TerminalEvent::Proximity {
        time: step as f64 * dt,
        step,
        pair: (i + 1, j + 1),
        distance: dist,
    })
}

fn run_global(
    p0: &DVector<f64>,
    constraints: &BearingConstraints,
    graph: &Graph,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    let d = constraints.dim();
    let len = p0.len();
    let target = compute_target(constraints, graph, p0, RANK_TOL)?;
    let p_star = target.p_star;
    let g_star = constraints.stacked().as_slice();
    let dt = cfg.dt;
    let steps = cfg.steps();

    let mut p = p0.as_slice().to_vec();
    let mut k = [
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    ];
    let mut stage = vec![0.0; len];
    let lyap = |x: &[f64]| {
        0.5 * x
            .iter()
            .zip(p_star.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut v_prev = lyap(&p);
    let mut max_v_increase = f64::NEG_INFINITY;

    let mut times = vec![0.0];
    let mut states = vec![p.clone()];
    let mut event = proximity(&p, d, cfg.gamma, 0, dt);
    let mut done = 0;
    if event.is_none() {
        for step in 1..=steps {
            let res = (|| -> Result<()> {
                control_velocity_into(graph, d, g_star, &p, &mut k[0])?;
                for (s, c) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
                    let (prev, next) = k.split_at_mut(s);
                    for i in 0..len {
                        stage[i] = p[i] + c * dt * prev[s - 1][i];
                    }
                    control_velocity_into(graph, d, g_star, &stage, &mut next[0])?;
                }
                Ok(())
            })();
            if let Err(e) = res {
                event = Some(edge_collapse(e, step - 1, dt)?);
                break;
            }
            for i in 0..len {
                p[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericFailure { step });
            }
            let v = lyap(&p);
            max_v_increase = max_v_increase.max(v - v_prev);
            v_prev = v;
            done = step;
            let last = step == steps;
            if step % cfg.record_every == 0 || last {
                times.push(step as f64 * dt);
                states.push(p.clone());
                event = proximity(&p, d, cfg.gamma, step, dt);
                if event.is_some() {
                    break;
                }
            }
        }
    }
    if let Some(TerminalEvent::EdgeCollapse { .. }) = event {
        // keep the last state reached even when it fell between samples
        if times.last() != Some(&(done as f64 * dt)) {
            times.push(done as f64 * dt);
            states.push(p.clone());
        }
    }

    let positions: Vec<DVector<f64>> = states.into_iter().map(DVector::from_vec).collect();
    let r_star = geometry::centered(&p_star, d);
    let c0 = geometry::centroid(p0, d);
    let s0 = geometry::scale(p0, d);
    let metrics = positions
        .iter()
        .map(|p| {
            let delta = p - &p_star;
            SampleMetrics {
                bearing_error: bearing_error(graph, d, p.as_slice(), g_star),
                delta_norm: delta.norm(),
                lyapunov: 0.5 * delta.norm_squared(),
                centroid_drift: (geometry::centroid(p, d) - &c0).norm(),
                scale_drift: (geometry::scale(p, d) - s0).abs(),
                min_pair_distance: geometry::min_pair_distance(p.as_slice(), d).0,
                sync_error: None,
                h_norm: None,
                body_bearing_error: None,
                theta: Some(angle_to_reflection(&delta, &r_star)),
            }
        })
        .collect();
    Ok(SimulationTrace {
        mode: Mode::Global,
        dim: d,
        times,
        positions,
        rotations: Vec::new(),
        metrics,
        p_star,
        q_star: None,
        max_v_increase: Some(if done == 0 { 0.0 } else { max_v_increase }),
        steps: done,
        event,
    })
}

/// `Σ_k ‖g_k(p) - g_ref_k‖²`, infinite if an edge has collapsed.
fn bearing_error(graph: &Graph, d: usize, p: &[f64], g_ref: &[f64]) -> f64 {
    match bearings_of(graph, d, p) {
        Ok(bs) => bs
            .bearings
            .iter()
            .zip(g_ref)
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
        Err(_) => f64::INFINITY,
    }
}

struct LocalScratch {
    v: Vec<Vector3<f64>>,
    w: Vec<Vector3<f64>>,
}

/// Global-frame position rates `Q_i v_i^b` and body angular rates.
fn local_rates(
    graph: &Graph,
    constraints: &BearingConstraints,
    positions: &[Vector3<f64>],
    rotations: &[Matrix3<f64>],
    scratch: &mut LocalScratch,
    p_dot: &mut [Vector3<f64>],
    w: &mut [Vector3<f64>],
) -> Result<()> {
    body_inputs_all(
        graph,
        constraints,
        positions,
        rotations,
        &mut scratch.v,
        &mut scratch.w,
    )?;
    for i in 0..positions.len() {
        p_dot[i] = rotations[i] * scratch.v[i];
        w[i] = scratch.w[i];
    }
    Ok(())
}

fn run_local(
    p0: &[Vector3<f64>],
    q0: &[Matrix3<f64>],
    constraints: &BearingConstraints,
    graph: &Graph,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    let n = p0.len();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let mut scratch = LocalScratch {
        v: vec![Vector3::zeros(); n],
        w: vec![Vector3::zeros(); n],
    };
    let mut pos = p0.to_vec();
    let mut rot = q0.to_vec();
    let mut kp = vec![vec![Vector3::zeros(); n]; 4];
    let mut kw = vec![vec![Vector3::zeros(); n]; 4];
    let mut sp = pos.clone();
    let mut sq = rot.clone();

    let mut times = vec![0.0];
    let mut pos_samples = vec![pos.clone()];
    let mut rot_samples = vec![rot.clone()];
    let mut event = proximity(stack(&pos).as_slice(), 3, cfg.gamma, 0, dt);
    let mut done = 0;
    if event.is_none() {
        for step in 1..=steps {
            let res = (|| -> Result<()> {
                local_rates(
                    graph,
                    constraints,
                    &pos,
                    &rot,
                    &mut scratch,
                    &mut kp[0],
                    &mut kw[0],
                )?;
                for (s, c) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
                    let (p_prev, p_next) = kp.split_at_mut(s);
                    let (w_prev, w_next) = kw.split_at_mut(s);
                    for i in 0..n {
                        sp[i] = pos[i] + p_prev[s - 1][i] * (c * dt);
                        sq[i] = rot[i] * so3_exp(&(w_prev[s - 1][i] * (c * dt))).matrix();
                    }
                    local_rates(
                        graph,
                        constraints,
                        &sp,
                        &sq,
                        &mut scratch,
                        &mut p_next[0],
                        &mut w_next[0],
                    )?;
                }
                Ok(())
            })();
            if let Err(e) = res {
                event = Some(edge_collapse(e, step - 1, dt)?);
                break;
            }
            for i in 0..n {
                pos[i] += (kp[0][i] + kp[1][i] * 2.0 + kp[2][i] * 2.0 + kp[3][i]) * (dt / 6.0);
                let w = kw[0][i] + kw[1][i] * 2.0 + kw[2][i] * 2.0 + kw[3][i];
                rot[i] = advance(&rot[i], &w, dt / 6.0);
            }
            let finite = pos.iter().all(|v| v.iter().all(|x| x.is_finite()))
                && rot.iter().all(|m| m.iter().all(|x| x.is_finite()));
            if !finite {
                return Err(Error::NumericFailure { step });
            }
            done = step;
            if step % cfg.record_every == 0 || step == steps {
                times.push(step as f64 * dt);
                pos_samples.push(pos.clone());
                rot_samples.push(rot.clone());
                event = proximity(stack(&pos).as_slice(), 3, cfg.gamma, step, dt);
                if event.is_some() {
                    break;
                }
            }
        }
    }
    if let Some(TerminalEvent::EdgeCollapse { .. }) = event {
        if times.last() != Some(&(done as f64 * dt)) {
            times.push(done as f64 * dt);
            pos_samples.push(pos.clone());
            rot_samples.push(rot.clone());
        }
    }

    let final_rot = rot_samples.last().expect("at least one sample");
    let q_star = mean_rotation(final_rot)
        .map(|r| *r.matrix())
        .unwrap_or(final_rot[0]);
    let reference = constraints.rotated(&q_star)?;
    let p_init = stack(p0);
    let p_star = compute_target(&reference, graph, &p_init, RANK_TOL)?.p_star;
    let c0 = geometry::centroid(&p_init, 3);
    let s0 = geometry::scale(&p_init, 3);
    let g_ref = reference.stacked().as_slice();

    let positions: Vec<DVector<f64>> = pos_samples.iter().map(|p| stack(p)).collect();
    let metrics = positions
        .iter()
        .zip(pos_samples.iter().zip(&rot_samples))
        .map(|(p, (pts, rots))| {
            let delta = p - &p_star;
            SampleMetrics {
                bearing_error: bearing_error(graph, 3, p.as_slice(), g_ref),
                delta_norm: delta.norm(),
                lyapunov: 0.5 * delta.norm_squared(),
                centroid_drift: (geometry::centroid(p, 3) - &c0).norm(),
                scale_drift: (geometry::scale(p, 3) - s0).abs(),
                min_pair_distance: geometry::min_pair_distance(p.as_slice(), 3).0,
                sync_error: Some(sync_error(rots)),
                h_norm: Some(
                    h_norm(graph, constraints, pts, rots, &q_star).unwrap_or(f64::INFINITY),
                ),
                body_bearing_error: Some(body_bearing_error(graph, constraints, pts, rots)),
                theta: None,
            }
        })
        .collect();
    Ok(SimulationTrace {
        mode: Mode::Local,
        dim: 3,
        times,
        positions,
        rotations: rot_samples,
        metrics,
        p_star,
        q_star: Some(q_star),
        max_v_increase: None,
        steps: done,
        event,
    })
}

/// `max ‖Q_iᵀ g_ij - g*_ij‖` over both directions of every edge.
pub fn body_bearing_error(
    graph: &Graph,
    constraints: &BearingConstraints,
    positions: &[Vector3<f64>],
    rotations: &[Matrix3<f64>],
) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, e) in graph.edges().iter().enumerate() {
        let v = positions[e.head] - positions[e.tail];
        let len = v.norm();
        if !(len > SEPARATION_EPS) {
            return f64::INFINITY;
        }
        let g = v / len;
        let target = Vector3::from_column_slice(constraints.bearing(k));
        worst = worst
            .max((rotations[e.tail].transpose() * g - target).norm())
            .max((rotations[e.head].transpose() * -g + target).norm());
    }
    worst
}

/// Thresholds used by [`compute_metrics`] to grade a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricTolerances {
    pub drift: f64,
    pub bearing_error: f64,
    pub sync_error: f64,
    pub h_norm: f64,
    pub v_slack: f64,
}

impl Default for MetricTolerances {
    fn default() -> Self {
        MetricTolerances {
            drift: 1e-6,
            bearing_error: 1e-8,
            sync_error: 1e-6,
            h_norm: 1e-6,
            v_slack: V_SLACK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremes {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub max: f64,
    pub min: f64,
}

impl Extremes {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut out: Option<Extremes> = None;
        for v in values {
            out = Some(match out {
                None => Extremes {
                    initial: v,
                    last: v,
                    max: v,
                    min: v,
                },
                Some(e) => Extremes {
                    initial: e.initial,
                    last: v,
                    max: e.max.max(v),
                    min: e.min.min(v),
                },
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub mode: Mode,
    pub samples: usize,
    pub steps: usize,
    pub t_final: f64,
    pub bearing_error: Extremes,
    pub delta_norm: Extremes,
    pub lyapunov: Extremes,
    pub centroid_drift: Extremes,
    pub scale_drift: Extremes,
    pub min_pair_distance: Extremes,
    pub sync_error: Option<Extremes>,
    pub h_norm: Option<Extremes>,
    pub body_bearing_error: Option<Extremes>,
    pub theta: Option<Extremes>,
    /// Whether the starting orientations admit a common frame they all sit
    /// within a quarter turn of (local mode only).
    pub assumption2: Option<SyncAssumption>,
    /// `V` never rose by more than the slack between consecutive steps
    /// (global mode) or samples (local mode).
    pub lyapunov_non_increasing: bool,
    pub max_lyapunov_increase: f64,
    pub event: Option<TerminalEvent>,
    pub tolerances: MetricTolerances,
    pub drift_ok: bool,
    pub converged: bool,
    pub passed: bool,
}

pub fn compute_metrics(trace: &SimulationTrace, tol: &MetricTolerances) -> Result<MetricsSummary> {
    if trace.is_empty() {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    let m = &trace.metrics;
    let ext = |f: fn(&SampleMetrics) -> f64| Extremes::of(m.iter().map(f)).expect("non-empty");
    let opt = |f: fn(&SampleMetrics) -> Option<f64>| {
        if m.iter().all(|s| f(s).is_some()) {
            Extremes::of(m.iter().filter_map(f))
        } else {
            None
        }
    };
    let max_increase = match trace.max_v_increase {
        Some(v) => v,
        None => m
            .windows(2)
            .map(|w| w[1].lyapunov - w[0].lyapunov)
            .fold(0.0, f64::max),
    };
    let centroid = ext(|s| s.centroid_drift);
    let scale = ext(|s| s.scale_drift);
    let bearing = ext(|s| s.bearing_error);
    let sync = opt(|s| s.sync_error);
    let h = opt(|s| s.h_norm);
    let drift_ok = centroid.max <= tol.drift && scale.max <= tol.drift;
    let monotone = max_increase <= tol.v_slack;
    let converged = bearing.last <= tol.bearing_error
        && sync.is_none_or(|e| e.last <= tol.sync_error)
        && h.is_none_or(|e| e.last <= tol.h_norm);
    let monotone_required = trace.mode == Mode::Global;
    let assumption2 = trace.rotations.first().map(|qs| {
        let qs: Vec<Rotation> = qs
            .iter()
            .map(|q| Rotation::new(*q))
            .collect::<Result<_>>()?;
        Ok::<_, Error>(check_sync_assumption(&qs))
    });
    Ok(MetricsSummary {
        mode: trace.mode,
        samples: trace.len(),
        steps: trace.steps,
        t_final: *trace.times.last().expect("non-empty"),
        bearing_error: bearing,
        delta_norm: ext(|s| s.delta_norm),
        lyapunov: ext(|s| s.lyapunov),
        centroid_drift: centroid,
        scale_drift: scale,
        min_pair_distance: ext(|s| s.min_pair_distance),
        sync_error: sync,
        h_norm: h,
        body_bearing_error: opt(|s| s.body_bearing_error),
        theta: opt(|s| s.theta),
        assumption2: assumption2.transpose()?,
        lyapunov_non_increasing: monotone,
        max_lyapunov_increase: max_increase,
        event: trace.event.clone(),
        tolerances: *tol,
        drift_ok,
        converged,
        passed: drift_ok && converged && (monotone || !monotone_required) && trace.event.is_none(),
    })
}

/// One sampled pair closer than the threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollisionEvent {
    pub time: f64,
    /// 1-based agent labels.
    pub pair: (usize, usize),
    pub distance: f64,
}

/// Every sampled pair with distance below `gamma`.
pub fn collision_events(trace: &SimulationTrace, gamma: f64) -> Vec<CollisionEvent> {
    let d = trace.dim;
    let mut out = Vec::new();
    for (t, p) in trace.times.iter().zip(&trace.positions) {
        let n = p.len() / d;
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = geometry::distance(p.as_slice(), d, i, j);
                if dist < gamma {
                    out.push(CollisionEvent {
                        time: *t,
                        pair: (i + 1, j + 1),
                        distance: dist,
                    });
                }
            }
        }
    }
    out
}

/// Seeded generator used for every random initial condition.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform in `[-half_width, half_width]^d`, stacked.
pub fn random_positions<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    d: usize,
    half_width: f64,
) -> DVector<f64> {
    DVector::from_iterator(
        d * n,
        (0..d * n).map(|_| rng.gen_range(-half_width..=half_width)),
    )
}

/// `n` rotations with uniform random axes and angles in `[0, max_angle]`.
pub fn random_rotations<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    max_angle: f64,
) -> Vec<Matrix3<f64>> {
    (0..n)
        .map(|_| *control_local::random_rotation(rng, max_angle).matrix())
        .collect()
}

/// Splits stacked `R³` positions into points.
pub fn unstack3(p: &DVector<f64>) -> Vec<Vector3<f64>> {
    p.as_slice()
        .chunks(3)
        .map(Vector3::from_column_slice)
        .collect()
}

/// Runs independent simulations in parallel; results keep input order.
pub fn run_batch(
    initials: &[InitialState],
    constraints: &BearingConstraints,
    graph: &Graph,
    configs: &[SimConfig],
) -> Vec<Result<SimulationTrace>> {
    initials
        .par_iter()
        .zip(configs.par_iter())
        .map(|(init, cfg)| integrate(init, constraints, graph, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_agents() -> (Graph, BearingConstraints) {
        let g = Graph::new(2, &[(1, 2)]).unwrap();
        let c = BearingConstraints::new(&g, 2, DVector::from_vec(vec![1.0, 0.0])).unwrap();
        (g, c)
    }

    fn cfg(t_end: f64) -> SimConfig {
        SimConfig {
            t_end,
            ..SimConfig::default()
        }
    }

    #[test]
    fn equilibrium_is_stationary() {
        let (g, c) = two_agents();
        let p = DVector::from_vec(vec![-1.0, 0.0, 1.0, 0.0]);
        let trace = integrate(&InitialState::Global(p.clone()), &c, &g, &cfg(1.0)).unwrap();
        assert_eq!(trace.len(), 1001);
        for (x, m) in trace.positions.iter().zip(&trace.metrics) {
            assert!((x - &p).amax() <= 1e-9);
            assert!(m.bearing_error <= 1e-12);
        }
        let summary = compute_metrics(&trace, &MetricTolerances::default()).unwrap();
        assert!(summary.centroid_drift.max <= 1e-12 && summary.scale_drift.max <= 1e-12);
    }

    #[test]
    fn two_agents_keep_their_distance() {
        let (g, c) = two_agents();
        let p = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let trace = integrate(&InitialState::Global(p), &c, &g, &cfg(15.0)).unwrap();
        for x in &trace.positions {
            assert!((geometry::distance(x.as_slice(), 2, 0, 1) - 2.0).abs() < 1e-6);
        }
        let last = trace.final_metrics().unwrap();
        assert!(last.bearing_error <= 1e-8, "{}", last.bearing_error);
        let s = compute_metrics(&trace, &MetricTolerances::default()).unwrap();
        assert!(s.lyapunov_non_increasing);
        assert_eq!(s.assumption2, None);
    }

    #[test]
    fn record_every_keeps_final_sample() {
        let (g, c) = two_agents();
        let p = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let config = SimConfig {
            t_end: 0.105,
            record_every: 10,
            ..SimConfig::default()
        };
        let trace = integrate(&InitialState::Global(p), &c, &g, &config).unwrap();
        assert_eq!(trace.len(), 12);
        assert!((trace.times.last().unwrap() - 0.105).abs() < 1e-15);
        assert!(trace.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gamma_zero_reports_nothing() {
        let (g, c) = two_agents();
        let p = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let trace = integrate(&InitialState::Global(p), &c, &g, &cfg(0.5)).unwrap();
        assert!(collision_events(&trace, 0.0).is_empty());
        assert!(!collision_events(&trace, 10.0).is_empty());
    }

    #[test]
    fn gamma_halts_the_run() {
        let (g, c) = two_agents();
        let p = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let config = SimConfig {
            gamma: Some(3.0),
            ..cfg(1.0)
        };
        let trace = integrate(&InitialState::Global(p), &c, &g, &config).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(matches!(
            trace.event,
            Some(TerminalEvent::Proximity { pair: (1, 2), .. })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (g, c) = two_agents();
        let p = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        for bad in [
            SimConfig {
                dt: 0.0,
                ..cfg(1.0)
            },
            SimConfig {
                t_end: 1e-4,
                ..cfg(1.0)
            },
            SimConfig {
                record_every: 0,
                ..cfg(1.0)
            },
        ] {
            assert!(integrate(&InitialState::Global(p.clone()), &c, &g, &bad).is_err());
        }
    }

    #[test]
    fn local_rotations_stay_orthonormal() {
        let g = Graph::new(2, &[(1, 2)]).unwrap();
        let c = BearingConstraints::new(&g, 3, DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let mut rng = rng_from_seed(3);
        let init = InitialState::Local {
            positions: vec![Vector3::zeros(), Vector3::new(0.0, 1.0, 0.5)],
            rotations: random_rotations(&mut rng, 2, 1.0),
        };
        let config = SimConfig {
            mode: Mode::Local,
            ..cfg(2.0)
        };
        let trace = integrate(&init, &c, &g, &config).unwrap();
        for rots in &trace.rotations {
            for r in rots {
                assert!((r.transpose() * r - Matrix3::identity()).norm() <= 1e-9);
            }
        }
        // every start lies within one radian of the identity
        let s = compute_metrics(&trace, &MetricTolerances::default()).unwrap();
        assert_eq!(s.assumption2, Some(SyncAssumption::Satisfied));
    }
}
