//! Fixed-step integration of the gradient-play and anchored dynamics, the
//! consensus/orthogonal state decomposition, and the discrete recurrences
//! the anchored Euler step reduces to.

use crate::diagnostics::DiagnosticSample;
use crate::game_model::{Game, GameError};
use crate::graph::{CommGraph, GraphError};
use crate::operator_analysis::{eval_game_resolvent, AnalysisError, OperatorConstants};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("gain {name} must be positive, got {value}")]
    BadGain { name: &'static str, value: f64 },
    #[error("state length {got} does not match expected {expected} ({context})")]
    StateDimension { expected: usize, got: usize, context: &'static str },
    #[error("unknown mode or dynamics name `{0}`")]
    UnknownMode(String),
}

/// Full-information state: joint action and anchor, both n-dimensional.
#[derive(Debug, Clone)]
pub struct FullState {
    pub x: DVector<f64>,
    pub r: DVector<f64>,
    pub t: f64,
}

/// Partial-information state: stacked estimates and anchors, both of
/// length N*n (agent i's estimate of the whole profile in block i).
#[derive(Debug, Clone)]
pub struct DistState {
    pub x: DVector<f64>,
    pub r: DVector<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoMode {
    Full,
    /// Partial decision information: agents exchange estimates over a graph.
    #[serde(alias = "partial")]
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    #[serde(alias = "gradient")]
    GradientPlay,
    #[serde(alias = "anchor")]
    HeavyAnchor,
}

impl fmt::Display for InfoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Distributed => "distributed",
        })
    }
}

impl FromStr for InfoMode {
    type Err = DynError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "distributed" | "partial" => Ok(Self::Distributed),
            other => Err(DynError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GradientPlay => "gradient-play",
            Self::HeavyAnchor => "heavy-anchor",
        })
    }
}

impl FromStr for DynamicsKind {
    type Err = DynError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gradient-play" | "gradient" => Ok(Self::GradientPlay),
            "heavy-anchor" | "anchor" => Ok(Self::HeavyAnchor),
            other => Err(DynError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorMeta {
    pub method: String,
    pub h: f64,
    pub t_final: f64,
    pub stride: usize,
    pub seed: Option<u64>,
    /// Set when a non-finite state aborted the run; the trajectory then
    /// ends at the last finite sample.
    pub diverged_at: Option<f64>,
    pub wall_time: f64,
}

/// Sampled trajectory of one run. For gradient play the anchor entries are
/// empty vectors; in distributed mode `x`/`r` hold the stacked estimates.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: InfoMode,
    pub dynamics: DynamicsKind,
    /// Per-agent action dimensions, needed to select own actions out of
    /// stacked estimates.
    pub agent_dims: Vec<usize>,
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub r: Vec<DVector<f64>>,
    pub diagnostics: Vec<DiagnosticSample>,
    pub meta: IntegratorMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.agent_dims.len()
    }

    pub fn action_dim(&self) -> usize {
        self.agent_dims.iter().sum()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial sample")
    }

    pub fn final_diagnostic(&self) -> &DiagnosticSample {
        self.diagnostics.last().expect("trajectory has at least the initial sample")
    }

    /// Action profile actually played at sample i: the state itself in full
    /// information, each agent's own block of its estimate otherwise.
    pub fn selected_profile(&self, i: usize) -> DVector<f64> {
        match self.mode {
            InfoMode::Full => self.x[i].clone(),
            InfoMode::Distributed => {
                let n = self.action_dim();
                let mut out = DVector::zeros(n);
                let mut off = 0;
                for (agent, &width) in self.agent_dims.iter().enumerate() {
                    for k in 0..width {
                        out[off + k] = self.x[i][agent * n + off + k];
                    }
                    off += width;
                }
                out
            }
        }
    }
}

/// Sampling and provenance options shared by all simulators.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Record every stride-th step; None picks a stride capping the stored
    /// samples near 2000.
    pub stride: Option<usize>,
    /// Provenance only; the integrators themselves are deterministic.
    pub seed: Option<u64>,
}

const TARGET_SAMPLES: usize = 2000;

fn check_positive(name: &'static str, value: f64) -> Result<(), DynError> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(DynError::BadGain { name, value });
    }
    Ok(())
}

fn check_step_and_horizon(t_final: f64, h: f64) -> Result<(), DynError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DynError::BadStep(h));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(DynError::BadHorizon(t_final));
    }
    Ok(())
}

fn check_dim(v: &DVector<f64>, expected: usize, context: &'static str) -> Result<(), DynError> {
    if v.len() != expected {
        return Err(DynError::StateDimension { expected, got: v.len(), context });
    }
    Ok(())
}

/// Stiffness-tied default step: the fastest modes scale with the Lipschitz
/// constant, the gains, and c * lambda_max(L) in partial information; one
/// over their sum keeps classical RK4 well inside its stability region.
pub fn default_step(l_f: f64, alpha: f64, beta: f64, c_lambda_max: f64) -> f64 {
    (1.0 / (l_f + alpha + beta + c_lambda_max)).min(0.01)
}

fn steps_for(t_final: f64, h: f64) -> usize {
    let mut n = (t_final / h).ceil() as usize;
    if n == 0 {
        n = 1;
    }
    // a near-integer ratio would leave a vanishing final step
    if n >= 2 && t_final - ((n - 1) as f64) * h <= 1e-12 * t_final.max(1.0) {
        n -= 1;
    }
    n
}

/// Entry magnitude past which a run counts as diverged. Keeping a margin
/// below f64 overflow means metrics of the last accepted state (norms,
/// pseudo-gradients) still evaluate to finite numbers.
const DIVERGENCE_LIMIT: f64 = 1e100;

fn within_bounds(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite() && x.abs() <= DIVERGENCE_LIMIT)
}

struct Rk4Outcome {
    diverged_at: Option<f64>,
}

/// Classical RK4 on the coupled pair (x, r) with preallocated stages.
/// `record` is invoked at t = 0, at every stride-th accepted step, and at
/// the final accepted step. On a non-finite or overflowing state the last
/// in-bounds sample is recorded and integration stops.
fn integrate_pair<F, R>(
    x0: &DVector<f64>,
    r0: &DVector<f64>,
    t_final: f64,
    h: f64,
    stride: usize,
    mut rhs: F,
    mut record: R,
) -> Rk4Outcome
where
    F: FnMut(&DVector<f64>, &DVector<f64>, &mut DVector<f64>, &mut DVector<f64>),
    R: FnMut(f64, &DVector<f64>, &DVector<f64>),
{
    let n_steps = steps_for(t_final, h);
    let (mut x, mut r) = (x0.clone(), r0.clone());
    let (mut px, mut pr) = (x.clone(), r.clone());
    let dim_x = x.len();
    let dim_r = r.len();
    let mut k1x = DVector::zeros(dim_x);
    let mut k2x = DVector::zeros(dim_x);
    let mut k3x = DVector::zeros(dim_x);
    let mut k4x = DVector::zeros(dim_x);
    let mut k1r = DVector::zeros(dim_r);
    let mut k2r = DVector::zeros(dim_r);
    let mut k3r = DVector::zeros(dim_r);
    let mut k4r = DVector::zeros(dim_r);
    let mut tx = DVector::zeros(dim_x);
    let mut tr = DVector::zeros(dim_r);

    record(0.0, &x, &r);
    let mut last_recorded = 0usize;
    for k in 0..n_steps {
        let t_prev = (k as f64) * h;
        let hk = if k + 1 == n_steps { t_final - t_prev } else { h };
        px.copy_from(&x);
        pr.copy_from(&r);

        rhs(&x, &r, &mut k1x, &mut k1r);
        tx.copy_from(&x);
        tx.axpy(hk / 2.0, &k1x, 1.0);
        tr.copy_from(&r);
        tr.axpy(hk / 2.0, &k1r, 1.0);
        rhs(&tx, &tr, &mut k2x, &mut k2r);
        tx.copy_from(&x);
        tx.axpy(hk / 2.0, &k2x, 1.0);
        tr.copy_from(&r);
        tr.axpy(hk / 2.0, &k2r, 1.0);
        rhs(&tx, &tr, &mut k3x, &mut k3r);
        tx.copy_from(&x);
        tx.axpy(hk, &k3x, 1.0);
        tr.copy_from(&r);
        tr.axpy(hk, &k3r, 1.0);
        rhs(&tx, &tr, &mut k4x, &mut k4r);
        x.axpy(hk / 6.0, &k1x, 1.0);
        x.axpy(hk / 3.0, &k2x, 1.0);
        x.axpy(hk / 3.0, &k3x, 1.0);
        x.axpy(hk / 6.0, &k4x, 1.0);
        r.axpy(hk / 6.0, &k1r, 1.0);
        r.axpy(hk / 3.0, &k2r, 1.0);
        r.axpy(hk / 3.0, &k3r, 1.0);
        r.axpy(hk / 6.0, &k4r, 1.0);

        let t = if k + 1 == n_steps { t_final } else { t_prev + h };
        if !within_bounds(&x) || !within_bounds(&r) {
            if last_recorded != k {
                record(t_prev, &px, &pr);
            }
            return Rk4Outcome { diverged_at: Some(t) };
        }
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            record(t, &x, &r);
            last_recorded = k + 1;
        }
    }
    Rk4Outcome { diverged_at: None }
}

fn resolve_stride(opts: &SimOptions, n_steps: usize) -> usize {
    match opts.stride {
        Some(s) => s.max(1),
        None => (n_steps / TARGET_SAMPLES).max(1),
    }
}

/// Gradient play: x' = -F(x). The anchor slots of the trajectory stay
/// empty.
pub fn simulate_gradient_play(
    game: &Game,
    x0: &DVector<f64>,
    t_final: f64,
    h: f64,
    opts: &SimOptions,
) -> Result<Trajectory, DynError> {
    check_step_and_horizon(t_final, h)?;
    let n = game.total_dim();
    check_dim(x0, n, "gradient play initial action")?;
    let started = Instant::now();
    let stride = resolve_stride(opts, steps_for(t_final, h));

    let mut scratch = vec![0.0; n];
    let rhs = |x: &DVector<f64>, _r: &DVector<f64>, dx: &mut DVector<f64>, _dr: &mut DVector<f64>| {
        game.eval_pseudo_gradient_into(x.as_slice(), dx.as_mut_slice());
        dx.neg_mut();
    };

    let mut times = Vec::new();
    let mut xs = Vec::new();
    let mut rs = Vec::new();
    let mut diags = Vec::new();
    let r0 = DVector::zeros(0);
    let outcome = integrate_pair(x0, &r0, t_final, h, stride, rhs, |t, x, r| {
        game.eval_pseudo_gradient_into(x.as_slice(), &mut scratch);
        let res = scratch.iter().map(|v| v * v).sum::<f64>().sqrt();
        times.push(t);
        xs.push(x.clone());
        rs.push(r.clone());
        diags.push(DiagnosticSample { t, ne_residual: res, consensus_error: 0.0, lyapunov: None });
    });

    Ok(Trajectory {
        mode: InfoMode::Full,
        dynamics: DynamicsKind::GradientPlay,
        agent_dims: game.dims().to_vec(),
        times,
        x: xs,
        r: rs,
        diagnostics: diags,
        meta: IntegratorMeta {
            method: "rk4".to_string(),
            h,
            t_final,
            stride,
            seed: opts.seed,
            diverged_at: outcome.diverged_at,
            wall_time: started.elapsed().as_secs_f64(),
        },
    })
}

/// Anchored dynamics with full information:
/// x' = -F(x) - beta (x - r), r' = alpha (x - r).
pub fn simulate_heavy_anchor_full(
    game: &Game,
    x0: &DVector<f64>,
    r0: &DVector<f64>,
    alpha: f64,
    beta: f64,
    t_final: f64,
    h: f64,
    opts: &SimOptions,
) -> Result<Trajectory, DynError> {
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    check_step_and_horizon(t_final, h)?;
    let n = game.total_dim();
    check_dim(x0, n, "anchored initial action")?;
    check_dim(r0, n, "anchored initial anchor")?;
    let started = Instant::now();
    let stride = resolve_stride(opts, steps_for(t_final, h));

    let rhs = |x: &DVector<f64>, r: &DVector<f64>, dx: &mut DVector<f64>, dr: &mut DVector<f64>| {
        game.eval_pseudo_gradient_into(x.as_slice(), dx.as_mut_slice());
        let (xs, rs) = (x.as_slice(), r.as_slice());
        let (dxs, drs) = (dx.as_mut_slice(), dr.as_mut_slice());
        for i in 0..xs.len() {
            let diff = xs[i] - rs[i];
            dxs[i] = -dxs[i] - beta * diff;
            drs[i] = alpha * diff;
        }
    };

    let mut scratch = vec![0.0; n];
    let mut times = Vec::new();
    let mut xs = Vec::new();
    let mut rs = Vec::new();
    let mut diags = Vec::new();
    let outcome = integrate_pair(x0, r0, t_final, h, stride, rhs, |t, x, r| {
        game.eval_pseudo_gradient_into(x.as_slice(), &mut scratch);
        let res = scratch.iter().map(|v| v * v).sum::<f64>().sqrt();
        times.push(t);
        xs.push(x.clone());
        rs.push(r.clone());
        diags.push(DiagnosticSample { t, ne_residual: res, consensus_error: 0.0, lyapunov: None });
    });

    Ok(Trajectory {
        mode: InfoMode::Full,
        dynamics: DynamicsKind::HeavyAnchor,
        agent_dims: game.dims().to_vec(),
        times,
        x: xs,
        r: rs,
        diagnostics: diags,
        meta: IntegratorMeta {
            method: "rk4".to_string(),
            h,
            t_final,
            stride,
            seed: opts.seed,
            diverged_at: outcome.diverged_at,
            wall_time: started.elapsed().as_secs_f64(),
        },
    })
}

/// Anchored dynamics with partial information over a communication graph:
/// x' = -R^T F(x) - beta (x - r) - c (L (x) I) x, r' = alpha (x - r),
/// where x and r stack every agent's estimate of the whole profile.
#[allow(clippy::too_many_arguments)]
pub fn simulate_heavy_anchor_distributed(
    game: &Game,
    graph: &CommGraph,
    x0: &DVector<f64>,
    r0: &DVector<f64>,
    alpha: f64,
    beta: f64,
    c: f64,
    t_final: f64,
    h: f64,
    opts: &SimOptions,
) -> Result<Trajectory, DynError> {
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    check_positive("c", c)?;
    check_step_and_horizon(t_final, h)?;
    let n = game.total_dim();
    let n_agents = game.n_agents();
    if graph.n_nodes() != n_agents {
        return Err(DynError::StateDimension {
            expected: n_agents,
            got: graph.n_nodes(),
            context: "graph nodes must match the number of agents",
        });
    }
    // connectivity gates the consensus coupling; a split graph cannot reach
    // agreement no matter the gain
    graph.lambda2()?;
    let dim = n_agents * n;
    check_dim(x0, dim, "stacked initial estimates")?;
    check_dim(r0, dim, "stacked initial anchors")?;
    let started = Instant::now();
    let stride = resolve_stride(opts, steps_for(t_final, h));

    let lifted = graph.lift_laplacian(n);
    let dims: Vec<usize> = game.dims().to_vec();
    let offsets: Vec<usize> = (0..n_agents).map(|i| game.offset(i)).collect();

    let mut fx = vec![0.0; n];
    let rhs = move |x: &DVector<f64>, r: &DVector<f64>, dx: &mut DVector<f64>, dr: &mut DVector<f64>| {
        game.eval_extended_pseudo_gradient_into(x.as_slice(), &mut fx);
        lifted.apply(x.as_slice(), dx.as_mut_slice());
        let (xs, rs) = (x.as_slice(), r.as_slice());
        let (dxs, drs) = (dx.as_mut_slice(), dr.as_mut_slice());
        for i in 0..dim {
            let diff = xs[i] - rs[i];
            dxs[i] = -beta * diff - c * dxs[i];
            drs[i] = alpha * diff;
        }
        for (agent, (&off, &width)) in offsets.iter().zip(&dims).enumerate() {
            let base = agent * n + off;
            for k in 0..width {
                dxs[base + k] -= fx[off + k];
            }
        }
    };

    let selection = game.selection();
    let mut own = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut times = Vec::new();
    let mut xs_out = Vec::new();
    let mut rs_out = Vec::new();
    let mut diags = Vec::new();
    let outcome = integrate_pair(x0, r0, t_final, h, stride, rhs, |t, x, r| {
        selection.select(x.as_slice(), &mut own);
        game.eval_pseudo_gradient_into(&own, &mut grad);
        let res = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        mean.fill(0.0);
        let xs = x.as_slice();
        for agent in 0..n_agents {
            for j in 0..n {
                mean[j] += xs[agent * n + j];
            }
        }
        let inv = 1.0 / n_agents as f64;
        for m in mean.iter_mut() {
            *m *= inv;
        }
        let mut cons = 0.0;
        for agent in 0..n_agents {
            for j in 0..n {
                let d = xs[agent * n + j] - mean[j];
                cons += d * d;
            }
        }
        times.push(t);
        xs_out.push(x.clone());
        rs_out.push(r.clone());
        diags.push(DiagnosticSample {
            t,
            ne_residual: res,
            consensus_error: cons.sqrt(),
            lyapunov: None,
        });
    });

    Ok(Trajectory {
        mode: InfoMode::Distributed,
        dynamics: DynamicsKind::HeavyAnchor,
        agent_dims: game.dims().to_vec(),
        times,
        x: xs_out,
        r: rs_out,
        diagnostics: diags,
        meta: IntegratorMeta {
            method: "rk4".to_string(),
            h,
            t_final,
            stride,
            seed: opts.seed,
            diverged_at: outcome.diverged_at,
            wall_time: started.elapsed().as_secs_f64(),
        },
    })
}

/// Consensus mean and orthogonal residual of a stacked estimate vector.
pub fn consensus_split(v: &DVector<f64>, n_agents: usize) -> (DVector<f64>, DVector<f64>) {
    assert!(n_agents >= 1 && v.len() % n_agents == 0, "stacked length must split evenly");
    let n = v.len() / n_agents;
    let mut mean = DVector::zeros(n);
    for agent in 0..n_agents {
        for j in 0..n {
            mean[j] += v[agent * n + j];
        }
    }
    mean /= n_agents as f64;
    let mut perp = v.clone();
    for agent in 0..n_agents {
        for j in 0..n {
            perp[agent * n + j] -= mean[j];
        }
    }
    (mean, perp)
}

/// Consensus/orthogonal decomposition of a distributed state, including the
/// transformed coordinate z = mean(x) - J_{lambda F}(mean(r)) at
/// lambda = 1/(beta N). Lifted norms relate to the mean-level fields by
/// ||1_N (x) v|| = sqrt(N) ||v||.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub mean_x: DVector<f64>,
    pub mean_r: DVector<f64>,
    pub x_perp: DVector<f64>,
    pub r_perp: DVector<f64>,
    pub z_par: DVector<f64>,
}

impl Decomposition {
    /// 1_N (x) mean, for reconstruction checks.
    pub fn lift(mean: &DVector<f64>, n_agents: usize) -> DVector<f64> {
        let n = mean.len();
        let mut out = DVector::zeros(n_agents * n);
        for agent in 0..n_agents {
            for j in 0..n {
                out[agent * n + j] = mean[j];
            }
        }
        out
    }
}

pub fn decompose(
    state: &DistState,
    game: &Game,
    constants: &OperatorConstants,
    beta: f64,
) -> Result<Decomposition, DynError> {
    check_positive("beta", beta)?;
    let n_agents = game.n_agents();
    let dim = n_agents * game.total_dim();
    check_dim(&state.x, dim, "stacked estimates")?;
    check_dim(&state.r, dim, "stacked anchors")?;
    let (mean_x, x_perp) = consensus_split(&state.x, n_agents);
    let (mean_r, r_perp) = consensus_split(&state.r, n_agents);
    let lambda = 1.0 / (beta * n_agents as f64);
    let resolved = eval_game_resolvent(game, constants, lambda, &mean_r)?;
    let z_par = &mean_x - &resolved;
    Ok(Decomposition { mean_x, mean_r, x_perp, r_perp, z_par })
}

/// One explicit Euler step of the anchored dynamics:
/// x+ = x - s F(x) - s beta (x - r), r+ = r + s alpha (x - r).
pub fn discrete_step(
    game: &Game,
    x: &DVector<f64>,
    r: &DVector<f64>,
    alpha: f64,
    beta: f64,
    s: f64,
) -> Result<(DVector<f64>, DVector<f64>), DynError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(DynError::BadStep(s));
    }
    let n = game.total_dim();
    check_dim(x, n, "discrete step action")?;
    check_dim(r, n, "discrete step anchor")?;
    let f = game.eval_pseudo_gradient(x);
    let mut x1 = x.clone();
    x1.axpy(-s, &f, 1.0);
    let mut r1 = r.clone();
    for i in 0..n {
        let diff = x[i] - r[i];
        x1[i] -= s * beta * diff;
        r1[i] += s * alpha * diff;
    }
    Ok((x1, r1))
}

/// Optimistic gradient step x+ = x - step (2 g(x) - g(x_prev)). The
/// anchored Euler step at alpha = beta = 1/(2s) reproduces this recurrence
/// with step = s/2 once the anchor starts at r0 = x0 + s g(x0).
pub fn ogda_step(
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    step: f64,
) -> DVector<f64> {
    let mut out = x.clone();
    out.axpy(-2.0 * step, &grad(x), 1.0);
    out.axpy(step, &grad(x_prev), 1.0);
    out
}

/// Heavy-ball step x+ = x - step (g(x) + beta (x - x_prev)); the anchored
/// recurrence reduces to it at alpha = 1/s with negative beta.
pub fn heavy_ball_step(
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    step: f64,
    beta: f64,
) -> DVector<f64> {
    let mut out = x.clone();
    out.axpy(-step, &grad(x), 1.0);
    out.axpy(-step * beta, &(x - x_prev), 1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{build_benchmark, Benchmark, QuadraticGameSpec};
    use crate::operator_analysis::{game_constants, SampleBox};
    use crate::param_synth::{synth_quadratic_full, GainChoice};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scalar_flow_game() -> Game {
        // single agent, F(x) = x
        QuadraticGameSpec { dims: vec![1], a: vec![1.0], b: vec![0.0] }
            .into_game("scalar-flow")
            .unwrap()
    }

    fn offset_game() -> Game {
        // two agents with a nonzero equilibrium
        QuadraticGameSpec { dims: vec![1, 1], a: vec![2.0, 1.0, 0.0, 3.0], b: vec![1.0, 1.0] }
            .into_game("offset")
            .unwrap()
    }

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn gradient_play_conserves_harmonic_norm() {
        let game = build_benchmark(Benchmark::Harmonic);
        let traj = simulate_gradient_play(
            &game,
            &vec2(1.0, 0.0),
            20.0,
            0.01,
            &SimOptions { stride: Some(1), seed: None },
        )
        .unwrap();
        for (i, x) in traj.x.iter().enumerate() {
            assert_abs_diff_eq!(x.norm(), 1.0, epsilon = 1e-6);
            assert!(traj.diagnostics[i].consensus_error == 0.0);
        }
        assert!(traj.meta.diverged_at.is_none());
        for w in traj.times.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn gradient_play_matches_exponential_decay() {
        let game = scalar_flow_game();
        let x0 = DVector::from_vec(vec![1.0]);
        let traj = simulate_gradient_play(&game, &x0, 5.0, 1e-3, &SimOptions::default()).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.x) {
            assert_abs_diff_eq!(x[0], (-t).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn simulators_hold_their_equilibria() {
        let game = offset_game();
        let xs = game.solve_quadratic_ne().unwrap();
        let traj = simulate_heavy_anchor_full(
            &game,
            &xs,
            &xs,
            0.7,
            1.3,
            2.0,
            0.01,
            &SimOptions { stride: Some(1), seed: None },
        )
        .unwrap();
        for x in &traj.x {
            assert!((x - &xs).norm() <= 1e-10 * 2.0, "drifted to {:?}", x);
        }

        let sine = build_benchmark(Benchmark::Sine);
        let dim = sine.n_agents() * sine.total_dim();
        let zero = DVector::zeros(dim);
        let graph = CommGraph::ring(10).unwrap();
        let traj = simulate_heavy_anchor_distributed(
            &sine,
            &graph,
            &zero,
            &zero,
            0.05,
            0.25,
            10.0,
            1.0,
            1e-3,
            &SimOptions::default(),
        )
        .unwrap();
        for x in &traj.x {
            assert!(x.norm() <= 1e-10, "distributed equilibrium drifted");
        }
    }

    #[test]
    fn rk4_halving_shows_fourth_order() {
        let game = build_benchmark(Benchmark::Harmonic);
        let run = |h: f64| {
            simulate_heavy_anchor_full(
                &game,
                &vec2(1.0, 0.0),
                &vec2(0.0, 0.0),
                1.0,
                1.0,
                2.0,
                h,
                &SimOptions { stride: Some(usize::MAX), seed: None },
            )
            .unwrap()
            .x
            .last()
            .unwrap()
            .clone()
        };
        let reference = run(2.0 / 3200.0);
        let e1 = (run(2.0 / 100.0) - &reference).norm();
        let e2 = (run(2.0 / 200.0) - &reference).norm();
        let ratio = e1 / e2;
        assert!((12.0..22.0).contains(&ratio), "order ratio {ratio}");
    }

    #[test]
    fn anchored_harmonic_norm_at_t100_misses_threshold_from_matched_start() {
        // with x0 = r0 = (1,0) the norm at t = 100 sits just above 1e-6 and
        // first crosses it near t = 104
        let game = build_benchmark(Benchmark::Harmonic);
        let traj = simulate_heavy_anchor_full(
            &game,
            &vec2(1.0, 0.0),
            &vec2(1.0, 0.0),
            1.0,
            1.0,
            110.0,
            0.01,
            &SimOptions { stride: Some(1), seed: None },
        )
        .unwrap();
        let mut first_cross = None;
        for (t, x) in traj.times.iter().zip(&traj.x) {
            let norm = x.norm();
            if *t <= 100.0 + 1e-9 {
                assert!(norm > 1e-6, "norm {norm} at t={t}");
                if (*t - 100.0).abs() < 1e-9 {
                    assert_abs_diff_eq!(norm, 1.694e-6, epsilon = 1e-8);
                }
            }
            if first_cross.is_none() && norm <= 1e-6 {
                first_cross = Some(*t);
            }
        }
        let cross = first_cross.expect("norm crosses 1e-6 shortly after t=100");
        assert!((103.0..105.0).contains(&cross), "first crossing at {cross}");
    }

    #[test]
    fn anchored_harmonic_converges_from_resting_anchor() {
        let game = build_benchmark(Benchmark::Harmonic);
        let traj = simulate_heavy_anchor_full(
            &game,
            &vec2(1.0, 0.0),
            &vec2(0.0, 0.0),
            1.0,
            1.0,
            100.0,
            0.01,
            &SimOptions::default(),
        )
        .unwrap();
        let final_norm = traj.x.last().unwrap().norm();
        assert!(final_norm <= 1e-6, "final norm {final_norm}");
        assert_abs_diff_eq!(final_norm, 8.770e-7, epsilon = 1e-8);
    }

    #[test]
    fn certified_full_information_run_contracts() {
        let game = build_benchmark(Benchmark::G1);
        let synthesis = synth_quadratic_full(&game, GainChoice::default()).unwrap();
        let cert = synthesis.expect_feasible("g1 full-quad");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = DVector::from_fn(20, |_, _| rng.gen_range(-10.0..10.0));
        let traj = simulate_heavy_anchor_full(
            &game,
            &x0,
            &x0,
            cert.alpha,
            cert.beta,
            25.0,
            0.01,
            &SimOptions::default(),
        )
        .unwrap();
        let norms: Vec<f64> = traj.x.iter().map(|x| x.norm()).collect();
        let final_norm = *norms.last().unwrap();
        assert!(final_norm <= 1e-4, "final distance {final_norm}");
        let mid = norms[norms.len() / 2];
        assert!(final_norm < mid && mid < norms[0], "coarse decrease violated");
    }

    #[test]
    fn divergent_gradient_play_aborts_at_last_finite_sample() {
        let game = build_benchmark(Benchmark::G1);
        let mut x0 = DVector::zeros(20);
        x0[0] = 1.0;
        let traj =
            simulate_gradient_play(&game, &x0, 800.0, 0.01, &SimOptions::default()).unwrap();
        let at = traj.meta.diverged_at.expect("unstable modes must overflow before t=800");
        assert!(at < 800.0);
        assert!(traj.final_time() < at + 1e-9);
        for (x, d) in traj.x.iter().zip(&traj.diagnostics) {
            assert!(x.iter().all(|v| v.is_finite()));
            assert!(d.ne_residual.is_finite());
        }
        for w in traj.times.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn decomposition_reconstructs_and_is_orthogonal() {
        let game = build_benchmark(Benchmark::G1);
        let constants = game_constants(&game, SampleBox::default(), 0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dim = 10 * 20;
        for _ in 0..20 {
            let x = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
            let r = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
            let state = DistState { x: x.clone(), r: r.clone(), t: 0.0 };
            let dec = decompose(&state, &game, &constants, 0.35).unwrap();
            let rebuilt = Decomposition::lift(&dec.mean_x, 10) + &dec.x_perp;
            assert!((rebuilt - &x).norm() <= 1e-12 * (1.0 + x.norm()));
            let lifted = Decomposition::lift(&dec.mean_x, 10);
            let inner = lifted.dot(&dec.x_perp);
            assert!(inner.abs() <= 1e-12 * (1.0 + lifted.norm() * dec.x_perp.norm()));
        }
    }

    #[test]
    fn decomposition_vanishes_at_lifted_equilibrium() {
        let game = offset_game();
        let constants = game_constants(&game, SampleBox::default(), 0, 0).unwrap();
        let xs = game.solve_quadratic_ne().unwrap();
        let lifted = Decomposition::lift(&xs, 2);
        let state = DistState { x: lifted.clone(), r: lifted, t: 0.0 };
        let dec = decompose(&state, &game, &constants, 0.9).unwrap();
        assert!(dec.x_perp.norm() <= 1e-12);
        assert!(dec.r_perp.norm() <= 1e-12);
        assert!(dec.z_par.norm() <= 1e-10, "resolvent fixed point violated: {}", dec.z_par.norm());
    }

    #[test]
    fn euler_step_matches_ogda_specialization() {
        let game = QuadraticGameSpec {
            dims: vec![1, 1],
            a: vec![2.0, 0.5, 0.5, 1.0],
            b: vec![1.0, -1.0],
        }
        .into_game("convex-quadratic")
        .unwrap();
        let s = 0.1;
        let (alpha, beta) = (1.0 / (2.0 * s), 1.0 / (2.0 * s));
        let grad = |x: &DVector<f64>| game.eval_pseudo_gradient(x);

        let x0 = vec2(3.0, -2.0);
        let r0 = &x0 + grad(&x0) * s;
        let (mut x, mut r) = (x0.clone(), r0);
        let (mut y, mut y_prev) = (x0.clone(), x0);
        for _ in 0..100 {
            let (x1, r1) = discrete_step(&game, &x, &r, alpha, beta, s).unwrap();
            let y1 = ogda_step(grad, &y, &y_prev, s / 2.0);
            assert!((&x1 - &y1).norm() <= 1e-12 * (1.0 + y1.norm()));
            x = x1;
            r = r1;
            y_prev = std::mem::replace(&mut y, y1);
        }
    }

    #[test]
    fn chained_euler_steps_satisfy_second_order_recurrence() {
        // x_{k+2} = x_{k+1} - alpha s^2 F(x_{k+1})
        //           + (1 - s alpha - s beta)(x_{k+1} - x_k)
        //           - s (1 - s alpha)(F(x_{k+1}) - F(x_k))
        let game = build_benchmark(Benchmark::Sine);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x0 = DVector::from_fn(20, |_, _| rng.gen_range(-2.0..2.0));
            let r0 = DVector::from_fn(20, |_, _| rng.gen_range(-2.0..2.0));
            let (s, alpha, beta) = (0.01, 0.3, 0.7);
            let (x1, r1) = discrete_step(&game, &x0, &r0, alpha, beta, s).unwrap();
            let (x2, _) = discrete_step(&game, &x1, &r1, alpha, beta, s).unwrap();
            let f0 = game.eval_pseudo_gradient(&x0);
            let f1 = game.eval_pseudo_gradient(&x1);
            let predicted = &x1 - &f1 * (alpha * s * s)
                + (&x1 - &x0) * (1.0 - s * alpha - s * beta)
                - (&f1 - &f0) * (s * (1.0 - s * alpha));
            assert!((&x2 - &predicted).norm() <= 1e-12 * (1.0 + x2.norm()));
        }
    }

    #[test]
    fn degenerate_discrete_steps_reduce_to_known_maps() {
        let zero_grad = |x: &DVector<f64>| DVector::zeros(x.len());
        let x = vec2(1.0, 2.0);
        let x_prev = vec2(0.0, 0.0);
        assert_eq!(ogda_step(zero_grad, &x, &x_prev, 0.5), x);

        let grad = |x: &DVector<f64>| x.clone();
        let hb = heavy_ball_step(grad, &x, &x_prev, 0.1, 0.0);
        let plain = &x - &x * 0.1;
        assert!((hb - plain).norm() <= 1e-15);

        let game = offset_game();
        let xs = game.solve_quadratic_ne().unwrap();
        let (x1, r1) = discrete_step(&game, &xs, &xs, 0.4, 0.6, 0.05).unwrap();
        assert!((&x1 - &xs).norm() <= 1e-15);
        assert!((&r1 - &xs).norm() <= 1e-15);
    }
}
