//! Convergence detection, certificate Lyapunov functions, and exponential
//! rate fits over sampled trajectories.

use crate::dynamics::{consensus_split, InfoMode, Trajectory};
use crate::game_model::Game;
use crate::operator_analysis::{eval_game_resolvent, AnalysisError, OperatorConstants};
use crate::param_synth::{CertificateAux, ParameterCertificate, TheoremTag};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("unknown Lyapunov kind `{0}` (expected full-info|consensus-contraction|consensus-quadratic)")]
    UnknownKind(String),
    #[error("Lyapunov kind {kind} needs {what} in the certificate")]
    MissingCertificateData { kind: LyapunovKind, what: &'static str },
    #[error("Lyapunov kind {kind} does not apply to a {mode:?} trajectory")]
    MismatchedMode { kind: LyapunovKind, mode: InfoMode },
    #[error("state length {got} does not match expected {expected} ({context})")]
    StateDimension { expected: usize, got: usize, context: &'static str },
    #[error("rate estimation requires a decaying trajectory")]
    NotConverged,
    #[error("rate estimation needs at least {need} tail samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("trajectory sits at the equilibrium; there is no decay to fit")]
    RateUndefined,
    #[error("log-distance tail is not exponential (fit rms {rms:.3} exceeds {max:.3})")]
    PoorFit { rms: f64, max: f64 },
}

/// Per-sample convergence metrics. The Lyapunov slot stays empty until a
/// certificate-specific evaluation fills it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub t: f64,
    /// Pseudo-gradient norm at the played profile.
    pub ne_residual: f64,
    /// Norm of the estimates' orthogonal (disagreement) component; zero in
    /// full information.
    pub consensus_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<f64>,
}

/// Which certificate Lyapunov function governs a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovKind {
    /// (1/2)||x - x*||^2 + (beta/2alpha)||r - x*||^2.
    FullInfo,
    /// Consensus-weighted form with tuning d and the resolvent coordinate.
    ConsensusContraction,
    /// Orthogonal energies plus N xi' P xi on the consensus means.
    ConsensusQuadratic,
}

impl fmt::Display for LyapunovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::FullInfo => "full-info",
            Self::ConsensusContraction => "consensus-contraction",
            Self::ConsensusQuadratic => "consensus-quadratic",
        };
        f.write_str(s)
    }
}

impl FromStr for LyapunovKind {
    type Err = DiagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-info" => Ok(Self::FullInfo),
            "consensus-contraction" => Ok(Self::ConsensusContraction),
            "consensus-quadratic" => Ok(Self::ConsensusQuadratic),
            other => Err(DiagError::UnknownKind(other.to_string())),
        }
    }
}

/// Lyapunov function certified by each synthesis result.
pub fn governing_kind(theorem: TheoremTag) -> LyapunovKind {
    match theorem {
        TheoremTag::FullMonotone | TheoremTag::FullHypomonotone | TheoremTag::FullQuadratic => {
            LyapunovKind::FullInfo
        }
        TheoremTag::DistGeneral => LyapunovKind::ConsensusContraction,
        TheoremTag::DistQuadratic => LyapunovKind::ConsensusQuadratic,
    }
}

/// Everything a Lyapunov evaluation needs besides the state itself.
pub struct LyapunovContext<'a> {
    pub game: &'a Game,
    pub constants: &'a OperatorConstants,
    pub certificate: &'a ParameterCertificate,
    /// Equilibrium action profile x*, n-dimensional.
    pub equilibrium: &'a DVector<f64>,
}

/// Evaluate the governing Lyapunov function at one state. `x` and `r` are
/// n-dimensional in full information and stacked (N n) otherwise.
pub fn evaluate_lyapunov(
    kind: LyapunovKind,
    ctx: &LyapunovContext<'_>,
    x: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<f64, DiagError> {
    let cert = ctx.certificate;
    let n = ctx.game.total_dim();
    let n_agents = ctx.game.n_agents();
    let weight = cert.beta / (2.0 * cert.alpha);
    match kind {
        LyapunovKind::FullInfo => {
            check_len(x, n, "full-information action")?;
            check_len(r, n, "full-information anchor")?;
            let dx = x - ctx.equilibrium;
            let dr = r - ctx.equilibrium;
            Ok(0.5 * dx.norm_squared() + weight * dr.norm_squared())
        }
        LyapunovKind::ConsensusContraction => {
            let dim = n * n_agents;
            check_len(x, dim, "stacked estimates")?;
            check_len(r, dim, "stacked anchors")?;
            let d = cert
                .d
                .ok_or(DiagError::MissingCertificateData { kind, what: "the tuning d" })?;
            let lambda = match &cert.aux {
                CertificateAux::Contraction(aux) => aux.lambda,
                _ => {
                    return Err(DiagError::MissingCertificateData {
                        kind,
                        what: "contraction data (lambda)",
                    })
                }
            };
            let (mean_x, x_perp) = consensus_split(x, n_agents);
            let (mean_r, r_perp) = consensus_split(r, n_agents);
            let resolved = eval_game_resolvent(ctx.game, ctx.constants, lambda, &mean_r)?;
            let z = &mean_x - &resolved;
            let big_n = n_agents as f64;
            let dr_par = &mean_r - ctx.equilibrium;
            Ok((1.0 - d) / 2.0 * big_n * dr_par.norm_squared()
                + d / 2.0 * big_n * z.norm_squared()
                + 0.5 * x_perp.norm_squared()
                + weight * r_perp.norm_squared())
        }
        LyapunovKind::ConsensusQuadratic => {
            let dim = n * n_agents;
            check_len(x, dim, "stacked estimates")?;
            check_len(r, dim, "stacked anchors")?;
            let p = match &cert.aux {
                CertificateAux::Lyapunov(aux) => aux.p.to_matrix(),
                _ => {
                    return Err(DiagError::MissingCertificateData {
                        kind,
                        what: "the Lyapunov matrix P",
                    })
                }
            };
            let (mean_x, x_perp) = consensus_split(x, n_agents);
            let (mean_r, r_perp) = consensus_split(r, n_agents);
            let mut xi = DVector::zeros(2 * n);
            for j in 0..n {
                xi[j] = mean_x[j] - ctx.equilibrium[j];
                xi[n + j] = mean_r[j] - ctx.equilibrium[j];
            }
            let quad = (&p * &xi).dot(&xi);
            Ok(0.5 * x_perp.norm_squared()
                + weight * r_perp.norm_squared()
                + n_agents as f64 * quad)
        }
    }
}

fn check_len(v: &DVector<f64>, expected: usize, context: &'static str) -> Result<(), DiagError> {
    if v.len() != expected {
        return Err(DiagError::StateDimension { expected, got: v.len(), context });
    }
    Ok(())
}

/// Governing Lyapunov value at every stored sample.
pub fn lyapunov_values(
    traj: &Trajectory,
    ctx: &LyapunovContext<'_>,
) -> Result<Vec<f64>, DiagError> {
    if traj.is_empty() {
        return Err(DiagError::EmptyTrajectory);
    }
    let kind = governing_kind(ctx.certificate.theorem);
    let expected_mode = match kind {
        LyapunovKind::FullInfo => InfoMode::Full,
        _ => InfoMode::Distributed,
    };
    if traj.mode != expected_mode {
        return Err(DiagError::MismatchedMode { kind, mode: traj.mode });
    }
    (0..traj.len())
        .map(|i| evaluate_lyapunov(kind, ctx, &traj.x[i], &traj.r[i]))
        .collect()
}

/// Fill the per-sample Lyapunov slots of a trajectory in place.
pub fn attach_lyapunov(
    traj: &mut Trajectory,
    ctx: &LyapunovContext<'_>,
) -> Result<(), DiagError> {
    let values = lyapunov_values(traj, ctx)?;
    for (d, v) in traj.diagnostics.iter_mut().zip(values) {
        d.lyapunov = Some(v);
    }
    Ok(())
}

/// Largest per-sample increase of a Lyapunov sequence; non-positive for a
/// monotone run.
pub fn max_lyapunov_increase(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Convergence verdict: both metrics below tolerance from the crossing time
/// through the end of the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_crossing: Option<f64>,
    pub final_residual: f64,
    pub final_consensus_error: f64,
}

pub fn detect_convergence(
    traj: &Trajectory,
    tol_residual: f64,
    tol_consensus: f64,
) -> Result<Convergence, DiagError> {
    if traj.is_empty() {
        return Err(DiagError::EmptyTrajectory);
    }
    let below = |d: &DiagnosticSample| {
        d.ne_residual <= tol_residual && d.consensus_error <= tol_consensus
    };
    // longest suffix staying below both tolerances
    let mut start = traj.len();
    for (i, d) in traj.diagnostics.iter().enumerate().rev() {
        if below(d) {
            start = i;
        } else {
            break;
        }
    }
    let final_diag = traj.final_diagnostic();
    let converged = start < traj.len() && traj.meta.diverged_at.is_none();
    Ok(Convergence {
        converged,
        first_crossing: converged.then(|| traj.times[start]),
        final_residual: final_diag.ne_residual,
        final_consensus_error: final_diag.consensus_error,
    })
}

/// Exponential rate fitted to the tail of log||profile - x*||.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Slope of the log-distance fit; negative for decay.
    pub rate: f64,
    pub window: (f64, f64),
    /// Root-mean-square misfit of the linear fit, in log units.
    pub rms_misfit: f64,
}

const MIN_TAIL_SAMPLES: usize = 50;
const RATE_FIT_RMS_MAX: f64 = 0.5;

/// Least-squares slope of log-distance over the second half of the run.
/// Exploratory: callers report the estimate, they do not certify it.
pub fn estimate_rate(
    traj: &Trajectory,
    equilibrium: &DVector<f64>,
) -> Result<RateEstimate, DiagError> {
    if traj.is_empty() {
        return Err(DiagError::EmptyTrajectory);
    }
    let dists: Vec<f64> = (0..traj.len())
        .map(|i| (traj.selected_profile(i) - equilibrium).norm())
        .collect();
    if dists.iter().all(|&d| d <= 1e-300) {
        return Err(DiagError::RateUndefined);
    }
    // integrator dissipation shrinks even a cycling orbit by a hair per
    // period, so demand a real contraction before calling the run decaying
    if *dists.last().unwrap() >= 0.5 * dists[0] {
        return Err(DiagError::NotConverged);
    }
    let tail_start = traj.len() / 2;
    let tail = traj.len() - tail_start;
    if tail < MIN_TAIL_SAMPLES {
        return Err(DiagError::TooFewSamples { need: MIN_TAIL_SAMPLES, got: tail });
    }
    if dists[tail_start..].iter().any(|&d| d <= 1e-300) {
        return Err(DiagError::RateUndefined);
    }
    let ts = &traj.times[tail_start..];
    let ys: Vec<f64> = dists[tail_start..].iter().map(|d| d.ln()).collect();
    let m = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        num += (t - t_mean) * (y - y_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    let slope = num / den;
    let intercept = y_mean - slope * t_mean;
    let rms = (ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| {
            let e = y - (intercept + slope * t);
            e * e
        })
        .sum::<f64>()
        / m)
        .sqrt();
    if rms > RATE_FIT_RMS_MAX {
        return Err(DiagError::PoorFit { rms, max: RATE_FIT_RMS_MAX });
    }
    Ok(RateEstimate { rate: slope, window: (ts[0], *ts.last().unwrap()), rms_misfit: rms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        simulate_gradient_play, simulate_heavy_anchor_full, DynamicsKind, IntegratorMeta,
        SimOptions,
    };
    use crate::game_model::{build_benchmark, Benchmark, QuadraticGameSpec};
    use crate::graph::CommGraph;
    use crate::operator_analysis::{game_constants, SampleBox};
    use crate::param_synth::{
        synth_full_monotone, synth_quadratic_full, synth_quadratic_partial, GainChoice,
    };
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn full_info_ctx_parts() -> (Game, crate::operator_analysis::OperatorConstants) {
        let game = build_benchmark(Benchmark::Harmonic);
        let constants = game_constants(&game, SampleBox::default(), 0, 0).unwrap();
        (game, constants)
    }

    #[test]
    fn full_info_lyapunov_formula() {
        let (game, constants) = full_info_ctx_parts();
        let cert = synth_full_monotone(GainChoice::default()).unwrap();
        let equilibrium = DVector::zeros(2);
        let ctx = LyapunovContext {
            game: &game,
            constants: &constants,
            certificate: &cert,
            equilibrium: &equilibrium,
        };
        let zero = DVector::zeros(2);
        let v0 = evaluate_lyapunov(LyapunovKind::FullInfo, &ctx, &zero, &zero).unwrap();
        assert_eq!(v0, 0.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let v1 = evaluate_lyapunov(LyapunovKind::FullInfo, &ctx, &e1, &zero).unwrap();
        assert_abs_diff_eq!(v1, 0.5, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let r = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let v = evaluate_lyapunov(LyapunovKind::FullInfo, &ctx, &x, &r).unwrap();
            if x.norm() + r.norm() > 1e-12 {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn distributed_lyapunov_kinds_vanish_at_lifted_equilibrium() {
        let game = build_benchmark(Benchmark::G1);
        let constants = game_constants(&game, SampleBox::default(), 0, 0).unwrap();
        let graph = CommGraph::ring(10).unwrap();
        let equilibrium = DVector::zeros(20);
        let lifted = DVector::zeros(200);

        let quad = synth_quadratic_partial(&game, &graph, GainChoice::default()).unwrap();
        let quad_cert = quad.expect_feasible("g1 dist-quad");
        let ctx = LyapunovContext {
            game: &game,
            constants: &constants,
            certificate: quad_cert,
            equilibrium: &equilibrium,
        };
        let v = evaluate_lyapunov(LyapunovKind::ConsensusQuadratic, &ctx, &lifted, &lifted).unwrap();
        assert!(v.abs() <= 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = DVector::from_fn(200, |_, _| rng.gen_range(-1.0..1.0));
        let v = evaluate_lyapunov(LyapunovKind::ConsensusQuadratic, &ctx, &x, &lifted).unwrap();
        assert!(v > 0.0);

        let gen = crate::param_synth::synth_partial_general(
            &constants,
            10,
            0.5,
            &graph,
            GainChoice::default(),
        )
        .unwrap();
        let gen_cert = gen.expect_feasible("g1 dist-general");
        let ctx = LyapunovContext {
            game: &game,
            constants: &constants,
            certificate: gen_cert,
            equilibrium: &equilibrium,
        };
        let v =
            evaluate_lyapunov(LyapunovKind::ConsensusContraction, &ctx, &lifted, &lifted).unwrap();
        assert!(v.abs() <= 1e-14);
        let v = evaluate_lyapunov(LyapunovKind::ConsensusContraction, &ctx, &x, &lifted).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn kind_parsing_rejects_unknown_names() {
        assert!("full-info".parse::<LyapunovKind>().is_ok());
        assert!(matches!(
            "anchored".parse::<LyapunovKind>(),
            Err(DiagError::UnknownKind(_))
        ));
    }

    #[test]
    fn monotone_full_info_run_is_lyapunov_monotone() {
        let (game, constants) = full_info_ctx_parts();
        let cert = synth_full_monotone(GainChoice::default()).unwrap();
        let equilibrium = DVector::zeros(2);
        let mut traj = simulate_heavy_anchor_full(
            &game,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::zeros(2),
            cert.alpha,
            cert.beta,
            20.0,
            0.01,
            &SimOptions { stride: Some(1), seed: None },
        )
        .unwrap();
        let ctx = LyapunovContext {
            game: &game,
            constants: &constants,
            certificate: &cert,
            equilibrium: &equilibrium,
        };
        attach_lyapunov(&mut traj, &ctx).unwrap();
        let values: Vec<f64> =
            traj.diagnostics.iter().map(|d| d.lyapunov.unwrap()).collect();
        let v0 = values[0];
        assert!(max_lyapunov_increase(&values) <= 1e-8 * (1.0 + v0));
    }

    #[test]
    fn convergence_detection_semantics() {
        let meta = IntegratorMeta {
            method: "rk4".to_string(),
            h: 0.1,
            t_final: 0.4,
            stride: 1,
            seed: None,
            diverged_at: None,
            wall_time: 0.0,
        };
        let sample = |t: f64, res: f64| DiagnosticSample {
            t,
            ne_residual: res,
            consensus_error: 0.0,
            lyapunov: None,
        };
        let state = DVector::zeros(1);
        let mk = |residuals: &[f64]| Trajectory {
            mode: InfoMode::Full,
            dynamics: DynamicsKind::HeavyAnchor,
            agent_dims: vec![1],
            times: (0..residuals.len()).map(|i| i as f64 * 0.1).collect(),
            x: vec![state.clone(); residuals.len()],
            r: vec![state.clone(); residuals.len()],
            diagnostics: residuals
                .iter()
                .enumerate()
                .map(|(i, &r)| sample(i as f64 * 0.1, r))
                .collect(),
            meta: meta.clone(),
        };

        // dips below, pops back above, then stays below: the crossing is the
        // start of the final suffix
        let verdict = detect_convergence(&mk(&[5.0, 0.5, 3.0, 0.5, 0.2]), 1.0, 1.0).unwrap();
        assert!(verdict.converged);
        assert_abs_diff_eq!(verdict.first_crossing.unwrap(), 0.3, epsilon = 1e-12);

        let verdict = detect_convergence(&mk(&[0.5, 0.5, 0.5]), 1.0, 1.0).unwrap();
        assert!(verdict.converged);
        assert_eq!(verdict.first_crossing, Some(0.0));

        let verdict = detect_convergence(&mk(&[5.0, 0.5, 3.0]), 1.0, 1.0).unwrap();
        assert!(!verdict.converged);
        assert!(verdict.first_crossing.is_none());
    }

    #[test]
    fn harmonic_gradient_play_never_converges() {
        let game = build_benchmark(Benchmark::Harmonic);
        let traj = simulate_gradient_play(
            &game,
            &DVector::from_vec(vec![1.0, 0.0]),
            20.0,
            0.01,
            &SimOptions::default(),
        )
        .unwrap();
        let verdict = detect_convergence(&traj, 1e-3, 1e-3).unwrap();
        assert!(!verdict.converged);
    }

    #[test]
    fn rate_fit_recovers_slow_eigenvalue() {
        // scalar F(x) = x under the anchored dynamics at alpha = beta = 1:
        // the slow mode is the larger root of z^2 + 3z + 1
        let game = QuadraticGameSpec { dims: vec![1], a: vec![1.0], b: vec![0.0] }
            .into_game("scalar")
            .unwrap();
        let traj = simulate_heavy_anchor_full(
            &game,
            &DVector::from_vec(vec![5.0]),
            &DVector::zeros(1),
            1.0,
            1.0,
            30.0,
            0.01,
            &SimOptions { stride: Some(10), seed: None },
        )
        .unwrap();
        let est = estimate_rate(&traj, &DVector::zeros(1)).unwrap();
        let slow = (-3.0 + 5.0f64.sqrt()) / 2.0;
        assert!(
            (est.rate - slow).abs() <= 0.1 * slow.abs(),
            "fitted {} vs spectral {}",
            est.rate,
            slow
        );
        assert!(est.rms_misfit < 0.1);
    }

    #[test]
    fn rate_fit_on_tuned_gains_matches_spectral_abscissa() {
        // gains tied to the inverse-Lipschitz constant R = 1/2: the fitted
        // tail slope should track the spectral abscissa of the anchored
        // matrix, computed here as the oracle
        let game = QuadraticGameSpec {
            dims: vec![1, 1],
            a: vec![2.0, 0.0, 0.0, 3.0],
            b: vec![0.0, 0.0],
        }
        .into_game("diag-two")
        .unwrap();
        let r_inv = 0.5;
        let (alpha, beta) = (5.0 / (9.0 * r_inv), 4.0 / (9.0 * r_inv));
        let m = crate::param_synth::anchored_dynamics_matrix(
            &game.quadratic_data().unwrap().a,
            alpha,
            beta,
        );
        let abscissa = crate::linalg::spectral_abscissa(&m);
        let traj = simulate_heavy_anchor_full(
            &game,
            &DVector::from_vec(vec![3.0, -4.0]),
            &DVector::zeros(2),
            alpha,
            beta,
            25.0,
            0.01,
            &SimOptions { stride: Some(10), seed: None },
        )
        .unwrap();
        let est = estimate_rate(&traj, &DVector::zeros(2)).unwrap();
        assert!(
            (est.rate - abscissa).abs() <= 0.1 * abscissa.abs(),
            "fitted {} vs abscissa {}",
            est.rate,
            abscissa
        );
    }

    #[test]
    fn rate_fit_refuses_degenerate_inputs() {
        let game = QuadraticGameSpec { dims: vec![1], a: vec![1.0], b: vec![0.0] }
            .into_game("scalar")
            .unwrap();
        let traj = simulate_heavy_anchor_full(
            &game,
            &DVector::zeros(1),
            &DVector::zeros(1),
            1.0,
            1.0,
            30.0,
            0.01,
            &SimOptions { stride: Some(10), seed: None },
        )
        .unwrap();
        assert!(matches!(
            estimate_rate(&traj, &DVector::zeros(1)),
            Err(DiagError::RateUndefined)
        ));

        let game_h = build_benchmark(Benchmark::Harmonic);
        let cycling = simulate_gradient_play(
            &game_h,
            &DVector::from_vec(vec![1.0, 0.0]),
            20.0,
            0.01,
            &SimOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            estimate_rate(&cycling, &DVector::zeros(2)),
            Err(DiagError::NotConverged)
        ));
    }

    #[test]
    fn certified_full_quadratic_run_converges_and_first_crossing_precedes_horizon() {
        let game = build_benchmark(Benchmark::G1);
        let synthesis = synth_quadratic_full(&game, GainChoice::default()).unwrap();
        let cert = synthesis.expect_feasible("g1 full-quad");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = DVector::from_fn(20, |_, _| rng.gen_range(-10.0..10.0));
        let traj = simulate_heavy_anchor_full(
            &game,
            &x0,
            &x0,
            cert.alpha,
            cert.beta,
            30.0,
            0.01,
            &SimOptions::default(),
        )
        .unwrap();
        let verdict = detect_convergence(&traj, 1e-3, 1e-3).unwrap();
        assert!(verdict.converged);
        assert!(verdict.first_crossing.unwrap() < 30.0);
    }
}
