//! Operator moduli and resolvents.
//!
//! The convergence certificates are driven by three moduli of the
//! pseudo-gradient F: the hypomonotonicity modulus mu (so <Fx-Fy, x-y> >=
//! -mu ||x-y||^2), the Lipschitz constant L_F, and the inverse-Lipschitz
//! constant R (so ||x-y|| <= R ||Fx-Fy||). For quadratic games the moduli
//! follow exactly from the coupling matrix; for nonlinear games they are
//! estimated by sampling secant pairs, which yields certified lower bounds
//! on the true moduli.
//!
//! The resolvent J = (Id + lambda F)^{-1} inherits a Lipschitz bound L_J and
//! an inner-product bound kappa_J whenever mu R^2 <= lambda < 1/mu; both
//! closed forms live here, next to the numerical resolvent evaluation used
//! by the consensus-coordinate diagnostics.

use crate::game_model::{Game, GameKind, QuadraticGame};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("operator is singular (sigma_min = {sigma_min:.3e}); inverse Lipschitz modulus undefined")]
    InverseLipschitzUndefined { sigma_min: f64 },
    #[error("sampling needs at least {min} pairs, got {got}")]
    TooFewPairs { got: usize, min: usize },
    #[error("all sample pairs were coincident; cannot estimate moduli")]
    DegenerateSamples,
    #[error("resolvent infeasible at lambda = {lambda}: requires mu R^2 <= lambda < 1/mu (mu = {mu}, R = {r})")]
    ResolventInfeasible { mu: f64, r: f64, lambda: f64 },
    #[error("resolvent iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    ResolventDiverged { residual: f64, iterations: usize },
    #[error("derivation needs the `{0}` modulus")]
    MissingModulus(&'static str),
    #[error("derivation `{0}` holds only for gradients of convex functions; set the flag if that is known")]
    RequiresConvexGradient(&'static str),
    #[error("resolvent of a singular linear system (I + lambda A not invertible at lambda = {lambda})")]
    SingularResolventSystem { lambda: f64 },
}

/// How a set of moduli was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Sampled { pairs: usize, seed: u64 },
}

/// Moduli of an operator: mu-hypomonotone, L-Lipschitz, R-inverse Lipschitz.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OperatorConstants {
    /// Hypomonotonicity modulus, >= 0 (0 means monotone).
    pub mu_hypo: f64,
    /// Lipschitz constant L_F.
    pub lipschitz: f64,
    /// Inverse-Lipschitz constant R in ||x-y|| <= R ||Tx-Ty||.
    pub inv_lipschitz: f64,
    pub provenance: Provenance,
}

impl OperatorConstants {
    pub fn exact(mu_hypo: f64, lipschitz: f64, inv_lipschitz: f64) -> Self {
        Self { mu_hypo, lipschitz, inv_lipschitz, provenance: Provenance::Exact }
    }

    /// Consistency of the two growth bounds: L * R >= 1 must hold for any
    /// operator possessing both.
    pub fn is_consistent(&self) -> bool {
        self.lipschitz * self.inv_lipschitz >= 1.0 - 1e-12
    }
}

/// Resolvent bounds at a given lambda; absent when the feasibility window
/// mu R^2 <= lambda < 1/mu excludes lambda.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolventConstants {
    pub lambda: f64,
    pub feasible: bool,
    /// Lipschitz bound of the resolvent.
    pub l_j: Option<f64>,
    /// Inner-product bound: <x-y, Jx-Jy> <= kappa_J ||x-y||^2.
    pub kappa_j: Option<f64>,
}

/// Exact moduli of an affine operator x -> A x + b from the spectrum of A.
pub fn exact_quadratic_constants(qg: &QuadraticGame) -> Result<OperatorConstants, AnalysisError> {
    let sym = (&qg.a + qg.a.transpose()) * 0.5;
    let min_sym = sym.symmetric_eigen().eigenvalues.min();
    let svd = qg.a.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    if sigma_min <= 1e-14 * sigma_max.max(1.0) {
        return Err(AnalysisError::InverseLipschitzUndefined { sigma_min });
    }
    Ok(OperatorConstants::exact(
        (-min_sym).max(0.0),
        sigma_max,
        1.0 / sigma_min,
    ))
}

/// Uniform sampling box, applied per coordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0 }
    }
}

const MIN_SAMPLE_PAIRS: usize = 1000;

/// Estimate (mu, L, R) of a map R^n -> R^n from secant pairs.
///
/// Each max-ratio statistic is a lower bound on the corresponding true
/// modulus. Random pairs alone converge slowly, so part of the budget probes
/// structure: at a set of base points a finite-difference Jacobian estimate
/// picks the extreme singular directions and the most negative symmetric
/// direction, and genuine secant pairs along those directions enter the same
/// statistics.
pub fn sampled_constants<F>(
    op: F,
    dim: usize,
    sample_box: SampleBox,
    pairs: usize,
    seed: u64,
) -> Result<OperatorConstants, AnalysisError>
where
    F: Fn(&[f64], &mut [f64]),
{
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    if pairs < MIN_SAMPLE_PAIRS {
        return Err(AnalysisError::TooFewPairs { got: pairs, min: MIN_SAMPLE_PAIRS });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu_max = f64::NEG_INFINITY;
    let mut l_max: f64 = 0.0;
    let mut r_max: f64 = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;

    let mut ingest = |dx: &DVector<f64>, df: &DVector<f64>, f_scale: f64| {
        let nx = dx.norm();
        if nx <= 1e-12 {
            skipped += 1;
            return;
        }
        let nf = df.norm();
        mu_max = mu_max.max(-df.dot(dx) / (nx * nx));
        l_max = l_max.max(nf / nx);
        // a difference at the rounding floor of the operator values carries
        // no inverse-Lipschitz signal, only amplified noise
        if nf > 1e-13 * (1.0 + f_scale) {
            r_max = r_max.max(nx / nf);
        }
        used += 1;
    };

    let eval = |x: &DVector<f64>| {
        let mut out = DVector::zeros(dim);
        op(x.as_slice(), out.as_mut_slice());
        out
    };
    let sample_point = |rng: &mut ChaCha8Rng| {
        DVector::from_fn(dim, |_, _| rng.gen_range(sample_box.lo..sample_box.hi))
    };

    // structured phase: FD Jacobian probes plus refined directions
    let per_point = dim + 3;
    let base_points = (pairs / (2 * per_point)).clamp(1, 200);
    let eps = 1e-4;
    let delta = 1e-3;
    for _ in 0..base_points {
        let x = sample_point(&mut rng);
        let fx = eval(&x);
        let fx_norm = fx.norm();
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut y = x.clone();
            y[j] += eps;
            let fy = eval(&y);
            let dx = &y - &x;
            let df = &fy - &fx;
            ingest(&dx, &df, fx_norm + fy.norm());
            jac.set_column(j, &(df / eps));
        }
        let svd = jac.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().unwrap();
        let top = v_t.row(0).transpose();
        let bot = v_t.row(dim - 1).transpose();
        let sym = (&jac + jac.transpose()) * 0.5;
        let se = sym.symmetric_eigen();
        let worst = se.eigenvalues.imin();
        let neg_dir = se.eigenvectors.column(worst).clone_owned();
        for dir in [top, bot, neg_dir] {
            let y = &x + &dir * delta;
            let fy = eval(&y);
            ingest(&(&y - &x), &(&fy - &fx), fx_norm + fy.norm());
        }
    }

    // remaining budget: independent random pairs
    let structured = base_points * per_point;
    for _ in structured..pairs {
        let x = sample_point(&mut rng);
        let y = sample_point(&mut rng);
        let (fx, fy) = (eval(&x), eval(&y));
        ingest(&(&y - &x), &(&fy - &fx), fx.norm() + fy.norm());
    }

    if used == 0 {
        return Err(AnalysisError::DegenerateSamples);
    }
    Ok(OperatorConstants {
        mu_hypo: mu_max.max(0.0),
        lipschitz: l_max,
        inv_lipschitz: r_max,
        provenance: Provenance::Sampled { pairs, seed },
    })
}

/// Moduli of a game's pseudo-gradient: exact for quadratic games, sampled
/// otherwise.
pub fn game_constants(
    game: &Game,
    sample_box: SampleBox,
    pairs: usize,
    seed: u64,
) -> Result<OperatorConstants, AnalysisError> {
    match game.kind() {
        GameKind::Quadratic(qg) => exact_quadratic_constants(qg),
        GameKind::Nonlinear(_) => sampled_constants(
            |x, out| game.eval_pseudo_gradient_into(x, out),
            game.total_dim(),
            sample_box,
            pairs,
            seed,
        ),
    }
}

/// Resolvent bounds of a maximally mu-hypomonotone, R-inverse Lipschitz
/// operator at parameter lambda.
pub fn resolvent_constants(c: &OperatorConstants, lambda: f64) -> ResolventConstants {
    assert!(lambda > 0.0, "resolvent parameter must be positive");
    let (mu, r) = (c.mu_hypo, c.inv_lipschitz);
    let feasible = mu * r * r <= lambda && (mu == 0.0 || lambda < 1.0 / mu);
    if !feasible {
        return ResolventConstants { lambda, feasible, l_j: None, kappa_j: None };
    }
    let r2 = r * r;
    let l_j = (r2 / (r2 + lambda * lambda - 2.0 * lambda * mu * r2)).sqrt();
    let kappa_j = if r >= lambda {
        r2 * (1.0 - mu * lambda) / (r2 + lambda * lambda - 2.0 * mu * lambda * r2)
    } else {
        r2 * (1.0 + lambda / r) / (r2 + lambda * lambda + 2.0 * lambda * r)
    };
    ResolventConstants { lambda, feasible, l_j: Some(l_j), kappa_j: Some(kappa_j) }
}

/// Residual tolerance of resolvent evaluations: ||u + lambda T(u) - v||
/// relative to 1 + ||v||.
pub const RESOLVENT_TOLERANCE: f64 = 1e-10;

/// Resolvent of an affine operator: solve (I + lambda A) u = v - lambda b.
pub fn eval_resolvent_linear(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>, AnalysisError> {
    let n = a.nrows();
    let sys = DMatrix::<f64>::identity(n, n) + a * lambda;
    let rhs = v - b * lambda;
    sys.lu()
        .solve(&rhs)
        .ok_or(AnalysisError::SingularResolventSystem { lambda })
}

/// Resolvent of a nonlinear operator by damped fixed-point iteration.
///
/// Under lambda mu < 1 the map u -> u - omega (u + lambda T(u) - v) with
/// omega = (1 - lambda mu) / (1 + lambda L)^2 is a contraction; if progress
/// stalls short of the tolerance a derivative-free Broyden step takes over.
pub fn eval_resolvent_iterative<F>(
    op: F,
    dim: usize,
    constants: &OperatorConstants,
    lambda: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>, AnalysisError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let (mu, l) = (constants.mu_hypo, constants.lipschitz);
    if lambda * mu >= 1.0 {
        return Err(AnalysisError::ResolventInfeasible {
            mu,
            r: constants.inv_lipschitz,
            lambda,
        });
    }
    let tol = RESOLVENT_TOLERANCE * (1.0 + v.norm());
    let omega = (1.0 - lambda * mu) / (1.0 + lambda * l).powi(2);
    let residual = |u: &DVector<f64>| -> DVector<f64> {
        let mut t = DVector::zeros(dim);
        op(u.as_slice(), t.as_mut_slice());
        u + t * lambda - v
    };

    let mut u = v.clone();
    let mut g = residual(&u);
    let max_picard = 20_000;
    let mut best = g.norm();
    let mut since_best = 0usize;
    for _ in 0..max_picard {
        if g.norm() <= tol {
            return Ok(u);
        }
        u -= &g * omega;
        g = residual(&u);
        let n = g.norm();
        if n < best * (1.0 - 1e-3) {
            best = n;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 50 {
                break; // stalled; hand over to Broyden
            }
        }
    }

    // Broyden (good) with Sherman-Morrison inverse updates, started from the
    // damped-iteration inverse-Jacobian estimate omega I
    let mut binv = DMatrix::<f64>::identity(dim, dim) * omega;
    let max_broyden = 500;
    for k in 0..max_broyden {
        let gn = g.norm();
        if gn <= tol {
            return Ok(u);
        }
        let step = -&binv * &g;
        let u_next = &u + &step;
        let g_next = residual(&u_next);
        let dg = &g_next - &g;
        let bdg = &binv * &dg;
        let denom = step.dot(&bdg);
        if denom.abs() > 1e-300 {
            let corr = (&step - &bdg) * (step.transpose() * &binv) / denom;
            binv += corr;
        }
        u = u_next;
        g = g_next;
        if !g.norm().is_finite() {
            return Err(AnalysisError::ResolventDiverged {
                residual: f64::INFINITY,
                iterations: max_picard + k,
            });
        }
    }
    let final_res = g.norm();
    if final_res <= tol {
        Ok(u)
    } else {
        Err(AnalysisError::ResolventDiverged { residual: final_res, iterations: max_picard + max_broyden })
    }
}

/// Resolvent of a game's pseudo-gradient at lambda.
pub fn eval_game_resolvent(
    game: &Game,
    constants: &OperatorConstants,
    lambda: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>, AnalysisError> {
    match game.kind() {
        GameKind::Quadratic(qg) => eval_resolvent_linear(&qg.a, &qg.b, lambda, v),
        GameKind::Nonlinear(_) => eval_resolvent_iterative(
            |x, out| game.eval_pseudo_gradient_into(x, out),
            game.total_dim(),
            constants,
            lambda,
            v,
        ),
    }
}

/// Known moduli that derivations may consume.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModuliInput {
    /// mu in <Tx-Ty, x-y> >= mu ||x-y||^2, mu > 0.
    pub strong_monotone: Option<f64>,
    pub lipschitz: Option<f64>,
    /// C in <Tx-Ty, x-y> >= C ||Tx-Ty||^2.
    pub cocoercive: Option<f64>,
    pub inv_lipschitz: Option<f64>,
    /// Required by the Baillon-Haddad style derivations.
    pub gradient_of_convex: bool,
}

/// One step in the property lattice relating the operator moduli.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivationRule {
    /// C-cocoercive => (1/C)-Lipschitz.
    LipschitzFromCocoercivity,
    /// L-Lipschitz gradient of a convex function => (1/L)-cocoercive.
    CocoercivityFromLipschitz,
    /// mu-strongly monotone => (1/mu)-inverse Lipschitz.
    InverseLipschitzFromStrongMonotonicity,
    /// R-inverse Lipschitz gradient of a convex function => (1/R)-strongly monotone.
    StrongMonotonicityFromInverseLipschitz,
    /// mu-strongly monotone and L-Lipschitz => (mu/L^2)-cocoercive.
    CocoercivityFromStrongMonotonicityAndLipschitz,
    /// C-cocoercive and R-inverse Lipschitz => (C/R^2)-strongly monotone.
    StrongMonotonicityFromCocoercivityAndInverseLipschitz,
}

/// Apply one lattice rule to the supplied moduli.
pub fn derive_constant(rule: DerivationRule, input: &ModuliInput) -> Result<f64, AnalysisError> {
    use DerivationRule::*;
    let need = |v: Option<f64>, name: &'static str| v.ok_or(AnalysisError::MissingModulus(name));
    match rule {
        LipschitzFromCocoercivity => Ok(1.0 / need(input.cocoercive, "cocoercive")?),
        CocoercivityFromLipschitz => {
            if !input.gradient_of_convex {
                return Err(AnalysisError::RequiresConvexGradient("cocoercivity from Lipschitz"));
            }
            Ok(1.0 / need(input.lipschitz, "lipschitz")?)
        }
        InverseLipschitzFromStrongMonotonicity => {
            Ok(1.0 / need(input.strong_monotone, "strong_monotone")?)
        }
        StrongMonotonicityFromInverseLipschitz => {
            if !input.gradient_of_convex {
                return Err(AnalysisError::RequiresConvexGradient(
                    "strong monotonicity from inverse Lipschitz",
                ));
            }
            Ok(1.0 / need(input.inv_lipschitz, "inv_lipschitz")?)
        }
        CocoercivityFromStrongMonotonicityAndLipschitz => {
            let mu = need(input.strong_monotone, "strong_monotone")?;
            let l = need(input.lipschitz, "lipschitz")?;
            Ok(mu / (l * l))
        }
        StrongMonotonicityFromCocoercivityAndInverseLipschitz => {
            let c = need(input.cocoercive, "cocoercive")?;
            let r = need(input.inv_lipschitz, "inv_lipschitz")?;
            Ok(c / (r * r))
        }
    }
}
