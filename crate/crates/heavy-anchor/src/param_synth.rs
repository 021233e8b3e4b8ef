//! Parameter synthesis: feasible gain intervals and consensus-gain floors.
//!
//! Every convergence condition of the anchored dynamics is mechanized here.
//! Each synthesizer returns either a certificate carrying the chosen gains,
//! their admissible open intervals, and the auxiliary quantities that make
//! the certificate auditable, or a structured infeasibility with the reason.
//!
//! Default picks follow the reference tuning throughout: d = 0.5,
//! beta = 0.9 beta_min + 0.1 beta_max, alpha = midpoint of its interval.

use crate::game_model::{Game, GameError, QuadraticGame};
use crate::graph::{CommGraph, GraphError};
use crate::linalg::{self, LinalgError};
use crate::operator_analysis::{resolvent_constants, OperatorConstants};
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("tuning parameter d must lie strictly inside (0, 1), got {0}")]
    BadTuning(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("requested {name} = {value} is outside the certified open interval ({lo}, {hi})")]
    OutsideCertifiedRange { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error(
        "anchored dynamics matrix is not Hurwitz at alpha = {alpha}, beta = {beta} \
         (spectral abscissa {abscissa:.6e})"
    )]
    NotHurwitz { alpha: f64, beta: f64, abscissa: f64 },
    #[error("unknown theorem tag `{0}` (expected full-mono|full-hypo|full-quad|dist-general|dist-quad)")]
    UnknownTheorem(String),
}

/// Open interval, possibly unbounded above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn positive_half_line() -> Self {
        Self { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn positive_half_line_from(lo: f64) -> Self {
        Self { lo, hi: f64::INFINITY }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    /// Upper bound when finite, None on a half line.
    pub fn finite_hi(&self) -> Option<f64> {
        self.hi.is_finite().then_some(self.hi)
    }

    pub fn contains_strict(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Shadow {
            lo: f64,
            hi: Option<f64>,
        }
        Shadow { lo: self.lo, hi: self.hi.is_finite().then_some(self.hi) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Shadow {
            lo: f64,
            hi: Option<f64>,
        }
        let s = Shadow::deserialize(d)?;
        Ok(Interval { lo: s.lo, hi: s.hi.unwrap_or(f64::INFINITY) })
    }
}

/// Which convergence result certifies a parameter choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremTag {
    /// Full information, monotone pseudo-gradient: any positive gains.
    #[serde(rename = "full-mono")]
    FullMonotone,
    /// Full information, hypomonotone and inverse Lipschitz pseudo-gradient.
    #[serde(rename = "full-hypo")]
    FullHypomonotone,
    /// Full information, quadratic game: exact spectral intervals.
    #[serde(rename = "full-quad")]
    FullQuadratic,
    /// Partial information, general game under the contraction certificate.
    #[serde(rename = "dist-general")]
    DistGeneral,
    /// Partial information, quadratic game under the Lyapunov certificate.
    #[serde(rename = "dist-quad")]
    DistQuadratic,
}

impl fmt::Display for TheoremTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::FullMonotone => "full-mono",
            Self::FullHypomonotone => "full-hypo",
            Self::FullQuadratic => "full-quad",
            Self::DistGeneral => "dist-general",
            Self::DistQuadratic => "dist-quad",
        };
        f.write_str(s)
    }
}

impl FromStr for TheoremTag {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-mono" => Ok(Self::FullMonotone),
            "full-hypo" => Ok(Self::FullHypomonotone),
            "full-quad" => Ok(Self::FullQuadratic),
            "dist-general" => Ok(Self::DistGeneral),
            "dist-quad" => Ok(Self::DistQuadratic),
            other => Err(SynthError::UnknownTheorem(other.to_string())),
        }
    }
}

/// Row-major dense matrix payload for serialized certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Contraction-certificate payload: resolvent bounds and the 2x2 form Phi
/// whose positive definiteness certifies the parallel-coordinate decrease.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionAux {
    pub lambda: f64,
    pub l_j: f64,
    pub kappa_j: f64,
    pub phi: [[f64; 2]; 2],
    pub det_phi: f64,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
}

/// Both directions of the equal-gain norm bound on p = ||P||.
///
/// floor = N / (2 L_A + 4 alpha N) follows from ||P|| >= 1 / (2 ||M||)
/// together with ||M|| <= L_A/N + 2 alpha, so it bounds p from below. The
/// same expression is sometimes quoted as an upper bound on p; both
/// directions are evaluated and reported so the discrepancy stays visible.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EqualGainBound {
    pub floor: f64,
    pub lower_holds: bool,
    pub printed_upper_holds: bool,
}

/// Lyapunov-certificate payload for quadratic games.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovAux {
    pub p: MatrixData,
    pub p_norm: f64,
    pub residual: f64,
    /// Lipschitz constant of the extended pseudo-gradient.
    pub l_a: f64,
    pub equal_gain: Option<EqualGainBound>,
}

/// Per-eigenvalue spectral classification payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralAux {
    pub cases: Vec<EigenvalueCaseSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenvalueCaseSummary {
    pub re: f64,
    pub im: f64,
    pub case: String,
    pub beta_interval: Option<Interval>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateAux {
    None,
    Contraction(ContractionAux),
    Spectral(SpectralAux),
    Lyapunov(LyapunovAux),
}

/// A feasible parameter choice together with its admissible ranges and the
/// auxiliary quantities backing the convergence claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterCertificate {
    pub theorem: TheoremTag,
    pub beta_range: Interval,
    pub beta: f64,
    pub alpha_range: Interval,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Minimum consensus gain; present only in partial information.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<f64>,
    pub aux: CertificateAux,
}

impl ParameterCertificate {
    /// Strict-interior membership of a (alpha, beta) pair.
    pub fn accepts(&self, alpha: f64, beta: f64) -> bool {
        self.alpha_range.contains_strict(alpha) && self.beta_range.contains_strict(beta)
    }
}

/// Synthesis outcome: infeasibility is a value, not an error, because some
/// fixtures are legitimately outside a theorem's reach.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "feasible")]
pub enum Synthesis {
    #[serde(rename = "true")]
    Feasible(Box<ParameterCertificate>),
    #[serde(rename = "false")]
    Infeasible { theorem: TheoremTag, reason: String },
}

impl Synthesis {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }

    pub fn certificate(&self) -> Option<&ParameterCertificate> {
        match self {
            Self::Feasible(c) => Some(c),
            Self::Infeasible { .. } => None,
        }
    }

    pub fn expect_feasible(&self, context: &str) -> &ParameterCertificate {
        match self {
            Self::Feasible(c) => c,
            Self::Infeasible { reason, .. } => {
                panic!("expected feasible synthesis for {context}, got: {reason}")
            }
        }
    }
}

/// Requested gain overrides; None picks the default rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct GainChoice {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

pub const DEFAULT_D: f64 = 0.5;

fn check_d(d: f64) -> Result<(), SynthError> {
    if !(0.0 < d && d < 1.0) {
        return Err(SynthError::BadTuning(d));
    }
    Ok(())
}

fn pick_beta(range: Interval) -> f64 {
    if range.hi.is_finite() {
        0.9 * range.lo + 0.1 * range.hi
    } else {
        // unbounded window: any interior point works, take 1 (or clear the
        // lower end when it exceeds 1)
        (2.0 * range.lo).max(1.0)
    }
}

fn pick_alpha(range: Interval) -> f64 {
    if range.hi.is_finite() {
        0.5 * (range.lo + range.hi)
    } else {
        (2.0 * range.lo).max(1.0)
    }
}

fn validate_choice(
    name: &'static str,
    requested: Option<f64>,
    range: Interval,
    default: impl FnOnce(Interval) -> f64,
) -> Result<f64, SynthError> {
    match requested {
        Some(v) if range.contains_strict(v) => Ok(v),
        Some(v) => Err(SynthError::OutsideCertifiedRange { name, value: v, lo: range.lo, hi: range.hi }),
        None => Ok(default(range)),
    }
}

/// Full information, monotone pseudo-gradient: every positive pair of gains
/// is certified.
pub fn synth_full_monotone(choice: GainChoice) -> Result<ParameterCertificate, SynthError> {
    let range = Interval::positive_half_line();
    let beta = validate_choice("beta", choice.beta, range, |_| 1.0)?;
    let alpha = validate_choice("alpha", choice.alpha, range, |_| 1.0)?;
    Ok(ParameterCertificate {
        theorem: TheoremTag::FullMonotone,
        beta_range: range,
        beta,
        alpha_range: range,
        alpha,
        d: None,
        c_min: None,
        aux: CertificateAux::None,
    })
}

/// Which hypomonotonicity margin enters the full-information alpha bound.
///
/// The partial-information bound uses beta - mu/N; its full-information
/// counterpart is printed the same way even though no agent count is in
/// play. The direct substitution N = 1 (margin beta - mu) is the default;
/// the printed form is kept available for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HypoMarginVariant {
    #[default]
    Substituted,
    PrintedOverN(usize),
}

struct ContractionParts {
    l_j: f64,
    kappa_j: f64,
    alpha_max: f64,
    phi_margin: f64,
}

/// Shared core of the contraction certificates: resolvent bounds at lambda,
/// then the alpha window that keeps the 2x2 form Phi positive definite.
fn contraction_alpha_window(
    c: &OperatorConstants,
    d: f64,
    lambda: f64,
    margin: f64,
) -> Option<ContractionParts> {
    let rc = resolvent_constants(c, lambda);
    if !rc.feasible {
        return None;
    }
    let (l_j, kappa_j) = (rc.l_j.unwrap(), rc.kappa_j.unwrap());
    let denom = (1.0 - d) + d * (l_j + l_j * l_j);
    let alpha_max = 4.0 * d * (1.0 - d) * margin * (1.0 - kappa_j) / (denom * denom);
    Some(ContractionParts { l_j, kappa_j, alpha_max, phi_margin: margin })
}

fn phi_matrix(parts: &ContractionParts, d: f64, alpha: f64) -> ([[f64; 2]; 2], f64) {
    let ContractionParts { l_j, kappa_j, phi_margin, .. } = *parts;
    let phi11 = (1.0 - d) * alpha * (1.0 - kappa_j);
    let phi12 = -(alpha + alpha * (l_j * l_j + l_j - 1.0) * d) / 2.0;
    let phi22 = d * phi_margin;
    let det = phi11 * phi22 - phi12 * phi12;
    ([[phi11, phi12], [phi12, phi22]], det)
}

/// Full information with a hypomonotone, inverse-Lipschitz pseudo-gradient.
pub fn synth_full_hypomonotone(
    c: &OperatorConstants,
    d: f64,
    variant: HypoMarginVariant,
    choice: GainChoice,
) -> Result<Synthesis, SynthError> {
    check_d(d)?;
    let (mu, r) = (c.mu_hypo, c.inv_lipschitz);
    let beta_range = if mu == 0.0 {
        Interval::positive_half_line()
    } else {
        Interval::open(mu, 1.0 / (mu * r * r))
    };
    if beta_range.is_empty() {
        return Ok(Synthesis::Infeasible {
            theorem: TheoremTag::FullHypomonotone,
            reason: format!(
                "hypomonotonicity window is empty: mu = {mu} >= 1/(mu R^2) = {}",
                beta_range.hi
            ),
        });
    }
    let beta = validate_choice("beta", choice.beta, beta_range, pick_beta)?;
    let margin = match variant {
        HypoMarginVariant::Substituted => beta - mu,
        HypoMarginVariant::PrintedOverN(n) => beta - mu / n as f64,
    };
    let lambda = 1.0 / beta;
    let parts = match contraction_alpha_window(c, d, lambda, margin) {
        Some(p) => p,
        None => {
            return Ok(Synthesis::Infeasible {
                theorem: TheoremTag::FullHypomonotone,
                reason: format!(
                    "resolvent bounds infeasible at lambda = 1/beta = {lambda} (mu = {mu}, R = {r})"
                ),
            })
        }
    };
    let alpha_range = Interval::open(0.0, parts.alpha_max);
    let alpha = validate_choice("alpha", choice.alpha, alpha_range, pick_alpha)?;
    let (phi, det_phi) = phi_matrix(&parts, d, alpha);
    Ok(Synthesis::Feasible(Box::new(ParameterCertificate {
        theorem: TheoremTag::FullHypomonotone,
        beta_range,
        beta,
        alpha_range,
        alpha,
        d: Some(d),
        c_min: None,
        aux: CertificateAux::Contraction(ContractionAux {
            lambda,
            l_j: parts.l_j,
            kappa_j: parts.kappa_j,
            phi,
            det_phi,
            eta1: None,
            eta2: None,
        }),
    })))
}

/// Partial information, general game: contraction certificate over a
/// connected communication graph, including the consensus-gain floor.
pub fn synth_partial_general(
    c: &OperatorConstants,
    n_agents: usize,
    d: f64,
    graph: &CommGraph,
    choice: GainChoice,
) -> Result<Synthesis, SynthError> {
    check_d(d)?;
    let lambda2 = graph.lambda2()?;
    let n = n_agents as f64;
    let (mu, l_f, r) = (c.mu_hypo, c.lipschitz, c.inv_lipschitz);
    let beta_range = if mu == 0.0 {
        Interval::positive_half_line()
    } else {
        Interval::open(mu / n, 1.0 / (mu * n * r * r))
    };
    if beta_range.is_empty() {
        return Ok(Synthesis::Infeasible {
            theorem: TheoremTag::DistGeneral,
            reason: format!(
                "hypomonotonicity window is empty: mu/N = {} >= 1/(mu N R^2) = {}",
                beta_range.lo, beta_range.hi
            ),
        });
    }
    let beta = validate_choice("beta", choice.beta, beta_range, pick_beta)?;
    let lambda = 1.0 / (beta * n);
    let parts = match contraction_alpha_window(c, d, lambda, beta - mu / n) {
        Some(p) => p,
        None => {
            return Ok(Synthesis::Infeasible {
                theorem: TheoremTag::DistGeneral,
                reason: format!(
                    "resolvent bounds infeasible at lambda = 1/(beta N) = {lambda} (mu = {mu}, R = {r})"
                ),
            })
        }
    };
    let alpha_range = Interval::open(0.0, parts.alpha_max);
    let alpha = validate_choice("alpha", choice.alpha, alpha_range, pick_alpha)?;
    let (phi, det_phi) = phi_matrix(&parts, d, alpha);
    let (l_j, kappa_j) = (parts.l_j, parts.kappa_j);
    let lift = 1.0 + d / n.sqrt();
    let eta1 = alpha * (1.0 - d) * (1.0 - kappa_j) * lift * lift
        + d * (beta - mu / n) * l_j * l_j;
    let eta2 = alpha * (1.0 + (l_j * l_j + l_j - 1.0) * d) * lift * l_j;
    let c_min = ((eta1 + eta2) * l_f * l_f / (4.0 * det_phi) + l_f) / lambda2;
    Ok(Synthesis::Feasible(Box::new(ParameterCertificate {
        theorem: TheoremTag::DistGeneral,
        beta_range,
        beta,
        alpha_range,
        alpha,
        d: Some(d),
        c_min: Some(c_min),
        aux: CertificateAux::Contraction(ContractionAux {
            lambda,
            l_j,
            kappa_j,
            phi,
            det_phi,
            eta1: Some(eta1),
            eta2: Some(eta2),
        }),
    })))
}

/// Closed-form eigenvalue pair of the anchored dynamics restricted to one
/// eigenvalue rho of the coupling matrix: the roots of
/// z^2 + (alpha + beta + rho) z + alpha rho.
pub fn eigenvalue_map(
    rho: Complex<f64>,
    alpha: f64,
    beta: f64,
) -> (Complex<f64>, Complex<f64>) {
    let s = Complex::new(alpha + beta, 0.0) + rho;
    let disc = s * s - rho * 4.0 * alpha;
    let root = disc.sqrt();
    ((-s + root) / 2.0, (-s - root) / 2.0)
}

/// Classification of one coupling eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenvalueCase {
    /// rho = 0: the pair is {0, -(alpha+beta)}; marginally stable.
    Zero { rho: Complex<f64> },
    /// Re rho >= 0, rho != 0: Hurwitz for every positive (alpha, beta).
    NonnegativeReal { rho: Complex<f64> },
    /// Re rho < 0: stabilizable only for beta in a bounded window.
    NegativeReal { rho: Complex<f64>, beta_interval: Interval },
}

impl EigenvalueCase {
    pub fn rho(&self) -> Complex<f64> {
        match *self {
            Self::Zero { rho } | Self::NonnegativeReal { rho } | Self::NegativeReal { rho, .. } => rho,
        }
    }
}

/// Spectral stability analysis of a quadratic game's coupling matrix.
#[derive(Debug, Clone)]
pub struct QuadraticStabilityReport {
    pub cases: Vec<EigenvalueCase>,
    /// Intersection of the per-eigenvalue beta windows; None when empty.
    pub beta_range: Option<Interval>,
    /// Pair of eigenvalues witnessing an empty intersection.
    pub blocking: Option<(Complex<f64>, Complex<f64>)>,
}

const RHO_ZERO_TOL: f64 = 1e-12;

impl QuadraticStabilityReport {
    /// True when no eigenvalue has negative real part, so any positive gains
    /// are admissible.
    pub fn is_unconditional(&self) -> bool {
        self.cases.iter().all(|c| !matches!(c, EigenvalueCase::NegativeReal { .. }))
    }

    /// Largest admissible alpha at a given beta (infinite when
    /// unconditional); None when the beta window itself is empty.
    pub fn alpha_max(&self, beta: f64) -> Option<f64> {
        self.beta_range?;
        let mut am = f64::INFINITY;
        for case in &self.cases {
            if let EigenvalueCase::NegativeReal { rho, .. } = case {
                let (r, k) = (rho.re, rho.im);
                let e = beta + r;
                if e <= 0.0 {
                    return Some(0.0);
                }
                am = am.min(-e + (e * k * k / (-r)).sqrt());
            }
        }
        Some(am)
    }

    pub fn alpha_range(&self, beta: f64) -> Option<Interval> {
        self.alpha_max(beta).map(|hi| Interval::open(0.0, hi))
    }

    pub fn summary(&self) -> SpectralAux {
        let cases = self
            .cases
            .iter()
            .map(|c| {
                let rho = c.rho();
                let (case, beta_interval) = match c {
                    EigenvalueCase::Zero { .. } => ("zero", None),
                    EigenvalueCase::NonnegativeReal { .. } => ("nonnegative", None),
                    EigenvalueCase::NegativeReal { beta_interval, .. } => {
                        ("negative-real", Some(*beta_interval))
                    }
                };
                EigenvalueCaseSummary {
                    re: rho.re,
                    im: rho.im,
                    case: case.to_string(),
                    beta_interval,
                }
            })
            .collect();
        SpectralAux { cases }
    }
}

/// Classify each eigenvalue of the coupling matrix and intersect the
/// admissible beta windows.
pub fn quadratic_stability_intervals(qg: &QuadraticGame) -> QuadraticStabilityReport {
    let eigs = qg.a.clone().complex_eigenvalues();
    let scale = qg.a.norm().max(1.0);
    let mut cases = Vec::with_capacity(eigs.len());
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut lo_witness: Option<Complex<f64>> = None;
    let mut hi_witness: Option<Complex<f64>> = None;
    for &rho in eigs.iter() {
        if rho.norm() <= RHO_ZERO_TOL * scale {
            cases.push(EigenvalueCase::Zero { rho });
        } else if rho.re >= -RHO_ZERO_TOL * scale {
            cases.push(EigenvalueCase::NonnegativeReal { rho });
        } else {
            let (r, k) = (rho.re, rho.im);
            let window = Interval::open(-r, (k * k + r * r) / (-r));
            if window.lo > lo {
                lo = window.lo;
                lo_witness = Some(rho);
            }
            if window.hi < hi {
                hi = window.hi;
                hi_witness = Some(rho);
            }
            cases.push(EigenvalueCase::NegativeReal { rho, beta_interval: window });
        }
    }
    let range = Interval::open(lo, hi);
    if range.is_empty() {
        QuadraticStabilityReport {
            cases,
            beta_range: None,
            blocking: Some((lo_witness.unwrap(), hi_witness.unwrap())),
        }
    } else {
        QuadraticStabilityReport { cases, beta_range: Some(range), blocking: None }
    }
}

fn spectral_certificate(
    theorem: TheoremTag,
    report: &QuadraticStabilityReport,
    choice: GainChoice,
) -> Result<Synthesis, SynthError> {
    let beta_range = match report.beta_range {
        Some(r) => r,
        None => {
            let (a, b) = report.blocking.unwrap();
            return Ok(Synthesis::Infeasible {
                theorem,
                reason: format!(
                    "no admissible beta: eigenvalue {a} forces beta > {}, eigenvalue {b} forces beta < {}",
                    -a.re,
                    (b.im * b.im + b.re * b.re) / (-b.re)
                ),
            });
        }
    };
    let beta = validate_choice("beta", choice.beta, beta_range, pick_beta)?;
    let alpha_range = report.alpha_range(beta).unwrap();
    if alpha_range.is_empty() {
        return Ok(Synthesis::Infeasible {
            theorem,
            reason: format!("alpha window empty at beta = {beta}"),
        });
    }
    let alpha = validate_choice("alpha", choice.alpha, alpha_range, pick_alpha)?;
    Ok(Synthesis::Feasible(Box::new(ParameterCertificate {
        theorem,
        beta_range,
        beta,
        alpha_range,
        alpha,
        d: None,
        c_min: None,
        aux: CertificateAux::Spectral(report.summary()),
    })))
}

/// Full information, quadratic game: exact spectral gain intervals.
pub fn synth_quadratic_full(game: &Game, choice: GainChoice) -> Result<Synthesis, SynthError> {
    let qg = game
        .quadratic_data()
        .ok_or_else(|| GameError::NotQuadratic(game.name().to_string()))?;
    let report = quadratic_stability_intervals(qg);
    spectral_certificate(TheoremTag::FullQuadratic, &report, choice)
}

/// Partial information, quadratic game: spectral intervals on the coupling
/// matrix scaled by 1/N, then a Lyapunov-equation certificate for the
/// consensus-gain floor.
pub fn synth_quadratic_partial(
    game: &Game,
    graph: &CommGraph,
    choice: GainChoice,
) -> Result<Synthesis, SynthError> {
    let qg = game
        .quadratic_data()
        .ok_or_else(|| GameError::NotQuadratic(game.name().to_string()))?;
    let lambda2 = graph.lambda2()?;
    let n_agents = game.n_agents();
    let n = n_agents as f64;
    let scaled = QuadraticGame::new(&qg.a / n, qg.b.clone() / n)?;
    let report = quadratic_stability_intervals(&scaled);
    let synthesis = spectral_certificate(TheoremTag::DistQuadratic, &report, choice)?;
    let mut cert = match synthesis {
        Synthesis::Feasible(c) => *c,
        infeasible => return Ok(infeasible),
    };
    let (alpha, beta) = (cert.alpha, cert.beta);

    // anchored mean dynamics on the scaled coupling matrix
    let dim = game.total_dim();
    let mut m = DMatrix::zeros(2 * dim, 2 * dim);
    m.view_mut((0, 0), (dim, dim)).copy_from(&(-&scaled.a));
    for i in 0..dim {
        m[(i, i)] -= beta;
        m[(i, dim + i)] = beta;
        m[(dim + i, i)] = alpha;
        m[(dim + i, dim + i)] = -alpha;
    }
    let abscissa = linalg::spectral_abscissa(&m);
    if abscissa >= 0.0 {
        return Err(SynthError::NotHurwitz { alpha, beta, abscissa });
    }
    let p = linalg::solve_lyapunov(&m)?;
    let residual = linalg::lyapunov_residual(&m, &p);
    let p_norm = p.clone().symmetric_eigen().eigenvalues.amax();
    let l_a = game.extended_lipschitz()?;

    let c_min = (l_a + (l_a * (p_norm / n.sqrt() + 0.5)).powi(2)) / lambda2;
    let equal_gain = (alpha == beta).then(|| {
        let floor = n / (2.0 * l_a + 4.0 * alpha * n);
        EqualGainBound {
            floor,
            lower_holds: p_norm >= floor - 1e-9,
            printed_upper_holds: p_norm <= floor + 1e-9,
        }
    });
    cert.c_min = Some(c_min);
    cert.aux = CertificateAux::Lyapunov(LyapunovAux {
        p: MatrixData::from_matrix(&p),
        p_norm,
        residual,
        l_a,
        equal_gain,
    });
    Ok(Synthesis::Feasible(Box::new(cert)))
}

/// Dense anchored-dynamics matrix [[-A - beta I, beta I], [alpha I, -alpha I]],
/// used by spectral checks and tests.
pub fn anchored_dynamics_matrix(a: &DMatrix<f64>, alpha: f64, beta: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a));
    for i in 0..n {
        m[(i, i)] -= beta;
        m[(i, n + i)] = beta;
        m[(n + i, i)] = alpha;
        m[(n + i, n + i)] = -alpha;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{build_benchmark, Benchmark};
    use crate::operator_analysis::exact_quadratic_constants;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn g(b: Benchmark) -> Game {
        build_benchmark(b)
    }

    fn constants(b: Benchmark) -> OperatorConstants {
        exact_quadratic_constants(g(b).quadratic_data().unwrap()).unwrap()
    }

    fn ring10() -> CommGraph {
        CommGraph::ring(10).unwrap()
    }

    #[test]
    fn monotone_full_information_accepts_any_positive_gains() {
        let cert = synth_full_monotone(GainChoice::default()).unwrap();
        assert!(cert.accepts(1e3, 1e-3));
        assert!(!cert.accepts(0.0, 1.0));
        assert!(synth_full_monotone(GainChoice { alpha: Some(0.0), beta: None }).is_err());
        let custom = synth_full_monotone(GainChoice { alpha: Some(1e3), beta: Some(1e-3) }).unwrap();
        assert_eq!((custom.alpha, custom.beta), (1e3, 1e-3));
    }

    #[test]
    fn full_hypomonotone_beta_window_for_sine_constants() {
        let c = OperatorConstants::exact(1.0, 6.0, 0.25);
        let s = synth_full_hypomonotone(&c, 0.5, HypoMarginVariant::default(), GainChoice::default())
            .unwrap();
        let cert = s.expect_feasible("sine full-info");
        assert_abs_diff_eq!(cert.beta_range.lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta_range.hi, 16.0, epsilon = 1e-12);
        assert!(cert.beta_range.contains_strict(cert.beta));
        assert!(cert.alpha_range.contains_strict(cert.alpha));
        match &cert.aux {
            CertificateAux::Contraction(aux) => {
                assert!(aux.det_phi > 0.0);
                assert!(aux.phi[0][0] > 0.0 && aux.phi[1][1] > 0.0);
            }
            other => panic!("expected contraction aux, got {other:?}"),
        }
    }

    #[test]
    fn full_hypomonotone_monotone_limit_frees_beta() {
        let c = OperatorConstants::exact(0.0, 1.0, 1.0);
        let s = synth_full_hypomonotone(&c, 0.5, HypoMarginVariant::default(), GainChoice::default())
            .unwrap();
        let cert = s.expect_feasible("monotone limit");
        assert_eq!(cert.beta_range.lo, 0.0);
        assert!(cert.beta_range.hi.is_infinite());
    }

    #[test]
    fn full_hypomonotone_infeasible_when_window_closes() {
        // mu R^2 = 2 >= 1, so (mu, 1/(mu R^2)) = (2, 0.5) is empty
        let c = OperatorConstants::exact(2.0, 3.0, 1.0);
        let s = synth_full_hypomonotone(&c, 0.5, HypoMarginVariant::default(), GainChoice::default())
            .unwrap();
        assert!(!s.is_feasible());
    }

    #[test]
    fn hypo_margin_variants_differ_only_in_margin() {
        let c = OperatorConstants::exact(1.0, 6.0, 0.25);
        let choice = GainChoice { beta: Some(2.5), alpha: None };
        let a = synth_full_hypomonotone(&c, 0.5, HypoMarginVariant::Substituted, choice).unwrap();
        let b =
            synth_full_hypomonotone(&c, 0.5, HypoMarginVariant::PrintedOverN(10), choice).unwrap();
        let (ca, cb) = (a.expect_feasible("a"), b.expect_feasible("b"));
        // margins: (2.5 - 1) vs (2.5 - 0.1); alpha_max scales linearly
        let ratio = cb.alpha_range.hi / ca.alpha_range.hi;
        assert_abs_diff_eq!(ratio, 2.4 / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn partial_general_reproduces_g1_row() {
        let s = synth_partial_general(&constants(Benchmark::G1), 10, 0.5, &ring10(), GainChoice::default())
            .unwrap();
        let cert = s.expect_feasible("g1 dist-general");
        assert_abs_diff_eq!(cert.beta_range.lo, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta_range.hi, 2.6, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta, 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.alpha_range.hi, 0.145597, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.alpha, 0.072799, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.c_min.unwrap(), 1668.560, epsilon = 1e-2);
    }

    #[test]
    fn partial_general_rejects_g2_window() {
        let s = synth_partial_general(&constants(Benchmark::G2), 10, 0.5, &ring10(), GainChoice::default())
            .unwrap();
        match s {
            Synthesis::Infeasible { theorem, reason } => {
                assert_eq!(theorem, TheoremTag::DistGeneral);
                assert!(reason.contains("window is empty"), "{reason}");
            }
            Synthesis::Feasible(_) => panic!("g2 must be infeasible under the contraction certificate"),
        }
    }

    #[test]
    fn partial_general_reproduces_g3_row() {
        let s = synth_partial_general(&constants(Benchmark::G3), 10, 0.5, &ring10(), GainChoice::default())
            .unwrap();
        let cert = s.expect_feasible("g3 dist-general");
        assert_abs_diff_eq!(cert.beta_range.lo, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta_range.hi, 1.3, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta, 0.31, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.alpha_range.hi, 0.064639, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.c_min.unwrap(), 15057.837, epsilon = 1e-2);
    }

    #[test]
    fn partial_general_reproduces_sine_row_from_exact_constants() {
        let c = OperatorConstants::exact(1.0, 6.0, 0.25);
        let s = synth_partial_general(&c, 10, 0.5, &ring10(), GainChoice::default()).unwrap();
        let cert = s.expect_feasible("sine dist-general");
        assert_abs_diff_eq!(cert.beta_range.lo, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta_range.hi, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.beta, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.alpha_range.hi, 0.095699, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.alpha, 0.047849, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.c_min.unwrap(), 3416.226, epsilon = 1e-2);
    }

    #[test]
    fn partial_general_validates_overrides() {
        let r = synth_partial_general(
            &constants(Benchmark::G1),
            10,
            0.5,
            &ring10(),
            GainChoice { beta: Some(5.0), alpha: None },
        );
        assert!(matches!(r, Err(SynthError::OutsideCertifiedRange { name: "beta", .. })));
    }

    #[test]
    fn eigenvalue_map_closed_forms() {
        let (l1, l2) = eigenvalue_map(Complex::new(0.0, 0.0), 1.0, 1.0);
        let mut got = [l1, l2];
        got.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert_abs_diff_eq!(got[0].re, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(got[1].norm(), 0.0, epsilon = 1e-14);

        let (l1, l2) = eigenvalue_map(Complex::new(1.0, 0.0), 1.0, 1.0);
        let mut got = [l1.re, l2.re];
        got.sort_by(f64::total_cmp);
        let s5 = 5.0f64.sqrt();
        assert_abs_diff_eq!(got[0], (-3.0 - s5) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(got[1], (-3.0 + s5) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn eigenvalue_map_matches_dense_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.gen_range(1..5usize);
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let alpha = rng.gen_range(0.1..3.0);
            let beta = rng.gen_range(0.1..3.0);
            let mut mapped = Vec::new();
            for rho in a.clone().complex_eigenvalues().iter() {
                let (l1, l2) = eigenvalue_map(*rho, alpha, beta);
                mapped.push(l1);
                mapped.push(l2);
            }
            let m = anchored_dynamics_matrix(&a, alpha, beta);
            let mut dense: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
            // greedy nearest matching between the two multisets
            for lam in mapped {
                let (idx, dist) = dense
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (i, (e - lam).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(dist <= 1e-9, "unmatched eigenvalue {lam}, nearest {dist:.2e}");
                dense.swap_remove(idx);
            }
        }
    }

    #[test]
    fn zero_eigenvalue_case_keeps_marginal_pair() {
        // coupling with a kernel: the anchored dynamics keeps eigenvalues
        // {0, -(alpha+beta)} on that eigenspace
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let m = anchored_dynamics_matrix(&a, 1.0, 1.0);
        let eigs = m.complex_eigenvalues();
        let has_zero = eigs.iter().any(|e| e.norm() <= 1e-12);
        let has_m2 = eigs.iter().any(|e| (e + Complex::new(2.0, 0.0)).norm() <= 1e-12);
        assert!(has_zero && has_m2);
        let qg = QuadraticGame::new(a, nalgebra::DVector::zeros(2)).unwrap();
        let report = quadratic_stability_intervals(&qg);
        assert!(matches!(report.cases[0], EigenvalueCase::Zero { .. })
            || matches!(report.cases[1], EigenvalueCase::Zero { .. }));
    }

    #[test]
    fn monotone_spectrum_is_unconditional() {
        let harmonic = g(Benchmark::Harmonic);
        let report = quadratic_stability_intervals(harmonic.quadratic_data().unwrap());
        assert!(report.is_unconditional());
        assert_eq!(report.beta_range, Some(Interval::positive_half_line()));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let alpha = rng.gen_range(0.01..5.0);
            let beta = rng.gen_range(0.01..5.0);
            let m = anchored_dynamics_matrix(&harmonic.quadratic_data().unwrap().a, alpha, beta);
            assert!(crate::linalg::spectral_abscissa(&m) <= 1e-10);
        }
    }

    #[test]
    fn negative_real_interval_membership_predicts_hurwitz() {
        // membership in the case-(iii) windows must match the sign of the
        // spectral abscissa of the 2x2 companion block, away from the margin
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut tested = 0;
        while tested < 300 {
            let r = -rng.gen_range(0.05..3.0);
            let k: f64 = rng.gen_range(-6.0..6.0);
            let beta = rng.gen_range(0.01..8.0);
            let alpha = rng.gen_range(0.01..8.0);
            let rho = Complex::new(r, k);
            let beta_win = Interval::open(-r, (k * k + r * r) / (-r));
            let inside = if beta_win.contains_strict(beta) {
                let e = beta + r;
                let amax = -e + (e * k * k / (-r)).sqrt();
                alpha < amax
            } else {
                false
            };
            let (l1, l2) = eigenvalue_map(rho, alpha, beta);
            let (c1, c2) = eigenvalue_map(rho.conj(), alpha, beta);
            let max_re = l1.re.max(l2.re).max(c1.re).max(c2.re);
            if max_re.abs() <= 1e-7 {
                continue; // margin band
            }
            assert_eq!(inside, max_re < 0.0, "rho={rho}, alpha={alpha}, beta={beta}, re={max_re}");
            tested += 1;
        }
    }

    #[test]
    fn quadratic_partial_reproduces_g1_row() {
        let s = synth_quadratic_partial(&g(Benchmark::G1), &ring10(), GainChoice::default()).unwrap();
        let cert = s.expect_feasible("g1 dist-quad");
        assert_abs_diff_eq!(cert.beta_range.lo, 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta_range.hi, 2.6, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta, 0.35, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.alpha_range.hi, 0.540569, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.alpha, 0.270285, epsilon = 1e-6);
        match &cert.aux {
            CertificateAux::Lyapunov(aux) => {
                assert_abs_diff_eq!(aux.p_norm, 13.281493, epsilon = 1e-5);
                assert!(aux.residual <= 1e-8);
                assert_abs_diff_eq!(aux.l_a, 26.0f64.sqrt(), epsilon = 1e-9);
            }
            other => panic!("expected Lyapunov aux, got {other:?}"),
        }
        assert_abs_diff_eq!(cert.c_min.unwrap(), 1516.976, epsilon = 1e-2);
    }

    #[test]
    fn quadratic_partial_reproduces_g2_row() {
        let s = synth_quadratic_partial(&g(Benchmark::G2), &ring10(), GainChoice::default()).unwrap();
        let cert = s.expect_feasible("g2 dist-quad");
        assert_abs_diff_eq!(cert.beta_range.lo, 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta_range.hi, 13.0 / 45.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta, 107.0 / 900.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.alpha_range.hi, 0.065249, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.alpha, 0.032625, epsilon = 1e-6);
        let c_min = cert.c_min.unwrap();
        assert!((c_min - 2_217_243.95).abs() <= 0.5, "c_min = {c_min}");
    }

    #[test]
    fn quadratic_partial_reproduces_g3_row() {
        let s = synth_quadratic_partial(&g(Benchmark::G3), &ring10(), GainChoice::default()).unwrap();
        let cert = s.expect_feasible("g3 dist-quad");
        assert_abs_diff_eq!(cert.beta_range.lo, 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta_range.hi, 2.6, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta, 0.44, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.alpha_range.hi, 0.581954, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.alpha, 0.290977, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.c_min.unwrap(), 7738.704, epsilon = 1e-2);
    }

    #[test]
    fn equal_gain_bound_reports_both_directions() {
        let s = synth_quadratic_partial(
            &g(Benchmark::G1),
            &ring10(),
            GainChoice { alpha: Some(0.35), beta: Some(0.35) },
        )
        .unwrap();
        let cert = s.expect_feasible("g1 equal gains");
        match &cert.aux {
            CertificateAux::Lyapunov(aux) => {
                assert_abs_diff_eq!(aux.p_norm, 18.8586, epsilon = 1e-4);
                let eg = aux.equal_gain.unwrap();
                assert_abs_diff_eq!(eg.floor, 0.413257, epsilon = 1e-6);
                assert!(eg.lower_holds);
                assert!(!eg.printed_upper_holds);
            }
            other => panic!("expected Lyapunov aux, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_full_uses_unscaled_spectrum() {
        let s = synth_quadratic_full(&g(Benchmark::G1), GainChoice::default()).unwrap();
        let cert = s.expect_feasible("g1 full-quad");
        // unscaled spectrum {+-1 +- 5j}: beta window (1, 26)
        assert_abs_diff_eq!(cert.beta_range.lo, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta_range.hi, 26.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.beta, 3.5, epsilon = 1e-9);
        let m = anchored_dynamics_matrix(&g(Benchmark::G1).quadratic_data().unwrap().a, cert.alpha, cert.beta);
        assert!(crate::linalg::spectral_abscissa(&m) < 0.0);
    }

    #[test]
    fn blocking_eigenvalues_identified_on_empty_intersection() {
        // windows (1, 2) and (3, 10/3) cannot intersect
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 1.0, 0.0, 0.0, //
                -1.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, -3.0, 1.0, //
                0.0, 0.0, -1.0, -3.0,
            ],
        );
        let qg = QuadraticGame::new(a, nalgebra::DVector::zeros(4)).unwrap();
        let report = quadratic_stability_intervals(&qg);
        assert!(report.beta_range.is_none());
        let (lo, hi) = report.blocking.unwrap();
        assert_abs_diff_eq!(lo.re, -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi.re, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn certificate_round_trips_through_json() {
        let s = synth_quadratic_partial(&g(Benchmark::G3), &ring10(), GainChoice::default()).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Synthesis = serde_json::from_str(&json).unwrap();
        let (a, b) = (s.expect_feasible("orig"), back.expect_feasible("round trip"));
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.c_min, b.c_min);
        assert!(b.beta_range.hi.is_finite());
    }
}
