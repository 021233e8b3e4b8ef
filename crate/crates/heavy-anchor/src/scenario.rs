//! Scenario configuration, run orchestration, report serialization, and the
//! embedded reference parameter table backing `reproduce-table`.

use crate::diagnostics::{
    attach_lyapunov, detect_convergence, estimate_rate, max_lyapunov_increase, Convergence,
    DiagError, LyapunovContext, RateEstimate,
};
use crate::dynamics::{
    default_step, simulate_gradient_play, simulate_heavy_anchor_distributed,
    simulate_heavy_anchor_full, DynError, DynamicsKind, InfoMode, SimOptions, Trajectory,
};
use crate::game_model::{build_benchmark, Benchmark, Game, GameError, GameKind, QuadraticGameSpec};
use crate::graph::{CommGraph, GraphError};
use crate::operator_analysis::{
    exact_quadratic_constants, game_constants, AnalysisError, OperatorConstants, SampleBox,
};
use crate::param_synth::{
    synth_full_hypomonotone, synth_full_monotone, synth_partial_general, synth_quadratic_full,
    synth_quadratic_partial, GainChoice, HypoMarginVariant, Interval, ParameterCertificate,
    SynthError, Synthesis, TheoremTag, DEFAULT_D,
};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_T_FINAL: f64 = 100.0;
/// Convergence tolerances on the NE residual and the consensus error.
pub const DEFAULT_TOL_RESIDUAL: f64 = 1e-3;
pub const DEFAULT_TOL_CONSENSUS: f64 = 1e-3;
/// Certificates require c strictly above c_min; runs scale it by this margin.
pub const CONSENSUS_MARGIN: f64 = 1.01;
/// Budget and seed of the moduli sampler for games without known constants.
pub const DEFAULT_SAMPLE_PAIRS: usize = 20_000;
pub const DEFAULT_SAMPLE_SEED: u64 = 7;
/// Initial conditions are drawn uniformly per component from this range.
pub const IC_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error(transparent)]
    Diagnostics(#[from] DiagError),
    #[error("no certified parameters for {theorem}: {reason}")]
    Infeasible { theorem: TheoremTag, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ScenarioError {
    /// Process exit code class: 1 usage, 2 infeasible, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Infeasible { .. } => 2,
            Self::Synth(SynthError::NotHurwitz { .. }) => 2,
            _ => 1,
        }
    }
}

/// Game selection: a named fixture or an inline quadratic game. Exactly one
/// of the two forms must be present.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// Row-major coupling matrix of an inline quadratic game.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

impl GameSpec {
    pub fn fixture(name: &str) -> Self {
        Self { fixture: Some(name.to_string()), ..Self::default() }
    }

    pub fn build(&self, scenario_name: &str) -> Result<Game, ScenarioError> {
        match (&self.fixture, &self.dims, &self.a, &self.b) {
            (Some(name), None, None, None) => {
                let b: Benchmark = name.parse()?;
                Ok(build_benchmark(b))
            }
            (None, Some(dims), Some(a), Some(b)) => {
                let spec =
                    QuadraticGameSpec { dims: dims.clone(), a: a.clone(), b: b.clone() };
                Ok(spec.into_game(scenario_name)?)
            }
            _ => Err(ScenarioError::Validation(
                "game must be either a fixture name or an inline quadratic (dims, a, b)"
                    .to_string(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GraphSpec {
    /// ring | complete | weights
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Symmetric nonnegative weight rows for kind = "weights".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

impl GraphSpec {
    pub fn ring(n: usize) -> Self {
        Self { kind: "ring".to_string(), n: Some(n), weights: None }
    }

    pub fn build(&self) -> Result<CommGraph, ScenarioError> {
        match self.kind.as_str() {
            "ring" => {
                let n = self.require_n()?;
                Ok(CommGraph::ring(n)?)
            }
            "complete" => {
                let n = self.require_n()?;
                Ok(CommGraph::complete(n)?)
            }
            "weights" => {
                let rows = self.weights.as_ref().ok_or_else(|| {
                    ScenarioError::Validation(
                        "graph kind `weights` needs a weights matrix".to_string(),
                    )
                })?;
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(ScenarioError::Validation(
                        "graph weights must form a square matrix".to_string(),
                    ));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(CommGraph::new(nalgebra::DMatrix::from_row_slice(n, n, &flat))?)
            }
            other => Err(ScenarioError::Validation(format!(
                "unknown graph kind `{other}` (expected ring|complete|weights)"
            ))),
        }
    }

    fn require_n(&self) -> Result<usize, ScenarioError> {
        self.n.ok_or_else(|| {
            ScenarioError::Validation(format!("graph kind `{}` needs n", self.kind))
        })
    }
}

/// Known operator moduli, for games whose constants should not be sampled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub mu: f64,
    pub lipschitz: f64,
    pub inv_lipschitz: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Directory for CSV/JSON/plot files; default is the working directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Emit gnuplot-ready data files and a plotting script.
    #[serde(default)]
    pub plot: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub info: InfoMode,
    pub dynamics: DynamicsKind,
    /// Governing certificate; defaults per info mode and game kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremTag>,
    /// Equilibrium profile, for diagnostics on games without a linear solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
    /// Verification expectation; defaults to true for anchored dynamics.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect_converged: Option<bool>,
    pub game: GameSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSpec>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let config: Self = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(ScenarioError::Validation(
                "name must be nonempty and filename-safe (alphanumeric, -, _)".to_string(),
            ));
        }
        if self.info == InfoMode::Distributed && self.graph.is_none() {
            return Err(ScenarioError::Validation(
                "partial information requires a [graph] section".to_string(),
            ));
        }
        if self.dynamics == DynamicsKind::GradientPlay {
            if self.info == InfoMode::Distributed {
                return Err(ScenarioError::Validation(
                    "gradient play runs in full information only".to_string(),
                ));
            }
            if self.theorem.is_some() {
                return Err(ScenarioError::Validation(
                    "gradient play carries no convergence certificate; drop `theorem`"
                        .to_string(),
                ));
            }
        }
        if let Some(t) = self.theorem {
            let dist_theorem =
                matches!(t, TheoremTag::DistGeneral | TheoremTag::DistQuadratic);
            if dist_theorem != (self.info == InfoMode::Distributed) {
                return Err(ScenarioError::Validation(format!(
                    "theorem {t} does not match info mode {}",
                    self.info
                )));
            }
        }
        for (name, v) in [
            ("alpha", self.overrides.alpha),
            ("beta", self.overrides.beta),
            ("c", self.overrides.c),
            ("t_final", self.overrides.t_final),
            ("h", self.overrides.h),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ScenarioError::Validation(format!(
                        "override {name} must be positive and finite, got {v}"
                    )));
                }
            }
        }
        if let Some(d) = self.overrides.d {
            if !(d > 0.0 && d < 1.0) {
                return Err(ScenarioError::Validation(format!(
                    "override d must lie in (0, 1), got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Template scenario with every field and built-in default spelled out.
pub fn default_config_toml() -> String {
    format!(
        r#"# Scenario file. Exactly one game form: a fixture name
# (harmonic|g1|g2|g3|sine) or an inline quadratic (dims, a, b).

name = "example"
# full | partial
info = "full"
# gradient | anchor
dynamics = "anchor"
# Certificate tag (full-mono|full-hypo|full-quad|dist-general|dist-quad).
# Default: full-quad / dist-quad for quadratic games, full-hypo /
# dist-general otherwise.
#theorem = "full-quad"
# Equilibrium profile for diagnostics; quadratic games solve it directly.
#equilibrium = [0.0, 0.0]
# Verification expectation; defaults to true for anchored dynamics,
# false for gradient play.
#expect_converged = true

[game]
fixture = "harmonic"
#dims = [1, 1]
#a = [0.0, 1.0, -1.0, 0.0]
#b = [0.0, 0.0]

# Required when info = "partial".
#[graph]
#kind = "ring"   # ring | complete | weights
#n = 10

# Known operator moduli; without them nonlinear games are sampled with
# {pairs} pairs at seed {sample_seed}.
#[constants]
#mu = 1.0
#lipschitz = 6.0
#inv_lipschitz = 0.25

[overrides]
# Gains default to the synthesized certificate values; overrides must stay
# inside the certified ranges unless --force is given.
#alpha = 1.0
#beta = 1.0
# Consensus gain; default {margin} * c_min.
#c = 2000.0
# Certificate tuning, in (0, 1); default {d}.
#d = 0.5
t_final = {t_final}
# Step; default min(0.01, 1 / (L_F + alpha + beta + c * lambda_max)).
#h = 0.01
seed = {seed}

[outputs]
# Output directory; default is the working directory.
#dir = "runs"
plot = false

# Built-in tolerances: NE residual {tol_res:e}, consensus error {tol_cons:e}.
"#,
        pairs = DEFAULT_SAMPLE_PAIRS,
        sample_seed = DEFAULT_SAMPLE_SEED,
        margin = CONSENSUS_MARGIN,
        d = DEFAULT_D,
        t_final = DEFAULT_T_FINAL,
        seed = DEFAULT_SEED,
        tol_res = DEFAULT_TOL_RESIDUAL,
        tol_cons = DEFAULT_TOL_CONSENSUS,
    )
}

/// Resolved scenario: game, graph, and operator constants built once.
pub struct ScenarioContext {
    pub config: ScenarioConfig,
    pub game: Game,
    pub graph: Option<CommGraph>,
    pub constants: OperatorConstants,
    pub theorem: Option<TheoremTag>,
    pub equilibrium: Option<DVector<f64>>,
}

pub fn build_context(config: ScenarioConfig) -> Result<ScenarioContext, ScenarioError> {
    config.validate()?;
    let game = config.game.build(&config.name)?;
    let graph = match &config.graph {
        Some(spec) => {
            let g = spec.build()?;
            if g.n_nodes() != game.n_agents() {
                return Err(ScenarioError::Validation(format!(
                    "graph has {} nodes but the game has {} agents",
                    g.n_nodes(),
                    game.n_agents()
                )));
            }
            Some(g)
        }
        None => None,
    };
    let constants = match &config.constants {
        Some(c) => {
            let oc = OperatorConstants::exact(c.mu, c.lipschitz, c.inv_lipschitz);
            if !oc.is_consistent() {
                return Err(ScenarioError::Validation(format!(
                    "declared moduli are inconsistent: L*R = {} < 1",
                    c.lipschitz * c.inv_lipschitz
                )));
            }
            oc
        }
        None => game_constants(
            &game,
            SampleBox::default(),
            DEFAULT_SAMPLE_PAIRS,
            DEFAULT_SAMPLE_SEED,
        )?,
    };
    let theorem = match config.dynamics {
        DynamicsKind::GradientPlay => None,
        DynamicsKind::HeavyAnchor => Some(config.theorem.unwrap_or_else(|| {
            let quadratic = matches!(game.kind(), GameKind::Quadratic(_));
            match (config.info, quadratic) {
                (InfoMode::Full, true) => TheoremTag::FullQuadratic,
                (InfoMode::Full, false) => TheoremTag::FullHypomonotone,
                (InfoMode::Distributed, true) => TheoremTag::DistQuadratic,
                (InfoMode::Distributed, false) => TheoremTag::DistGeneral,
            }
        })),
    };
    let equilibrium = match &config.equilibrium {
        Some(v) => {
            if v.len() != game.total_dim() {
                return Err(ScenarioError::Validation(format!(
                    "equilibrium has {} entries, the game needs {}",
                    v.len(),
                    game.total_dim()
                )));
            }
            Some(DVector::from_column_slice(v))
        }
        None => match game.kind() {
            GameKind::Quadratic(_) => Some(game.solve_quadratic_ne()?),
            GameKind::Nonlinear(_) => None,
        },
    };
    Ok(ScenarioContext { config, game, graph, constants, theorem, equilibrium })
}

/// Run the synthesis the scenario's theorem calls for, feeding any gain
/// overrides in as the chosen values.
pub fn run_synthesis(ctx: &ScenarioContext) -> Result<Synthesis, ScenarioError> {
    let theorem = ctx.theorem.ok_or_else(|| {
        ScenarioError::Validation("gradient play has nothing to synthesize".to_string())
    })?;
    let choice =
        GainChoice { alpha: ctx.config.overrides.alpha, beta: ctx.config.overrides.beta };
    let d = ctx.config.overrides.d.unwrap_or(DEFAULT_D);
    let synthesis = match theorem {
        TheoremTag::FullMonotone => Synthesis::Feasible(Box::new(synth_full_monotone(choice)?)),
        TheoremTag::FullHypomonotone => synth_full_hypomonotone(
            &ctx.constants,
            d,
            HypoMarginVariant::default(),
            choice,
        )?,
        TheoremTag::FullQuadratic => synth_quadratic_full(&ctx.game, choice)?,
        TheoremTag::DistGeneral => {
            let graph = require_graph(ctx)?;
            synth_partial_general(&ctx.constants, ctx.game.n_agents(), d, graph, choice)?
        }
        TheoremTag::DistQuadratic => {
            let graph = require_graph(ctx)?;
            synth_quadratic_partial(&ctx.game, graph, choice)?
        }
    };
    Ok(synthesis)
}

fn require_graph(ctx: &ScenarioContext) -> Result<&CommGraph, ScenarioError> {
    ctx.graph.as_ref().ok_or_else(|| {
        ScenarioError::Validation("partial information requires a [graph] section".to_string())
    })
}

/// A run ready to integrate: effective gains, horizon, step, and seed.
pub struct PreparedRun<'a> {
    pub ctx: &'a ScenarioContext,
    pub certificate: Option<Box<ParameterCertificate>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
    pub t_final: f64,
    pub h: f64,
    pub seed: u64,
    pub expect_converged: bool,
}

/// Resolve gains and integration knobs. `force` skips synthesis entirely and
/// takes the overridden gains as given, without a certificate.
pub fn prepare(ctx: &ScenarioContext, force: bool) -> Result<PreparedRun<'_>, ScenarioError> {
    let over = &ctx.config.overrides;
    let (certificate, alpha, beta, c) = match ctx.config.dynamics {
        DynamicsKind::GradientPlay => (None, None, None, None),
        DynamicsKind::HeavyAnchor if force => {
            let (Some(alpha), Some(beta)) = (over.alpha, over.beta) else {
                return Err(ScenarioError::Validation(
                    "--force runs take the gains as given; set alpha and beta overrides"
                        .to_string(),
                ));
            };
            let c = match ctx.config.info {
                InfoMode::Distributed => Some(over.c.ok_or_else(|| {
                    ScenarioError::Validation(
                        "--force distributed runs need a c override".to_string(),
                    )
                })?),
                InfoMode::Full => None,
            };
            (None, Some(alpha), Some(beta), c)
        }
        DynamicsKind::HeavyAnchor => {
            let synthesis = run_synthesis(ctx)?;
            let cert = match synthesis {
                Synthesis::Feasible(cert) => cert,
                Synthesis::Infeasible { theorem, reason } => {
                    return Err(ScenarioError::Infeasible { theorem, reason })
                }
            };
            let c = match ctx.config.info {
                InfoMode::Distributed => {
                    let c_min = cert.c_min.expect("partial certificates carry c_min");
                    let c = over.c.unwrap_or(CONSENSUS_MARGIN * c_min);
                    if c < c_min {
                        return Err(ScenarioError::Validation(format!(
                            "c override {c} is below the certified minimum {c_min}"
                        )));
                    }
                    Some(c)
                }
                InfoMode::Full => None,
            };
            let (alpha, beta) = (cert.alpha, cert.beta);
            (Some(cert), Some(alpha), Some(beta), c)
        }
    };
    let c_lambda = match (&ctx.graph, c) {
        (Some(g), Some(c)) => c * g.lambda_max(),
        _ => 0.0,
    };
    let h = match over.h {
        Some(h) => h,
        None => default_step(
            ctx.constants.lipschitz,
            alpha.unwrap_or(0.0),
            beta.unwrap_or(0.0),
            c_lambda,
        ),
    };
    Ok(PreparedRun {
        ctx,
        certificate,
        alpha,
        beta,
        c,
        t_final: over.t_final.unwrap_or(DEFAULT_T_FINAL),
        h,
        seed: over.seed.unwrap_or(DEFAULT_SEED),
        expect_converged: ctx
            .config
            .expect_converged
            .unwrap_or(ctx.config.dynamics == DynamicsKind::HeavyAnchor),
    })
}

/// Uniform initial conditions on [lo, hi]^dim: action profile first, then
/// the anchor, from one seeded stream.
pub fn seeded_initial_conditions(dim: usize, seed: u64) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = IC_RANGE;
    let x0 = DVector::from_fn(dim, |_, _| rng.gen_range(lo..hi));
    let r0 = DVector::from_fn(dim, |_, _| rng.gen_range(lo..hi));
    (x0, r0)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunParameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<f64>,
    pub t_final: f64,
    pub h: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub game: String,
    pub info: InfoMode,
    pub dynamics: DynamicsKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremTag>,
    pub parameters: RunParameters,
    pub final_residual: f64,
    pub final_consensus_error: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_crossing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateEstimate>,
    pub wall_time: f64,
}

pub struct RunArtifacts {
    pub trajectory: Trajectory,
    pub verdict: Convergence,
    pub rate: Option<RateEstimate>,
    pub summary: RunSummary,
}

/// Integrate the prepared run, fill Lyapunov diagnostics where the governing
/// certificate and equilibrium are known, and assemble the summary.
pub fn execute(run: &PreparedRun<'_>) -> Result<RunArtifacts, ScenarioError> {
    let ctx = run.ctx;
    let opts = SimOptions { stride: None, seed: Some(run.seed) };
    let mut trajectory = match (ctx.config.dynamics, ctx.config.info) {
        (DynamicsKind::GradientPlay, InfoMode::Full) => {
            let (x0, _) = seeded_initial_conditions(ctx.game.total_dim(), run.seed);
            simulate_gradient_play(&ctx.game, &x0, run.t_final, run.h, &opts)?
        }
        (DynamicsKind::GradientPlay, InfoMode::Distributed) => {
            return Err(ScenarioError::Validation(
                "gradient play runs in full information only".to_string(),
            ))
        }
        (DynamicsKind::HeavyAnchor, InfoMode::Full) => {
            let (x0, r0) = seeded_initial_conditions(ctx.game.total_dim(), run.seed);
            simulate_heavy_anchor_full(
                &ctx.game,
                &x0,
                &r0,
                run.alpha.expect("anchored runs resolve alpha"),
                run.beta.expect("anchored runs resolve beta"),
                run.t_final,
                run.h,
                &opts,
            )?
        }
        (DynamicsKind::HeavyAnchor, InfoMode::Distributed) => {
            let graph = require_graph(ctx)?;
            let dim = ctx.game.total_dim() * ctx.game.n_agents();
            let (x0, r0) = seeded_initial_conditions(dim, run.seed);
            simulate_heavy_anchor_distributed(
                &ctx.game,
                graph,
                &x0,
                &r0,
                run.alpha.expect("anchored runs resolve alpha"),
                run.beta.expect("anchored runs resolve beta"),
                run.c.expect("distributed runs resolve c"),
                run.t_final,
                run.h,
                &opts,
            )?
        }
    };
    if let (Some(cert), Some(eq)) = (&run.certificate, &ctx.equilibrium) {
        let lctx = LyapunovContext {
            game: &ctx.game,
            constants: &ctx.constants,
            certificate: cert,
            equilibrium: eq,
        };
        attach_lyapunov(&mut trajectory, &lctx)?;
    }
    let verdict =
        detect_convergence(&trajectory, DEFAULT_TOL_RESIDUAL, DEFAULT_TOL_CONSENSUS)?;
    let rate = match (&ctx.equilibrium, verdict.converged) {
        (Some(eq), true) => estimate_rate(&trajectory, eq).ok(),
        _ => None,
    };
    let summary = RunSummary {
        scenario: ctx.config.name.clone(),
        game: ctx.game.name().to_string(),
        info: ctx.config.info,
        dynamics: ctx.config.dynamics,
        theorem: ctx.theorem,
        parameters: RunParameters {
            alpha: run.alpha,
            beta: run.beta,
            c: run.c,
            d: run.certificate.as_ref().and_then(|c| c.d),
            c_min: run.certificate.as_ref().and_then(|c| c.c_min),
            t_final: run.t_final,
            h: run.h,
            seed: run.seed,
        },
        final_residual: verdict.final_residual,
        final_consensus_error: verdict.final_consensus_error,
        converged: verdict.converged,
        first_crossing: verdict.first_crossing,
        diverged_at: trajectory.meta.diverged_at,
        rate: rate.clone(),
        wall_time: trajectory.meta.wall_time,
    };
    Ok(RunArtifacts { trajectory, verdict, rate, summary })
}

/// CSV columns: time, the played action profile x_1..x_n (own actions in
/// partial information), then ne_residual, consensus_error, lyapunov.
pub fn write_trajectory_csv<W: IoWrite>(
    traj: &Trajectory,
    out: W,
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.action_dim();
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(["ne_residual", "consensus_error", "lyapunov"].map(String::from));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut rec = Vec::with_capacity(n + 4);
        rec.push(format!("{}", traj.times[i]));
        let profile = traj.selected_profile(i);
        rec.extend(profile.iter().map(|v| format!("{v}")));
        let d = &traj.diagnostics[i];
        rec.push(format!("{}", d.ne_residual));
        rec.push(format!("{}", d.consensus_error));
        rec.push(d.lyapunov.map(|v| format!("{v}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv_path(traj: &Trajectory, path: &Path) -> Result<(), ScenarioError> {
    let file = std::fs::File::create(path)?;
    write_trajectory_csv(traj, std::io::BufWriter::new(file))
}

pub fn write_summary_json(summary: &RunSummary, path: &Path) -> Result<(), ScenarioError> {
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Gnuplot-ready data: one two-column (t, value) file per diagnostic series,
/// plus a script that plots whichever series exist.
pub fn write_plot_data(
    traj: &Trajectory,
    dir: &Path,
    name: &str,
) -> Result<Vec<PathBuf>, ScenarioError> {
    let mut written = Vec::new();
    let series: [(&str, Box<dyn Fn(&crate::diagnostics::DiagnosticSample) -> Option<f64>>); 3] = [
        ("residual", Box::new(|d| Some(d.ne_residual))),
        ("consensus", Box::new(|d| Some(d.consensus_error))),
        ("lyapunov", Box::new(|d| d.lyapunov)),
    ];
    let mut plotted = Vec::new();
    for (tag, extract) in &series {
        if traj.diagnostics.iter().all(|d| extract(d).is_none()) {
            continue;
        }
        if *tag == "consensus" && traj.mode == InfoMode::Full {
            continue;
        }
        let path = dir.join(format!("{name}-{tag}.dat"));
        let mut body = String::new();
        for d in &traj.diagnostics {
            if let Some(v) = extract(d) {
                body.push_str(&format!("{} {}\n", d.t, v));
            }
        }
        std::fs::write(&path, body)?;
        plotted.push(*tag);
        written.push(path);
    }
    let script = dir.join(format!("{name}.gp"));
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output \"{name}.png\"\n"));
    s.push_str("set logscale y\nset xlabel \"t\"\nset format y \"%.0e\"\n");
    let plots: Vec<String> = plotted
        .iter()
        .map(|tag| format!("\"{name}-{tag}.dat\" using 1:2 with lines title \"{tag}\""))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    std::fs::write(&script, s)?;
    written.push(script);
    Ok(written)
}

/// One row of the parameter table: synthesized tuning for a game under one
/// certificate, or its infeasibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub game: String,
    pub theorem: TheoremTag,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<f64>,
}

impl TableRow {
    pub fn from_synthesis(game: &str, synthesis: &Synthesis) -> Self {
        match synthesis {
            Synthesis::Feasible(cert) => Self {
                game: game.to_string(),
                theorem: cert.theorem,
                feasible: true,
                beta_min: Some(cert.beta_range.lo),
                beta_max: cert.beta_range.finite_hi(),
                beta: Some(cert.beta),
                d: cert.d,
                alpha_min: Some(cert.alpha_range.lo),
                alpha_max: cert.alpha_range.finite_hi(),
                alpha: Some(cert.alpha),
                c_min: cert.c_min,
            },
            Synthesis::Infeasible { theorem, .. } => Self {
                game: game.to_string(),
                theorem: *theorem,
                feasible: false,
                beta_min: None,
                beta_max: None,
                beta: None,
                d: None,
                alpha_min: None,
                alpha_max: None,
                alpha: None,
                c_min: None,
            },
        }
    }

    fn cells(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("beta_min", self.beta_min),
            ("beta_max", self.beta_max),
            ("beta", self.beta),
            ("d", self.d),
            ("alpha_min", self.alpha_min),
            ("alpha_max", self.alpha_max),
            ("alpha", self.alpha),
            ("c_min", self.c_min),
        ]
    }
}

/// Published parameter table for the benchmark games on the 10-ring, plus
/// the nonquadratic example, at the printed precision.
pub fn reference_table() -> Vec<TableRow> {
    let row = |game: &str,
               theorem: TheoremTag,
               cells: Option<(f64, f64, f64, Option<f64>, f64, f64, f64)>| {
        match cells {
            Some((beta_min, beta_max, beta, d, alpha_max, alpha, c_min)) => TableRow {
                game: game.to_string(),
                theorem,
                feasible: true,
                beta_min: Some(beta_min),
                beta_max: Some(beta_max),
                beta: Some(beta),
                d,
                alpha_min: Some(0.0),
                alpha_max: Some(alpha_max),
                alpha: Some(alpha),
                c_min: Some(c_min),
            },
            None => TableRow {
                game: game.to_string(),
                theorem,
                feasible: false,
                beta_min: None,
                beta_max: None,
                beta: None,
                d: None,
                alpha_min: None,
                alpha_max: None,
                alpha: None,
                c_min: None,
            },
        }
    };
    vec![
        row(
            "g1",
            TheoremTag::DistQuadratic,
            Some((0.1, 2.6, 0.35, None, 0.540, 0.270, 1517.0)),
        ),
        row(
            "g1",
            TheoremTag::DistGeneral,
            Some((0.1, 2.6, 0.35, Some(0.5), 0.145, 0.072, 1668.0)),
        ),
        row(
            "g2",
            TheoremTag::DistQuadratic,
            Some((0.1, 13.0 / 45.0, 107.0 / 900.0, None, 0.065, 0.032, 2.22e6)),
        ),
        row("g2", TheoremTag::DistGeneral, None),
        row(
            "g3",
            TheoremTag::DistQuadratic,
            Some((0.2, 2.6, 0.44, None, 0.581, 0.290, 7739.0)),
        ),
        row(
            "g3",
            TheoremTag::DistGeneral,
            Some((0.2, 1.3, 0.31, Some(0.5), 0.064, 0.032, 15057.0)),
        ),
        row(
            "sine",
            TheoremTag::DistGeneral,
            Some((0.1, 1.6, 0.25, Some(0.5), 0.095, 0.0478, 3417.0)),
        ),
    ]
}

/// Synthesize every reference-table row from scratch on the 10-ring. The
/// nonquadratic fixture's moduli are known in closed form and used directly;
/// sampling them is exercised separately.
pub fn computed_table() -> Result<Vec<TableRow>, ScenarioError> {
    let graph = CommGraph::ring(10)?;
    let mut rows = Vec::new();
    for name in ["g1", "g2", "g3"] {
        let game = build_benchmark(name.parse()?);
        let quad = synth_quadratic_partial(&game, &graph, GainChoice::default())?;
        rows.push(TableRow::from_synthesis(name, &quad));
        let constants = exact_quadratic_constants(
            game.quadratic_data().expect("benchmark games are quadratic"),
        )?;
        let general = synth_partial_general(
            &constants,
            game.n_agents(),
            DEFAULT_D,
            &graph,
            GainChoice::default(),
        )?;
        rows.push(TableRow::from_synthesis(name, &general));
    }
    let sine_constants = OperatorConstants::exact(1.0, 6.0, 0.25);
    let sine = synth_partial_general(&sine_constants, 10, DEFAULT_D, &graph, GainChoice::default())?;
    rows.push(TableRow::from_synthesis("sine", &sine));
    // keep the published column order: per game, the quadratic certificate
    // first, then the general one
    let order = |r: &TableRow| {
        let g = match r.game.as_str() {
            "g1" => 0,
            "g2" => 1,
            "g3" => 2,
            _ => 3,
        };
        let t = match r.theorem {
            TheoremTag::DistQuadratic => 0,
            _ => 1,
        };
        (g, t)
    };
    rows.sort_by_key(order);
    Ok(rows)
}

/// Per-cell tolerance absorbing the published 3-significant-figure rounding:
/// relative 2% or absolute 0.005, whichever is looser.
pub fn cell_within_tolerance(computed: f64, reference: f64) -> bool {
    (computed - reference).abs() <= (0.02 * reference.abs()).max(0.005)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellDiff {
    pub cell: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub computed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowDiff {
    pub game: String,
    pub theorem: TheoremTag,
    pub feasibility_match: bool,
    pub cells: Vec<CellDiff>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableComparison {
    pub rows: Vec<RowDiff>,
    pub all_within: bool,
}

pub fn compare_tables(computed: &[TableRow], reference: &[TableRow]) -> TableComparison {
    let mut rows = Vec::new();
    for r in reference {
        let found = computed
            .iter()
            .find(|c| c.game == r.game && c.theorem == r.theorem);
        let Some(c) = found else {
            rows.push(RowDiff {
                game: r.game.clone(),
                theorem: r.theorem,
                feasibility_match: false,
                cells: Vec::new(),
                ok: false,
            });
            continue;
        };
        let feasibility_match = c.feasible == r.feasible;
        let mut cells = Vec::new();
        let mut ok = feasibility_match;
        for ((name, cv), (_, rv)) in c.cells().into_iter().zip(r.cells()) {
            let cell_ok = match (cv, rv) {
                (Some(cv), Some(rv)) => cell_within_tolerance(cv, rv),
                (None, None) => true,
                _ => false,
            };
            ok &= cell_ok;
            cells.push(CellDiff { cell: name, computed: cv, reference: rv, ok: cell_ok });
        }
        rows.push(RowDiff { game: r.game.clone(), theorem: r.theorem, feasibility_match, cells, ok });
    }
    let all_within = rows.iter().all(|r| r.ok);
    TableComparison { rows, all_within }
}

/// Plain-text rendering of a table for terminal output.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<6} {:<13} {:>9} {:>9} {:>9} {:>5} {:>9} {:>9} {:>9} {:>12}\n",
        "game", "theorem", "beta_min", "beta_max", "beta", "d", "alpha_min", "alpha_max",
        "alpha", "c_min"
    ));
    let fmt = |v: Option<f64>, width: usize, prec: usize| match v {
        Some(v) => format!("{v:>width$.prec$}"),
        None => format!("{:>width$}", "-"),
    };
    for r in rows {
        if !r.feasible {
            s.push_str(&format!("{:<6} {:<13} infeasible\n", r.game, r.theorem.to_string()));
            continue;
        }
        s.push_str(&format!(
            "{:<6} {:<13} {} {} {} {} {} {} {} {}\n",
            r.game,
            r.theorem.to_string(),
            fmt(r.beta_min, 9, 4),
            fmt(r.beta_max, 9, 4),
            fmt(r.beta, 9, 4),
            fmt(r.d, 5, 2),
            fmt(r.alpha_min, 9, 4),
            fmt(r.alpha_max, 9, 4),
            fmt(r.alpha, 9, 4),
            fmt(r.c_min, 12, 1),
        ));
    }
    s
}

/// Summary of constants analysis: moduli plus the resolvent feasibility
/// window in lambda.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub game: String,
    pub constants: OperatorConstants,
    /// Feasible resolvent parameters: mu R^2 <= lambda < 1/mu.
    pub lambda_window: Interval,
    pub window_nonempty: bool,
    pub moduli_consistent: bool,
}

pub fn analyze(ctx: &ScenarioContext) -> AnalyzeReport {
    let c = &ctx.constants;
    let (mu, r) = (c.mu_hypo, c.inv_lipschitz);
    let lo = mu * r * r;
    let window = if mu > 0.0 {
        Interval::open(lo, 1.0 / mu)
    } else {
        Interval::positive_half_line_from(lo)
    };
    AnalyzeReport {
        game: ctx.game.name().to_string(),
        constants: *c,
        window_nonempty: mu == 0.0 || lo < 1.0 / mu,
        lambda_window: window,
        moduli_consistent: c.is_consistent(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

/// Post-run property checks: completed integration, the expected convergence
/// verdict, and Lyapunov monotonicity when a certificate governs the run.
pub fn verify_run(run: &PreparedRun<'_>, artifacts: &RunArtifacts) -> VerifyReport {
    let mut checks = Vec::new();
    let traj = &artifacts.trajectory;
    checks.push(VerifyCheck {
        name: "integration-completed",
        passed: traj.meta.diverged_at.is_none(),
        detail: match traj.meta.diverged_at {
            Some(t) => format!("state left bounds at t = {t}"),
            None => format!("reached t = {}", traj.final_time()),
        },
    });
    let verdict = &artifacts.verdict;
    if run.expect_converged {
        checks.push(VerifyCheck {
            name: "converged-to-tolerance",
            passed: verdict.converged,
            detail: format!(
                "final residual {:.3e} (tol {:.0e}), consensus {:.3e} (tol {:.0e})",
                verdict.final_residual,
                DEFAULT_TOL_RESIDUAL,
                verdict.final_consensus_error,
                DEFAULT_TOL_CONSENSUS
            ),
        });
    } else {
        checks.push(VerifyCheck {
            name: "non-convergence-confirmed",
            passed: !verdict.converged,
            detail: format!("final residual {:.3e}", verdict.final_residual),
        });
    }
    let lyapunov: Vec<f64> =
        traj.diagnostics.iter().filter_map(|d| d.lyapunov).collect();
    if lyapunov.len() == traj.len() && !lyapunov.is_empty() {
        let slack = 1e-8 * (1.0 + lyapunov[0]);
        let worst = max_lyapunov_increase(&lyapunov);
        checks.push(VerifyCheck {
            name: "lyapunov-non-increasing",
            passed: worst <= slack,
            detail: format!("largest per-sample increase {worst:.3e} (slack {slack:.3e})"),
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { scenario: run.ctx.config.name.clone(), checks, passed }
}
