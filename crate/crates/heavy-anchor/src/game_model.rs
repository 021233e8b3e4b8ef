//! Game descriptions: costs enter only through their pseudo-gradient.
//!
//! A game couples N agents, agent i owning an action block of dimension n_i.
//! The pseudo-gradient F(x) stacks each agent's partial gradient of its own
//! cost at the joint action x. In the partial-information setting each agent
//! carries an estimate of the whole joint action; the extended pseudo-gradient
//! evaluates agent i's partial gradient at agent i's own estimate, and the
//! selection structure maps between stacked estimates and the action space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch { expected: usize, got: usize, context: &'static str },
    #[error("coupling matrix is singular (rank {rank} of {dim}); no unique equilibrium")]
    SingularCoupling { rank: usize, dim: usize },
    #[error("equilibrium residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualExceeded { residual: f64, tolerance: f64 },
    #[error("operation requires a quadratic game, `{0}` is not")]
    NotQuadratic(String),
    #[error("unknown benchmark `{0}` (expected harmonic|g1|g2|g3|sine)")]
    UnknownBenchmark(String),
    #[error("agent dimensions must be nonzero and nonempty")]
    BadDims,
}

/// Quadratic game data: pseudo-gradient F(x) = A x + b.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QuadraticGame {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GameError> {
        if a.nrows() != a.ncols() {
            return Err(GameError::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
                context: "coupling matrix must be square",
            });
        }
        if b.len() != a.nrows() {
            return Err(GameError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
                context: "offset length vs coupling matrix",
            });
        }
        Ok(Self { a, b })
    }
}

/// Serialized form of a quadratic game: row-major A, agent dims, offset b.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticGameSpec {
    pub dims: Vec<usize>,
    /// Row-major n x n coupling matrix, n = sum of dims.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl QuadraticGameSpec {
    pub fn into_game(self, name: &str) -> Result<Game, GameError> {
        let n: usize = self.dims.iter().sum();
        if self.a.len() != n * n {
            return Err(GameError::DimensionMismatch {
                expected: n * n,
                got: self.a.len(),
                context: "row-major coupling matrix length",
            });
        }
        if self.b.len() != n {
            return Err(GameError::DimensionMismatch {
                expected: n,
                got: self.b.len(),
                context: "offset length",
            });
        }
        let a = DMatrix::from_row_slice(n, n, &self.a);
        Game::quadratic(name, self.dims, QuadraticGame::new(a, DVector::from_vec(self.b))?)
    }
}

type PartialGradientFn = dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync;

/// Nonlinear game given by per-agent partial-gradient callbacks.
#[derive(Clone)]
pub struct NonlinearGame {
    /// (agent index, joint profile of length n, output block of length n_i).
    pub partial_gradient: Arc<PartialGradientFn>,
}

impl fmt::Debug for NonlinearGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearGame").finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum GameKind {
    Quadratic(QuadraticGame),
    Nonlinear(NonlinearGame),
}

/// An N-agent game with pseudo-gradient access.
#[derive(Debug, Clone)]
pub struct Game {
    name: String,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    kind: GameKind,
}

impl Game {
    pub fn quadratic(
        name: &str,
        dims: Vec<usize>,
        qg: QuadraticGame,
    ) -> Result<Self, GameError> {
        let n: usize = dims.iter().sum();
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(GameError::BadDims);
        }
        if qg.a.nrows() != n {
            return Err(GameError::DimensionMismatch {
                expected: n,
                got: qg.a.nrows(),
                context: "coupling matrix vs agent dims",
            });
        }
        Ok(Self { name: name.to_string(), dims: dims.clone(), offsets: offsets_of(&dims), kind: GameKind::Quadratic(qg) })
    }

    pub fn nonlinear(
        name: &str,
        dims: Vec<usize>,
        partial_gradient: Arc<PartialGradientFn>,
    ) -> Result<Self, GameError> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(GameError::BadDims);
        }
        Ok(Self {
            name: name.to_string(),
            offsets: offsets_of(&dims),
            dims,
            kind: GameKind::Nonlinear(NonlinearGame { partial_gradient }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total action dimension n = sum of n_i.
    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap() + self.dims.last().unwrap()
    }

    /// Start offset of agent i's block inside the action vector.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn kind(&self) -> &GameKind {
        &self.kind
    }

    pub fn quadratic_data(&self) -> Option<&QuadraticGame> {
        match &self.kind {
            GameKind::Quadratic(qg) => Some(qg),
            GameKind::Nonlinear(_) => None,
        }
    }

    pub fn selection(&self) -> SelectionStructure {
        SelectionStructure::new(&self.dims)
    }

    /// F(x) = col_i grad_{x_i} J_i(x) at the joint action x.
    pub fn eval_pseudo_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.total_dim());
        self.eval_pseudo_gradient_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn eval_pseudo_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.total_dim();
        assert_eq!(x.len(), n, "joint action length");
        assert_eq!(out.len(), n, "pseudo-gradient output length");
        match &self.kind {
            GameKind::Quadratic(qg) => {
                mat_vec_into(&qg.a, x, out);
                for (o, b) in out.iter_mut().zip(qg.b.iter()) {
                    *o += b;
                }
            }
            GameKind::Nonlinear(nl) => {
                for i in 0..self.n_agents() {
                    let off = self.offsets[i];
                    (nl.partial_gradient)(i, x, &mut out[off..off + self.dims[i]]);
                }
            }
        }
    }

    /// Extended pseudo-gradient: agent i's partial gradient at agent i's own
    /// estimate. Input is the stacked estimates (length N*n), output length n.
    pub fn eval_extended_pseudo_gradient(&self, estimates: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.total_dim());
        self.eval_extended_pseudo_gradient_into(estimates.as_slice(), out.as_mut_slice());
        out
    }

    pub fn eval_extended_pseudo_gradient_into(&self, estimates: &[f64], out: &mut [f64]) {
        let n = self.total_dim();
        let big_n = self.n_agents();
        assert_eq!(estimates.len(), big_n * n, "stacked estimate length");
        assert_eq!(out.len(), n, "extended pseudo-gradient output length");
        match &self.kind {
            GameKind::Quadratic(qg) => {
                for i in 0..big_n {
                    let est = &estimates[i * n..(i + 1) * n];
                    let off = self.offsets[i];
                    for row in off..off + self.dims[i] {
                        let mut acc = qg.b[row];
                        for col in 0..n {
                            acc += qg.a[(row, col)] * est[col];
                        }
                        out[row] = acc;
                    }
                }
            }
            GameKind::Nonlinear(nl) => {
                for i in 0..big_n {
                    let est = &estimates[i * n..(i + 1) * n];
                    let off = self.offsets[i];
                    (nl.partial_gradient)(i, est, &mut out[off..off + self.dims[i]]);
                }
            }
        }
    }

    /// Unique equilibrium of a quadratic game: the solution of A x = -b.
    ///
    /// The returned point satisfies ||A x + b|| <= 1e-10 (1 + ||b||); a rank
    /// deficient coupling matrix is reported with its numerical rank.
    pub fn solve_quadratic_ne(&self) -> Result<DVector<f64>, GameError> {
        let qg = match &self.kind {
            GameKind::Quadratic(qg) => qg,
            GameKind::Nonlinear(_) => return Err(GameError::NotQuadratic(self.name.clone())),
        };
        let n = self.total_dim();
        let lu = qg.a.clone().full_piv_lu();
        let rank_diag = || {
            let svd = qg.a.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let rank = svd
                .singular_values
                .iter()
                .filter(|&&s| s > 1e-12 * smax.max(1.0))
                .count();
            GameError::SingularCoupling { rank, dim: n }
        };
        let x = match lu.solve(&(-&qg.b)) {
            Some(x) => x,
            None => return Err(rank_diag()),
        };
        let residual = (&qg.a * &x + &qg.b).norm();
        let tolerance = 1e-10 * (1.0 + qg.b.norm());
        if !residual.is_finite() || residual > tolerance {
            return if qg.a.clone().svd(false, false).rank(1e-12) < n {
                Err(rank_diag())
            } else {
                Err(GameError::ResidualExceeded { residual, tolerance })
            };
        }
        Ok(x)
    }

    /// Largest per-agent block-row norm of the quadratic coupling matrix.
    ///
    /// This is the Lipschitz constant of the extended pseudo-gradient of a
    /// quadratic game (operator norm of the block-diagonal stacking of the
    /// per-agent block rows).
    pub fn extended_lipschitz(&self) -> Result<f64, GameError> {
        let qg = match &self.kind {
            GameKind::Quadratic(qg) => qg,
            GameKind::Nonlinear(_) => return Err(GameError::NotQuadratic(self.name.clone())),
        };
        let mut l = 0.0f64;
        for i in 0..self.n_agents() {
            let rows = qg.a.rows(self.offsets[i], self.dims[i]);
            let s = rows.clone_owned().svd(false, false).singular_values.max();
            l = l.max(s);
        }
        Ok(l)
    }
}

fn offsets_of(dims: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        off.push(acc);
        acc += d;
    }
    off
}

fn mat_vec_into(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = a.shape();
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += a[(r, c)] * x[c];
        }
        out[r] = acc;
    }
}

/// Maps between stacked estimates (R^{Nn}) and the action space (R^n).
///
/// Selection keeps, for each agent, the block of its own action inside its
/// own estimate; scatter is the transpose, placing each agent's feedback into
/// its own estimate slot.
#[derive(Debug, Clone)]
pub struct SelectionStructure {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    n: usize,
}

impl SelectionStructure {
    pub fn new(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), offsets: offsets_of(dims), n: dims.iter().sum() }
    }

    pub fn action_dim(&self) -> usize {
        self.n
    }

    pub fn stacked_dim(&self) -> usize {
        self.n * self.dims.len()
    }

    /// out = R x: agent i's own action read from agent i's estimate.
    pub fn select(&self, estimates: &[f64], out: &mut [f64]) {
        assert_eq!(estimates.len(), self.stacked_dim());
        assert_eq!(out.len(), self.n);
        for (i, (&off, &d)) in self.offsets.iter().zip(&self.dims).enumerate() {
            let src = i * self.n + off;
            out[off..off + d].copy_from_slice(&estimates[src..src + d]);
        }
    }

    /// out = R^T u: u's agent-i block written into agent i's estimate slot.
    pub fn scatter(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.n);
        assert_eq!(out.len(), self.stacked_dim());
        out.fill(0.0);
        for (i, (&off, &d)) in self.offsets.iter().zip(&self.dims).enumerate() {
            let dst = i * self.n + off;
            out[dst..dst + d].copy_from_slice(&u[off..off + d]);
        }
    }

    pub fn select_vec(&self, estimates: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        self.select(estimates.as_slice(), out.as_mut_slice());
        out
    }

    pub fn scatter_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.stacked_dim());
        self.scatter(u.as_slice(), out.as_mut_slice());
        out
    }

    /// Dense n x Nn selection matrix, for tests.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.stacked_dim());
        for (i, (&off, &d)) in self.offsets.iter().zip(&self.dims).enumerate() {
            for k in 0..d {
                m[(off + k, i * self.n + off + k)] = 1.0;
            }
        }
        m
    }
}

/// Stacked estimate pair (x, r) of the partial-information dynamics.
#[derive(Debug, Clone)]
pub struct EstimateState {
    pub x: DVector<f64>,
    pub r: DVector<f64>,
}

impl EstimateState {
    pub fn new(x: DVector<f64>, r: DVector<f64>) -> Self {
        assert_eq!(x.len(), r.len(), "estimate blocks must have equal length");
        Self { x, r }
    }

    /// All agents agreeing on the profile x, anchor at r.
    pub fn consensus(x: &DVector<f64>, r: &DVector<f64>, n_agents: usize) -> Self {
        let n = x.len();
        let lift = |v: &DVector<f64>| DVector::from_fn(n_agents * n, |i, _| v[i % n]);
        Self::new(lift(x), lift(r))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Named benchmark fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    /// 2-player bilinear game with rotational pseudo-gradient; monotone but
    /// not strictly, so plain gradient play orbits the equilibrium.
    Harmonic,
    /// 10 players, pairwise antidiagonal coupling, unit weights.
    G1,
    /// Same structure with graded weights k/9; near-singular coupling.
    G2,
    /// Same structure with weights in {1, 2}; two spectral rings.
    G3,
    /// Nonlinear variant of g1: the off-diagonal coupling entries are
    /// replaced by sines, keeping the same equilibrium at the origin.
    Sine,
}

impl FromStr for Benchmark {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "harmonic" => Ok(Self::Harmonic),
            "g1" => Ok(Self::G1),
            "g2" => Ok(Self::G2),
            "g3" => Ok(Self::G3),
            "sine" => Ok(Self::Sine),
            other => Err(GameError::UnknownBenchmark(other.to_string())),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Harmonic => "harmonic",
            Self::G1 => "g1",
            Self::G2 => "g2",
            Self::G3 => "g3",
            Self::Sine => "sine",
        };
        f.write_str(s)
    }
}

/// Pairwise coupling block shared by the 10-player fixtures.
pub const COUPLING_BLOCK: [[f64; 2]; 2] = [[5.0, 1.0], [-1.0, 5.0]];

/// Per-agent weights of the 10-player fixtures.
pub fn benchmark_weights(b: Benchmark) -> Option<Vec<f64>> {
    match b {
        Benchmark::Harmonic => None,
        Benchmark::G1 | Benchmark::Sine => {
            Some(vec![1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0])
        }
        Benchmark::G2 => {
            Some([-9.0, -7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0, 9.0].iter().map(|w| w / 9.0).collect())
        }
        Benchmark::G3 => Some(vec![-2.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 2.0]),
    }
}

fn antidiagonal_coupling(weights: &[f64]) -> DMatrix<f64> {
    let n_agents = weights.len();
    let n = 2 * n_agents;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n_agents {
        let j = n_agents - 1 - i;
        for r in 0..2 {
            for c in 0..2 {
                a[(2 * i + r, 2 * j + c)] = weights[i] * COUPLING_BLOCK[r][c];
            }
        }
    }
    a
}

/// Construct a named benchmark game.
pub fn build_benchmark(b: Benchmark) -> Game {
    match b {
        Benchmark::Harmonic => {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
            let qg = QuadraticGame::new(a, DVector::zeros(2)).unwrap();
            Game::quadratic("harmonic", vec![1, 1], qg).unwrap()
        }
        Benchmark::G1 | Benchmark::G2 | Benchmark::G3 => {
            let w = benchmark_weights(b).unwrap();
            let a = antidiagonal_coupling(&w);
            let qg = QuadraticGame::new(a, DVector::zeros(20)).unwrap();
            Game::quadratic(&b.to_string(), vec![2; 10], qg).unwrap()
        }
        Benchmark::Sine => {
            let w = benchmark_weights(b).unwrap();
            let grad = move |i: usize, profile: &[f64], out: &mut [f64]| {
                let j = 9 - i;
                let opp = &profile[2 * j..2 * j + 2];
                out[0] = w[i] * (5.0 * opp[0] + opp[1].sin());
                out[1] = w[i] * (5.0 * opp[1] - opp[0].sin());
            };
            Game::nonlinear("sine", vec![2; 10], Arc::new(grad)).unwrap()
        }
    }
}
