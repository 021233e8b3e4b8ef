//! Communication graphs and their Laplacian spectra.
//!
//! Agents exchange estimates over an undirected weighted graph G. The
//! weighted Laplacian L = Deg - W gates the consensus feedback: its second
//! smallest eigenvalue lambda_2 (algebraic connectivity) appears in every
//! minimum-consensus-gain bound, and its largest eigenvalue sets the stiff
//! time scale of the coupled dynamics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("weight matrix must be symmetric: w[{i}][{j}] = {wij} but w[{j}][{i}] = {wji}")]
    Asymmetric { i: usize, j: usize, wij: f64, wji: f64 },
    #[error("edge weights must be nonnegative: w[{i}][{j}] = {w}")]
    NegativeWeight { i: usize, j: usize, w: f64 },
    #[error("self-loops are not allowed: w[{i}][{i}] = {w}")]
    SelfLoop { i: usize, w: f64 },
    #[error("graph must have at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<usize>>),
}

/// Undirected weighted communication graph on N nodes.
///
/// Weights are symmetric, nonnegative, and zero on the diagonal.
#[derive(Debug, Clone)]
pub struct CommGraph {
    weights: DMatrix<f64>,
}

impl CommGraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows < 2 {
            return Err(GraphError::TooSmall(rows));
        }
        for i in 0..rows {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop { i, w: weights[(i, i)] });
            }
            for j in (i + 1)..cols {
                let (wij, wji) = (weights[(i, j)], weights[(j, i)]);
                if wij != wji {
                    return Err(GraphError::Asymmetric { i, j, wij, wji });
                }
                if wij < 0.0 {
                    return Err(GraphError::NegativeWeight { i, j, w: wij });
                }
            }
        }
        Ok(Self { weights })
    }

    /// Ring on n nodes with unit weights.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::TooSmall(n));
        }
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        Self::new(w)
    }

    /// Complete graph on n nodes with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooSmall(n));
        }
        let mut w = DMatrix::from_element(n, n, 1.0);
        w.fill_diagonal(0.0);
        Self::new(w)
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weighted Laplacian L = Deg - W.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.weights.row(i).sum();
        }
        l
    }

    /// Connected components, each a sorted list of node indices.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if !seen[j] && self.weights[(i, j)] > 0.0 {
                        seen[j] = true;
                        comp.push(j);
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Full Laplacian spectrum, eigenvalues ascending.
    pub fn spectrum(&self) -> LaplacianSpectrum {
        let eig = self.laplacian().symmetric_eigen();
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| a.total_cmp(b));
        LaplacianSpectrum { eigenvalues }
    }

    /// Algebraic connectivity lambda_2(L). Errors on disconnected graphs.
    pub fn lambda2(&self) -> Result<f64, GraphError> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(GraphError::Disconnected(comps));
        }
        Ok(self.spectrum().lambda2())
    }

    /// Largest Laplacian eigenvalue lambda_N(L).
    pub fn lambda_max(&self) -> f64 {
        self.spectrum().lambda_max()
    }

    /// Lifted Laplacian L (x) I_n acting on stacked per-node blocks of size n.
    pub fn lift_laplacian(&self, n: usize) -> LiftedLaplacian {
        assert!(n >= 1, "block dimension must be at least 1");
        let nn = self.n_nodes();
        let mut edges = Vec::new();
        for i in 0..nn {
            for j in (i + 1)..nn {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        LiftedLaplacian { n_nodes: nn, block: n, edges }
    }
}

/// Sorted Laplacian eigenvalues; the smallest is 0 for any valid graph.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
}

impl LaplacianSpectrum {
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }
}

/// Matrix-free application of L (x) I_n.
///
/// The integrator applies this once per stage; materializing the Nn x Nn
/// Kronecker product would be wasteful, so only the edge list is kept.
#[derive(Debug, Clone)]
pub struct LiftedLaplacian {
    n_nodes: usize,
    block: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl LiftedLaplacian {
    pub fn dim(&self) -> usize {
        self.n_nodes * self.block
    }

    /// out = (L (x) I_n) x.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        let n = self.block;
        for &(i, j, w) in &self.edges {
            let (oi, oj) = (i * n, j * n);
            for k in 0..n {
                let d = w * (x[oi + k] - x[oj + k]);
                out[oi + k] += d;
                out[oj + k] -= d;
            }
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply(x.as_slice(), out.as_mut_slice());
        out
    }

    /// Dense Nn x Nn matrix, for tests and small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut col = DVector::zeros(d);
        let mut out = DVector::zeros(d);
        for j in 0..d {
            col.fill(0.0);
            col[j] = 1.0;
            self.apply(col.as_slice(), out.as_mut_slice());
            m.set_column(j, &out);
        }
        m
    }
}

/// Closed-form ring Laplacian eigenvalues 2 - 2cos(2 pi k / n), k = 0..n-1.
pub fn ring_eigenvalue(n: usize, k: usize) -> f64 {
    2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()
}
