//! Sensor-network graphs, combinatorial Laplacians, and the exact spectral
//! decomposition used as the test oracle for the polynomial transform path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node count above which the dense eigendecomposition refuses to run.
/// The exact path is an oracle, not the production path.
pub const DEFAULT_ORACLE_LIMIT: usize = 256;

/// Node features for one graph sample, shape N x d.
pub type GraphSignal = DMatrix<f64>;

/// An undirected, unweighted sensor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

/// JSON wire form: `{"n": N, "edges": [[i,j],...], "labels": [...]}` with
/// zero-based indices and each edge listed once as i < j.
#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl Graph {
    /// Build a graph from a 0/1 adjacency matrix. The matrix must be square,
    /// symmetric, and have a zero diagonal.
    pub fn from_adjacency(adjacency: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::Validation(format!(
                "adjacency must be square with N >= 1, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Validation(format!(
                    "adjacency has a self-loop at node {i}"
                )));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a != 0.0 && a != 1.0 {
                    return Err(Error::Validation(format!(
                        "adjacency entry ({i},{j}) = {a} is not 0 or 1"
                    )));
                }
                if a != adjacency[(j, i)] {
                    return Err(Error::Validation(format!(
                        "adjacency is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    n
                )));
            }
        }
        Ok(Graph { adjacency, labels })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)], labels: Option<Vec<String>>) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Validation(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::Validation(format!("self-loop edge ({i},{j})")));
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        Graph::from_adjacency(a, labels)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = GraphJson {
            n: self.num_nodes(),
            edges: self.edges().iter().map(|&(i, j)| [i, j]).collect(),
            labels: self.labels.clone(),
        };
        serde_json::to_value(doc).expect("graph serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: GraphJson = serde_json::from_value(value.clone())?;
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::from_edges(doc.n, &edges, doc.labels)
    }
}

/// Combinatorial Laplacian L = D - A with a cached largest-eigenvalue
/// estimate for filter design.
#[derive(Debug, Clone)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    lambda_max: f64,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Inflated power-iteration estimate of the largest eigenvalue, cached
    /// at construction. Zero for an edgeless graph.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
}

/// L = D - A with D the diagonal degree matrix.
pub fn laplacian(graph: &Graph) -> Result<Laplacian> {
    let a = graph.adjacency();
    let n = graph.num_nodes();
    let mut l = -a.clone();
    for i in 0..n {
        l[(i, i)] = a.row(i).sum();
    }
    let lambda_max = estimate_lambda_max_from_matrix(&l, 1e-9)?;
    Ok(Laplacian { matrix: l, lambda_max })
}

/// Largest-eigenvalue estimate by power iteration, inflated by 1.01 so the
/// kernel design interval [0, lambda_max] covers the whole spectrum even when
/// the iterate undershoots.
pub fn estimate_lambda_max(l: &Laplacian, tol: f64) -> Result<f64> {
    estimate_lambda_max_from_matrix(&l.matrix, tol)
}

fn estimate_lambda_max_from_matrix(l: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if tol <= 0.0 {
        return Err(Error::Validation(format!("tol must be positive, got {tol}")));
    }
    let n = l.nrows();
    // Deterministic random start; the all-ones vector is in the nullspace of L.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a11);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    if norm == 0.0 {
        v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    } else {
        v /= norm;
    }
    let max_iters = 10_000;
    let mut last = 0.0_f64;
    for _ in 0..max_iters {
        let w = l * &v;
        let wnorm = w.norm();
        if wnorm <= 1e-300 {
            // L annihilates the iterate: edgeless graph (L = 0 on this subspace).
            return Ok(0.0);
        }
        let rayleigh = v.dot(&w);
        v = w / wnorm;
        if (rayleigh - last).abs() <= tol * rayleigh.abs().max(1e-30) {
            return Ok(rayleigh * 1.01);
        }
        last = rayleigh;
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge after {max_iters} iterations; last iterate {last}"
    )))
}

/// Exact eigendecomposition of a Laplacian: ascending eigenvalues and an
/// orthonormal eigenvector matrix. Oracle path only.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn num_nodes(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn eigendecompose(l: &Laplacian) -> Result<Spectrum> {
    eigendecompose_with_limit(l, DEFAULT_ORACLE_LIMIT)
}

pub fn eigendecompose_with_limit(l: &Laplacian, limit: usize) -> Result<Spectrum> {
    let n = l.num_nodes();
    if n > limit {
        return Err(Error::Capacity(format!(
            "eigendecomposition limited to {limit} nodes, got {n}"
        )));
    }
    let eig = l.matrix.clone().symmetric_eigen();
    // Sort ascending; nalgebra returns an unspecified order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// Cosine-similarity radius graph over sensor rows: edge (i, j), i != j,
/// present iff cos(row_i, row_j) > epsilon.
pub fn radius_graph(measurements: &DMatrix<f64>, epsilon: f64) -> Result<Graph> {
    let s = measurements.nrows();
    if s < 1 {
        return Err(Error::Validation("need at least one sensor row".into()));
    }
    let mut norms = Vec::with_capacity(s);
    for i in 0..s {
        let norm = measurements.row(i).norm();
        if norm == 0.0 {
            return Err(Error::Validation(format!("sensor {i} has a zero-norm row")));
        }
        norms.push(norm);
    }
    let mut a = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            let cos = measurements.row(i).dot(&measurements.row(j)) / (norms[i] * norms[j]);
            if cos > epsilon {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    Graph::from_adjacency(a, None)
}

/// Pairwise cosine similarities between sensor rows, for threshold tuning.
pub fn cosine_similarities(measurements: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = measurements.nrows();
    let mut out = DMatrix::zeros(s, s);
    for i in 0..s {
        let ni = measurements.row(i).norm();
        if ni == 0.0 {
            return Err(Error::Validation(format!("sensor {i} has a zero-norm row")));
        }
        for j in 0..s {
            let nj = measurements.row(j).norm();
            out[(i, j)] = measurements.row(i).dot(&measurements.row(j)) / (ni * nj);
        }
    }
    Ok(out)
}

/// Affine map of a signal onto [0, 1]; a constant signal maps to all zeros.
pub fn max_min_normalize(signal: &[f64]) -> Vec<f64> {
    assert!(!signal.is_empty(), "max_min_normalize on empty signal");
    let min = signal.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return vec![0.0; signal.len()];
    }
    signal.iter().map(|&x| (x - min) / range).collect()
}

/// Non-overlapping window split of an S x P record into floor(P/d) node-feature
/// matrices of shape S x d. Trailing columns are discarded.
pub fn sliding_window_signals(measurements: &DMatrix<f64>, d: usize) -> Result<Vec<GraphSignal>> {
    let p = measurements.ncols();
    if d == 0 || d > p {
        return Err(Error::Validation(format!(
            "window length {d} must be in 1..={p}"
        )));
    }
    let m = p / d;
    let mut out = Vec::with_capacity(m);
    for w in 0..m {
        out.push(measurements.columns(w * d, d).into_owned());
    }
    Ok(out)
}
