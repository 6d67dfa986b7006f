//! Graph-structured power network model.
//!
//! A network is an undirected weighted graph (susceptances on the edges)
//! together with per-node damping and a table of per-mode inertia values.
//! Each inertia mode `q` induces swing dynamics
//!
//! ```text
//! A_q = [ 0        I      ]      B_q = [ 0     ]
//!       [ -M_q⁻¹L  -M_q⁻¹D ]            [ M_q⁻¹ ]
//! ```
//!
//! on the stacked state `x = (θ; ω) ∈ R^{2n}`, where `L` is the weighted
//! graph Laplacian, `D = diag(d_i)` the droop/damping matrix and
//! `M_q = diag(m_{q,i})` the mode's inertia matrix. Zero-order-hold
//! discretizations are exact, computed through the exponential of an
//! augmented block matrix (valid although `A_q` is singular: `L` has the
//! uniform-angle-shift nullspace).

use nalgebra::{DMatrix, DVector};

use crate::io::NetworkFile;
use crate::linalg;
use crate::{Error, Result};

/// One undirected transmission line. Node indices are 0-based; each
/// unordered pair appears at most once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Line susceptance, per-unit, non-negative.
    pub susceptance: f64,
}

/// Network topology and physical parameters.
#[derive(Debug, Clone)]
pub struct PowerNetwork {
    n: usize,
    edges: Vec<Edge>,
    damping: DVector<f64>,
    /// One row per mode, one inertia coefficient per node (seconds, > 0).
    inertia_table: Vec<DVector<f64>>,
    /// Dense adjacency flags, row-major `n·n`.
    adjacent: Vec<bool>,
}

impl PowerNetwork {
    pub fn new(
        n: usize,
        edges: Vec<Edge>,
        damping: Vec<f64>,
        inertia_table: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("network must have at least one node"));
        }
        if damping.len() != n {
            return Err(Error::invalid(format!(
                "damping has {} entries, expected n = {}",
                damping.len(),
                n
            )));
        }
        if damping.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("every damping coefficient must be > 0"));
        }
        if inertia_table.is_empty() {
            return Err(Error::invalid("inertia table must have at least one mode"));
        }
        for (q, row) in inertia_table.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "inertia mode {} has {} entries, expected n = {}",
                    q + 1,
                    row.len(),
                    n
                )));
            }
            if row.iter().any(|m| !(*m > 0.0)) {
                return Err(Error::invalid(format!(
                    "inertia mode {} has a non-positive coefficient",
                    q + 1
                )));
            }
        }
        let mut adjacent = vec![false; n * n];
        for e in &edges {
            if e.i >= n || e.j >= n {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) references a node outside 0..{}",
                    e.i, e.j, n
                )));
            }
            if e.i == e.j {
                return Err(Error::invalid(format!("self-loop at node {}", e.i)));
            }
            if !(e.susceptance >= 0.0) {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has negative susceptance {}",
                    e.i, e.j, e.susceptance
                )));
            }
            if adjacent[e.i * n + e.j] {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) listed more than once",
                    e.i, e.j
                )));
            }
            adjacent[e.i * n + e.j] = true;
            adjacent[e.j * n + e.i] = true;
        }
        Ok(PowerNetwork {
            n,
            edges,
            damping: DVector::from_vec(damping),
            inertia_table: inertia_table.into_iter().map(DVector::from_vec).collect(),
            adjacent,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn mode_count(&self) -> usize {
        self.inertia_table.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// True when nodes `i` and `j` are joined by a line.
    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.adjacent[i * self.n + j]
    }

    pub fn damping(&self) -> &DVector<f64> {
        &self.damping
    }

    pub fn damping_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.damping)
    }

    /// Inertia coefficients of mode `q` (1-based, `1 ≤ q ≤ mode_count`).
    pub fn inertia(&self, q: usize) -> Result<&DVector<f64>> {
        self.check_mode(q)?;
        Ok(&self.inertia_table[q - 1])
    }

    pub fn inertia_matrix(&self, q: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(self.inertia(q)?))
    }

    /// Entrywise maximum of the inertia coefficients over all modes.
    pub fn max_inertia(&self) -> DVector<f64> {
        let mut m = self.inertia_table[0].clone();
        for row in &self.inertia_table[1..] {
            for i in 0..self.n {
                m[i] = m[i].max(row[i]);
            }
        }
        m
    }

    fn check_mode(&self, q: usize) -> Result<()> {
        if q == 0 || q > self.mode_count() {
            return Err(Error::invalid(format!(
                "mode index {} out of range 1..={}",
                q,
                self.mode_count()
            )));
        }
        Ok(())
    }

    /// The approximate 12-bus 3-region benchmark shipped with the toolkit,
    /// together with its sampling step. Parses the embedded copy of
    /// `configs/default_network.json`.
    pub fn default_12bus() -> (PowerNetwork, f64) {
        let file: NetworkFile = serde_json::from_str(DEFAULT_NETWORK_JSON)
            .expect("embedded default network must parse");
        file.to_parts().expect("embedded default network must validate")
    }
}

/// Verbatim content of the shipped default network file.
pub const DEFAULT_NETWORK_JSON: &str = include_str!("../../../configs/default_network.json");

/// Weighted graph Laplacian `L = diag(Σ_j b_ij) − B` where `B` is the
/// symmetric susceptance adjacency matrix. Row sums are zero.
pub fn build_laplacian(network: &PowerNetwork) -> DMatrix<f64> {
    let n = network.node_count();
    let mut l = DMatrix::zeros(n, n);
    for e in network.edges() {
        l[(e.i, e.j)] -= e.susceptance;
        l[(e.j, e.i)] -= e.susceptance;
        l[(e.i, e.i)] += e.susceptance;
        l[(e.j, e.j)] += e.susceptance;
    }
    l
}

/// Continuous-time dynamics `(A_q, B_q)` of mode `q` (1-based).
pub fn assemble_mode(network: &PowerNetwork, q: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = network.node_count();
    let m_inv = network.inertia(q)?.map(|m| 1.0 / m);
    let lap = build_laplacian(network);

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
    }
    for i in 0..n {
        for j in 0..n {
            a[(n + i, j)] = -m_inv[i] * lap[(i, j)];
        }
        a[(n + i, n + i)] = -m_inv[i] * network.damping()[i];
    }

    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        b[(n + i, i)] = m_inv[i];
    }
    Ok((a, b))
}

/// Exact zero-order-hold discretization: `A^d = exp(Ah)`,
/// `B^d = (∫₀ʰ exp(As) ds) B`, through the exponential of the augmented
/// block matrix `[[A, B], [0, 0]]·h`. No inverse of `A` is required.
pub fn discretize_zoh(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step h must be > 0, got {h}")));
    }
    if !a.is_square() {
        return Err(Error::invalid("discretize_zoh: A must be square"));
    }
    let s = a.nrows();
    if b.nrows() != s {
        return Err(Error::invalid("discretize_zoh: B row count must match A"));
    }
    if !linalg::all_finite(a) || !linalg::all_finite(b) {
        return Err(Error::invalid("discretize_zoh: non-finite matrix entries"));
    }
    let r = b.ncols();
    let mut aug = DMatrix::zeros(s + r, s + r);
    aug.view_mut((0, 0), (s, s)).copy_from(&(a * h));
    aug.view_mut((0, s), (s, r)).copy_from(&(b * h));
    let e = linalg::expm(&aug);
    if !linalg::all_finite(&e) {
        return Err(Error::numerical("discretize_zoh: exponential overflowed"));
    }
    let ad = e.view((0, 0), (s, s)).into_owned();
    let bd = e.view((0, s), (s, r)).into_owned();
    Ok((ad, bd))
}

/// One mode's state-space pair.
#[derive(Debug, Clone)]
pub struct ModeDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// All per-mode continuous pairs and their ZOH discretizations, plus the
/// network they came from. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SwitchedModel {
    network: PowerNetwork,
    continuous: Vec<ModeDynamics>,
    discrete: Vec<ModeDynamics>,
    step_h: f64,
}

impl SwitchedModel {
    pub fn build(network: PowerNetwork, step_h: f64) -> Result<Self> {
        if !(step_h > 0.0) {
            return Err(Error::invalid(format!("step_h must be > 0, got {step_h}")));
        }
        let m = network.mode_count();
        let mut continuous = Vec::with_capacity(m);
        let mut discrete = Vec::with_capacity(m);
        for q in 1..=m {
            let (a, b) = assemble_mode(&network, q)?;
            let (ad, bd) = discretize_zoh(&a, &b, step_h)?;
            continuous.push(ModeDynamics { a, b });
            discrete.push(ModeDynamics { a: ad, b: bd });
        }
        Ok(SwitchedModel { network, continuous, discrete, step_h })
    }

    pub fn network(&self) -> &PowerNetwork {
        &self.network
    }

    pub fn node_count(&self) -> usize {
        self.network.node_count()
    }

    /// State dimension `2n`.
    pub fn state_dim(&self) -> usize {
        2 * self.network.node_count()
    }

    /// Input dimension `n`.
    pub fn input_dim(&self) -> usize {
        self.network.node_count()
    }

    pub fn mode_count(&self) -> usize {
        self.continuous.len()
    }

    pub fn step_h(&self) -> f64 {
        self.step_h
    }

    /// Continuous pair of mode `q` (1-based).
    pub fn continuous(&self, q: usize) -> Result<&ModeDynamics> {
        self.network.check_mode(q)?;
        Ok(&self.continuous[q - 1])
    }

    /// Discrete (ZOH) pair of mode `q` (1-based).
    pub fn discrete(&self, q: usize) -> Result<&ModeDynamics> {
        self.network.check_mode(q)?;
        Ok(&self.discrete[q - 1])
    }

    /// Closed-loop matrix `A_q + B_q K` of mode `q` (1-based).
    pub fn closed_loop(&self, q: usize, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let md = self.continuous(q)?;
        if k.nrows() != self.input_dim() || k.ncols() != self.state_dim() {
            return Err(Error::invalid(format!(
                "gain must be {}×{}, got {}×{}",
                self.input_dim(),
                self.state_dim(),
                k.nrows(),
                k.ncols()
            )));
        }
        Ok(&md.a + &md.b * k)
    }
}

/// Stacked state `x = (θ; ω) ∈ R^{2n}`: angle deviations on top,
/// frequency deviations below.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    x: DVector<f64>,
}

impl StateVector {
    pub fn new(x: DVector<f64>) -> Result<Self> {
        if x.len() == 0 || x.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "state vector length must be even and positive, got {}",
                x.len()
            )));
        }
        if !linalg::all_finite_vec(&x) {
            return Err(Error::invalid("state vector has non-finite entries"));
        }
        Ok(StateVector { x })
    }

    pub fn from_parts(theta: &DVector<f64>, omega: &DVector<f64>) -> Result<Self> {
        if theta.len() != omega.len() {
            return Err(Error::invalid("theta and omega must have equal length"));
        }
        let mut x = DVector::zeros(2 * theta.len());
        x.rows_mut(0, theta.len()).copy_from(theta);
        x.rows_mut(theta.len(), omega.len()).copy_from(omega);
        StateVector::new(x)
    }

    pub fn node_count(&self) -> usize {
        self.x.len() / 2
    }

    pub fn theta(&self) -> DVector<f64> {
        self.x.rows(0, self.node_count()).into_owned()
    }

    pub fn omega(&self) -> DVector<f64> {
        self.x.rows(self.node_count(), self.node_count()).into_owned()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.x
    }
}
