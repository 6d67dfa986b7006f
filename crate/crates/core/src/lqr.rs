//! Finite-horizon discrete-time LQR along a known switching sequence, and
//! assembly of the imitation-learning dataset.
//!
//! The backward recursion runs over the zero-order-hold pairs of the
//! active modes:
//!
//! ```text
//! P_T = Q
//! F_t = −(R + B_tᵀ P_{t+1} B_t)⁻¹ B_tᵀ P_{t+1} A_t
//! P_t = Q + A_tᵀ P_{t+1} A_t + (B_tᵀ P_{t+1} A_t)ᵀ F_t
//! ```
//!
//! The terminal input u_T never influences a state inside the horizon, so
//! its unique optimal value is 0 and it is excluded from the dataset.
//! Dataset Gram matrices approximate the continuous-time imitation
//! integral by a left-endpoint Riemann sum with weight `h`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::linalg;
use crate::netmodel::{StateVector, SwitchedModel};
use crate::scenarios::{Scenario, SwitchingSequence};
use crate::{Error, Result};

/// Condition-number threshold beyond which a linear solve is reported as a
/// numerical failure.
pub const CONDITION_LIMIT: f64 = 1e12;

/// State and input cost weights.
#[derive(Debug, Clone)]
pub struct CostWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::invalid("Q and R must be square"));
        }
        let asym_q = (&q - q.transpose()).norm() / (1.0 + q.norm());
        let asym_r = (&r - r.transpose()).norm() / (1.0 + r.norm());
        if asym_q > 1e-9 || asym_r > 1e-9 {
            return Err(Error::invalid("Q and R must be symmetric"));
        }
        let q = linalg::symmetrize(&q);
        let r = linalg::symmetrize(&r);
        if linalg::min_sym_eig(&q) < -1e-10 {
            return Err(Error::invalid("Q must be positive semidefinite"));
        }
        if linalg::min_sym_eig(&r) <= 0.0 {
            return Err(Error::invalid("R must be positive definite"));
        }
        Ok(CostWeights { q, r })
    }

    /// Diagonal weights: `Q = diag(q_theta·I, q_omega·I)`, `R = r·I`.
    pub fn from_scales(n: usize, q_theta: f64, q_omega: f64, r: f64) -> Result<Self> {
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            q[(i, i)] = q_theta;
            q[(n + i, n + i)] = q_omega;
        }
        CostWeights::new(q, DMatrix::identity(n, n) * r)
    }

    /// The default weights: unit angle weight, 10⁵ frequency weight, 10·I
    /// input weight.
    pub fn default_for(n: usize) -> Self {
        CostWeights::from_scales(n, 1.0, 1e5, 10.0).expect("default weights are valid")
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// Time-varying optimal gain schedule and the value matrices behind it.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    /// `F_t` for t = 0..T−1; the optimal input is `u_t = F_t x_t`.
    pub gains: Vec<DMatrix<f64>>,
    /// `P_t` for t = 0..T (cost-to-go `x_tᵀ P_t x_t`).
    pub value_matrices: Vec<DMatrix<f64>>,
}

/// Backward Riccati recursion over the switching sequence's discrete pairs.
pub fn riccati_backward(
    model: &SwitchedModel,
    sequence: &SwitchingSequence,
    weights: &CostWeights,
    horizon: usize,
) -> Result<GainSchedule> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be ≥ 1"));
    }
    if sequence.len() < horizon {
        return Err(Error::invalid(format!(
            "sequence covers {} steps, horizon needs {horizon}",
            sequence.len()
        )));
    }
    let s = model.state_dim();
    if weights.q().nrows() != s || weights.r().nrows() != model.input_dim() {
        return Err(Error::invalid("weight dimensions do not match the model"));
    }

    let mut value_matrices = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut gains = vec![DMatrix::zeros(0, 0); horizon];
    let mut p = weights.q().clone();
    value_matrices[horizon] = p.clone();
    for t in (0..horizon).rev() {
        let md = model.discrete(sequence.mode_at(t))?;
        let btp = md.b.transpose() * &p;
        let gram = linalg::symmetrize(&(weights.r() + &btp * &md.b));
        let cond = linalg::sym_condition(&gram);
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::numerical(format!(
                "R + BᵀPB condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e} at step {t}"
            )));
        }
        let chol = linalg::try_cholesky(&gram)
            .ok_or_else(|| Error::numerical("R + BᵀPB is not positive definite"))?;
        let btpa = &btp * &md.a;
        let f = -chol.solve(&btpa);
        p = linalg::symmetrize(&(weights.q() + md.a.transpose() * &p * &md.a + btpa.transpose() * &f));
        gains[t] = f;
        value_matrices[t] = p.clone();
    }
    Ok(GainSchedule { gains, value_matrices })
}

/// One scenario's optimal trajectory: states x_0..x_T, inputs u_0..u_{T−1},
/// and the active mode per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn node_count(&self) -> usize {
        self.states[0].len() / 2
    }
}

/// Forward rollout under a gain schedule: `x_{t+1} = A_t x_t + B_t u_t`
/// with `u_t = F_t x_t` on the discrete pairs of the active modes.
pub fn rollout(
    model: &SwitchedModel,
    sequence: &SwitchingSequence,
    schedule: &GainSchedule,
    x0: &StateVector,
) -> Result<Trajectory> {
    let horizon = schedule.gains.len();
    if sequence.len() < horizon {
        return Err(Error::invalid("sequence shorter than the gain schedule"));
    }
    if x0.as_vector().len() != model.state_dim() {
        return Err(Error::invalid("x0 dimension does not match the model"));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut modes = Vec::with_capacity(horizon);
    let mut x = x0.as_vector().clone();
    states.push(x.clone());
    for t in 0..horizon {
        let q = sequence.mode_at(t);
        let md = model.discrete(q)?;
        let u = &schedule.gains[t] * &x;
        x = &md.a * &x + &md.b * &u;
        if !linalg::all_finite_vec(&x) {
            return Err(Error::numerical(format!(
                "rollout produced a non-finite state at step {t}"
            )));
        }
        inputs.push(u);
        modes.push(q);
        states.push(x.clone());
    }
    Ok(Trajectory { states, inputs, modes })
}

/// Discrete LQR cost of a trajectory:
/// `Σ_{t=0}^{T} x_tᵀQx_t + Σ_{t=0}^{T−1} u_tᵀRu_t` (u_T = 0).
pub fn trajectory_cost(traj: &Trajectory, weights: &CostWeights) -> f64 {
    let mut cost = 0.0;
    for x in &traj.states {
        cost += (x.transpose() * weights.q() * x)[(0, 0)];
    }
    for u in &traj.inputs {
        cost += (u.transpose() * weights.r() * u)[(0, 0)];
    }
    cost
}

/// Aggregated imitation data: `G = Σ_k Σ_t h·x_t x_tᵀ`,
/// `C = Σ_k Σ_t h·u_t x_tᵀ` over all steps with a defined input, plus the
/// constant `Σ h·‖u‖²` so the imitation objective can be evaluated exactly.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub input_sq_sum: f64,
    pub step_h: f64,
    pub scenario_count: usize,
    pub sample_count: usize,
}

impl TrajectoryDataset {
    /// The discretized imitation objective
    /// `Σ_k Σ_t h·‖u_t − K x_t‖² = Σh‖u‖² − 2⟨K, C⟩ + ⟨K G, K⟩`.
    pub fn imitation_objective(&self, k: &DMatrix<f64>) -> f64 {
        self.input_sq_sum - 2.0 * linalg::frob_inner(k, &self.c)
            + linalg::frob_inner(&(k * &self.g), k)
    }
}

/// Aggregates trajectories in canonical order (scenario index, then time)
/// so identical inputs produce bit-identical Gram matrices.
pub fn assemble_dataset(trajectories: &[Trajectory], step_h: f64) -> Result<TrajectoryDataset> {
    if trajectories.is_empty() {
        return Err(Error::invalid("at least one trajectory is required"));
    }
    if !(step_h > 0.0) {
        return Err(Error::invalid("step_h must be > 0"));
    }
    let s = trajectories[0].states[0].len();
    let r = trajectories[0].inputs.first().map(|u| u.len()).unwrap_or(s / 2);
    let mut g = DMatrix::zeros(s, s);
    let mut c = DMatrix::zeros(r, s);
    let mut input_sq_sum = 0.0;
    let mut sample_count = 0;
    for (k, traj) in trajectories.iter().enumerate() {
        if traj.states[0].len() != s {
            return Err(Error::invalid(format!(
                "trajectory {k} has state dimension {}, expected {s}",
                traj.states[0].len()
            )));
        }
        if traj.states.len() != traj.inputs.len() + 1 {
            return Err(Error::invalid(format!(
                "trajectory {k} has {} states for {} inputs",
                traj.states.len(),
                traj.inputs.len()
            )));
        }
        for t in 0..traj.inputs.len() {
            let x = &traj.states[t];
            let u = &traj.inputs[t];
            if u.len() != r {
                return Err(Error::invalid(format!(
                    "trajectory {k} has input dimension {}, expected {r}",
                    u.len()
                )));
            }
            g.syger(step_h, x, x, 1.0); // g += h·x·xᵀ (lower update + mirror below)
            c.ger(step_h, u, x, 1.0);
            input_sq_sum += step_h * u.norm_squared();
            sample_count += 1;
        }
    }
    // syger touches the lower triangle only; mirror it.
    for i in 0..s {
        for j in (i + 1)..s {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(TrajectoryDataset {
        g,
        c,
        input_sq_sum,
        step_h,
        scenario_count: trajectories.len(),
        sample_count,
    })
}

/// Runs the full data-generation pass: one Riccati solve and rollout per
/// scenario (in parallel), then a canonical-order dataset reduction.
pub fn generate_training_data(
    model: &SwitchedModel,
    scenarios: &[Scenario],
    weights: &CostWeights,
) -> Result<(Vec<Trajectory>, TrajectoryDataset)> {
    let trajectories: Vec<Trajectory> = scenarios
        .par_iter()
        .map(|sc| {
            let schedule = riccati_backward(model, &sc.sequence, weights, sc.horizon_steps)?;
            rollout(model, &sc.sequence, &schedule, &sc.x0)
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = assemble_dataset(&trajectories, model.step_h())?;
    Ok((trajectories, dataset))
}
