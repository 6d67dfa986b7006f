//! Controller synthesis.
//!
//! Four routes to a gain `K = [K1 K2] ∈ R^{n×2n}`:
//!
//! - [`fit_unconstrained`]: the exact normal-equations minimizer of the
//!   imitation objective, no stability constraint.
//! - [`prop1_controller`]: the closed-form distributed gain
//!   `K1 = L − I`, `K2 = D − I` stabilizing every individual mode.
//! - [`local_construction`]: a diagonal (communication-free) gain with an
//!   analytic common-Lyapunov certificate, built from an explicit feasible
//!   point of the bilinear constraint set.
//! - [`synthesize_stable`] / [`synthesize_sparse`]: imitation with the
//!   common-Lyapunov constraint, solved by an alternating log-det barrier
//!   scheme (proximal-gradient K-step, analytic-centering P-step).

mod barrier;
mod construct;

pub use barrier::{
    synthesize_sparse, synthesize_stable, soft_threshold, BarrierSchedule, IterationRecord,
    SynthesisConfig, SynthesisReport,
};
pub use construct::{local_construction, prop1_controller, LocalConstructionTrace};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::lqr::TrajectoryDataset;
use crate::{Error, Result};

/// Where a gain came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainOrigin {
    Unconstrained,
    Prop1,
    Local,
    Optimal,
    Sparse,
}

impl std::fmt::Display for GainOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GainOrigin::Unconstrained => "unconstrained",
            GainOrigin::Prop1 => "prop1",
            GainOrigin::Local => "local",
            GainOrigin::Optimal => "optimal",
            GainOrigin::Sparse => "sparse",
        };
        f.write_str(s)
    }
}

/// A static feedback gain `u = Kx` with its provenance tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGain {
    pub k: DMatrix<f64>,
    pub origin: GainOrigin,
}

impl ControllerGain {
    pub fn new(k: DMatrix<f64>, origin: GainOrigin) -> Result<Self> {
        if k.ncols() != 2 * k.nrows() || k.nrows() == 0 {
            return Err(Error::invalid(format!(
                "gain must be n×2n, got {}×{}",
                k.nrows(),
                k.ncols()
            )));
        }
        if !linalg::all_finite(&k) {
            return Err(Error::invalid("gain has non-finite entries"));
        }
        Ok(ControllerGain { k, origin })
    }

    pub fn node_count(&self) -> usize {
        self.k.nrows()
    }

    /// Angle-feedback block `K[:, 0..n]`.
    pub fn k1(&self) -> DMatrix<f64> {
        let n = self.node_count();
        self.k.view((0, 0), (n, n)).into_owned()
    }

    /// Frequency-feedback block `K[:, n..2n]`.
    pub fn k2(&self) -> DMatrix<f64> {
        let n = self.node_count();
        self.k.view((0, n), (n, n)).into_owned()
    }
}

/// A common quadratic Lyapunov certificate for a gain: the matrix `P ≻ 0`
/// and the per-mode margins `μ_q = λ_max((A_q+B_qK)ᵀP + P(A_q+B_qK))`.
/// Valid when `min_eig_p > 0` and every margin is strictly negative.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub p: DMatrix<f64>,
    pub margins: Vec<f64>,
    pub min_eig_p: f64,
}

impl LyapunovCertificate {
    pub fn worst_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Strict feasibility at margin `eps_lmi`.
    pub fn is_strict(&self, eps_lmi: f64) -> bool {
        self.min_eig_p > 0.0 && self.worst_margin() < -eps_lmi
    }
}

/// `K = C (G + ridge·I)⁻¹`: the exact minimizer of the discretized
/// imitation objective, ignoring stability.
pub fn fit_unconstrained(dataset: &TrajectoryDataset, ridge: f64) -> Result<ControllerGain> {
    if ridge < 0.0 {
        return Err(Error::invalid("ridge must be ≥ 0"));
    }
    let s = dataset.g.nrows();
    if dataset.g.ncols() != s || dataset.c.ncols() != s {
        return Err(Error::invalid("dataset Gram matrices have inconsistent shapes"));
    }
    let greg = &dataset.g + DMatrix::identity(s, s) * ridge;
    let singular = linalg::min_sym_eig(&greg) <= 0.0
        || linalg::sym_condition(&greg) > crate::lqr::CONDITION_LIMIT;
    if singular {
        if ridge == 0.0 {
            return Err(Error::invalid(
                "G is numerically singular; supply a nonzero ridge",
            ));
        }
        return Err(Error::numerical(
            "G + ridge·I is numerically singular; increase the ridge",
        ));
    }
    let chol = linalg::try_cholesky(&greg)
        .ok_or_else(|| Error::numerical("Cholesky of G + ridge·I failed"))?;
    // Solve (G + ridge·I) X = Cᵀ, then K = Xᵀ.
    let k = chol.solve(&dataset.c.transpose()).transpose();
    ControllerGain::new(k, GainOrigin::Unconstrained)
}
