//! Constructive stabilizing controllers.
//!
//! Both constructions exploit the block structure of the swing dynamics:
//! the only mode-dependent quantity is the inertia matrix, so explicit
//! gains can be written down that stabilize every mode at once.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::netmodel::{assemble_mode, build_laplacian, PowerNetwork};
use crate::synth::{ControllerGain, GainOrigin, LyapunovCertificate};
use crate::{Error, Result};

/// The distributed closed-form gain `K1 = L − I`, `K2 = D − I`.
///
/// The resulting closed loop of every mode is
/// `[[0, I], [−M_q⁻¹, −M_q⁻¹]]`, which is Hurwitz for any positive
/// inertia. Each node needs its own state and the angles of its
/// electrical neighbors only.
pub fn prop1_controller(network: &PowerNetwork) -> ControllerGain {
    let n = network.node_count();
    let lap = build_laplacian(network);
    let eye = DMatrix::<f64>::identity(n, n);
    let k1 = &lap - &eye;
    let k2 = network.damping_matrix() - &eye;
    let mut k = DMatrix::zeros(n, 2 * n);
    k.view_mut((0, 0), (n, n)).copy_from(&k1);
    k.view_mut((0, n), (n, n)).copy_from(&k2);
    ControllerGain::new(k, GainOrigin::Prop1).expect("prop1 gain is finite by construction")
}

/// Intermediate quantities of the local construction, kept for inspection
/// and testing.
#[derive(Debug, Clone)]
pub struct LocalConstructionTrace {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub x3: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    /// Per-mode `Z_q = M_q⁻¹(D − L)`.
    pub z: Vec<DMatrix<f64>>,
    /// Per-mode `W_q = −M_q⁻¹L + ξ·M_q⁻¹D`.
    pub w: Vec<DMatrix<f64>>,
    pub n_mat: DMatrix<f64>,
    /// Entrywise maximum inertia over modes.
    pub m_bar: DVector<f64>,
    /// The scalar ν with `N = ν·I`.
    pub nu: f64,
    /// Margin actually used (doubles on retry).
    pub delta: f64,
    pub retries: usize,
}

/// A local (diagonal-gain) controller with an analytic common-Lyapunov
/// certificate.
///
/// Fixes `X1 = I`, `X2 = −I`, `Y1 = 0`, `X3 = ξ·I` in the congruence
/// variables `X = P⁻¹`, `Y = K X`, then picks `N = ν·I ≺ 0` below the
/// relevant eigenvalue bounds with margin `δ` and `Y2 = diag(ν·m̄_i − δ)`.
/// The gain is `K = [Y2(X3−I)⁻¹  Y2(X3−I)⁻¹]` (both blocks diagonal and
/// equal) and the certificate is `P = X⁻¹`. The construction is verified
/// numerically; on failure `δ` doubles, with a bounded retry budget —
/// exhausting it indicates a defect, since feasibility is guaranteed.
pub fn local_construction(
    network: &PowerNetwork,
    delta: f64,
    xi: f64,
) -> Result<(ControllerGain, LyapunovCertificate, LocalConstructionTrace)> {
    const MAX_RETRIES: usize = 20;
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be > 0"));
    }
    if !(xi > 1.0) {
        return Err(Error::invalid("xi must be > 1"));
    }
    let n = network.node_count();
    let m = network.mode_count();
    let lap = build_laplacian(network);
    let d = network.damping_matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let m_bar = network.max_inertia();

    // Mode-independent pieces.
    let x1 = eye.clone();
    let x2 = -&eye;
    let x3 = &eye * xi;
    let y1 = DMatrix::<f64>::zeros(n, n);

    let mut z = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m);
    let mut nu_bound = 0.0f64;
    for q in 1..=m {
        let m_inv = DMatrix::from_diagonal(&network.inertia(q)?.map(|v| 1.0 / v));
        let z_q = &m_inv * (&d - &lap);
        let w_q = -(&m_inv * &lap) + (&m_inv * &d) * xi;
        nu_bound = nu_bound.min(linalg::min_sym_eig(&(&w_q + w_q.transpose())));
        // (X3ᵀ + Z_q)(X3 + Z_qᵀ) = G_q G_qᵀ ⪰ 0 with G_q = ξI + Z_q.
        let g_q = &x3 + &z_q;
        let gram = &g_q * g_q.transpose();
        nu_bound = nu_bound.min(-0.5 * linalg::max_sym_eig(&gram));
        z.push(z_q);
        w.push(w_q);
    }

    let mut delta_cur = delta;
    let mut last_failure = String::new();
    for attempt in 0..=MAX_RETRIES {
        let nu = nu_bound - delta_cur;
        let n_mat = &eye * nu;
        let y2 = DMatrix::from_diagonal(&m_bar.map(|mb| nu * mb - delta_cur));

        // K = [Y2(X3−I)⁻¹  Y2(X3−I)⁻¹]; with X3 = ξI the inverse is 1/(ξ−1).
        let block = &y2 * (1.0 / (xi - 1.0));
        let mut k = DMatrix::zeros(n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(&block);
        k.view_mut((0, n), (n, n)).copy_from(&block);

        // P = X⁻¹ for X = [[I, −I], [−I, ξI]], by the partitioned inverse:
        // P11 = (I − X3⁻¹)⁻¹ = ξ/(ξ−1)·I, P12 = P21 = P22 = (X3−I)⁻¹.
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        let inv = 1.0 / (xi - 1.0);
        for i in 0..n {
            p[(i, i)] = xi * inv;
            p[(i, n + i)] = inv;
            p[(n + i, i)] = inv;
            p[(n + i, n + i)] = inv;
        }

        let min_eig_p = linalg::min_sym_eig(&p);
        let mut margins = Vec::with_capacity(m);
        for q in 1..=m {
            let (a_q, b_q) = assemble_mode(network, q)?;
            let acl = &a_q + &b_q * &k;
            let lmi = acl.transpose() * &p + &p * &acl;
            margins.push(linalg::max_sym_eig(&lmi));
        }
        let worst = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min_eig_p > 0.0 && worst < 0.0 {
            let gain = ControllerGain::new(k, GainOrigin::Local)?;
            let cert = LyapunovCertificate { p, margins, min_eig_p };
            let trace = LocalConstructionTrace {
                x1,
                x2,
                x3,
                y1,
                y2,
                z,
                w,
                n_mat,
                m_bar,
                nu,
                delta: delta_cur,
                retries: attempt,
            };
            return Ok((gain, cert, trace));
        }
        last_failure = format!(
            "attempt {attempt}: worst LMI margin {worst:.3e}, min eig P {min_eig_p:.3e}"
        );
        delta_cur *= 2.0;
    }
    Err(Error::numerical(format!(
        "local construction exhausted its retry budget ({last_failure}); \
         this should not happen for a valid network"
    )))
}
