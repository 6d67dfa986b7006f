//! Stability-constrained imitation synthesis by an alternating log-det
//! barrier scheme.
//!
//! The problem is bilinear in `(K, P)`:
//!
//! ```text
//! min_{K,P}  Σ_k Σ_t h‖u_t − K x_t‖²  (+ β Σ_{(i,j) non-edge} |K_ij|)
//! s.t.       (A_q + B_q K)ᵀP + P(A_q + B_q K) ≺ 0  ∀q,   P ≻ 0
//! ```
//!
//! Each side is convex with the other fixed, so the scheme alternates:
//!
//! - K-step (P fixed): accelerated proximal gradient on
//!   `J(K) + μ·Σ_q −log det(−LMI_q(K))`, with soft-thresholding of the
//!   penalized entries (threshold `step·β`; β = 0 makes the prox the
//!   identity). Momentum restarts on any objective increase, keeping the
//!   iterates monotone.
//! - P-step (K fixed): gradient descent on the analytic-centering
//!   objective `Σ_q −log det(−LMI_q(P)) − log det(P − ε·I)`. This
//!   objective is scale-unbounded, so iterates are held on the slice
//!   `tr(P) = 2n`; the scale of `P` affects nothing downstream.
//!
//! The barrier weight μ decays geometrically. The reported objective per
//! outer iteration is the data-fit term (plus the β-penalty when β > 0);
//! if an outer iteration ever fails to decrease it, the previous iterate
//! is restored and the scheme stops, so the recorded trace is monotone by
//! construction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::lqr::TrajectoryDataset;
use crate::netmodel::{PowerNetwork, SwitchedModel};
use crate::synth::{ControllerGain, GainOrigin, LyapunovCertificate};
use crate::{Error, Result};

/// Geometric barrier-weight schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierSchedule {
    pub mu0: f64,
    pub decay: f64,
    pub mu_min: f64,
}

impl Default for BarrierSchedule {
    fn default() -> Self {
        BarrierSchedule { mu0: 1.0, decay: 0.1, mu_min: 1e-6 }
    }
}

/// Solver parameters. Defaults: μ₀ = 1 decaying by 0.1 down to 10⁻⁶,
/// inner tolerance 10⁻⁸, outer cap 60, strictness margins
/// ε_lmi = 10⁻⁷ and ε_p = 10⁻⁸, ridge 10⁻⁹.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub schedule: BarrierSchedule,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub outer_max_iters: usize,
    pub eps_lmi: f64,
    pub eps_p: f64,
    pub ridge: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            schedule: BarrierSchedule::default(),
            inner_tol: 1e-8,
            inner_max_iters: 4000,
            outer_max_iters: 60,
            eps_lmi: 1e-7,
            eps_p: 1e-8,
            ridge: 1e-9,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(s.mu0 > 0.0) || !(s.mu_min > 0.0) {
            return Err(Error::invalid("barrier weights must be > 0"));
        }
        if !(s.decay > 0.0 && s.decay < 1.0) {
            return Err(Error::invalid("barrier decay must lie in (0, 1)"));
        }
        if !(self.inner_tol > 0.0) || !(self.eps_lmi > 0.0) || !(self.eps_p > 0.0) {
            return Err(Error::invalid("tolerances must be > 0"));
        }
        if self.inner_max_iters == 0 || self.outer_max_iters == 0 {
            return Err(Error::invalid("iteration caps must be ≥ 1"));
        }
        if self.ridge < 0.0 {
            return Err(Error::invalid("ridge must be ≥ 0"));
        }
        Ok(())
    }
}

/// One row of the outer-iteration trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer_iter: usize,
    pub mu: f64,
    pub objective: f64,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub iterations: Vec<IterationRecord>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub termination: String,
    pub inner_iterations_total: usize,
}

/// Scalar soft-threshold: the proximal map of `thr·|·|`.
pub fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Penalized index set of the sparsity objective: for every non-edge node
/// pair (i, j), i ≠ j, the entries K1[i,j] and K2[i,j] in both blocks.
/// Diagonal entries are never penalized.
#[derive(Debug, Clone)]
struct SparsityMask {
    n: usize,
    mask: Vec<bool>, // row-major n×2n
}

impl SparsityMask {
    fn non_edge(network: &PowerNetwork) -> Self {
        let n = network.node_count();
        let mut mask = vec![false; n * 2 * n];
        for i in 0..n {
            for j in 0..n {
                let penalized = i != j && !network.is_edge(i, j);
                mask[i * 2 * n + j] = penalized;
                mask[i * 2 * n + n + j] = penalized;
            }
        }
        SparsityMask { n, mask }
    }

    fn is_penalized(&self, i: usize, j: usize) -> bool {
        self.mask[i * 2 * self.n + j]
    }

    fn l1(&self, k: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..2 * self.n {
                if self.is_penalized(i, j) {
                    acc += k[(i, j)].abs();
                }
            }
        }
        acc
    }

    fn prox(&self, k: &mut DMatrix<f64>, thr: f64) {
        if thr == 0.0 {
            return;
        }
        for i in 0..self.n {
            for j in 0..2 * self.n {
                if self.is_penalized(i, j) {
                    k[(i, j)] = soft_threshold(k[(i, j)], thr);
                }
            }
        }
    }
}

/// Per-mode LMI margins `μ_q = λ_max((A_q+B_qK)ᵀP + P(A_q+B_qK))`.
fn margins_of(model: &SwitchedModel, k: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Vec<f64>> {
    (1..=model.mode_count())
        .map(|q| {
            let acl = model.closed_loop(q, k)?;
            let lmi = acl.transpose() * p + p * acl;
            Ok(linalg::max_sym_eig(&lmi))
        })
        .collect()
}

fn worst(margins: &[f64]) -> f64 {
    margins.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Fixed-P context for the K-step: `S_q(K) = −(H_q + PB_qK + (PB_qK)ᵀ)`
/// with `H_q = A_qᵀP + PA_q` precomputed.
struct KStepCtx<'a> {
    dataset: &'a TrajectoryDataset,
    mask: &'a SparsityMask,
    beta: f64,
    mu: f64,
    h: Vec<DMatrix<f64>>,
    pb: Vec<DMatrix<f64>>,
}

impl<'a> KStepCtx<'a> {
    fn new(
        dataset: &'a TrajectoryDataset,
        model: &SwitchedModel,
        p: &DMatrix<f64>,
        mask: &'a SparsityMask,
        beta: f64,
        mu: f64,
    ) -> Result<Self> {
        let mut h = Vec::with_capacity(model.mode_count());
        let mut pb = Vec::with_capacity(model.mode_count());
        for q in 1..=model.mode_count() {
            let md = model.continuous(q)?;
            h.push(md.a.transpose() * p + p * &md.a);
            pb.push(p * &md.b);
        }
        Ok(KStepCtx { dataset, mask, beta, mu, h, pb })
    }

    /// Smooth part `J(K) + μ·Σ_q −log det S_q(K)`, with the Cholesky
    /// factors kept for the gradient. `None` when K leaves the feasible
    /// region (some S_q not positive definite).
    fn eval(&self, k: &DMatrix<f64>) -> Option<(f64, Vec<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>>)> {
        let mut f = self.dataset.imitation_objective(k);
        let mut chols = Vec::with_capacity(self.h.len());
        for (h_q, pb_q) in self.h.iter().zip(&self.pb) {
            let pbk = pb_q * k;
            let s = -(h_q + &pbk + pbk.transpose());
            let chol = linalg::try_cholesky(&s)?;
            let mut logdet = 0.0;
            let l = chol.l_dirty();
            for i in 0..l.nrows() {
                let d = l[(i, i)];
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                logdet += d.ln();
            }
            f -= self.mu * 2.0 * logdet;
            chols.push(chol);
        }
        f.is_finite().then_some((f, chols))
    }

    /// `∇f = 2(KG − C) + μ·Σ_q 2·(PB_q)ᵀ S_q⁻¹`.
    fn grad(
        &self,
        k: &DMatrix<f64>,
        chols: &[nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>],
    ) -> DMatrix<f64> {
        let mut g = (k * &self.dataset.g - &self.dataset.c) * 2.0;
        for (pb_q, chol) in self.pb.iter().zip(chols) {
            let s_inv = chol.inverse();
            g += (pb_q.transpose() * s_inv) * (2.0 * self.mu);
        }
        g
    }

    /// Composite objective `smooth + β·‖mask⊙K‖₁` from a known smooth value.
    fn composite(&self, smooth: f64, k: &DMatrix<f64>) -> f64 {
        smooth + self.beta * self.mask.l1(k)
    }
}

/// Accelerated proximal gradient with backtracking and monotone restart.
/// Returns the new gain, the iterations used, and the last accepted step.
fn k_step(
    ctx: &KStepCtx,
    k0: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
    alpha0: f64,
) -> Result<(DMatrix<f64>, usize, f64)> {
    let (f0, chols0) = ctx
        .eval(k0)
        .ok_or_else(|| Error::numerical("K-step started from an infeasible point"))?;
    let mut k = k0.clone();
    let mut f_k = f0;
    let mut y = k0.clone();
    let mut f_y = f0;
    let mut chols_y = chols0;
    let mut t = 1.0f64;
    let mut alpha = alpha0;
    let mut iters = 0;

    while iters < max_iters {
        iters += 1;
        let g = ctx.grad(&y, &chols_y);
        // Backtrack until the quadratic majorization holds at a feasible point.
        let (cand, f_cand) = loop {
            let mut cand = &y - &g * alpha;
            ctx.mask.prox(&mut cand, alpha * ctx.beta);
            if let Some((f_c, _)) = ctx.eval(&cand) {
                let d = &cand - &y;
                let quad = f_y + linalg::frob_inner(&g, &d) + d.norm_squared() / (2.0 * alpha);
                if f_c <= quad + 1e-12 * quad.abs().max(1.0) {
                    break (cand, f_c);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-18 {
                return Err(Error::numerical(
                    "K-step line search stalled: no feasible decrease direction",
                ));
            }
        };

        // Monotone safeguard: discard momentum if the composite went up.
        if ctx.composite(f_cand, &cand) > ctx.composite(f_k, &k) {
            y = k.clone();
            t = 1.0;
            let (f, ch) = ctx.eval(&y).expect("previous iterate stays feasible");
            f_y = f;
            chols_y = ch;
            continue;
        }

        let step_norm = (&cand - &y).norm();
        let done = step_norm <= tol * alpha * k.norm().max(1.0);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let y_next = &cand + (&cand - &k) * momentum;
        k = cand;
        f_k = f_cand;
        t = t_next;
        if done {
            break;
        }
        match ctx.eval(&y_next) {
            Some((f, ch)) => {
                y = y_next;
                f_y = f;
                chols_y = ch;
            }
            None => {
                // Momentum overshot the feasible region; restart from k.
                y = k.clone();
                t = 1.0;
                let (f, ch) = ctx.eval(&y).expect("accepted iterate is feasible");
                f_y = f;
                chols_y = ch;
            }
        }
        alpha *= 1.25;
    }
    Ok((k, iters, alpha))
}

/// Analytic re-centering of P at fixed K: gradient descent on
/// `Σ_q −log det(−LMI_q(P)) − log det(P − ε·I)` restricted to the slice
/// `tr(P) = dim` (the objective is unbounded along the scale direction,
/// which affects nothing downstream).
fn p_step(
    model: &SwitchedModel,
    k: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    eps_p: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>> {
    let s = model.state_dim();
    let mut acl = Vec::with_capacity(model.mode_count());
    for q in 1..=model.mode_count() {
        acl.push(model.closed_loop(q, k)?);
    }
    let eye = DMatrix::<f64>::identity(s, s);

    let eval = |p: &DMatrix<f64>| -> Option<f64> {
        let mut f = 0.0;
        for a in &acl {
            let lmi = a.transpose() * p + p * a;
            f -= linalg::logdet_spd(&(-lmi))?;
        }
        f -= linalg::logdet_spd(&(p - &eye * eps_p))?;
        f.is_finite().then_some(f)
    };
    let grad = |p: &DMatrix<f64>| -> Option<DMatrix<f64>> {
        let mut g = DMatrix::zeros(s, s);
        for a in &acl {
            let lmi = a.transpose() * p + p * a;
            let s_inv = linalg::try_cholesky(&(-lmi))?.inverse();
            g += a * &s_inv + &s_inv * a.transpose();
        }
        let shifted_inv = linalg::try_cholesky(&(p - &eye * eps_p))?.inverse();
        g -= shifted_inv;
        Some(linalg::symmetrize(&g))
    };

    let normalize = |p: &DMatrix<f64>| -> DMatrix<f64> {
        linalg::symmetrize(p) * (s as f64 / p.trace())
    };

    let mut p = normalize(p0);
    let mut f = eval(&p)
        .ok_or_else(|| Error::numerical("P-step started from an infeasible point"))?;
    let mut alpha = 1.0 / (s as f64);
    for _ in 0..max_iters {
        let Some(g) = grad(&p) else { break };
        // Project onto the trace-zero subspace so steps stay on the slice.
        let gp = &g - &eye * (g.trace() / s as f64);
        let gn2 = gp.norm_squared();
        if gn2.sqrt() <= 1e-7 * (s as f64) {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand = normalize(&(&p - &gp * alpha));
            if let Some(f_c) = eval(&cand) {
                if f_c <= f - 1e-4 * alpha * gn2 {
                    p = cand;
                    f = f_c;
                    alpha *= 1.25;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(p)
}

fn termination_label(reason: &str) -> String {
    reason.to_string()
}

/// Stability-constrained imitation synthesis (no sparsity penalty).
/// Requires a strictly feasible initial pair.
pub fn synthesize_stable(
    dataset: &TrajectoryDataset,
    model: &SwitchedModel,
    init_gain: &ControllerGain,
    init_p: &DMatrix<f64>,
    config: &SynthesisConfig,
) -> Result<(ControllerGain, LyapunovCertificate, SynthesisReport)> {
    synthesize_sparse(dataset, model, init_gain, init_p, 0.0, config)
}

/// Sparsity-promoting stability-constrained synthesis. `beta = 0` reduces
/// exactly to [`synthesize_stable`] (identical code path).
pub fn synthesize_sparse(
    dataset: &TrajectoryDataset,
    model: &SwitchedModel,
    init_gain: &ControllerGain,
    init_p: &DMatrix<f64>,
    beta: f64,
    config: &SynthesisConfig,
) -> Result<(ControllerGain, LyapunovCertificate, SynthesisReport)> {
    config.validate()?;
    if !(beta >= 0.0) {
        return Err(Error::invalid("beta must be ≥ 0"));
    }
    let s = model.state_dim();
    if init_gain.k.nrows() != model.input_dim() || init_gain.k.ncols() != s {
        return Err(Error::invalid("initial gain dimensions do not match the model"));
    }
    if init_p.nrows() != s || init_p.ncols() != s {
        return Err(Error::invalid("initial P dimensions do not match the model"));
    }
    if dataset.g.nrows() != s {
        return Err(Error::invalid("dataset dimensions do not match the model"));
    }

    // Scale-normalize P (the constraint set and everything downstream are
    // invariant under P → cP), then insist on strict feasibility.
    let mut p = linalg::symmetrize(init_p) * (s as f64 / init_p.trace());
    let mut margins = margins_of(model, &init_gain.k, &p)?;
    let min_eig_p = linalg::min_sym_eig(&p);
    if min_eig_p < config.eps_p || worst(&margins) >= -config.eps_lmi {
        return Err(Error::invalid(format!(
            "initialization is not strictly feasible: worst LMI margin {:.3e}, min eig P {:.3e}",
            worst(&margins),
            min_eig_p
        )));
    }

    let mask = SparsityMask::non_edge(model.network());
    let objective = |k: &DMatrix<f64>| dataset.imitation_objective(k) + beta * mask.l1(k);

    let mut k = init_gain.k.clone();
    let initial_objective = objective(&k);
    let mut prev_obj = initial_objective;
    let mut rows = vec![IterationRecord {
        outer_iter: 0,
        mu: config.schedule.mu0,
        objective: initial_objective,
        worst_margin: worst(&margins),
    }];
    let mut mu = config.schedule.mu0;
    let mut inner_total = 0;
    let mut alpha = None;
    let mut termination = termination_label("outer iteration cap");

    for outer in 1..=config.outer_max_iters {
        let ctx = KStepCtx::new(dataset, model, &p, &mask, beta, mu)?;
        let alpha0 = alpha.unwrap_or_else(|| {
            // 1/L estimate for the data-fit term.
            1.0 / (2.0 * linalg::max_sym_eig(&dataset.g)).max(1e-12)
        });
        let (k_new, iters, alpha_last) =
            k_step(&ctx, &k, config.inner_tol, config.inner_max_iters, alpha0)?;
        inner_total += iters;
        alpha = Some(alpha_last);
        let p_new = p_step(model, &k_new, &p, config.eps_p, 300)?;

        let obj = objective(&k_new);
        if obj > prev_obj {
            // Barrier continuation no longer decreases the objective; keep
            // the previous (feasible) iterate and stop.
            termination = termination_label("objective increase (converged)");
            break;
        }
        k = k_new;
        p = p_new;
        margins = margins_of(model, &k, &p)?;
        rows.push(IterationRecord {
            outer_iter: outer,
            mu,
            objective: obj,
            worst_margin: worst(&margins),
        });
        let stalled = (prev_obj - obj).abs() <= config.inner_tol * prev_obj.abs().max(1.0);
        prev_obj = obj;
        if stalled {
            termination = termination_label("objective stall");
            break;
        }
        mu *= config.schedule.decay;
        if mu < config.schedule.mu_min {
            termination = termination_label("barrier floor");
            break;
        }
    }

    margins = margins_of(model, &k, &p)?;
    let cert = LyapunovCertificate {
        min_eig_p: linalg::min_sym_eig(&p),
        p,
        margins,
    };
    let origin = if beta == 0.0 { GainOrigin::Optimal } else { GainOrigin::Sparse };
    let gain = ControllerGain::new(k, origin)?;
    let report = SynthesisReport {
        initial_objective,
        final_objective: prev_obj,
        termination,
        inner_iterations_total: inner_total,
        iterations: rows,
    };
    Ok((gain, cert, report))
}
