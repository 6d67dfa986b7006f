//! Exact closed-loop simulation under switching, and evaluation metrics.
//!
//! The controller acts continuously, so each sampling interval is
//! propagated by the exponential of the *closed-loop* matrix:
//! `x_{k+1} = exp((A_q + B_q K)·h)·x_k`. This differs deliberately from
//! the training discretization, which holds the input constant over the
//! step. Per-mode exponentials are computed once per controller and
//! reused across simulations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::netmodel::{StateVector, SwitchedModel};
use crate::scenarios::SwitchingSequence;
use crate::{Error, Result};

/// State-norm guard: propagation stops and the trajectory is flagged
/// divergent once `‖x‖₂` exceeds this.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// A sampled closed-loop run. `inputs[k] = K·states[k]` exactly;
/// `modes[k]` is the mode governing the interval starting at `times[k]`
/// (the final entry repeats the last interval's mode).
#[derive(Debug, Clone)]
pub struct ClosedLoopTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
    pub step_h: f64,
    pub diverged: bool,
}

impl ClosedLoopTrajectory {
    pub fn node_count(&self) -> usize {
        self.states[0].len() / 2
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is non-empty")
    }
}

/// Precomputed per-mode closed-loop propagators for one gain.
pub struct ClosedLoopSimulator {
    exps: Vec<DMatrix<f64>>,
    k: DMatrix<f64>,
    step_h: f64,
    state_dim: usize,
}

impl ClosedLoopSimulator {
    pub fn new(model: &SwitchedModel, k: &DMatrix<f64>) -> Result<Self> {
        let mut exps = Vec::with_capacity(model.mode_count());
        for q in 1..=model.mode_count() {
            let acl = model.closed_loop(q, k)?;
            exps.push(linalg::expm(&(acl * model.step_h())));
        }
        Ok(ClosedLoopSimulator {
            exps,
            k: k.clone(),
            step_h: model.step_h(),
            state_dim: model.state_dim(),
        })
    }

    /// Propagates `steps` intervals along the switching sequence.
    pub fn simulate(
        &self,
        sequence: &SwitchingSequence,
        x0: &StateVector,
        steps: usize,
    ) -> Result<ClosedLoopTrajectory> {
        if sequence.len() < steps {
            return Err(Error::invalid(format!(
                "sequence covers {} steps, simulation needs {steps}",
                sequence.len()
            )));
        }
        if x0.as_vector().len() != self.state_dim {
            return Err(Error::invalid("x0 dimension does not match the model"));
        }
        let mut traj = ClosedLoopTrajectory {
            times: Vec::with_capacity(steps + 1),
            states: Vec::with_capacity(steps + 1),
            inputs: Vec::with_capacity(steps + 1),
            modes: Vec::with_capacity(steps + 1),
            step_h: self.step_h,
            diverged: false,
        };
        let mut x = x0.as_vector().clone();
        traj.times.push(0.0);
        traj.inputs.push(&self.k * &x);
        traj.states.push(x.clone());
        traj.modes.push(sequence.mode_at(0));
        for t in 0..steps {
            let q = sequence.mode_at(t);
            if q == 0 || q > self.exps.len() {
                return Err(Error::invalid(format!("mode {q} outside the model's range")));
            }
            x = &self.exps[q - 1] * x;
            let finite = linalg::all_finite_vec(&x);
            if finite {
                traj.times.push((t + 1) as f64 * self.step_h);
                traj.inputs.push(&self.k * &x);
                traj.states.push(x.clone());
                traj.modes.push(if t + 1 < steps { sequence.mode_at(t + 1) } else { q });
            }
            if !finite || x.norm() > OVERFLOW_GUARD {
                traj.diverged = true;
                break;
            }
        }
        Ok(traj)
    }
}

/// One-shot convenience wrapper around [`ClosedLoopSimulator`].
pub fn simulate_closed_loop(
    model: &SwitchedModel,
    k: &DMatrix<f64>,
    sequence: &SwitchingSequence,
    x0: &StateVector,
    steps: usize,
) -> Result<ClosedLoopTrajectory> {
    ClosedLoopSimulator::new(model, k)?.simulate(sequence, x0, steps)
}

/// Left-endpoint quadrature totals of `Σ_i |u_i|` and `Σ_i |ω_i|`, with a
/// per-mode breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_input: f64,
    pub total_freq_dev: f64,
    /// Mode → (input total, frequency-deviation total) accumulated over
    /// the intervals that mode governed.
    pub per_mode: BTreeMap<usize, (f64, f64)>,
    pub duration: f64,
    pub diverged: bool,
}

/// Integrates `∫ Σ_i |u_i| dt` and `∫ Σ_i |ω_i| dt` by the rectangle rule
/// over the sampled trajectory.
pub fn metrics(traj: &ClosedLoopTrajectory) -> Result<MetricsReport> {
    if traj.is_empty() {
        return Err(Error::invalid("trajectory is empty"));
    }
    let n = traj.node_count();
    let h = traj.step_h;
    let mut total_input = 0.0;
    let mut total_freq_dev = 0.0;
    let mut per_mode: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for k in 0..traj.len().saturating_sub(1) {
        let du = traj.inputs[k].iter().map(|v| v.abs()).sum::<f64>() * h;
        let dw = traj.states[k].rows(n, n).iter().map(|v| v.abs()).sum::<f64>() * h;
        total_input += du;
        total_freq_dev += dw;
        let entry = per_mode.entry(traj.modes[k]).or_insert((0.0, 0.0));
        entry.0 += du;
        entry.1 += dw;
    }
    Ok(MetricsReport {
        total_input,
        total_freq_dev,
        per_mode,
        duration: (traj.len() - 1) as f64 * h,
        diverged: traj.diverged,
    })
}

/// The Lyapunov function values `V_k = x_kᵀ P x_k` along a trajectory.
pub fn lyapunov_trace(traj: &ClosedLoopTrajectory, p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let s = 2 * traj.node_count();
    if p.nrows() != s || p.ncols() != s {
        return Err(Error::invalid("P dimensions do not match the trajectory"));
    }
    let asym = (p - p.transpose()).norm() / (1.0 + p.norm());
    if asym > 1e-9 {
        return Err(Error::invalid("P must be symmetric"));
    }
    Ok(traj.states.iter().map(|x| (x.transpose() * p * x)[(0, 0)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::PowerNetwork;
    use crate::scenarios::{
        sample_switching_sequence_with_law, JumpLaw, SwitchingSequence,
    };
    use crate::synth::{local_construction, prop1_controller};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_model() -> SwitchedModel {
        let (net, h) = PowerNetwork::default_12bus();
        SwitchedModel::build(net, h).unwrap()
    }

    fn uniform_x0(n: usize, omega: f64) -> StateVector {
        StateVector::from_parts(
            &DVector::zeros(n),
            &DVector::from_element(n, omega),
        )
        .unwrap()
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let model = default_model();
        let gain = prop1_controller(model.network());
        let seq = SwitchingSequence::new(vec![1; 100], 1, 10).unwrap();
        let x0 = StateVector::new(DVector::zeros(24)).unwrap();
        let traj = simulate_closed_loop(&model, &gain.k, &seq, &x0, 100).unwrap();
        assert!(traj.states.iter().all(|x| x.amax() == 0.0));
        assert!(traj.inputs.iter().all(|u| u.amax() == 0.0));
        assert!(!traj.diverged);
    }

    #[test]
    fn constant_mode_matches_matrix_exponential_oracle() {
        let model = default_model();
        let gain = prop1_controller(model.network());
        let steps = 1000;
        let seq = SwitchingSequence::new(vec![4; steps], 1, 10).unwrap();
        let x0 = uniform_x0(12, 0.3);
        let traj = simulate_closed_loop(&model, &gain.k, &seq, &x0, steps).unwrap();
        let acl = model.closed_loop(4, &gain.k).unwrap();
        for k in [1, 10, 250, 999, 1000] {
            let oracle = linalg::expm(&(&acl * (k as f64 * model.step_h()))) * x0.as_vector();
            let err = (&traj.states[k] - &oracle).norm() / oracle.norm().max(1e-30);
            assert!(err <= 1e-9, "step {k}: relative error {err}");
        }
    }

    #[test]
    fn certified_pair_has_decreasing_lyapunov_on_switched_runs() {
        let model = default_model();
        let (gain, cert, _) = local_construction(model.network(), 1.0, 2.0).unwrap();
        let sim = ClosedLoopSimulator::new(&model, &gain.k).unwrap();
        let x0 = uniform_x0(12, 2.0 * std::f64::consts::PI * 0.05);
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq = sample_switching_sequence_with_law(
                &mut rng,
                10,
                10,
                1,
                200,
                JumpLaw::UniformAny,
            )
            .unwrap();
            let traj = sim.simulate(&seq, &x0, 200).unwrap();
            assert!(!traj.diverged);
            let v = lyapunov_trace(&traj, &cert.p).unwrap();
            for k in 1..v.len() {
                if v[k - 1] <= 1e-14 {
                    break;
                }
                assert!(
                    v[k] < v[k - 1],
                    "seed {seed}: V rose from {} to {} at step {k}",
                    v[k - 1],
                    v[k]
                );
            }
        }
    }

    #[test]
    fn lyapunov_trace_identity_is_norm_squared() {
        let model = default_model();
        let gain = prop1_controller(model.network());
        let seq = SwitchingSequence::new(vec![2; 10], 1, 10).unwrap();
        let x0 = uniform_x0(12, 0.1);
        let traj = simulate_closed_loop(&model, &gain.k, &seq, &x0, 10).unwrap();
        let v = lyapunov_trace(&traj, &DMatrix::identity(24, 24)).unwrap();
        for (vk, x) in v.iter().zip(&traj.states) {
            assert_relative_eq!(*vk, x.norm_squared(), max_relative = 1e-12);
        }
    }

    #[test]
    fn divergence_guard_truncates_unstable_run() {
        let model = default_model();
        let n = 12;
        // Positive frequency feedback: anti-damping.
        let mut k = DMatrix::zeros(n, 2 * n);
        for i in 0..n {
            k[(i, n + i)] = 30.0;
        }
        let seq = SwitchingSequence::new(vec![1; 100_000], 1, 10).unwrap();
        let x0 = uniform_x0(12, 0.3);
        let traj = simulate_closed_loop(&model, &k, &seq, &x0, 100_000).unwrap();
        assert!(traj.diverged);
        assert!(traj.len() < 100_001);
        // V eventually exceeds its start under any fixed P, e.g. identity.
        let v = lyapunov_trace(&traj, &DMatrix::identity(24, 24)).unwrap();
        assert!(v.last().unwrap() > v.first().unwrap());
    }

    #[test]
    fn metrics_zero_trajectory() {
        let model = default_model();
        let gain = prop1_controller(model.network());
        let seq = SwitchingSequence::new(vec![1; 10], 1, 10).unwrap();
        let x0 = StateVector::new(DVector::zeros(24)).unwrap();
        let traj = simulate_closed_loop(&model, &gain.k, &seq, &x0, 10).unwrap();
        let m = metrics(&traj).unwrap();
        assert_eq!(m.total_input, 0.0);
        assert_eq!(m.total_freq_dev, 0.0);
    }

    #[test]
    fn metrics_rectangle_rule_on_constant_inputs() {
        // Hand-built trajectory: n nodes, u_i ≡ 1, 1 s at h = 0.01.
        let n = 5;
        let steps = 100;
        let traj = ClosedLoopTrajectory {
            times: (0..=steps).map(|k| k as f64 * 0.01).collect(),
            states: (0..=steps).map(|_| DVector::zeros(2 * n)).collect(),
            inputs: (0..=steps).map(|_| DVector::from_element(n, 1.0)).collect(),
            modes: vec![1; steps + 1],
            step_h: 0.01,
            diverged: false,
        };
        let m = metrics(&traj).unwrap();
        assert_relative_eq!(m.total_input, n as f64, max_relative = 1e-12);
        assert_eq!(m.total_freq_dev, 0.0);
        assert_relative_eq!(m.duration, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn metrics_are_additive_over_segments() {
        let model = default_model();
        let gain = prop1_controller(model.network());
        let seq = SwitchingSequence::new(vec![3; 200], 1, 10).unwrap();
        let x0 = uniform_x0(12, 0.5);
        let full = simulate_closed_loop(&model, &gain.k, &seq, &x0, 200).unwrap();
        let m_full = metrics(&full).unwrap();

        // Split at step 120: second segment restarts from the mid state.
        let first = ClosedLoopTrajectory {
            times: full.times[..=120].to_vec(),
            states: full.states[..=120].to_vec(),
            inputs: full.inputs[..=120].to_vec(),
            modes: full.modes[..=120].to_vec(),
            step_h: full.step_h,
            diverged: false,
        };
        let second = ClosedLoopTrajectory {
            times: full.times[120..].to_vec(),
            states: full.states[120..].to_vec(),
            inputs: full.inputs[120..].to_vec(),
            modes: full.modes[120..].to_vec(),
            step_h: full.step_h,
            diverged: false,
        };
        let m1 = metrics(&first).unwrap();
        let m2 = metrics(&second).unwrap();
        assert_relative_eq!(
            m1.total_input + m2.total_input,
            m_full.total_input,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            m1.total_freq_dev + m2.total_freq_dev,
            m_full.total_freq_dev,
            max_relative = 1e-12
        );
    }

    #[test]
    fn per_mode_breakdown_sums_to_totals() {
        let model = default_model();
        let gain = prop1_controller(model.network());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq =
            sample_switching_sequence_with_law(&mut rng, 10, 7, 1, 300, JumpLaw::UniformAny)
                .unwrap();
        let x0 = uniform_x0(12, 0.4);
        let traj = simulate_closed_loop(&model, &gain.k, &seq, &x0, 300).unwrap();
        let m = metrics(&traj).unwrap();
        let (su, sw) = m
            .per_mode
            .values()
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        assert_relative_eq!(su, m.total_input, max_relative = 1e-12);
        assert_relative_eq!(sw, m.total_freq_dev, max_relative = 1e-12);
    }
}
