//! Reproducible training scenarios: random initial states and random
//! mode-switching sequences.
//!
//! Every scenario is generated from its own sub-seed, derived from the
//! master seed by a documented stable hash (the splitmix64 stream), so a
//! single scenario can be regenerated in isolation and parallel generation
//! yields exactly the sequential result.

use nalgebra::DVector;
use rand::{Rng, RngExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::netmodel::StateVector;
use crate::{Error, Result};

/// How the active mode moves at a decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpLaw {
    /// Random walk: stay, step up, or step down with equal probability,
    /// clamped to the valid mode range.
    #[serde(rename = "walk")]
    Walk,
    /// Uniform draw over all modes (arbitrary jumps allowed).
    #[serde(rename = "uniform-any")]
    UniformAny,
}

/// A mode index per discrete step (1-based), changing only at multiples of
/// `dwell_steps`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchingSequence {
    modes: Vec<usize>,
    dwell_steps: usize,
}

impl SwitchingSequence {
    pub fn new(modes: Vec<usize>, dwell_steps: usize, mode_count: usize) -> Result<Self> {
        if dwell_steps == 0 {
            return Err(Error::invalid("dwell_steps must be ≥ 1"));
        }
        if modes.is_empty() {
            return Err(Error::invalid("switching sequence must be non-empty"));
        }
        for (t, &q) in modes.iter().enumerate() {
            if q == 0 || q > mode_count {
                return Err(Error::invalid(format!(
                    "sequence entry {q} at step {t} outside 1..={mode_count}"
                )));
            }
            if t > 0 && t % dwell_steps != 0 && modes[t] != modes[t - 1] {
                return Err(Error::invalid(format!(
                    "sequence switches at step {t}, not a multiple of dwell {dwell_steps}"
                )));
            }
        }
        Ok(SwitchingSequence { modes, dwell_steps })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn dwell_steps(&self) -> usize {
        self.dwell_steps
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Active mode during step `t` (0-based step, 1-based mode).
    pub fn mode_at(&self, t: usize) -> usize {
        self.modes[t]
    }
}

/// One training scenario: where the system starts, how the inertia
/// switches, and for how many steps.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x0: StateVector,
    pub sequence: SwitchingSequence,
    pub horizon_steps: usize,
    pub seed: u64,
}

/// Scenario-generation parameters. `variance` is the Gaussian variance of
/// each initial-state coordinate (set `variance_is_std` to reinterpret the
/// number as a standard deviation instead).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub count: usize,
    pub horizon_steps: usize,
    /// Starting mode (1-based).
    pub q0: usize,
    pub dwell_steps: usize,
    pub variance: f64,
    #[serde(default)]
    pub variance_is_std: bool,
    #[serde(default = "default_jump_law")]
    pub jump_law: JumpLaw,
}

fn default_jump_law() -> JumpLaw {
    JumpLaw::Walk
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            count: 50,
            horizon_steps: 50,
            q0: 7,
            dwell_steps: 2,
            variance: 0.1,
            variance_is_std: false,
            jump_law: JumpLaw::Walk,
        }
    }
}

/// The k-th output of the splitmix64 stream seeded at `master`. Stable
/// across platforms and releases; documented so scenario k can be
/// regenerated in isolation.
pub fn derive_subseed(master: u64, k: u64) -> u64 {
    let mut z = master.wrapping_add((k.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `2n` independent Gaussian draws with mean 0 and the given variance.
pub fn sample_initial_state<R: Rng>(rng: &mut R, n: usize, variance: f64) -> Result<StateVector> {
    if !(variance > 0.0) {
        return Err(Error::invalid(format!("variance must be > 0, got {variance}")));
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::invalid(format!("bad normal parameters: {e}")))?;
    let x = DVector::from_iterator(2 * n, (0..2 * n).map(|_| normal.sample(rng)));
    StateVector::new(x)
}

/// One decision-point move of the random walk, clamped to `[1, m]`.
fn step_mode(q: usize, draw: u8, m: usize) -> usize {
    match draw {
        0 => q,                          // stay
        1 => (q + 1).min(m),             // up
        _ => q.saturating_sub(1).max(1), // down
    }
}

/// Random-walk switching sequence: starts at `q0`; every `dwell_steps`
/// steps draws uniformly from {stay, up, down}, clamped to `[1, m]`.
pub fn sample_switching_sequence<R: Rng>(
    rng: &mut R,
    m: usize,
    q0: usize,
    dwell_steps: usize,
    total_steps: usize,
) -> Result<SwitchingSequence> {
    sample_switching_sequence_with_law(rng, m, q0, dwell_steps, total_steps, JumpLaw::Walk)
}

/// As [`sample_switching_sequence`] but with a selectable jump law.
pub fn sample_switching_sequence_with_law<R: Rng>(
    rng: &mut R,
    m: usize,
    q0: usize,
    dwell_steps: usize,
    total_steps: usize,
    law: JumpLaw,
) -> Result<SwitchingSequence> {
    if m == 0 {
        return Err(Error::invalid("mode count must be ≥ 1"));
    }
    if q0 == 0 || q0 > m {
        return Err(Error::invalid(format!("q0 = {q0} outside 1..={m}")));
    }
    if dwell_steps == 0 {
        return Err(Error::invalid("dwell_steps must be ≥ 1"));
    }
    if total_steps == 0 {
        return Err(Error::invalid("total_steps must be ≥ 1"));
    }
    let mut modes = Vec::with_capacity(total_steps);
    let mut q = q0;
    for t in 0..total_steps {
        if t > 0 && t % dwell_steps == 0 {
            q = match law {
                JumpLaw::Walk => step_mode(q, rng.random_range(0..3u8), m),
                JumpLaw::UniformAny => rng.random_range(1..=m),
            };
        }
        modes.push(q);
    }
    SwitchingSequence::new(modes, dwell_steps, m)
}

/// Generates `config.count` scenarios, each from its own sub-seed. Given
/// `(config, master_seed)` the result is fully determined, independent of
/// execution order.
pub fn build_scenarios(
    config: &ScenarioConfig,
    n: usize,
    mode_count: usize,
    master_seed: u64,
) -> Result<Vec<Scenario>> {
    if config.count == 0 {
        return Err(Error::invalid("scenario count must be ≥ 1"));
    }
    if config.horizon_steps == 0 {
        return Err(Error::invalid("horizon_steps must be ≥ 1"));
    }
    let variance = if config.variance_is_std {
        config.variance * config.variance
    } else {
        config.variance
    };
    (0..config.count)
        .map(|k| {
            let seed = derive_subseed(master_seed, k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = sample_initial_state(&mut rng, n, variance)?;
            let sequence = sample_switching_sequence_with_law(
                &mut rng,
                mode_count,
                config.q0,
                config.dwell_steps,
                config.horizon_steps,
                config.jump_law,
            )?;
            Ok(Scenario { x0, sequence, horizon_steps: config.horizon_steps, seed })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn tiny_variance_gives_near_zero_state() {
        let x = sample_initial_state(&mut rng(1), 12, 1e-30).unwrap();
        assert!(x.as_vector().amax() < 1e-10);
    }

    #[test]
    fn variance_must_be_positive() {
        assert!(sample_initial_state(&mut rng(1), 3, 0.0).is_err());
        assert!(sample_initial_state(&mut rng(1), 3, -0.1).is_err());
    }

    #[test]
    fn initial_state_is_deterministic_per_seed() {
        let a = sample_initial_state(&mut rng(42), 12, 0.1).unwrap();
        let b = sample_initial_state(&mut rng(42), 12, 0.1).unwrap();
        assert_eq!(a.as_vector().as_slice(), b.as_vector().as_slice());
    }

    #[test]
    fn sample_variance_matches_target() {
        let mut r = rng(7);
        let n = 50_000; // 2n = 1e5 draws
        let x = sample_initial_state(&mut r, n, 0.1).unwrap();
        let v = x.as_vector();
        let mean = v.sum() / v.len() as f64;
        let var = v.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (v.len() - 1) as f64;
        assert!((var - 0.1).abs() <= 0.005, "sample variance {var}");
    }

    #[test]
    fn single_mode_sequence_is_constant() {
        let s = sample_switching_sequence(&mut rng(3), 1, 1, 2, 50).unwrap();
        assert!(s.modes().iter().all(|&q| q == 1));
    }

    #[test]
    fn step_mode_clamps_at_boundaries() {
        // down at the bottom stays
        assert_eq!(step_mode(1, 2, 10), 1);
        // up at the top stays
        assert_eq!(step_mode(10, 1, 10), 10);
        assert_eq!(step_mode(5, 0, 10), 5);
        assert_eq!(step_mode(5, 1, 10), 6);
        assert_eq!(step_mode(5, 2, 10), 4);
    }

    #[test]
    fn walk_move_frequencies_are_near_uniform() {
        // Count stay/up/down at interior decision points over many sequences.
        let mut counts = [0u64; 3];
        for seed in 0..10_000u64 {
            let mut r = rng(seed);
            let s = sample_switching_sequence(&mut r, 10, 7, 2, 50).unwrap();
            let modes = s.modes();
            for t in (2..50).step_by(2) {
                let prev = modes[t - 1];
                if prev > 1 && prev < 10 {
                    match modes[t] as i64 - prev as i64 {
                        0 => counts[0] += 1,
                        1 => counts[1] += 1,
                        -1 => counts[2] += 1,
                        _ => panic!("walk moved by more than one"),
                    }
                }
            }
        }
        let total: u64 = counts.iter().sum();
        for c in counts {
            let freq = c as f64 / total as f64;
            assert!((freq - 1.0 / 3.0).abs() <= 0.1, "move frequency {freq}");
        }
    }

    #[test]
    fn sequences_respect_dwell() {
        let s = sample_switching_sequence(&mut rng(11), 10, 7, 2, 51).unwrap();
        for t in 1..s.len() {
            if t % 2 != 0 {
                assert_eq!(s.mode_at(t), s.mode_at(t - 1));
            }
        }
    }

    #[test]
    fn uniform_any_law_covers_all_modes() {
        let s =
            sample_switching_sequence_with_law(&mut rng(5), 10, 10, 1, 2000, JumpLaw::UniformAny)
                .unwrap();
        let mut seen = [false; 11];
        for &q in s.modes() {
            seen[q] = true;
        }
        assert!(seen[1..=10].iter().all(|&b| b));
    }

    #[test]
    fn build_scenarios_is_deterministic() {
        let cfg = ScenarioConfig { count: 1, ..Default::default() };
        let a = build_scenarios(&cfg, 12, 10, 99).unwrap();
        let b = build_scenarios(&cfg, 12, 10, 99).unwrap();
        assert_eq!(a[0].x0.as_vector().as_slice(), b[0].x0.as_vector().as_slice());
        assert_eq!(a[0].sequence, b[0].sequence);
        assert_eq!(a[0].seed, b[0].seed);
    }

    #[test]
    fn default_scenarios_start_at_mode_7_within_range() {
        let cfg = ScenarioConfig::default();
        let scenarios = build_scenarios(&cfg, 12, 10, 2024).unwrap();
        assert_eq!(scenarios.len(), 50);
        for s in &scenarios {
            assert_eq!(s.sequence.mode_at(0), 7);
            assert!(s.sequence.modes().iter().all(|&q| (1..=10).contains(&q)));
        }
        // Continuous draws: all initial states pairwise distinct.
        for i in 0..scenarios.len() {
            for j in i + 1..scenarios.len() {
                assert_ne!(
                    scenarios[i].x0.as_vector().as_slice(),
                    scenarios[j].x0.as_vector().as_slice()
                );
            }
        }
    }

    #[test]
    fn fuzzed_walks_never_leave_range() {
        // ~1e6 total steps across many seeds and mode counts.
        for seed in 0..2_000u64 {
            let m = 1 + (seed % 10) as usize;
            let q0 = 1 + (seed as usize % m);
            let mut r = rng(seed);
            let s = sample_switching_sequence(&mut r, m, q0, 1, 500).unwrap();
            assert!(s.modes().iter().all(|&q| q >= 1 && q <= m));
        }
    }

    #[test]
    fn subseed_stream_is_stable() {
        // Frozen values pin the documented hash.
        assert_eq!(derive_subseed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(derive_subseed(1, 0), derive_subseed(1, 1));
    }
}
