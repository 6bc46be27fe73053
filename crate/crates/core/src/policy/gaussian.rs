//! Tanh-squashed diagonal Gaussian actor with a state-value network.

use std::f64::consts::PI;

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{Mlp, OutputActivation, Parameters};
use super::PolicyError;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the tanh Jacobian.
pub const SQUASH_EPS: f64 = 1e-6;
/// Squashed actions are kept this far from ±1.
const EDGE: f64 = 1e-12;

/// Mean network, state-independent log standard deviations, value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub log_std: Array1<f64>,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        initial_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        Self {
            policy: Mlp::new(&sizes(action_dim), OutputActivation::Identity, 0.01, rng),
            log_std: Array1::from_elem(action_dim, initial_log_std),
            value: Mlp::new(&sizes(1), OutputActivation::Identity, 1.0, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }
}

impl Parameters for ActorCritic {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.policy.tensors();
        t.push(self.log_std.as_slice().expect("standard layout"));
        t.extend(self.value.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.policy.tensors_mut();
        t.push(self.log_std.as_slice_mut().expect("standard layout"));
        t.extend(self.value.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

pub fn policy_forward(params: &ActorCritic, obs: &[f64]) -> Result<PolicyOutput, PolicyError> {
    if obs.len() != params.obs_dim() {
        return Err(PolicyError::Shape(format!(
            "observation has {} features, network expects {}",
            obs.len(),
            params.obs_dim()
        )));
    }
    Ok(PolicyOutput {
        mean: params.policy.predict(obs),
        log_std: params.clamped_log_std(),
        value: params.value.predict(obs)[0],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    /// `tanh(pre_squash)`, strictly inside `(-1, 1)`.
    pub action: Vec<f64>,
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
}

pub fn squash(u: f64) -> f64 {
    u.tanh().clamp(-1.0 + EDGE, 1.0 - EDGE)
}

/// Log-density of the unsquashed Gaussian sample.
pub fn gaussian_log_prob(pre_squash: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    pre_squash
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &s)| {
            let z = (u - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// `Σ log(1 − a² + ε)`, subtracted from the Gaussian log-density.
pub fn squash_correction(action: &[f64]) -> f64 {
    action.iter().map(|a| (1.0 - a * a + SQUASH_EPS).ln()).sum()
}

pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> SampledAction {
    let pre_squash: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            m + s.exp() * z
        })
        .collect();
    let action: Vec<f64> = pre_squash.iter().map(|&u| squash(u)).collect();
    let log_prob = gaussian_log_prob(&pre_squash, mean, log_std) - squash_correction(&action);
    SampledAction {
        action,
        pre_squash,
        log_prob,
    }
}

/// Action used for evaluation: the squashed mean.
pub fn deterministic_action(mean: &[f64]) -> Vec<f64> {
    mean.iter().map(|&m| squash(m)).collect()
}

/// Differential entropy of the pre-squash Gaussian.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_gives_zero_mean_and_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ac = ActorCritic::new(5, 3, &[8, 8], -0.5, &mut rng);
        ac.policy.fill(0.0);
        ac.value.fill(0.0);
        let out = policy_forward(&ac, &[1.0; 5]).unwrap();
        assert_eq!(out.mean, vec![0.0; 3]);
        assert_eq!(out.value, 0.0);
        assert_eq!(out.log_std, vec![-0.5; 3]);
    }

    #[test]
    fn forward_is_pure_and_checks_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ac = ActorCritic::new(4, 2, &[8, 8], 0.0, &mut rng);
        let obs = [0.1, -0.2, 0.3, 0.9];
        assert_eq!(policy_forward(&ac, &obs).unwrap(), policy_forward(&ac, &obs).unwrap());
        assert!(matches!(policy_forward(&ac, &[0.0; 3]), Err(PolicyError::Shape(_))));
    }

    #[test]
    fn log_std_is_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ac = ActorCritic::new(2, 2, &[4], 0.0, &mut rng);
        ac.log_std[0] = -9.0;
        ac.log_std[1] = 7.0;
        assert_eq!(ac.clamped_log_std(), vec![LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn vanishing_noise_gives_tanh_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mean = [0.3, -1.2, 2.0];
        for _ in 0..100 {
            let s = sample_action(&mean, &[-5.0; 3], &mut rng);
            for (a, m) in s.action.iter().zip(mean) {
                assert!((a - m.tanh()).abs() < 5.0 * (-5f64).exp());
            }
        }
    }

    #[test]
    fn samples_stay_strictly_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = sample_action(&[40.0, -40.0], &[2.0, 2.0], &mut rng);
            assert!(s.action.iter().all(|a| a.abs() < 1.0));
            assert!(s.log_prob.is_finite());
        }
    }

    #[test]
    fn log_prob_matches_independent_density() {
        // Standalone evaluation: product of normal pdfs divided by the tanh Jacobian.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mean = [0.4, -0.7];
        let log_std = [-0.3, 0.2];
        for _ in 0..50 {
            let s = sample_action(&mean, &log_std, &mut rng);
            let mut density = 1.0f64;
            for i in 0..2 {
                let sd = log_std[i].exp();
                let z = (s.pre_squash[i] - mean[i]) / sd;
                density *= (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt());
                density /= 1.0 - s.action[i].powi(2) + 1e-6;
            }
            assert!((density.ln() - s.log_prob).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_increases_with_log_std() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let s = -5.0 + i as f64 * 0.14;
            let e = entropy(&[s, s]);
            assert!(e > prev);
            prev = e;
        }
    }
}
