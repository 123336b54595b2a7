use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;

/// Linear-tanh policy: `a_j = lo_j + (tanh(w_j . (s / scale) + b_j) + 1) / 2 * (hi_j - lo_j)`.
///
/// `scale` is the environment's per-state observation scale.
/// Parameters are stored per action as `[w_j0 .. w_j(S-1), b_j]`, so there
/// are `(state_dim + 1) * action_dim` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    params: Vec<f64>,
    state_dim: usize,
    inv_scale: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl Policy {
    pub fn param_count(env: &EnvSpec) -> usize {
        (env.state_dim() + 1) * env.action_dim()
    }

    pub fn from_params(env: &EnvSpec, params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::param_count(env) && params.iter().all(|p| p.is_finite())).then(|| {
            Self {
                params,
                state_dim: env.state_dim(),
                inv_scale: env.obs_scale.iter().map(|s| 1.0 / s).collect(),
                bounds: env.action_bounds.clone(),
            }
        })
    }

    pub fn zeros(env: &EnvSpec) -> Self {
        Self::from_params(env, vec![0.0; Self::param_count(env)]).expect("sized")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    #[inline]
    pub fn act(&self, state: &[f64], action: &mut [f64]) {
        let stride = self.state_dim + 1;
        for (j, (out, &(lo, hi))) in action.iter_mut().zip(&self.bounds).enumerate() {
            let w = &self.params[j * stride..(j + 1) * stride];
            let z: f64 = w[..self.state_dim]
                .iter()
                .zip(state)
                .zip(&self.inv_scale)
                .map(|((wi, si), k)| wi * si * k)
                .sum::<f64>()
                + w[self.state_dim];
            let squashed = if z.is_finite() { z.tanh() } else { 0.0 };
            *out = lo + (squashed + 1.0) * 0.5 * (hi - lo);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvName;

    #[test]
    fn parameter_count_and_squashing() {
        let env = EnvSpec::builtin(EnvName::Hover3d).unwrap();
        assert_eq!(Policy::param_count(&env), 21);
        let p = Policy::zeros(&env);
        let mut a = [0.0; 3];
        p.act(&[0.0; 6], &mut a);
        assert_eq!(a, [0.0, 0.0, 10.0]);

        let mut params = vec![0.0; 21];
        params[6] = 1e9;
        params[13] = -1e9;
        let p = Policy::from_params(&env, params).unwrap();
        p.act(&[0.0; 6], &mut a);
        assert_eq!(a, [5.0, -5.0, 10.0]);
    }

    #[test]
    fn rejects_wrong_size() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        assert!(Policy::from_params(&env, vec![0.0; 4]).is_none());
        assert!(Policy::from_params(&env, vec![f64::NAN; 5]).is_none());
    }
}
