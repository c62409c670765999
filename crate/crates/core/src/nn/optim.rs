use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Adam; `weight_decay` is added to the gradient (L2 penalty).
    Adam,
    /// Adam with decoupled weight decay applied directly to the parameters.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimConfig {
    /// AdamW at `1e-2`, the configuration used for the TCN classifiers.
    pub fn adamw_default() -> Self {
        Self {
            algorithm: Algorithm::AdamW,
            lr: 1e-2,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }

    /// Adam at `1e-4` with betas `(0.9, 0.99)`.
    pub fn adam_default() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            lr: 1e-4,
            betas: (0.9, 0.99),
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let (b1, b2) = self.betas;
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&b1)
            && (0.0..1.0).contains(&b2)
            && self.eps > 0.0
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Moment accumulators for one parameter list.
#[derive(Debug, Clone)]
pub struct OptimState {
    config: OptimConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimState {
    pub fn new(config: OptimConfig, params: &[Tensor]) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Self {
            config,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam/AdamW update of `params` in place.
pub fn optim_step(params: &mut [Tensor], grads: &[&Tensor], state: &mut OptimState) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(NnError::Shape(format!(
            "optimizer: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.first[i].len() != p.len() {
            return Err(NnError::Shape(format!(
                "optimizer: parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let cfg = state.config;
    let (b1, b2) = cfg.betas;
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let mut grad = g.data()[j];
            match cfg.algorithm {
                Algorithm::Adam => grad += cfg.weight_decay * *w,
                Algorithm::AdamW => *w -= cfg.lr * cfg.weight_decay * *w,
            }
            m[j] = b1 * m[j] + (1.0 - b1) * grad;
            v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_no_decay_leaves_params() {
        let mut params = vec![Tensor::from_vec(vec![1.0, -2.0, 3.5])];
        let before = params.clone();
        let zero = Tensor::zeros(&[3]);
        for alg in [Algorithm::Adam, Algorithm::AdamW] {
            let cfg = OptimConfig {
                algorithm: alg,
                weight_decay: 0.0,
                ..OptimConfig::adamw_default()
            };
            let mut st = OptimState::new(cfg, &params).unwrap();
            for _ in 0..5 {
                optim_step(&mut params, &[&zero], &mut st).unwrap();
            }
            assert_eq!(params, before);
            assert_eq!(st.step_count(), 5);
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // bias-corrected m/sqrt(v) = g/|g| on the first step
        let mut params = vec![Tensor::from_vec(vec![0.5, 0.5])];
        let g = Tensor::from_vec(vec![3.0, -0.02]);
        let cfg = OptimConfig::adam_default();
        let mut st = OptimState::new(cfg, &params).unwrap();
        optim_step(&mut params, &[&g], &mut st).unwrap();
        let d = params[0].data();
        let expect0 = 0.5 - cfg.lr * 3.0 / (3.0 + cfg.eps);
        let expect1 = 0.5 + cfg.lr * 0.02 / (0.02 + cfg.eps);
        assert!((d[0] - expect0).abs() < 1e-15);
        assert!((d[1] - expect1).abs() < 1e-15);
        assert!(((0.5 - d[0]) - cfg.lr).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut st = OptimState::new(OptimConfig::adam_default(), &params).unwrap();
        assert!(optim_step(&mut params, &[&Tensor::zeros(&[3])], &mut st).is_err());
        assert!(optim_step(&mut params, &[], &mut st).is_err());
    }
}
