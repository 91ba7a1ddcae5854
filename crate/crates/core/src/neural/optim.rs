use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::scalar::Scalar;

use super::{check_finite, ParamLayout};

/// Single-cycle cosine annealing from `lr0` at step 0 to `lr_min` at `total`.
pub fn cosine_lr(step: u64, total: u64, lr0: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_min;
    }
    let frac = (step.min(total) as f64) / total as f64;
    lr_min + (lr0 - lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// `shadow <- beta*shadow + (1-beta)*params`.
pub fn ema_update<T: Scalar>(shadow: &mut [T], params: &[T], beta: f64) {
    let b = T::lit(beta);
    let a = T::one() - b;
    for (s, &p) in shadow.iter_mut().zip(params) {
        *s = b * *s + a * p;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub ema_decay: f64,
    pub total_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            lr_min: 1e-5,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            ema_decay: 0.999,
            total_steps: 1000,
        }
    }
}

/// AdamW moments, step count and the EMA shadow of the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimState<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub shadow: Vec<T>,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(config: AdamWConfig, params: &[T]) -> Result<Self> {
        if !(config.lr0 >= config.lr_min && config.lr_min >= 0.0) {
            return param_err("need lr0 >= lr_min >= 0");
        }
        if !(0.0..=1.0).contains(&config.ema_decay) {
            return param_err("EMA decay must lie in [0, 1]");
        }
        Ok(Self {
            config,
            step: 0,
            m: vec![T::zero(); params.len()],
            v: vec![T::zero(); params.len()],
            shadow: params.to_vec(),
        })
    }

    pub fn current_lr(&self) -> f64 {
        let c = &self.config;
        cosine_lr(self.step, c.total_steps, c.lr0, c.lr_min)
    }

    /// One AdamW update of `params` in place followed by the EMA update; returns the
    /// learning rate used.
    pub fn step(&mut self, layout: &ParamLayout, params: &mut [T], grads: &[T]) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return param_err(format!(
                "optimizer holds {} moments, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        check_finite(layout, grads, "gradient")?;
        let c = self.config.clone();
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let decay = T::lit(1.0 - lr * c.weight_decay);
        let (lr_t, eps) = (T::lit(lr), T::lit(c.eps));
        let (bc1, bc2) = (T::lit(bc1), T::lit(bc2));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] = params[i] * decay - lr_t * mh / (vh.sqrt() + eps);
        }
        ema_update(&mut self.shadow, params, c.ema_decay);
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ParamEntry;

    fn layout(n: usize) -> ParamLayout {
        ParamLayout {
            entries: vec![ParamEntry {
                name: "p".into(),
                rows: 1,
                cols: n,
                offset: 0,
            }],
        }
    }

    #[test]
    fn cosine_schedule_shape() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
        assert!((cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3, 1e-5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
        let lrs: Vec<f64> = (0..=100).map(|s| cosine_lr(s, 100, 1e-3, 1e-5)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_gradient_paths() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = vec![0.5f64, -2.0];
        let mut opt = OptimState::new(cfg, &p).unwrap();
        opt.step(&layout(2), &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);

        let cfg = AdamWConfig {
            lr0: 1e-3,
            lr_min: 1e-3,
            weight_decay: 1e-2,
            ..Default::default()
        };
        let mut p = vec![1.0f64];
        let mut opt = OptimState::new(cfg, &p).unwrap();
        for k in 1..=3 {
            opt.step(&layout(1), &mut p, &[0.0]).unwrap();
            assert!((p[0] - 0.99999f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_by_hand() {
        let cfg = AdamWConfig {
            lr0: 0.1,
            lr_min: 0.1,
            weight_decay: 0.01,
            ..Default::default()
        };
        let mut p = vec![2.0f64];
        let mut opt = OptimState::new(cfg, &p).unwrap();
        opt.step(&layout(1), &mut p, &[1.0]).unwrap();
        // m_hat = v_hat = 1 after bias correction.
        let want = 2.0 * (1.0 - 0.1 * 0.01) - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn nan_gradient_reports_path() {
        let mut p = vec![0.0f64; 3];
        let mut opt = OptimState::new(AdamWConfig::default(), &p).unwrap();
        let err = opt.step(&layout(3), &mut p, &[0.0, f64::NAN, 0.0]).unwrap_err();
        assert!(err.to_string().contains('p'));
    }

    #[test]
    fn ema_limits() {
        let mut s = vec![1.0f64, 2.0];
        ema_update(&mut s, &[5.0, 6.0], 0.0);
        assert_eq!(s, vec![5.0, 6.0]);
        ema_update(&mut s, &[0.0, 0.0], 1.0);
        assert_eq!(s, vec![5.0, 6.0]);
        let beta = 0.9;
        let mut s = vec![0.0f64];
        for k in 1..=50 {
            ema_update(&mut s, &[1.0], beta);
            assert!((s[0] - (1.0 - beta.powi(k))).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = vec![0.3f64, -0.7, 1.1];
            let mut opt = OptimState::new(AdamWConfig::default(), &p).unwrap();
            for k in 0..20 {
                let g: Vec<f64> = p.iter().map(|x| (x * k as f64).sin()).collect();
                opt.step(&layout(3), &mut p, &g).unwrap();
            }
            (p, opt)
        };
        assert_eq!(run(), run());
    }
}
