//! Adam with a step-decay learning-rate schedule.

use alloc::format;

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::model::{ParamGrads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay_period_epochs: usize,
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub seed: u64,
    /// Optional global gradient-norm clip. Off by default.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_period_epochs: 35,
            decay_factor: 0.5,
            epochs: 100,
            batch_size: 16,
            loss_kind: LossKind::L1,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let problem = if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            Some("lr0 must be positive")
        } else if !open_unit(self.beta1) || !open_unit(self.beta2) {
            Some("beta1 and beta2 must lie in (0, 1)")
        } else if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            Some("epsilon must be positive")
        } else if !open_unit(self.decay_factor) {
            Some("decay_factor must lie in (0, 1)")
        } else if self.decay_period_epochs == 0 {
            Some("decay_period_epochs must be >= 1")
        } else if self.batch_size == 0 {
            Some("batch_size must be >= 1")
        } else if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            Some("clip_norm must be positive")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::Config(format!("{p} (config: {self:?})"))),
            None => Ok(()),
        }
    }
}

/// `lr0 · decay_factor^⌊epoch / decay_period⌋`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let halvings = (epoch / config.decay_period_epochs) as i32;
    config.lr0 * libm::pow(config.decay_factor, f64::from(halvings))
}

/// Moment buffers mirroring a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: ParamGrads,
    pub v: ParamGrads,
    pub t: u64,
}

impl OptState {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            m: ParamGrads::zeros_like(store),
            v: ParamGrads::zeros_like(store),
            t: 0,
        }
    }
}

/// One Adam update of a single scalar; `t` is the already incremented step.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, t: u64, lr: f64, config: &TrainConfig) {
    let (b1, b2) = (config.beta1, config.beta2);
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let t = t as f64;
    let m_hat = *m / (1.0 - libm::pow(b1, t));
    let v_hat = *v / (1.0 - libm::pow(b2, t));
    *p -= lr * m_hat / (libm::sqrt(v_hat) + config.epsilon);
}

/// Applies one Adam step to every parameter.
pub fn adam_step(store: &mut ParamStore, grads: &ParamGrads, state: &mut OptState, lr: f64, config: &TrainConfig) -> Result<()> {
    if let Some(layer) = grads.first_non_finite() {
        return Err(Error::NonFinite {
            what: format!("gradient of layer `{layer}` at step {}", state.t + 1),
        });
    }
    if grads.layers.len() != store.len() {
        return Err(Error::Contract(format!(
            "{} gradient layers for {} parameter layers",
            grads.layers.len(),
            store.len()
        )));
    }
    state.t += 1;
    let t = state.t;
    for (name, p) in store.iter_mut() {
        let missing = || Error::Contract(format!("optimizer state has no layer `{name}`"));
        let (gw, gb) = grads.layers.get(name).ok_or_else(missing)?;
        let (mw, mb) = state.m.layers.get_mut(name).ok_or_else(missing)?;
        let (vw, vb) = state.v.layers.get_mut(name).ok_or_else(missing)?;
        if gw.len() != p.weight.data().len() || gb.len() != p.bias.len() {
            return Err(Error::Contract(format!("gradient shape mismatch in layer `{name}`")));
        }
        for (i, w) in p.weight.data_mut().iter_mut().enumerate() {
            adam_update(w, gw[i], &mut mw[i], &mut vw[i], t, lr, config);
        }
        for (i, b) in p.bias.iter_mut().enumerate() {
            adam_update(b, gb[i], &mut mb[i], &mut vb[i], t, lr, config);
        }
    }
    Ok(())
}

/// Scales `grads` in place so its global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .layers
        .values()
        .flat_map(|(w, b)| w.iter().chain(b))
        .map(|g| g * g)
        .sum();
    let norm = libm::sqrt(sq);
    if norm > max_norm {
        let k = max_norm / norm;
        for (w, b) in grads.layers.values_mut() {
            w.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, SsrnetConfig};

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 1e-4);
        assert_eq!(lr_at(34, &c), 1e-4);
        assert_eq!(lr_at(35, &c), 5e-5);
        assert_eq!(lr_at(70, &c), 2.5e-5);
        for e in 0..200 {
            assert!(lr_at(e + 1, &c) <= lr_at(e, &c));
        }
    }

    #[test]
    fn scalar_oracle_three_steps() {
        // f(x) = x², g = 2x, lr 0.1, hand-rolled reference
        let c = TrainConfig::default();
        let (mut x, mut m, mut v) = (1.0f64, 0.0, 0.0);
        let (mut rx, mut rm, mut rv) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3u64 {
            let g = 2.0 * x;
            adam_update(&mut x, g, &mut m, &mut v, t, 0.1, &c);
            let rg = 2.0 * rx;
            rm = 0.9 * rm + 0.1 * rg;
            rv = 0.999 * rv + 0.001 * rg * rg;
            let mh = rm / (1.0 - 0.9f64.powi(t as i32));
            let vh = rv / (1.0 - 0.999f64.powi(t as i32));
            rx -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((x - rx).abs() <= 1e-12, "{x} vs {rx}");
        assert!(x < 1.0);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let c = TrainConfig::default();
        for g in [3.0, -0.5, 1e3] {
            let (mut p, mut m, mut v) = (0.0, 0.0, 0.0);
            adam_update(&mut p, g, &mut m, &mut v, 1, 1e-3, &c);
            assert!(p.abs() <= 1e-3 && p.abs() >= 1e-3 * (1.0 - 1e-6));
            assert_eq!(p.signum(), -g.signum());
        }
    }

    #[test]
    fn loss_scaling_invariance() {
        let c = TrainConfig::default();
        let run = |k: f64| {
            let (mut p, mut m, mut v) = (0.0, 0.0, 0.0);
            for t in 1..=5 {
                adam_update(&mut p, k * (1.0 + t as f64), &mut m, &mut v, t, 1e-2, &c);
            }
            p
        };
        assert!((run(1.0) - run(1000.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = SsrnetConfig { filters: 2, d_modules: 1, units_per_module: 1, ..Default::default() };
        let mut store = build(&cfg, 0).unwrap();
        let before = store.clone();
        let mut st = OptState::new(&store);
        adam_step(&mut store, &ParamGrads::zeros_like(&before), &mut st, 1e-3, &TrainConfig::default()).unwrap();
        assert_eq!(store, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let cfg = SsrnetConfig { filters: 2, d_modules: 1, units_per_module: 1, ..Default::default() };
        let mut store = build(&cfg, 0).unwrap();
        let mut g = ParamGrads::zeros_like(&store);
        g.layers.get_mut("m1.fuse").unwrap().0[0] = f64::NAN;
        let mut st = OptState::new(&store);
        let e = adam_step(&mut store, &g, &mut st, 1e-3, &TrainConfig::default()).unwrap_err();
        assert!(format!("{e}").contains("m1.fuse"));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { beta2: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr0: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { decay_factor: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
