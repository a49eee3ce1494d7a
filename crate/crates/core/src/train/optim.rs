use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f32, beta1: f32, beta2: f32) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<()> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        self.t += 1;
        let (b1, b2) = (self.beta1 as f64, self.beta2 as f64);
        let t = self.t as i32;
        let step = (self.lr as f64 * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t))) as f32;
        let (b1, b2) = (self.beta1, self.beta2);
        let eps = self.eps;
        let moments = self.m.iter_mut().zip(self.v.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `shadow ← decay·shadow + (1 − decay)·params`, evaluated as
/// `params + decay·(shadow − params)` so fixed points are exact.
pub fn ema_update(shadow: &mut ParamStore, params: &ParamStore, decay: f32) -> Result<()> {
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::Config(format!("EMA decay must be in [0, 1), got {decay}")));
    }
    shadow.check_layout(params)?;
    for ((_, s), (_, p)) in shadow.iter_mut().zip(params.iter()) {
        for (sv, &pv) in s.data_mut().iter_mut().zip(p.data()) {
            *sv = pv + decay * (*sv - pv);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(v: &[f32]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::from_vec(&[v.len()], v.to_vec()).unwrap());
        s
    }

    #[test]
    fn ema_examples() {
        let mut s = store(&[0.0]);
        ema_update(&mut s, &store(&[1.0]), 0.999).unwrap();
        assert!((s.get("a").unwrap().data()[0] - 0.001).abs() < 1e-7);

        let mut s = store(&[3.25, -1.5]);
        for _ in 0..100 {
            ema_update(&mut s, &store(&[3.25, -1.5]), 0.99).unwrap();
        }
        assert_eq!(s, store(&[3.25, -1.5]));

        let mut s = store(&[7.0]);
        ema_update(&mut s, &store(&[2.0]), 0.0).unwrap();
        assert_eq!(s, store(&[2.0]));
    }

    #[test]
    fn ema_converges_geometrically() {
        let decay = 0.9f32;
        let mut s = store(&[1.0]);
        let c = store(&[0.0]);
        for k in 1..=50 {
            ema_update(&mut s, &c, decay).unwrap();
            let expected = (decay as f64).powi(k);
            assert!((s.get("a").unwrap().data()[0] as f64 - expected).abs() <= 1e-6 * expected);
        }
    }

    #[test]
    fn ema_rejects_bad_inputs() {
        assert!(ema_update(&mut store(&[0.0]), &store(&[0.0, 1.0]), 0.5).is_err());
        assert!(ema_update(&mut store(&[0.0]), &store(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = store(&[1.0, -2.0, 0.5]);
        let mut opt = Adam::new(&p, 0.01, 0.0, 0.999);
        opt.step(&mut p, &store(&[3.0, -0.2, 0.0])).unwrap();
        let d = p.get("a").unwrap().data();
        assert!((d[0] - 0.99).abs() < 1e-6);
        assert!((d[1] + 1.99).abs() < 1e-6);
        assert_eq!(d[2], 0.5);
        assert_eq!(opt.t, 1);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = store(&[5.0, -3.0]);
        let mut opt = Adam::new(&p, 0.05, 0.9, 0.999);
        for _ in 0..2000 {
            let g = p.get("a").unwrap().scale(2.0);
            let mut gs = ParamStore::new();
            gs.insert("a", g);
            opt.step(&mut p, &gs).unwrap();
        }
        assert!(p.get("a").unwrap().data().iter().all(|v| v.abs() < 1e-2));
    }
}
