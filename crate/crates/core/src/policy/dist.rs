//! Action distribution: diagonal Gaussian over (lateral, forward) movement and
//! an optional Bernoulli shoot decision.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::arena::ActionCommand;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    pub shoot_logit: Option<f64>,
}

/// Gradient of a scalar with respect to the distribution inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DistGrad {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    pub shoot_logit: f64,
}

impl DistGrad {
    pub fn scaled(self, k: f64) -> DistGrad {
        DistGrad {
            mean: [self.mean[0] * k, self.mean[1] * k],
            log_std: [self.log_std[0] * k, self.log_std[1] * k],
            shoot_logit: self.shoot_logit * k,
        }
    }

    pub fn add(&mut self, o: DistGrad) {
        for i in 0..2 {
            self.mean[i] += o.mean[i];
            self.log_std[i] += o.log_std[i];
        }
        self.shoot_logit += o.shoot_logit;
    }
}

/// A sampled (or modal) action with its log-probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledAction {
    /// Raw Gaussian sample, before clamping to the command range.
    pub movement: [f64; 2],
    pub shoot: Option<bool>,
    pub log_prob: f64,
}

impl SampledAction {
    pub fn command(&self) -> ActionCommand {
        ActionCommand::new(self.movement[0], self.movement[1], self.shoot.unwrap_or(false)).clamped()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl ActionDistribution {
    pub fn std(&self) -> [f64; 2] {
        [libm::exp(self.log_std[0]), libm::exp(self.log_std[1])]
    }

    pub fn shoot_prob(&self) -> Option<f64> {
        self.shoot_logit.map(sigmoid)
    }

    pub fn log_prob(&self, movement: [f64; 2], shoot: Option<bool>) -> f64 {
        let std = self.std();
        let mut lp = 0.0;
        for i in 0..2 {
            let z = (movement[i] - self.mean[i]) / std[i];
            lp += -0.5 * z * z - self.log_std[i] - 0.5 * LN_2PI;
        }
        if let (Some(z), Some(s)) = (self.shoot_logit, shoot) {
            lp -= if s { softplus(-z) } else { softplus(z) };
        }
        lp
    }

    pub fn log_prob_grad(&self, movement: [f64; 2], shoot: Option<bool>) -> DistGrad {
        let std = self.std();
        let mut g = DistGrad::default();
        for i in 0..2 {
            let z = (movement[i] - self.mean[i]) / std[i];
            g.mean[i] = z / std[i];
            g.log_std[i] = z * z - 1.0;
        }
        if let (Some(z), Some(s)) = (self.shoot_logit, shoot) {
            g.shoot_logit = if s { 1.0 } else { 0.0 } - sigmoid(z);
        }
        g
    }

    pub fn entropy(&self) -> f64 {
        let mut h: f64 = self.log_std.iter().map(|l| l + 0.5 * (LN_2PI + 1.0)).sum();
        if let Some(z) = self.shoot_logit {
            let p = sigmoid(z);
            h += p * softplus(-z) + (1.0 - p) * softplus(z);
        }
        h
    }

    pub fn entropy_grad(&self) -> DistGrad {
        let mut g = DistGrad { log_std: [1.0, 1.0], ..DistGrad::default() };
        if let Some(z) = self.shoot_logit {
            let p = sigmoid(z);
            g.shoot_logit = -z * p * (1.0 - p);
        }
        g
    }

    /// KL(self || new).
    pub fn kl(&self, new: &ActionDistribution) -> f64 {
        let (so, sn) = (self.std(), new.std());
        let mut kl = 0.0;
        for i in 0..2 {
            let d = self.mean[i] - new.mean[i];
            kl += new.log_std[i] - self.log_std[i] + (so[i] * so[i] + d * d) / (2.0 * sn[i] * sn[i]) - 0.5;
        }
        if let (Some(zo), Some(zn)) = (self.shoot_logit, new.shoot_logit) {
            let po = sigmoid(zo);
            // po (ln po - ln pn) + (1 - po)(ln(1 - po) - ln(1 - pn))
            kl += po * (softplus(-zn) - softplus(-zo)) + (1.0 - po) * (softplus(zn) - softplus(zo));
        }
        kl
    }

    /// Gradient of KL(self || new) with respect to `new`'s inputs.
    pub fn kl_grad(&self, new: &ActionDistribution) -> DistGrad {
        let (so, sn) = (self.std(), new.std());
        let mut g = DistGrad::default();
        for i in 0..2 {
            let d = self.mean[i] - new.mean[i];
            let vn = sn[i] * sn[i];
            g.mean[i] = -d / vn;
            g.log_std[i] = 1.0 - (so[i] * so[i] + d * d) / vn;
        }
        if let (Some(zo), Some(zn)) = (self.shoot_logit, new.shoot_logit) {
            g.shoot_logit = sigmoid(zn) - sigmoid(zo);
        }
        g
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledAction {
        let std = self.std();
        let n0: f64 = StandardNormal.sample(rng);
        let n1: f64 = StandardNormal.sample(rng);
        let movement = [self.mean[0] + std[0] * n0, self.mean[1] + std[1] * n1];
        let shoot = self.shoot_prob().map(|p| rng.random::<f64>() < p);
        SampledAction { movement, shoot, log_prob: self.log_prob(movement, shoot) }
    }

    /// Mean movement and the more likely shoot outcome.
    pub fn mode(&self) -> SampledAction {
        let shoot = self.shoot_logit.map(|z| z > 0.0);
        SampledAction { movement: self.mean, shoot, log_prob: self.log_prob(self.mean, shoot) }
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R, deterministic: bool) -> SampledAction {
        if deterministic {
            self.mode()
        } else {
            self.sample(rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d() -> ActionDistribution {
        ActionDistribution { mean: [0.3, -0.2], log_std: [-0.5, 0.1], shoot_logit: Some(0.7) }
    }

    fn numeric(f: impl Fn(&ActionDistribution) -> f64, base: ActionDistribution) -> DistGrad {
        let h = 1e-6;
        let mut g = DistGrad::default();
        for i in 0..2 {
            let (mut a, mut b) = (base, base);
            a.mean[i] += h;
            b.mean[i] -= h;
            g.mean[i] = (f(&a) - f(&b)) / (2.0 * h);
            let (mut a, mut b) = (base, base);
            a.log_std[i] += h;
            b.log_std[i] -= h;
            g.log_std[i] = (f(&a) - f(&b)) / (2.0 * h);
        }
        let (mut a, mut b) = (base, base);
        a.shoot_logit = a.shoot_logit.map(|z| z + h);
        b.shoot_logit = b.shoot_logit.map(|z| z - h);
        g.shoot_logit = (f(&a) - f(&b)) / (2.0 * h);
        g
    }

    fn close(a: DistGrad, b: DistGrad) {
        for i in 0..2 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-6, "{:?} {:?}", a, b);
            assert!((a.log_std[i] - b.log_std[i]).abs() < 1e-6, "{:?} {:?}", a, b);
        }
        assert!((a.shoot_logit - b.shoot_logit).abs() < 1e-6, "{:?} {:?}", a, b);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let base = d();
        let act = [0.9, -1.1];
        close(base.log_prob_grad(act, Some(true)), numeric(|x| x.log_prob(act, Some(true)), base));
        close(base.log_prob_grad(act, Some(false)), numeric(|x| x.log_prob(act, Some(false)), base));
        close(base.entropy_grad(), numeric(|x| x.entropy(), base));
        let old = ActionDistribution { mean: [-0.1, 0.4], log_std: [0.2, -0.3], shoot_logit: Some(-1.2) };
        close(old.kl_grad(&base), numeric(|x| old.kl(x), base));
    }

    #[test]
    fn kl_of_self_is_zero() {
        assert!(d().kl(&d()).abs() < 1e-15);
    }

    #[test]
    fn certain_shot_has_zero_log_prob_term() {
        let dist = ActionDistribution { mean: [0.0, 0.0], log_std: [0.0, 0.0], shoot_logit: Some(800.0) };
        let without = ActionDistribution { shoot_logit: None, ..dist };
        assert_eq!(dist.log_prob([0.1, 0.2], Some(true)), without.log_prob([0.1, 0.2], None));
    }

    #[test]
    fn sample_mean_and_shoot_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dist = d();
        let n = 40_000;
        let (mut m0, mut m1, mut shots) = (0.0, 0.0, 0);
        for _ in 0..n {
            let s = dist.sample(&mut rng);
            m0 += s.movement[0];
            m1 += s.movement[1];
            shots += s.shoot.unwrap() as usize;
        }
        let std = dist.std();
        let tol = |s: f64| 4.0 * s / (n as f64).sqrt();
        assert!((m0 / n as f64 - 0.3).abs() < tol(std[0]));
        assert!((m1 / n as f64 + 0.2).abs() < tol(std[1]));
        let p = sigmoid(0.7);
        assert!((shots as f64 / n as f64 - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn gaussian_log_prob_matches_formula() {
        let dist = ActionDistribution { mean: [0.0, 1.0], log_std: [0.0, libm::log(2.0)], shoot_logit: None };
        let want = -0.5 * 0.25 - 0.5 * LN_2PI + (-0.5 * 0.25 - libm::log(2.0) - 0.5 * LN_2PI);
        assert!((dist.log_prob([0.5, 2.0], None) - want).abs() < 1e-12);
    }

    #[test]
    fn mode_is_deterministic() {
        let m = d().mode();
        assert_eq!(m.movement, [0.3, -0.2]);
        assert_eq!(m.shoot, Some(true));
    }
}
