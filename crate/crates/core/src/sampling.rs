//! Seeded uniform sampling of closed Euclidean balls.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Uniform points in `B_r(center)` by direction-radius decomposition: a Gaussian
/// direction normalized to the sphere, scaled by `r·u^{1/n}`.
///
/// The stream is a pure function of the seed, so a longer draw extends a shorter one.
pub struct BallSampler {
    center: DVector<f64>,
    radius: f64,
    rng: ChaCha8Rng,
}

impl BallSampler {
    pub fn new(center: DVector<f64>, radius: f64, seed: u64) -> Self {
        Self {
            center,
            radius,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn take(mut self, count: usize) -> Vec<DVector<f64>> {
        (0..count).map(|_| self.next_point()).collect()
    }

    pub fn next_point(&mut self) -> DVector<f64> {
        let n = self.center.len();
        let dir = loop {
            let d = DVector::from_fn(n, |_, _| self.rng.sample::<f64, _>(StandardNormal));
            let norm = d.norm();
            if norm > 1e-300 {
                break d / norm;
            }
        };
        let u: f64 = self.rng.random();
        &self.center + dir * (self.radius * u.powf(1.0 / n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_stay_in_ball_and_are_reproducible() {
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = BallSampler::new(c.clone(), 0.7, 3).take(500);
        let b = BallSampler::new(c.clone(), 0.7, 3).take(500);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (p - &c).norm() <= 0.7 + 1e-15));
    }

    #[test]
    fn longer_draw_extends_shorter() {
        let c = DVector::from_vec(vec![0.0, 0.0]);
        let short = BallSampler::new(c.clone(), 1.0, 9).take(10);
        let long = BallSampler::new(c, 1.0, 9).take(30);
        assert_eq!(&long[..10], &short[..]);
    }

    #[test]
    fn one_dimensional_samples_fill_the_interval() {
        let c = DVector::from_element(1, 1.0);
        let pts = BallSampler::new(c, 0.5, 0).take(2000);
        let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!(lo < 0.51 && hi > 1.49);
    }
}
