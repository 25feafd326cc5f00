use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Vector;

/// Portable seeded generator; identical streams on every platform.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform distribution on the unit sphere of ℝⁿ (normalized Gaussians).
#[derive(Clone, Copy, Debug)]
pub struct UnitSphere(pub usize);

impl Distribution<Vector> for UnitSphere {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        loop {
            let v = Vector::from_fn(self.0, |_, _| StandardNormal.sample(rng));
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }
}

/// `count` seeded unit vectors. A larger `count` with the same seed extends
/// the smaller sample set.
pub fn unit_sphere_samples(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = seeded_rng(seed);
    (0..count).map(|_| UnitSphere(dim).sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_unit_and_prefix_stable() {
        let a = unit_sphere_samples(4, 50, 3);
        let b = unit_sphere_samples(4, 100, 3);
        assert_eq!(&b[..50], &a[..]);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn one_dimensional_sphere_is_plus_minus_one() {
        for v in unit_sphere_samples(1, 20, 9) {
            assert_eq!(v[0].abs(), 1.0);
        }
    }
}
