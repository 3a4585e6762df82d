//! Empirical CDF of standardized residuals with linear interpolation between
//! plotting positions `(i - 0.5) / n`, clamped to `[p_min, 1 - p_min]` with
//! `p_min = 1 / (2n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EcdfTable {
    sorted_u: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EcdfTable {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EcdfTable> for Vec<f64> {
    fn from(t: EcdfTable) -> Self {
        t.sorted_u
    }
}

impl EcdfTable {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample(bad));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted_u: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_u.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted_u
    }

    pub fn p_min(&self) -> f64 {
        0.5 / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.sorted_u[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted_u[self.len() - 1]
    }

    pub fn median(&self) -> f64 {
        self.inverse_clamped(0.5)
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.sorted_u)
    }

    pub fn std_dev(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        crate::stats::std_dev(&self.sorted_u)
    }

    /// `Pr(u <= z)`.
    pub fn eval(&self, z: f64) -> f64 {
        let u = &self.sorted_u;
        let n = u.len();
        let p_min = self.p_min();
        if z <= u[0] {
            return p_min;
        }
        if z >= u[n - 1] {
            return 1.0 - p_min;
        }
        let k = u.partition_point(|&v| v <= z) - 1;
        let frac = (z - u[k]) / (u[k + 1] - u[k]);
        (k as f64 + 0.5 + frac) / n as f64
    }

    /// Inverse of [`eval`](Self::eval); `p` must lie in `(0, 1)`.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        Ok(self.inverse_clamped(p))
    }

    /// Inverse with probabilities outside the table range clamped to its ends.
    pub fn inverse_clamped(&self, p: f64) -> f64 {
        let u = &self.sorted_u;
        let n = u.len();
        if n == 1 {
            return u[0];
        }
        let x = p * n as f64 - 0.5;
        if !(x > 0.0) {
            return u[0];
        }
        if x >= (n - 1) as f64 {
            return u[n - 1];
        }
        let k = x as usize;
        let frac = x - k as f64;
        u[k] + frac * (u[k + 1] - u[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_statistic, norm_inv};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_table(n: usize, seed: u64) -> EcdfTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EcdfTable::new((0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn three_point_table() {
        let t = EcdfTable::new(vec![1.0, -1.0, 0.0]).unwrap();
        assert_eq!(t.eval(0.0), 0.5);
        assert_eq!(t.eval(-5.0), t.p_min());
        assert_eq!(t.eval(5.0), 1.0 - t.p_min());
        assert_eq!(t.inverse(0.5).unwrap(), 0.0);
        assert_eq!(t.inverse(0.1).unwrap(), -1.0);
        assert_eq!(t.eval(-1.0), 0.5 / 3.0);
        assert!((t.eval(0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(EcdfTable::new(vec![]), Err(Error::EmptyInput)));
        assert!(matches!(EcdfTable::new(vec![1.0, f64::NAN]), Err(Error::NonFiniteSample(_))));
        let t = normal_table(10, 0);
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(t.inverse(p), Err(Error::ProbabilityOutOfRange(_))));
        }
    }

    #[test]
    fn quantiles_of_normal_sample() {
        let t = normal_table(10_000, 11);
        for i in 1..=19 {
            let p = i as f64 * 0.05;
            assert!((t.inverse(p).unwrap() - norm_inv(p)).abs() < 0.05, "p={p}");
        }
    }

    #[test]
    fn plotting_positions_are_uniform_in_sample() {
        let t = normal_table(5_000, 3);
        let ranks: Vec<f64> = t.sorted().iter().map(|&u| t.eval(u)).collect();
        let d = ks_statistic(&ranks, |x| x.clamp(0.0, 1.0));
        assert!(d <= 1.63 / (t.len() as f64).sqrt());
    }

    #[test]
    fn round_trip_on_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..1000 {
            let n = rng.random_range(2..400);
            let t = normal_table(n, case);
            for _ in 0..20 {
                let p = rng.random_range(t.p_min()..1.0 - t.p_min());
                let u = t.inverse(p).unwrap();
                assert!((t.eval(u) - p).abs() <= 1e-9);
                let z = rng.random_range(t.min()..t.max());
                assert!((t.inverse(t.eval(z)).unwrap() - z).abs() <= 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn eval_and_inverse_are_monotone(
            mut samples in prop::collection::vec(-50.0f64..50.0, 1..60),
            a in -60.0f64..60.0,
            b in -60.0f64..60.0,
            p in 0.001f64..0.999,
            q in 0.001f64..0.999,
        ) {
            samples.push(0.0);
            let t = EcdfTable::new(samples).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t.eval(lo) <= t.eval(hi));
            let (plo, phi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(t.inverse(plo).unwrap() <= t.inverse(phi).unwrap());
            prop_assert!(t.eval(lo) >= t.p_min() && t.eval(hi) <= 1.0 - t.p_min());
        }
    }
}
