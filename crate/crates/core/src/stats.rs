//! Small streaming estimators used by the diagnostics.

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMean {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMean {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        libm::sqrt(self.variance() / self.count as f64)
    }
}

/// Ratio-of-means estimator `sum(num) / sum(den)` over i.i.d. pairs, with the
/// delta-method standard error used for renewal-reward time averages.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RatioEstimator {
    count: u64,
    sum_num: f64,
    sum_den: f64,
    sum_num2: f64,
    sum_den2: f64,
    sum_cross: f64,
}

impl RatioEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, num: f64, den: f64) {
        self.count += 1;
        self.sum_num += num;
        self.sum_den += den;
        self.sum_num2 += num * num;
        self.sum_den2 += den * den;
        self.sum_cross += num * den;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn ratio(&self) -> f64 {
        self.sum_num / self.sum_den
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let r = self.ratio();
        let mean_den = self.sum_den / n;
        // sample variance of num - r * den
        let ss = self.sum_num2 - 2.0 * r * self.sum_cross + r * r * self.sum_den2;
        let var = (ss / (n - 1.0)).max(0.0);
        libm::sqrt(var / n) / mean_den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_mean_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let mut acc = RunningMean::new();
        xs.iter().for_each(|&x| acc.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-12);
        assert!((acc.variance() - var).abs() < 1e-12);
        assert_eq!(acc.count(), 5);
    }

    #[test]
    fn ratio_of_constant_pairs_has_zero_error() {
        let mut r = RatioEstimator::new();
        for _ in 0..10 {
            r.push(3.0, 2.0);
        }
        assert_eq!(r.ratio(), 1.5);
        assert!(r.std_error().abs() < 1e-9);
    }
}
