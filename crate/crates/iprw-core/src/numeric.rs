//! Small numeric helpers shared across modules.

/// Exact factorial as f64 (n <= 170 before overflow; callers guard).
pub fn factorial(n: u32) -> f64 {
    (1..=n as u64).fold(1.0, |acc, k| acc * k as f64)
}

/// ln(n!) via the log-gamma function, safe for any n.
pub fn ln_factorial(n: u32) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// Binomial coefficient as f64.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Neumaier compensated summation. Convolution sums run over up to 1e5
/// terms and feed exactness assertions, so plain accumulation is not
/// good enough.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_small_values() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
        assert_eq!(factorial(10), 3_628_800.0);
    }

    #[test]
    fn ln_factorial_matches_exact() {
        for n in 0..30 {
            let exact = factorial(n).ln();
            assert!((ln_factorial(n) - exact).abs() < 1e-10 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn binomial_row() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert_eq!(binomial(10, 10), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
    }

    #[test]
    fn kahan_recovers_lost_precision() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..10_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
