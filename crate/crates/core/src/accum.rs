//! Exact floating-point summation.
//!
//! [`ExactSum`] keeps a list of non-overlapping partial sums (Shewchuk's
//! algorithm) and rounds only once when the value is read. The result is the
//! correctly rounded sum of every value ever added, so it is independent of
//! insertion order and of how the values were split into merged batches.

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a finite value.
    pub fn add(&mut self, value: f64) {
        debug_assert!(value.is_finite(), "ExactSum only accepts finite values");
        let mut x = value;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The correctly rounded total.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round-half-even correction when the remaining partials push past a tie
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        s.extend(iter);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancellation_is_exact() {
        let s: ExactSum = [1e100, 1.0, -1e100, 1e-100].into_iter().collect();
        assert_eq!(s.value(), 1.0);
        let s: ExactSum = [0.1; 10].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    proptest! {
        #[test]
        fn order_and_partition_independent(
            xs in prop::collection::vec(-1e6f64..1e6, 0..60),
            split in 0usize..60,
        ) {
            let forward: ExactSum = xs.iter().copied().collect();
            let backward: ExactSum = xs.iter().rev().copied().collect();
            prop_assert_eq!(forward.value().to_bits(), backward.value().to_bits());

            let k = split.min(xs.len());
            let mut left: ExactSum = xs[..k].iter().copied().collect();
            let right: ExactSum = xs[k..].iter().copied().collect();
            left.merge(&right);
            prop_assert_eq!(left.value().to_bits(), forward.value().to_bits());
        }
    }
}
