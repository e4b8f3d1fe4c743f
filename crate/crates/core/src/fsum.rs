//! Exact floating-point summation (Shewchuk's non-overlapping partials).
//!
//! The rounded result depends only on the multiset of summands, so sums
//! merged from any grouping of the terms are bitwise identical.

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
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

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&last) = p.last() else { return 0.0 };
        let mut n = p.len() - 1;
        let mut hi = last;
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            let y = p[n - 1];
            n -= 1;
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancels_exactly() {
        let s: ExactSum = [1e100, 1.0, -1e100, 1e-30].into_iter().collect();
        assert_eq!(s.value(), 1.0 + 1e-30);
        let t: ExactSum = [0.1; 10].into_iter().collect();
        assert_eq!(t.value(), 1.0);
    }

    #[test]
    fn merge_is_order_free() {
        let xs = [0.1, 0.7, 1e16, -1e16, 3.3, 1e-7, 2.5];
        let whole: ExactSum = xs.iter().copied().collect();
        let mut a: ExactSum = xs[..3].iter().copied().collect();
        let b: ExactSum = xs[3..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.value().to_bits(), whole.value().to_bits());
    }
}
