//! Designs: ordered observation times t_1 < ... < t_n.

use crate::basis::Interval;
use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Strictly increasing observation times, at least two of them.
#[derive(Clone, Debug, PartialEq)]
pub struct Design<T> {
    points: Vec<T>,
}

impl<T: Scalar> Design<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidDesign(format!(
                "need at least two points, got {}",
                points.len()
            )));
        }
        for w in points.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidDesign(format!(
                    "points must be strictly increasing, got {:?} then {:?}",
                    w[0].to_f64(),
                    w[1].to_f64()
                )));
            }
        }
        Ok(Self { points })
    }

    /// Uniform grid of `n` points spanning the interval.
    pub fn equidistant(interval: &Interval<T>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDesign(format!(
                "equidistant design needs n >= 2, got {n}"
            )));
        }
        Self::new(interval.grid(n))
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn first(&self) -> T {
        self.points[0]
    }

    pub fn last(&self) -> T {
        self.points[self.points.len() - 1]
    }

    /// Consecutive gaps t_i - t_{i-1}.
    pub fn gaps(&self) -> Vec<T> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Checks that the design spans the interval exactly and that no gap is
    /// below the minimum spacing of 1e-9 times the interval length.
    pub fn check_spans(&self, interval: &Interval<T>) -> Result<()> {
        let tol = real::<T>(1e-9) * interval.length();
        if (self.first() - interval.a()).abs() > tol || (self.last() - interval.b()).abs() > tol {
            return Err(Error::InvalidDesign(format!(
                "design must start at {:?} and end at {:?}, got [{:?}, {:?}]",
                interval.a().to_f64(),
                interval.b().to_f64(),
                self.first().to_f64(),
                self.last().to_f64()
            )));
        }
        for w in self.points.windows(2) {
            if w[1] - w[0] < tol {
                return Err(Error::InvalidDesign(format!(
                    "gap below minimum spacing near t = {:?}",
                    w[0].to_f64()
                )));
            }
        }
        Ok(())
    }

    /// Applies a strictly increasing map pointwise.
    pub fn map(&self, f: impl Fn(T) -> Result<T>) -> Result<Self> {
        let mapped: Result<Vec<T>> = self.points.iter().map(|&t| f(t)).collect();
        Self::new(mapped?)
    }
}

impl<T: Scalar> Design<T> {
    /// Lossy conversion of the points for display and serialization.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|t| t.to_f64().unwrap_or(f64::NAN))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_five_points() {
        let iv = Interval::new(1.0, 2.0).unwrap();
        let d = Design::equidistant(&iv, 5).unwrap();
        assert_eq!(d.points(), &[1.0, 1.25, 1.5, 1.75, 2.0]);
        let d2 = Design::equidistant(&iv, 2).unwrap();
        assert_eq!(d2.points(), &[1.0, 2.0]);
        assert!(Design::<f64>::equidistant(&iv, 1).is_err());
    }

    #[test]
    fn ordering_enforced() {
        assert!(Design::new(vec![1.0, 1.0, 2.0]).is_err());
        assert!(Design::new(vec![2.0, 1.0]).is_err());
        assert!(Design::new(vec![1.0]).is_err());
    }

    #[test]
    fn span_check() {
        let iv = Interval::new(1.0, 2.0).unwrap();
        let good = Design::new(vec![1.0, 1.4, 2.0]).unwrap();
        assert!(good.check_spans(&iv).is_ok());
        let bad = Design::new(vec![1.1, 1.4, 2.0]).unwrap();
        assert!(bad.check_spans(&iv).is_err());
    }
}
