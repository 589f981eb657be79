//! Closed intervals with outward rounding.
//!
//! Every operation rounds to nearest and then uses an error-free
//! transformation (two-sum / fused multiply-add) to detect the sign of the
//! rounding error. If the computed value lies on the wrong side of the exact
//! result the endpoint is moved by one unit in the last place, which gives a
//! valid enclosure without switching the FPU rounding mode.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::{PolyError, Vars};

/// Below this magnitude a product may be subnormal and the FMA residual is no
/// longer exact, so we widen unconditionally.
const TINY: f64 = 1e-290;

#[inline]
fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

#[inline]
pub(crate) fn add_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

#[inline]
pub(crate) fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() || a == 0.0 || b == 0.0 {
        return p;
    }
    if p.abs() < TINY {
        return p.next_down();
    }
    if a.mul_add(b, -p) < 0.0 {
        p.next_down()
    } else {
        p
    }
}

#[inline]
pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() || a == 0.0 || b == 0.0 {
        return p;
    }
    if p.abs() < TINY {
        return p.next_up();
    }
    if a.mul_add(b, -p) > 0.0 {
        p.next_up()
    } else {
        p
    }
}

fn pow_down_nonneg(a: f64, k: u32) -> f64 {
    debug_assert!(a >= 0.0);
    (0..k).fold(1.0, |acc, _| mul_down(acc, a))
}

fn pow_up_nonneg(a: f64, k: u32) -> f64 {
    debug_assert!(a >= 0.0);
    (0..k).fold(1.0, |acc, _| mul_up(acc, a))
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, PolyError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(PolyError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub const fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        self.lo + 0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Largest absolute value over the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    /// Intersection; `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval { lo: mul_down(self.lo, c), hi: mul_up(self.hi, c) }
        } else {
            Interval { lo: mul_down(self.hi, c), hi: mul_up(self.lo, c) }
        }
    }

    /// Integer power with the even-power rule: `[-1, 2]^2 = [0, 4]`.
    pub fn powi(&self, k: u32) -> Interval {
        match k {
            0 => Interval::point(1.0),
            1 => *self,
            _ if k % 2 == 0 => {
                if self.lo >= 0.0 {
                    Interval { lo: pow_down_nonneg(self.lo, k), hi: pow_up_nonneg(self.hi, k) }
                } else if self.hi <= 0.0 {
                    Interval { lo: pow_down_nonneg(-self.hi, k), hi: pow_up_nonneg(-self.lo, k) }
                } else {
                    Interval { lo: 0.0, hi: pow_up_nonneg(self.mag(), k) }
                }
            }
            _ => {
                let lo = if self.lo >= 0.0 {
                    pow_down_nonneg(self.lo, k)
                } else {
                    -pow_up_nonneg(-self.lo, k)
                };
                let hi = if self.hi >= 0.0 {
                    pow_up_nonneg(self.hi, k)
                } else {
                    -pow_down_nonneg(-self.hi, k)
                };
                Interval { lo, hi }
            }
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval { lo: add_down(self.lo, o.lo), hi: add_up(self.hi, o.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: add_down(self.lo, -o.hi), hi: add_up(self.hi, -o.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let pairs = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in pairs {
            lo = lo.min(mul_down(a, b));
            hi = hi.max(mul_up(a, b));
        }
        Interval { lo, hi }
    }
}

/// An axis-aligned box: one closed interval per named variable.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    vars: Vars,
    bounds: Vec<Interval>,
}

impl IntervalBox {
    pub fn new(vars: Vars, bounds: Vec<Interval>) -> Result<Self, PolyError> {
        if vars.len() != bounds.len() {
            return Err(PolyError::DimensionMismatch { expected: vars.len(), got: bounds.len() });
        }
        for b in &bounds {
            Interval::new(b.lo, b.hi)?;
        }
        Ok(Self { vars, bounds })
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<Interval> {
        self.vars.iter().position(|v| v == name).map(|i| self.bounds[i])
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.hi).collect()
    }

    /// Closed-box membership.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.bounds.len()
            && point.iter().zip(&self.bounds).all(|(x, b)| b.contains(*x))
    }

    /// Open-box membership (strict inequalities on every side).
    pub fn contains_strict(&self, point: &[f64]) -> bool {
        point.len() == self.bounds.len()
            && point.iter().zip(&self.bounds).all(|(x, b)| b.lo < *x && *x < b.hi)
    }

    /// Cartesian product with another box (variables appended).
    pub fn product(&self, other: &IntervalBox) -> IntervalBox {
        let vars: Vars = self.vars.iter().chain(other.vars.iter()).cloned().collect();
        let bounds = self.bounds.iter().chain(other.bounds.iter()).copied().collect();
        IntervalBox { vars, bounds }
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        other.vars.iter().zip(&other.bounds).all(|(name, b)| {
            self.get(name).map(|mine| mine.contains_interval(b)).unwrap_or(false)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directed_rounding_brackets_exact_sum() {
        // 0.1 + 0.2 is inexact in binary64
        let lo = add_down(0.1, 0.2);
        let hi = add_up(0.1, 0.2);
        assert!(lo < hi);
        assert!(lo <= 0.30000000000000004 && 0.30000000000000004 <= hi);
        // exact sums are not widened
        assert_eq!(add_down(1.0, 2.0), 3.0);
        assert_eq!(add_up(1.0, 2.0), 3.0);
    }

    #[test]
    fn even_power_rule() {
        let x = Interval::new(-1.0, 2.0).unwrap();
        assert_eq!(x.powi(2), Interval { lo: 0.0, hi: 4.0 });
        let y = Interval::new(-3.0, -2.0).unwrap();
        assert_eq!(y.powi(2), Interval { lo: 4.0, hi: 9.0 });
        assert_eq!(y.powi(3), Interval { lo: -27.0, hi: -8.0 });
    }

    #[test]
    fn product_of_signed_intervals() {
        let x = Interval::new(0.0, 1.0).unwrap();
        let y = Interval::new(-1.0, 1.0).unwrap();
        assert_eq!(x * y, Interval { lo: -1.0, hi: 1.0 });
    }

    #[test]
    fn rejects_inverted_interval() {
        assert!(Interval::new(1.0, 0.0).is_err());
    }

    #[test]
    fn strict_membership_excludes_faces() {
        let vars: Vars = vec!["x".to_string()].into();
        let b = IntervalBox::new(vars, vec![Interval::point(0.0).hull(&Interval::point(1.0))]).unwrap();
        assert!(b.contains(&[1.0]));
        assert!(!b.contains_strict(&[1.0]));
        assert!(b.contains_strict(&[0.5]));
    }
}
