//! Closed interval arithmetic with outward rounding.
//!
//! Every operation returns an enclosure of the true range: for all `a ∈ A`,
//! `b ∈ B`, the exact result lies inside `op(A, B)`. Endpoints are bumped
//! outward by one ulp after each primitive operation, so enclosures survive
//! floating-point rounding. Endpoints may be infinite (e.g. after dividing by
//! an interval that touches zero); an empty interval is never produced.

use std::fmt;

/// A closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn bump_down(v: f64) -> f64 {
    if v.is_finite() {
        v.next_down()
    } else {
        v
    }
}

fn bump_up(v: f64) -> f64 {
    if v.is_finite() {
        v.next_up()
    } else {
        v
    }
}

/// Product bound that treats `0 * inf` as `0`: enclosures of products of
/// finite reals never blow up through an exact zero factor.
fn mul_bound(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "invalid interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        if self.lo.is_finite() && self.hi.is_finite() {
            0.5 * (self.lo + self.hi)
        } else if self.lo.is_finite() {
            self.lo
        } else if self.hi.is_finite() {
            self.hi
        } else {
            0.0
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    /// Largest absolute value attained on the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn outward(lo: f64, hi: f64) -> Self {
        Interval::new(bump_down(lo), bump_up(hi))
    }

    pub fn add(self, o: Interval) -> Interval {
        Interval::outward(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(self, o: Interval) -> Interval {
        Interval::outward(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn mul(self, o: Interval) -> Interval {
        let c = [
            mul_bound(self.lo, o.lo),
            mul_bound(self.lo, o.hi),
            mul_bound(self.hi, o.lo),
            mul_bound(self.hi, o.hi),
        ];
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Interval::outward(lo, hi)
    }

    /// Division by an interval containing zero widens to a half-line or the
    /// whole line rather than erroring; the enclosure stays valid.
    pub fn div(self, o: Interval) -> Interval {
        if o.lo > 0.0 || o.hi < 0.0 {
            let c = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Interval::outward(lo, hi)
        } else if o.lo == 0.0 && o.hi > 0.0 {
            // divisor in (0, hi]
            let c = [self.lo / o.hi, self.hi / o.hi];
            let pos = self.lo >= 0.0;
            let neg = self.hi <= 0.0;
            if pos {
                Interval::outward(c[0], f64::INFINITY)
            } else if neg {
                Interval::outward(f64::NEG_INFINITY, c[1])
            } else {
                Interval::ENTIRE
            }
        } else if o.hi == 0.0 && o.lo < 0.0 {
            let c = [self.lo / o.lo, self.hi / o.lo];
            if self.lo >= 0.0 {
                Interval::outward(f64::NEG_INFINITY, c[0].max(c[1]))
            } else if self.hi <= 0.0 {
                Interval::outward(c[0].min(c[1]), f64::INFINITY)
            } else {
                Interval::ENTIRE
            }
        } else {
            Interval::ENTIRE
        }
    }

    pub fn exp(self) -> Interval {
        let lo = if self.lo == f64::NEG_INFINITY { 0.0 } else { bump_down(self.lo.exp()).max(0.0) };
        let hi = bump_up(self.hi.exp());
        Interval::new(lo, hi)
    }

    /// Natural log. `None` when the interval is entirely nonpositive; when the
    /// interval straddles zero the lower endpoint widens to `-inf`.
    pub fn ln(self) -> Option<Interval> {
        if self.hi <= 0.0 {
            return None;
        }
        let lo = if self.lo <= 0.0 {
            f64::NEG_INFINITY
        } else {
            bump_down(self.lo.ln())
        };
        Some(Interval::new(lo, bump_up(self.hi.ln())))
    }

    /// `None` when the interval is entirely negative; a straddling interval is
    /// clipped at zero (the true preimage of sqrt).
    pub fn sqrt(self) -> Option<Interval> {
        if self.hi < 0.0 {
            return None;
        }
        let lo = if self.lo <= 0.0 { 0.0 } else { bump_down(self.lo.sqrt()).max(0.0) };
        Some(Interval::new(lo, bump_up(self.hi.sqrt())))
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval::new(0.0, self.mag())
        }
    }

    /// Integer power by exact monotonicity analysis (sharper than repeated
    /// multiplication for even exponents on sign-straddling intervals).
    pub fn powi(self, n: i32) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n < 0 {
            return Interval::point(1.0).div(self.powi(-n));
        }
        let odd = n % 2 != 0;
        if odd {
            Interval::outward(self.lo.powi(n), self.hi.powi(n))
        } else if self.lo >= 0.0 {
            Interval::outward(self.lo.powi(n), self.hi.powi(n))
        } else if self.hi <= 0.0 {
            Interval::outward(self.hi.powi(n), self.lo.powi(n))
        } else {
            Interval::outward(0.0, self.mag().powi(n)).max_with(0.0)
        }
    }

    fn max_with(self, floor: f64) -> Interval {
        Interval::new(self.lo.max(floor), self.hi.max(floor))
    }

    /// Real power `self^e` for non-integer `e`; requires a positive base.
    pub fn powf(self, e: f64) -> Option<Interval> {
        if self.lo <= 0.0 {
            return None;
        }
        let a = self.lo.powf(e);
        let b = self.hi.powf(e);
        Some(Interval::outward(a.min(b), a.max(b)))
    }

    /// Exact interval extension of the componentwise clamp `mid(lo, v, hi)`:
    /// the clamp is monotone, so clamping the endpoints is the exact range.
    pub fn clamp_to(self, lo: f64, hi: f64) -> Interval {
        Interval::new(self.lo.clamp(lo, hi), self.hi.clamp(lo, hi))
    }

    pub fn intersect(self, o: Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        if lo <= hi {
            Some(Interval::new(lo, hi))
        } else {
            None
        }
    }

    pub fn hull(self, o: Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_encloses_samples() {
        let a = Interval::new(-1.0, 2.0);
        let b = Interval::new(0.5, 3.0);
        for i in 0..=20 {
            for j in 0..=20 {
                let x = a.lo + a.width() * i as f64 / 20.0;
                let y = b.lo + b.width() * j as f64 / 20.0;
                assert!(a.add(b).contains(x + y));
                assert!(a.sub(b).contains(x - y));
                assert!(a.mul(b).contains(x * y));
                assert!(a.div(b).contains(x / y));
            }
        }
    }

    #[test]
    fn division_by_straddling_interval_widens() {
        let a = Interval::new(1.0, 2.0);
        let b = Interval::new(-1.0, 1.0);
        let q = a.div(b);
        assert_eq!(q, Interval::ENTIRE);
        let half = a.div(Interval::new(0.0, 1.0));
        assert!(half.contains(1e12));
        assert!(half.contains(1.0));
    }

    #[test]
    fn even_power_is_sharp_on_straddle() {
        let a = Interval::new(-1.0, 1.0);
        let sq = a.powi(2);
        assert!(sq.lo <= 0.0 && sq.lo >= -1e-12);
        assert!(sq.hi >= 1.0 && sq.hi <= 1.0 + 1e-12);
    }

    #[test]
    fn clamp_is_exact() {
        let v = Interval::new(-3.0, 0.5);
        let c = v.clamp_to(-1.0, 1.0);
        assert_eq!(c.lo, -1.0);
        assert_eq!(c.hi, 0.5);
    }

    #[test]
    fn log_and_sqrt_domains() {
        assert!(Interval::new(-2.0, -1.0).ln().is_none());
        let l = Interval::new(-1.0, 4.0).ln().unwrap();
        assert_eq!(l.lo, f64::NEG_INFINITY);
        assert!(l.contains(4.0f64.ln()));
        assert!(Interval::new(-2.0, -0.5).sqrt().is_none());
        let s = Interval::new(-1.0, 9.0).sqrt().unwrap();
        assert!(s.contains(0.0) && s.contains(3.0));
    }

    #[test]
    fn exp_saturates_cleanly() {
        let e = Interval::new(-1e6, 1e6).exp();
        assert_eq!(e.lo, 0.0);
        assert_eq!(e.hi, f64::INFINITY);
    }
}
