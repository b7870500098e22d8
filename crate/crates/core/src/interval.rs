//! Closed integer intervals and 3-D boxes over the canonical dimensions.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Closed interval `[lo, hi]`; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub const EMPTY: Interval = Interval { lo: 1, hi: 0 };

    pub fn new(lo: i64, hi: i64) -> Self {
        if lo > hi {
            Self::EMPTY
        } else {
            Interval { lo, hi }
        }
    }

    pub fn point(v: i64) -> Self {
        Interval { lo: v, hi: v }
    }

    /// `[0, n-1]`.
    pub fn extent(n: i64) -> Self {
        Self::new(0, n - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn len(&self) -> i64 {
        if self.is_empty() {
            0
        } else {
            self.hi - self.lo + 1
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn hull(self, other: Interval) -> Interval {
        if self.is_empty() {
            other
        } else if other.is_empty() {
            self
        } else {
            Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
        }
    }

    pub fn shift(self, k: i64) -> Interval {
        if self.is_empty() {
            self
        } else {
            Interval { lo: self.lo + k, hi: self.hi + k }
        }
    }

    /// Clamps both ends into `[lo, hi]`; non-empty stays non-empty.
    pub fn clamp_into(self, lo: i64, hi: i64) -> Interval {
        if self.is_empty() {
            self
        } else {
            Interval { lo: self.lo.clamp(lo, hi), hi: self.hi.clamp(lo, hi) }
        }
    }

    /// The `i`-th of `count` tiles of size `ceil(len / count)`, the last ones
    /// clamped (possibly empty) so the tiles cover `self` exactly.
    pub fn tile(self, i: i64, count: i64) -> Interval {
        let size = ceil_div(self.len(), count);
        let lo = self.lo + i * size;
        Interval::new(lo, (lo + size - 1).min(self.hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            write!(f, "[]")
        } else {
            write!(f, "[{},{}]", self.lo, self.hi)
        }
    }
}

pub fn ceil_div(a: i64, b: i64) -> i64 {
    (a + b - 1) / b
}

/// Box over the canonical `x`, `y`, `c` dimensions. Dimensions a function
/// does not have are the unit interval `[0, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region(pub [Interval; 3]);

impl Region {
    pub const UNIT: Region = Region([Interval { lo: 0, hi: 0 }; 3]);
    pub const EMPTY: Region = Region([Interval::EMPTY; 3]);

    pub fn from_extent(sizes: &[i64]) -> Region {
        let mut r = Region::UNIT;
        for (d, &n) in sizes.iter().enumerate() {
            r.0[d] = Interval::extent(n);
        }
        r
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().any(Interval::is_empty)
    }

    pub fn points(&self) -> i64 {
        self.0.iter().map(Interval::len).product()
    }

    pub fn hull(self, other: Region) -> Region {
        if self.is_empty() {
            return other;
        }
        if other.is_empty() {
            return self;
        }
        Region([self.0[0].hull(other.0[0]), self.0[1].hull(other.0[1]), self.0[2].hull(other.0[2])])
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|d| self.0[d].contains(p[d]))
    }

    pub fn extents(&self) -> [i64; 3] {
        [self.0[0].len(), self.0[1].len(), self.0[2].len()]
    }
}

impl std::ops::Index<usize> for Region {
    type Output = Interval;
    fn index(&self, d: usize) -> &Interval {
        &self.0[d]
    }
}

impl std::ops::IndexMut<usize> for Region {
    fn index_mut(&mut self, d: usize) -> &mut Interval {
        &mut self.0[d]
    }
}
