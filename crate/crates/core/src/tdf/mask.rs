use std::fmt;

/// Truncated L1 distance encoded as a bit-set.
///
/// A canonical mask has its lowest `d` bits set, which encodes a distance of
/// `d` cells. The minimum of any number of canonical masks is their
/// bitwise-AND, so fusing distances never needs a comparison.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct DistanceMask(pub u64);

impl DistanceMask {
    /// Zero distance.
    pub const ZERO: DistanceMask = DistanceMask(0);

    /// Truncation mask for the full 64-bit width.
    pub const ALL_ONES: DistanceMask = DistanceMask(u64::MAX);

    /// Canonical mask for `cells`, saturated at 64 bits.
    #[inline]
    pub fn from_cells(cells: u32) -> Self {
        if cells >= 64 {
            Self::ALL_ONES
        } else {
            DistanceMask((1u64 << cells) - 1)
        }
    }

    /// Canonical mask for `cells`, saturated at `bits`.
    #[inline]
    pub fn saturating(cells: u32, bits: u32) -> Self {
        Self::from_cells(cells.min(bits))
    }

    /// All-ones mask of the given width (the truncation distance).
    #[inline]
    pub fn truncation(bits: u32) -> Self {
        Self::from_cells(bits)
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    /// Fuses two distances; the result encodes the smaller one.
    #[inline]
    #[must_use]
    pub fn merge(self, other: DistanceMask) -> DistanceMask {
        DistanceMask(self.0 & other.0)
    }

    /// Decoded L1 distance in cells (population count).
    #[inline]
    pub fn distance_cells(self) -> u32 {
        self.0.count_ones()
    }

    /// True when the mask has the "lowest d bits set" form.
    #[inline]
    pub fn is_canonical(self) -> bool {
        self.0 == u64::MAX || (self.0.wrapping_add(1)).is_power_of_two()
    }
}

impl fmt::Debug for DistanceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DistanceMask({:#b})", self.0)
    }
}

impl std::ops::BitAnd for DistanceMask {
    type Output = DistanceMask;

    #[inline]
    fn bitand(self, rhs: Self) -> Self {
        self.merge(rhs)
    }
}

impl std::ops::BitAndAssign for DistanceMask {
    #[inline]
    fn bitand_assign(&mut self, rhs: Self) {
        self.0 &= rhs.0;
    }
}

/// `a AND b`, the fused (minimum) distance.
#[inline]
pub fn merge_masks(a: DistanceMask, b: DistanceMask) -> DistanceMask {
    a.merge(b)
}

/// Population count of `m`, i.e. its L1 distance in cells.
#[inline]
pub fn distance_cells(m: DistanceMask) -> u32 {
    m.distance_cells()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_example_fuses_to_shortest() {
        let a = DistanceMask(0b0011_1111);
        let b = DistanceMask(0b0000_1111);
        let c = DistanceMask(0b0000_0001);
        assert_eq!(a.distance_cells(), 6);
        assert_eq!(b.distance_cells(), 4);
        assert_eq!(a & b & c, DistanceMask(0b0000_0001));
    }

    #[test]
    fn identity_and_idempotence() {
        for d in 0..=64 {
            let m = DistanceMask::from_cells(d);
            assert_eq!(merge_masks(DistanceMask::ALL_ONES, m), m);
            assert_eq!(merge_masks(m, m), m);
        }
    }

    #[test]
    fn four_bit_decoding() {
        assert_eq!(distance_cells(DistanceMask(0b0000)), 0);
        assert_eq!(distance_cells(DistanceMask(0b0011)), 2);
        assert_eq!(DistanceMask::truncation(4), DistanceMask(0b1111));
        assert_eq!(distance_cells(DistanceMask::ALL_ONES), 64);
    }

    #[test]
    fn saturation() {
        assert_eq!(DistanceMask::saturating(60, 64).distance_cells(), 60);
        assert_eq!(DistanceMask::saturating(70, 64), DistanceMask::ALL_ONES);
        assert_eq!(DistanceMask::saturating(5, 4), DistanceMask(0b1111));
    }

    #[test]
    fn canonical_detection() {
        assert!(DistanceMask::ZERO.is_canonical());
        assert!(DistanceMask::ALL_ONES.is_canonical());
        assert!(DistanceMask(0b0111).is_canonical());
        assert!(!DistanceMask(0b0101).is_canonical());
        assert!(!DistanceMask(0b0110).is_canonical());
    }
}
