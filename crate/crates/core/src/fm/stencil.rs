use crate::grid::MAX_DIM;

/// Upwind side used on one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Axis term dropped or no known neighbor on that axis.
    None,
    Backward,
    Forward,
}

/// Stencil used on one axis, packed into a byte.
///
/// Bits 0-1 hold the direction, bit 2 the second order flag and bit 3 the
/// non-factored fallback flag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AxisStencil(u8);

impl AxisStencil {
    pub const NONE: Self = Self(0);

    pub fn new(direction: Direction, second_order: bool, plain_fallback: bool) -> Self {
        let d = match direction {
            Direction::None => return Self::NONE,
            Direction::Backward => 1,
            Direction::Forward => 2,
        };
        Self(d | (second_order as u8) << 2 | (plain_fallback as u8) << 3)
    }

    #[inline]
    pub fn direction(self) -> Direction {
        match self.0 & 0b11 {
            1 => Direction::Backward,
            2 => Direction::Forward,
            _ => Direction::None,
        }
    }

    #[inline]
    pub fn is_active(self) -> bool {
        self.0 & 0b11 != 0
    }

    /// Approximation order, 1 or 2. Meaningless for inactive axes.
    #[inline]
    pub fn approx_order(self) -> u8 {
        if self.0 & 0b100 != 0 {
            2
        } else {
            1
        }
    }

    #[inline]
    pub fn used_plain_fallback(self) -> bool {
        self.0 & 0b1000 != 0
    }
}

/// The stencils of the accepted update of one node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StencilRecord {
    pub axes: [AxisStencil; MAX_DIM],
}

impl StencilRecord {
    pub fn used_plain_fallback(&self) -> bool {
        self.axes.iter().any(|a| a.used_plain_fallback())
    }
}
