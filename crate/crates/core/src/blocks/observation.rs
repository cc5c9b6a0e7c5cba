use std::fmt;

use super::{BlocksState, Cell};

/// Injective tabular key for a [`BlocksState`], ignoring the step counter.
///
/// Layout of `bits`, low to high: one occupancy bit per cell, seven bits of
/// manipulator cell index, magnet flag, holding flag. Grid dimensions are
/// kept alongside so keys from differently sized grids never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservationKey {
    dims: u16,
    bits: u128,
}

impl ObservationKey {
    pub fn encode(state: &BlocksState) -> Self {
        let cells = state.width() * state.height();
        let manip = state.manip.row as u128 * state.width as u128 + state.manip.col as u128;
        let bits = state.cube_mask()
            | manip << cells
            | (state.magnet_on as u128) << (cells + 7)
            | (state.holding as u128) << (cells + 8);
        ObservationKey {
            dims: (state.width as u16) << 8 | state.height as u16,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        (self.dims >> 8) as usize
    }

    pub fn height(&self) -> usize {
        (self.dims & 0xff) as usize
    }

    /// Recovers the state; the step counter comes back as zero.
    pub fn decode(&self) -> BlocksState {
        let (w, h) = (self.width(), self.height());
        let cells = w * h;
        let mask = if cells == 128 { u128::MAX } else { (1u128 << cells) - 1 };
        let manip = ((self.bits >> cells) & 0x7f) as usize;
        BlocksState {
            width: w as u8,
            height: h as u8,
            cubes: self.bits & mask,
            manip: Cell::new(manip % w, manip / w),
            magnet_on: (self.bits >> (cells + 7)) & 1 == 1,
            holding: (self.bits >> (cells + 8)) & 1 == 1,
            steps_taken: 0,
        }
    }
}

impl fmt::Display for ObservationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}:{:x}", self.width(), self.height(), self.bits)
    }
}
