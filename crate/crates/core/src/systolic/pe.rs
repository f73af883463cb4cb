use std::fmt;

use crate::fxp::{FixedComplex, DIV_CYCLES_PER_REAL};

/// Operation mode of an interior PE.
///
/// A complex MAC occupies a PE for four cycles: two multiplier-only cycles
/// (`Mult`) followed by two cycles in which the adder is used (`Accum` for
/// products that accumulate into the StateReg, `Shift` when the product is
/// added to an operand streamed in from the west).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PeMode {
    Mult,
    Accum,
    Shift,
    Eliminate,
    SwapRows,
    #[default]
    Idle,
}

impl fmt::Display for PeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PeMode::Mult => "mult",
            PeMode::Accum => "accum",
            PeMode::Shift => "shift",
            PeMode::Eliminate => "eliminate",
            PeMode::SwapRows => "swap",
            PeMode::Idle => "idle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeMultState {
    pub state_reg: FixedComplex,
    pub accumulator: FixedComplex,
    pub mode: PeMode,
    pub north: FixedComplex,
    pub south: FixedComplex,
    pub east: FixedComplex,
    pub west: FixedComplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BorderMode {
    Pivot,
    Divide,
    #[default]
    Idle,
}

impl fmt::Display for BorderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BorderMode::Pivot => "pivot",
            BorderMode::Divide => "divide",
            BorderMode::Idle => "idle",
        };
        f.write_str(s)
    }
}

/// Border element: pivot magnitude comparison and the sequential divider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeBorderState {
    pub pivot_mag2: i32,
    pub numerator: FixedComplex,
    pub quotient: FixedComplex,
    /// Remaining cycles of the current real division, in `0..=4`.
    pub divider_busy: u64,
    /// Real divisions still queued after the current one.
    pub divisions_queued: u64,
    pub mode: BorderMode,
}

impl PeBorderState {
    pub(super) fn start_division(&mut self, numerator: FixedComplex, quotient: FixedComplex) {
        self.numerator = numerator;
        self.quotient = quotient;
        self.mode = BorderMode::Divide;
        self.divider_busy = DIV_CYCLES_PER_REAL;
        self.divisions_queued = 1;
    }

    pub(super) fn tick(&mut self) {
        if self.mode != BorderMode::Divide {
            return;
        }
        self.divider_busy -= 1;
        if self.divider_busy == 0 {
            if self.divisions_queued > 0 {
                self.divisions_queued -= 1;
                self.divider_busy = DIV_CYCLES_PER_REAL;
            } else {
                self.mode = BorderMode::Idle;
            }
        }
    }
}
