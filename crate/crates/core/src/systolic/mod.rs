//! Cycle-level model of the PE array.
//!
//! The array is an `N x (N+1)` grid of multiply-accumulate elements (the
//! extra column carries augmented mean columns) with one border element per
//! row for pivot search and division. It executes three macro-operations:
//!
//! - [`ArrayState::array_matmul`]: product left in the StateRegs
//! - [`ArrayState::array_matmul_shift`]: streamed operand plus a product with
//!   the resident StateReg block, result in the accumulators
//! - [`ArrayState::array_faddeev`]: Schur complement by Faddeev elimination
//!
//! Each macro-op is expanded into a per-cycle event schedule when it is
//! issued; [`ArrayState::step`] executes one cycle of it. The arithmetic of
//! every event is a single [`FxUnit`] primitive, so the result of a
//! macro-op does not depend on how it is stepped.

mod pe;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fxp::{FixedComplex, FxFormat, FxUnit};
use crate::linalg::{Block, Mat};

pub use pe::{BorderMode, PeBorderState, PeMode, PeMultState};

pub type FxMat = Mat<FixedComplex>;

/// Largest supported array dimension.
pub const MAX_ARRAY_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArrayError {
    #[error("array is busy")]
    Busy,
    #[error("operand too large for the array: {0}")]
    Size(String),
    #[error("operand shapes do not conform: {0}")]
    Shape(String),
    #[error("singular pivot block: zero pivot in column {column}")]
    Singular { column: usize },
}

pub type Result<T> = std::result::Result<T, ArrayError>;

/// Per-primitive cycle costs and the closed forms built from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CycleModel {
    /// One complex multiply-accumulate.
    pub mac_cycles: u64,
    /// One real division on the radix-2 divider.
    pub div_cycles: u64,
    /// One row exchange wavefront.
    pub swap_cycles: u64,
    /// One pivot magnitude comparison in the border column.
    pub compare_cycles: u64,
}

impl Default for CycleModel {
    fn default() -> Self {
        Self { mac_cycles: 4, div_cycles: 4, swap_cycles: 1, compare_cycles: 1 }
    }
}

impl CycleModel {
    /// Skewed input wavefront for a `p x q` result.
    pub fn skew(&self, p: usize, q: usize) -> u64 {
        (p.saturating_sub(1) + q.saturating_sub(1)) as u64
    }

    pub fn drain(&self, p: usize) -> u64 {
        p.saturating_sub(1) as u64
    }

    /// `(p x k)·(k x q)`: `mac·k + (p-1) + (q-1)` wavefront plus `p-1` drain.
    pub fn matmul(&self, p: usize, k: usize, q: usize) -> u64 {
        self.mac_cycles * k as u64 + self.skew(p, q) + self.drain(p)
    }

    /// Faddeev on a `p x p` pivot block with `cols` columns to the right of it.
    ///
    /// Pivot step `j` costs `(p-j)` comparisons, one swap wavefront, one
    /// complex division (two real divisions, all rows in parallel) and
    /// `mac` cycles per remaining column; the wavefront adds `2(p-1)` skew.
    pub fn faddeev(&self, p: usize, cols: usize) -> u64 {
        let w = p + cols;
        let steps: u64 = (0..p)
            .map(|j| {
                self.compare_cycles * (p - j) as u64
                    + self.swap_cycles
                    + 2 * self.div_cycles
                    + self.mac_cycles * (w - j - 1) as u64
            })
            .sum();
        steps + 2 * p.saturating_sub(1) as u64
    }
}

pub type FxBlock = Block<FixedComplex>;

/// An operand with the Transpose unit's conjugate-transpose and negation flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub mat: FxMat,
    pub herm: bool,
    pub neg: bool,
}

impl Operand {
    pub fn new(mat: FxMat, herm: bool, neg: bool) -> Self {
        Self { mat, herm, neg }
    }

    pub fn plain(mat: FxMat) -> Self {
        Self { mat, herm: false, neg: false }
    }

    /// Applies the flags: Hermitian transpose first, then negation.
    pub fn resolve(&self, unit: &mut FxUnit) -> FxMat {
        let m = if self.herm { hermitian(unit, &self.mat) } else { self.mat.clone() };
        if self.neg {
            let mut out = m.clone();
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    out[(r, c)] = unit.neg(m[(r, c)]);
                }
            }
            out
        } else {
            m
        }
    }
}

/// Conjugate transpose as performed by the Transpose unit.
pub fn hermitian(unit: &mut FxUnit, m: &FxMat) -> FxMat {
    let mut out = FxMat::zeros(m.cols(), m.rows());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out[(c, r)] = unit.conj(m[(r, c)]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacroKind {
    Matmul,
    MatmulShift,
    Faddeev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    State,
    Acc,
}

#[derive(Debug, Clone)]
enum Event {
    /// Operands arrive at a PE; a new MAC window starts.
    Latch {
        r: usize,
        c: usize,
        west: FixedComplex,
        north: FixedComplex,
    },
    Mode {
        r: usize,
        c: usize,
        mode: PeMode,
    },
    Init {
        r: usize,
        c: usize,
        value: FixedComplex,
    },
    Mac {
        r: usize,
        c: usize,
    },
    /// Adder slot: accumulator = a + b.
    Add {
        r: usize,
        c: usize,
        a: FixedComplex,
        b: FixedComplex,
    },
    PivotCompare {
        step: usize,
        row: usize,
    },
    Swap {
        step: usize,
    },
    Divide {
        step: usize,
    },
    Eliminate {
        step: usize,
        col: usize,
    },
    Commit {
        target: Target,
        rows: usize,
        cols: usize,
        aug: bool,
    },
    CommitFaddeev,
}

#[derive(Debug, Clone)]
struct FaddeevWork {
    work: FxMat,
    p: usize,
    r: usize,
    q: usize,
    aug: bool,
    best_row: usize,
    best_mag: i32,
    factors: Vec<FixedComplex>,
    swaps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct InFlight {
    kind: MacroKind,
    elapsed: u64,
    total: u64,
    events: BTreeMap<u64, Vec<Event>>,
    faddeev: Option<FaddeevWork>,
    error: Option<ArrayError>,
}

/// Summary of a completed macro-operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpReport {
    pub kind: MacroKind,
    pub cycles: u64,
    /// Row exchanges `(pivot step, row swapped in)` performed by a Faddeev op.
    pub swaps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Idle,
    Busy,
    Done(Result<OpReport>),
}

/// Full state of the array.
#[derive(Debug, Clone)]
pub struct ArrayState {
    size: usize,
    unit: FxUnit,
    model: CycleModel,
    grid: Vec<PeMultState>,
    border: Vec<PeBorderState>,
    state_shape: (usize, usize, bool),
    acc_shape: (usize, usize, bool),
    cycle: u64,
    inflight: Option<InFlight>,
    trace: Option<Vec<String>>,
}

impl ArrayState {
    pub fn new(size: usize, format: FxFormat, model: CycleModel) -> Result<Self> {
        if size == 0 || size > MAX_ARRAY_SIZE {
            return Err(ArrayError::Size(format!("array size {size} outside 1..={MAX_ARRAY_SIZE}")));
        }
        Ok(Self {
            size,
            unit: FxUnit::new(format),
            model,
            grid: vec![PeMultState::default(); size * (size + 1)],
            border: vec![PeBorderState::default(); size],
            state_shape: (0, 0, false),
            acc_shape: (0, 0, false),
            cycle: 0,
            inflight: None,
            trace: None,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn model(&self) -> CycleModel {
        self.model
    }

    pub fn unit(&self) -> &FxUnit {
        &self.unit
    }

    pub fn unit_mut(&mut self) -> &mut FxUnit {
        &mut self.unit
    }

    pub fn is_idle(&self) -> bool {
        self.inflight.is_none()
    }

    pub fn pe(&self, r: usize, c: usize) -> &PeMultState {
        &self.grid[r * (self.size + 1) + c]
    }

    fn pe_mut(&mut self, r: usize, c: usize) -> &mut PeMultState {
        &mut self.grid[r * (self.size + 1) + c]
    }

    pub fn border(&self, r: usize) -> &PeBorderState {
        &self.border[r]
    }

    /// Starts collecting `cycle=<k> pe=<r>,<c> mode=<m> acc=<hex>` lines.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn read_block(&self, shape: (usize, usize, bool), target: Target) -> FxBlock {
        let (rows, cols, aug) = shape;
        let mat = FxMat::from_fn(rows, cols, |r, c| match target {
            Target::State => self.pe(r, c).state_reg,
            Target::Acc => self.pe(r, c).accumulator,
        });
        FxBlock { mat, aug }
    }

    /// Block held in the StateRegs.
    pub fn state_block(&self) -> FxBlock {
        self.read_block(self.state_shape, Target::State)
    }

    /// Block held in the accumulators.
    pub fn acc_block(&self) -> FxBlock {
        self.read_block(self.acc_shape, Target::Acc)
    }

    fn check_fits(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if rows > self.size || cols > self.size + 1 {
            return Err(ArrayError::Size(format!("{what} is {rows}x{cols}, array holds {}x{}", self.size, self.size + 1)));
        }
        Ok(())
    }

    /// Loads a block into the StateRegs directly (Data-in path).
    pub fn load_state(&mut self, block: &FxBlock) -> Result<()> {
        self.ensure_idle()?;
        self.check_fits(block.rows(), block.mat.cols(), "state block")?;
        for r in 0..block.rows() {
            for c in 0..block.mat.cols() {
                self.pe_mut(r, c).state_reg = block.mat[(r, c)];
            }
        }
        self.state_shape = (block.rows(), block.mat.cols(), block.aug);
        Ok(())
    }

    pub fn load_acc(&mut self, block: &FxBlock) -> Result<()> {
        self.ensure_idle()?;
        self.check_fits(block.rows(), block.mat.cols(), "accumulator block")?;
        for r in 0..block.rows() {
            for c in 0..block.mat.cols() {
                self.pe_mut(r, c).accumulator = block.mat[(r, c)];
            }
        }
        self.acc_shape = (block.rows(), block.mat.cols(), block.aug);
        Ok(())
    }

    fn ensure_idle(&self) -> Result<()> {
        if self.inflight.is_some() {
            Err(ArrayError::Busy)
        } else {
            Ok(())
        }
    }

    fn push(events: &mut BTreeMap<u64, Vec<Event>>, at: u64, e: Event) {
        events.entry(at).or_default().push(e);
    }

    /// Schedules the MAC windows for output `(r, c)`: the `k`-th operand pair
    /// reaches PE `(r, c)` at cycle `r + c + mac·k`.
    fn schedule_macs(
        &self,
        events: &mut BTreeMap<u64, Vec<Event>>,
        r: usize,
        c: usize,
        pairs: impl Iterator<Item = (FixedComplex, FixedComplex)>,
        add_mode: PeMode,
        total: u64,
    ) {
        let mac = self.model.mac_cycles;
        let base = (r + c) as u64;
        let mut end = base;
        for (k, (west, north)) in pairs.enumerate() {
            let s = base + mac * k as u64;
            Self::push(events, s, Event::Latch { r, c, west, north });
            if mac > 2 {
                Self::push(events, s + mac / 2, Event::Mode { r, c, mode: add_mode });
            }
            Self::push(events, s + mac - 1, Event::Mac { r, c });
            end = s + mac;
        }
        if end < total {
            Self::push(events, end, Event::Mode { r, c, mode: PeMode::Idle });
        }
    }

    /// Issues `S <- x·y` (operands after flag resolution). With `aug` the
    /// product's last column is marked as a mean column.
    pub fn begin_matmul(&mut self, x: &Operand, y: &Operand, aug: bool) -> Result<u64> {
        self.ensure_idle()?;
        let x = x.resolve(&mut self.unit);
        let y = y.resolve(&mut self.unit);
        let (p, k, q) = (x.rows(), x.cols(), y.cols());
        if y.rows() != k {
            return Err(ArrayError::Shape(format!("{}x{} times {}x{}", p, k, y.rows(), q)));
        }
        self.check_fits(p, q, "product")?;
        if k > self.size + 1 {
            return Err(ArrayError::Size(format!("inner dimension {k} exceeds {}", self.size + 1)));
        }
        let total = self.model.matmul(p, k, q);
        let mut events = BTreeMap::new();
        for r in 0..p {
            for c in 0..q {
                Self::push(&mut events, (r + c) as u64, Event::Init { r, c, value: FixedComplex::ZERO });
                let pairs = (0..k).map(|kk| (x[(r, kk)], y[(kk, c)]));
                self.schedule_macs(&mut events, r, c, pairs, PeMode::Accum, total);
            }
        }
        Self::push(
            &mut events,
            total.saturating_sub(1),
            Event::Commit { target: Target::State, rows: p, cols: q, aug: aug && q > 0 },
        );
        self.issue(MacroKind::Matmul, total, events, None)
    }

    /// Issues `acc <- y + S_lead·p` where `S_lead` is the matrix part of the
    /// resident StateReg block. If the StateReg block carries a mean column,
    /// the accumulator block does too: `state mean (+ y mean if y is
    /// augmented)`, computed in the adder's free slots.
    pub fn begin_matmul_shift(&mut self, y: &FxBlock, p_op: &Operand) -> Result<u64> {
        self.ensure_idle()?;
        let pm = p_op.resolve(&mut self.unit);
        let state = self.state_block();
        let (rows, lead) = (state.rows(), pm.rows());
        if state.lead_cols() < lead {
            return Err(ArrayError::Shape(format!(
                "resident block has {} matrix columns, operand needs {lead}",
                state.lead_cols()
            )));
        }
        let q = pm.cols();
        if y.rows() != rows || y.lead_cols() != q {
            return Err(ArrayError::Shape(format!("streamed operand is {}x{}, expected {rows}x{q}", y.rows(), y.lead_cols())));
        }
        if y.aug && !state.aug {
            return Err(ArrayError::Shape("streamed mean column but no resident mean column".into()));
        }
        let out_aug = state.aug;
        self.check_fits(rows, q + usize::from(out_aug), "shift result")?;
        let total = self.model.matmul(rows, lead, q);
        let mut events = BTreeMap::new();
        for r in 0..rows {
            for c in 0..q {
                Self::push(&mut events, (r + c) as u64, Event::Init { r, c, value: y.mat[(r, c)] });
                let pairs = (0..lead).map(|kk| (state.mat[(r, kk)], pm[(kk, c)]));
                self.schedule_macs(&mut events, r, c, pairs, PeMode::Shift, total);
            }
            if out_aug {
                let s_mean = state.mat[(r, state.mat.cols() - 1)];
                let y_mean = if y.aug { y.mat[(r, y.mat.cols() - 1)] } else { FixedComplex::ZERO };
                Self::push(&mut events, (r + q) as u64, Event::Add { r, c: q, a: s_mean, b: y_mean });
            }
        }
        let cols = q + usize::from(out_aug);
        Self::push(&mut events, total.saturating_sub(1), Event::Commit { target: Target::Acc, rows, cols, aug: out_aug });
        self.issue(MacroKind::MatmulShift, total, events, None)
    }

    /// Issues Faddeev elimination on the resident blocks:
    /// `a` = matrix part of the accumulators, `b = [S_lead | acc mean]`,
    /// `c = S_lead^H` (Transpose unit) and the streamed `d`.
    pub fn begin_faddeev(&mut self, d: &FxBlock) -> Result<u64> {
        self.ensure_idle()?;
        let acc = self.acc_block();
        let state = self.state_block();
        let a = acc.lead();
        let s_lead = state.lead();
        let b = match acc.mean() {
            Some(m) => s_lead.hcat(&m),
            None => s_lead.clone(),
        };
        let c = hermitian(&mut self.unit, &s_lead);
        self.begin_faddeev_blocks(&a, &b, &c, d)
    }

    /// Issues Faddeev elimination on explicit blocks `[a b; c d]`; the result
    /// `d - c a^-1 b` lands in the StateRegs and the accumulators.
    pub fn begin_faddeev_blocks(&mut self, a: &FxMat, b: &FxMat, c: &FxMat, d: &FxBlock) -> Result<u64> {
        self.ensure_idle()?;
        let p = a.rows();
        let (r, q) = (d.rows(), d.mat.cols());
        if !a.is_square() || b.rows() != p || c.cols() != p || c.rows() != r || b.cols() != q {
            return Err(ArrayError::Shape(format!(
                "faddeev blocks a {:?}, b {:?}, c {:?}, d {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.mat.shape()
            )));
        }
        if p == 0 {
            return Err(ArrayError::Shape("empty pivot block".into()));
        }
        self.check_fits(p, p, "pivot block")?;
        self.check_fits(r, q, "result block")?;
        let work = a.hcat(b).vcat(&c.hcat(&d.mat));
        let w = p + q;
        let m = self.model;
        let total = m.faddeev(p, q);
        let mut events = BTreeMap::new();
        let mut t = 0u64;
        for step in 0..p {
            for row in step..p {
                Self::push(&mut events, t, Event::PivotCompare { step, row });
                t += m.compare_cycles;
            }
            Self::push(&mut events, t, Event::Swap { step });
            t += m.swap_cycles;
            Self::push(&mut events, t, Event::Divide { step });
            t += 2 * m.div_cycles;
            for col in step + 1..w {
                Self::push(&mut events, t + m.mac_cycles - 1, Event::Eliminate { step, col });
                t += m.mac_cycles;
            }
        }
        t += 2 * (p as u64 - 1);
        debug_assert_eq!(t, total);
        Self::push(&mut events, total - 1, Event::CommitFaddeev);
        let fw = FaddeevWork {
            work,
            p,
            r,
            q,
            aug: d.aug,
            best_row: 0,
            best_mag: -1,
            factors: vec![FixedComplex::ZERO; p + r],
            swaps: Vec::new(),
        };
        self.issue(MacroKind::Faddeev, total, events, Some(fw))
    }

    fn issue(
        &mut self,
        kind: MacroKind,
        total: u64,
        events: BTreeMap<u64, Vec<Event>>,
        faddeev: Option<FaddeevWork>,
    ) -> Result<u64> {
        self.inflight = Some(InFlight { kind, elapsed: 0, total, events, faddeev, error: None });
        Ok(total)
    }

    /// Advances exactly one cycle.
    pub fn step(&mut self) -> StepOutcome {
        self.cycle += 1;
        let Some(mut op) = self.inflight.take() else {
            return StepOutcome::Idle;
        };
        let now = op.elapsed;
        if let Some(evs) = op.events.remove(&now) {
            for e in evs {
                if op.error.is_some() {
                    break;
                }
                self.apply(&mut op, e);
            }
        }
        if self.trace.is_some() {
            self.emit_trace(self.cycle - 1);
        }
        for b in &mut self.border {
            b.tick();
        }
        op.elapsed += 1;
        if let Some(err) = op.error.take() {
            self.reset_modes();
            return StepOutcome::Done(Err(err));
        }
        if op.elapsed >= op.total {
            self.reset_modes();
            let swaps = op.faddeev.map(|f| f.swaps).unwrap_or_default();
            return StepOutcome::Done(Ok(OpReport { kind: op.kind, cycles: op.total, swaps }));
        }
        self.inflight = Some(op);
        StepOutcome::Busy
    }

    fn reset_modes(&mut self) {
        for pe in &mut self.grid {
            pe.mode = PeMode::Idle;
        }
        for b in &mut self.border {
            b.mode = BorderMode::Idle;
            b.divider_busy = 0;
            b.divisions_queued = 0;
        }
    }

    fn emit_trace(&mut self, cycle: u64) {
        let cols = self.size + 1;
        let mut lines = Vec::new();
        for (i, pe) in self.grid.iter().enumerate() {
            if pe.mode != PeMode::Idle {
                lines.push(format!(
                    "cycle={cycle} pe={},{} mode={} acc={:08x}{:08x}",
                    i / cols,
                    i % cols,
                    pe.mode,
                    pe.accumulator.re as u32,
                    pe.accumulator.im as u32
                ));
            }
        }
        for (i, b) in self.border.iter().enumerate() {
            if b.mode != BorderMode::Idle {
                lines.push(format!("cycle={cycle} border={i} mode={} busy={}", b.mode, b.divider_busy));
            }
        }
        if let Some(t) = self.trace.as_mut() {
            t.extend(lines);
        }
    }

    fn apply(&mut self, op: &mut InFlight, e: Event) {
        match e {
            Event::Latch { r, c, west, north } => {
                let pe = self.pe_mut(r, c);
                pe.west = west;
                pe.north = north;
                pe.mode = PeMode::Mult;
            }
            Event::Mode { r, c, mode } => self.pe_mut(r, c).mode = mode,
            Event::Init { r, c, value } => self.pe_mut(r, c).accumulator = value,
            Event::Mac { r, c } => {
                let pe = *self.pe(r, c);
                let v = self.unit.mac(pe.accumulator, pe.west, pe.north, false);
                let pe = self.pe_mut(r, c);
                pe.accumulator = v;
                pe.east = pe.west;
                pe.south = pe.north;
            }
            Event::Add { r, c, a, b } => {
                let v = self.unit.add(a, b);
                let pe = self.pe_mut(r, c);
                pe.accumulator = v;
                pe.mode = PeMode::Shift;
            }
            Event::Commit { target, rows, cols, aug } => match target {
                Target::State => {
                    for r in 0..rows {
                        for c in 0..cols {
                            let pe = self.pe_mut(r, c);
                            pe.state_reg = pe.accumulator;
                        }
                    }
                    self.state_shape = (rows, cols, aug);
                }
                Target::Acc => self.acc_shape = (rows, cols, aug),
            },
            Event::PivotCompare { step, row } => {
                let fw = op.faddeev.as_mut().expect("faddeev state");
                let v = fw.work[(row, step)];
                let mag = self.unit.abs2(v);
                if row == step || mag > fw.best_mag {
                    fw.best_mag = mag;
                    fw.best_row = row;
                }
                let b = &mut self.border[row.min(self.size - 1)];
                b.mode = BorderMode::Pivot;
                b.pivot_mag2 = mag;
            }
            Event::Swap { step } => {
                let fw = op.faddeev.as_mut().expect("faddeev state");
                if fw.best_mag <= 0 {
                    op.error = Some(ArrayError::Singular { column: step });
                    return;
                }
                if fw.best_row != step {
                    fw.work.swap_rows(step, fw.best_row);
                    fw.swaps.push((step, fw.best_row));
                }
                for b in &mut self.border {
                    b.mode = BorderMode::Idle;
                }
                let cols = self.size + 1;
                for r in [step, fw.best_row] {
                    if r < self.size {
                        for c in 0..cols {
                            self.grid[r * cols + c].mode = PeMode::SwapRows;
                        }
                    }
                }
            }
            Event::Divide { step } => {
                let fw = op.faddeev.as_mut().expect("faddeev state");
                let pivot = fw.work[(step, step)];
                for i in step + 1..fw.p + fw.r {
                    let (l, _) = self.unit.div(fw.work[(i, step)], pivot).expect("pivot checked nonzero");
                    fw.factors[i] = l;
                    let slot = (i - step - 1) % self.size;
                    self.border[slot].start_division(fw.work[(i, step)], l);
                }
                for pe in &mut self.grid {
                    if pe.mode == PeMode::SwapRows {
                        pe.mode = PeMode::Idle;
                    }
                }
            }
            Event::Eliminate { step, col } => {
                let fw = op.faddeev.as_mut().expect("faddeev state");
                let top = fw.work[(step, col)];
                let rows = fw.p + fw.r;
                for i in step + 1..rows {
                    let v = self.unit.mac(fw.work[(i, col)], fw.factors[i], top, true);
                    fw.work[(i, col)] = v;
                }
                if col + 1 == fw.p + fw.q {
                    for i in step + 1..rows {
                        fw.work[(i, step)] = FixedComplex::ZERO;
                    }
                }
                // Rows below the pivot are folded onto the grid rows.
                let cols = self.size + 1;
                let pc = (col - step - 1) % cols;
                for i in step + 1..rows {
                    let pr = (i - step - 1) % self.size;
                    let pe = &mut self.grid[pr * cols + pc];
                    pe.mode = PeMode::Eliminate;
                    pe.accumulator = fw.work[(i, col)];
                }
            }
            Event::CommitFaddeev => {
                let fw = op.faddeev.as_ref().expect("faddeev state");
                let (p, r, q, aug) = (fw.p, fw.r, fw.q, fw.aug);
                let result = fw.work.block(p, p, r, q);
                for i in 0..r {
                    for j in 0..q {
                        let pe = self.pe_mut(i, j);
                        pe.state_reg = result[(i, j)];
                        pe.accumulator = result[(i, j)];
                    }
                }
                self.state_shape = (r, q, aug);
                self.acc_shape = (r, q, aug);
            }
        }
    }

    /// Runs the in-flight macro-op to completion.
    pub fn run_to_completion(&mut self) -> Result<OpReport> {
        loop {
            match self.step() {
                StepOutcome::Busy => continue,
                StepOutcome::Done(r) => return r,
                StepOutcome::Idle => return Err(ArrayError::Shape("no operation in flight".into())),
            }
        }
    }

    /// `S <- x·y`, product left in the StateRegs. Returns the cycle count.
    pub fn array_matmul(&mut self, x: &Operand, y: &Operand) -> Result<u64> {
        self.begin_matmul(x, y, false)?;
        self.run_to_completion().map(|r| r.cycles)
    }

    /// `acc <- y + S·p`. Returns the cycle count.
    pub fn array_matmul_shift(&mut self, y: &FxBlock, p: &Operand) -> Result<u64> {
        self.begin_matmul_shift(y, p)?;
        self.run_to_completion().map(|r| r.cycles)
    }

    /// Faddeev on the resident blocks with streamed `d`.
    pub fn array_faddeev(&mut self, d: &FxBlock) -> Result<(FxBlock, OpReport)> {
        self.begin_faddeev(d)?;
        let rep = self.run_to_completion()?;
        Ok((self.state_block(), rep))
    }

    /// Faddeev on explicit blocks; returns `d - c a^-1 b`.
    pub fn faddeev_blocks(&mut self, a: &FxMat, b: &FxMat, c: &FxMat, d: &FxMat) -> Result<(FxMat, OpReport)> {
        self.begin_faddeev_blocks(a, b, c, &FxBlock::plain(d.clone()))?;
        let rep = self.run_to_completion()?;
        Ok((self.state_block().mat, rep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn array() -> ArrayState {
        ArrayState::new(4, FxFormat::default(), CycleModel::default()).unwrap()
    }

    fn qmat(a: &mut ArrayState, rows: usize, cols: usize, vals: &[f64]) -> FxMat {
        FxMat::from_fn(rows, cols, |r, c| a.unit_mut().quantize(Complex64::new(vals[r * cols + c], 0.0)))
    }

    fn ident(a: &mut ArrayState, n: usize) -> FxMat {
        FxMat::from_fn(n, n, |r, c| a.unit_mut().quantize(Complex64::new(if r == c { 1.0 } else { 0.0 }, 0.0)))
    }

    #[test]
    fn identity_product_cycles() {
        let mut a = array();
        let i4 = ident(&mut a, 4);
        let cycles = a.array_matmul(&Operand::plain(i4.clone()), &Operand::plain(i4.clone())).unwrap();
        assert_eq!(cycles, 25);
        assert_eq!(a.state_block().mat, i4);
        assert_eq!(a.cycle(), 25);
    }

    #[test]
    fn closed_form_matches_stepping() {
        for n in 1..=4 {
            let mut a = array();
            let m = ident(&mut a, n);
            let total = a.begin_matmul(&Operand::plain(m.clone()), &Operand::plain(m.clone()), false).unwrap();
            let mut steps = 0;
            loop {
                steps += 1;
                if let StepOutcome::Done(r) = a.step() {
                    r.unwrap();
                    break;
                }
            }
            assert_eq!(steps, total);
            assert_eq!(total, (4 * n + 3 * (n - 1)) as u64);
        }
    }

    #[test]
    fn busy_and_size_errors() {
        let mut a = array();
        let i4 = ident(&mut a, 4);
        a.begin_matmul(&Operand::plain(i4.clone()), &Operand::plain(i4.clone()), false).unwrap();
        assert_eq!(a.array_matmul(&Operand::plain(i4.clone()), &Operand::plain(i4.clone())), Err(ArrayError::Busy));
        a.run_to_completion().unwrap();
        let mut small = ArrayState::new(2, FxFormat::default(), CycleModel::default()).unwrap();
        assert!(matches!(small.array_matmul(&Operand::plain(i4.clone()), &Operand::plain(i4)), Err(ArrayError::Size(_))));
    }

    #[test]
    fn idle_steps_only_advance_counter() {
        let mut a = array();
        let before = a.state_block();
        for _ in 0..5 {
            assert_eq!(a.step(), StepOutcome::Idle);
        }
        assert_eq!(a.cycle(), 5);
        assert_eq!(a.state_block(), before);
    }

    #[test]
    fn first_wavefront_cycle_only_origin_active() {
        let mut a = array();
        a.enable_trace();
        let i4 = ident(&mut a, 4);
        a.begin_matmul(&Operand::plain(i4.clone()), &Operand::plain(i4), false).unwrap();
        a.step();
        let lines = a.take_trace();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].starts_with("cycle=0 pe=0,0 mode=mult"), "{}", lines[0]);
        a.step();
        let lines = a.take_trace();
        assert_eq!(lines.len(), 3, "{lines:?}");
    }

    #[test]
    fn shift_subtracts_product() {
        let mut a = array();
        let i4 = ident(&mut a, 4);
        a.array_matmul(&Operand::plain(i4.clone()), &Operand::plain(i4.clone())).unwrap();
        let two = FxMat::from_fn(4, 4, |r, c| a.unit_mut().quantize(Complex64::new(if r == c { 2.0 } else { 0.0 }, 0.0)));
        let cycles = a.array_matmul_shift(&FxBlock::plain(two), &Operand::new(i4.clone(), false, true)).unwrap();
        assert_eq!(cycles, 25);
        assert_eq!(a.acc_block().mat, i4);
    }

    #[test]
    fn shift_with_zero_operand_returns_stream() {
        let mut a = array();
        let m = qmat(&mut a, 2, 2, &[0.5, 1.0, -1.0, 0.25]);
        a.array_matmul(&Operand::plain(m.clone()), &Operand::plain(m.clone())).unwrap();
        let y = qmat(&mut a, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        a.array_matmul_shift(&FxBlock::plain(y.clone()), &Operand::plain(FxMat::zeros(2, 2))).unwrap();
        assert_eq!(a.acc_block().mat, y);
    }

    #[test]
    fn faddeev_identity_blocks() {
        let mut a = array();
        let i2 = ident(&mut a, 2);
        let (res, rep) = a.faddeev_blocks(&i2, &i2, &i2, &i2).unwrap();
        assert_eq!(res, FxMat::zeros(2, 2));
        assert!(rep.swaps.is_empty());
        assert_eq!(rep.cycles, CycleModel::default().faddeev(2, 2));
    }

    #[test]
    fn faddeev_pivoting_invariance() {
        let mut a = array();
        let blk_a = qmat(&mut a, 2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let blk_b = qmat(&mut a, 2, 2, &[1.0, 0.5, -0.5, 1.0]);
        let blk_c = qmat(&mut a, 2, 2, &[0.25, 1.0, 1.0, 0.5]);
        let blk_d = qmat(&mut a, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (plain, rep) = a.faddeev_blocks(&blk_a, &blk_b, &blk_c, &blk_d).unwrap();
        assert!(rep.swaps.is_empty());
        let mut pa = blk_a.clone();
        pa.swap_rows(0, 1);
        let mut pb = blk_b.clone();
        pb.swap_rows(0, 1);
        let (perm, rep) = a.faddeev_blocks(&pa, &pb, &blk_c, &blk_d).unwrap();
        assert_eq!(rep.swaps, vec![(0, 1)]);
        assert_eq!(perm, plain);
    }

    #[test]
    fn faddeev_singular() {
        let mut a = array();
        let z = FxMat::zeros(2, 2);
        let i2 = ident(&mut a, 2);
        assert_eq!(a.faddeev_blocks(&z, &i2, &i2, &i2).unwrap_err(), ArrayError::Singular { column: 0 });
        assert!(a.is_idle());
    }

    #[test]
    fn divider_busy_stays_in_range() {
        let mut a = array();
        let blk = qmat(&mut a, 2, 2, &[1.0, 0.5, 0.5, 1.0]);
        a.begin_faddeev_blocks(&blk, &blk, &blk, &FxBlock::plain(blk.clone())).unwrap();
        let mut saw_divide = false;
        loop {
            for r in 0..4 {
                let b = a.border(r);
                assert!(b.divider_busy <= 4);
                saw_divide |= b.mode == BorderMode::Divide;
            }
            if let StepOutcome::Done(r) = a.step() {
                r.unwrap();
                break;
            }
        }
        assert!(saw_divide);
    }
}
