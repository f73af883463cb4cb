//! The processor model: program memory, message and state-matrix memories,
//! operand routing and the instruction sequencer.
//!
//! [`Machine`] is generic over its [`Datapath`]. [`FixedMachine`] runs on the
//! cycle-stepped fixed-point array; [`ReferenceMachine`] executes the same
//! instruction semantics in double precision and serves as the floating
//! oracle for whole programs.

mod protocol;
mod reference;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::fxp::{FixedComplex, FxFormat};
use crate::gmp::{GaussianMessage, GmpError, Param};
use crate::isa::{Instruction, IsaError, Opcode, OperandRef, Part, ProgramImage, Select, ADDR_SLOTS};
use crate::linalg::{Block, CMat, Mat, C64};
use crate::systolic::{ArrayError, ArrayState, CycleModel, FxBlock, Operand, StepOutcome};

pub use protocol::{format_block_dump, parse_block_dump, read_image, Command, CommandPort, Payload, Reply};
pub use reference::FloatDatapath;

/// Fixed-point machine on the systolic array.
pub type FixedMachine = Machine<ArrayDatapath>;
/// Double-precision machine with identical instruction semantics.
pub type ReferenceMachine = Machine<FloatDatapath>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub array_size: usize,
    pub format: FxFormat,
    pub model: CycleModel,
    /// Fetch and decode cycles charged to every executed instruction.
    pub overhead_cycles: u64,
    pub pm_words: usize,
    pub msg_mem_bits: u64,
    pub amat_mem_bits: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            array_size: 4,
            format: FxFormat::default(),
            model: CycleModel::default(),
            overhead_cycles: 2,
            pm_words: 256,
            msg_mem_bits: 48 * 1024,
            amat_mem_bits: 16 * 1024,
        }
    }
}

impl MachineConfig {
    pub fn with_array_size(mut self, n: usize) -> Self {
        self.array_size = n;
        self
    }

    pub fn with_format(mut self, f: FxFormat) -> Self {
        self.format = f;
        self
    }

    /// Message slots: each holds an `N x (N+1)` block.
    pub fn msg_slots(&self) -> usize {
        let slot = (self.array_size * (self.array_size + 1)) as u64 * self.format.complex_bits();
        ((self.msg_mem_bits / slot) as usize).min(ADDR_SLOTS as usize)
    }

    /// State-matrix slots: each holds an `N x N` matrix.
    pub fn amat_slots(&self) -> usize {
        let slot = (self.array_size * self.array_size) as u64 * self.format.complex_bits();
        ((self.amat_mem_bits / slot) as usize).min(ADDR_SLOTS as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bank {
    Msg,
    StateMat,
}

impl fmt::Display for Bank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bank::Msg => "msg",
            Bank::StateMat => "a",
        })
    }
}

impl FromStr for Bank {
    type Err = MachineError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "msg" | "m" => Ok(Bank::Msg),
            "a" | "amat" | "state" => Ok(Bank::StateMat),
            _ => Err(MachineError::Protocol(format!("unknown bank {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Fsm {
    #[default]
    Idle,
    Fetch,
    Decode,
    Execute,
    Reply,
}

impl fmt::Display for Fsm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fsm::Idle => "idle",
            Fsm::Fetch => "fetch",
            Fsm::Decode => "decode",
            Fsm::Execute => "execute",
            Fsm::Reply => "reply",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("machine busy")]
    Busy,
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("unknown program {0}")]
    UnknownProgram(u8),
    #[error("address fault: {bank} slot {addr:#x}")]
    AddressFault { bank: Bank, addr: usize },
    #[error("operand shape: {0}")]
    Shape(String),
    #[error("pc {pc} `{inst}`: {source}")]
    AtPc {
        pc: usize,
        inst: String,
        #[source]
        source: Box<MachineError>,
    },
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(String),
}

impl MachineError {
    /// Status code used in `ERR <code> <detail>` replies.
    pub fn code(&self) -> &'static str {
        match self {
            MachineError::Busy => "BUSY",
            MachineError::Capacity(_) => "CAPACITY",
            MachineError::UnknownProgram(_) => "UNKNOWN_PROGRAM",
            MachineError::AddressFault { .. } => "ADDRESS_FAULT",
            MachineError::Shape(_) => "SHAPE",
            MachineError::AtPc { source, .. } => source.code(),
            MachineError::Array(ArrayError::Singular { .. }) => "SINGULAR",
            MachineError::Array(_) => "ARRAY",
            MachineError::Isa(_) => "ISA",
            MachineError::Protocol(_) => "PROTOCOL",
            MachineError::Io(_) => "IO",
        }
    }

    /// Program counter of a runtime fault, if any.
    pub fn pc(&self) -> Option<usize> {
        match self {
            MachineError::AtPc { pc, .. } => Some(*pc),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, MachineError>;

/// The arithmetic behind the instruction set.
pub trait Datapath {
    type E: Copy + Default + PartialEq + fmt::Debug;

    fn size(&self) -> usize;
    fn one(&mut self) -> Self::E;
    fn neg(&mut self, e: Self::E) -> Self::E;
    fn conj(&mut self, e: Self::E) -> Self::E;
    fn quantize(&mut self, z: C64) -> Self::E;
    fn to_c64(&self, e: Self::E) -> C64;
    /// StateRegs <- a·b; returns cycles.
    fn mma(&mut self, a: Mat<Self::E>, b: Mat<Self::E>, aug: bool) -> std::result::Result<u64, ArrayError>;
    /// acc <- y + StateRegs_lead·p; returns cycles.
    fn mms(&mut self, y: Block<Self::E>, p: Mat<Self::E>) -> std::result::Result<u64, ArrayError>;
    /// StateRegs <- d - c·a^-1·b on the resident blocks; returns cycles.
    fn fad(&mut self, d: Block<Self::E>) -> std::result::Result<u64, ArrayError>;
    fn state(&self) -> Block<Self::E>;
    fn acc(&self) -> Block<Self::E>;
    /// Returns and clears the sticky overflow indication.
    fn take_overflow(&mut self) -> bool {
        false
    }
}

/// The fixed-point array, stepped one cycle at a time.
#[derive(Debug, Clone)]
pub struct ArrayDatapath {
    array: ArrayState,
}

impl ArrayDatapath {
    pub fn new(config: &MachineConfig) -> Result<Self> {
        Ok(Self { array: ArrayState::new(config.array_size, config.format, config.model)? })
    }

    pub fn array(&self) -> &ArrayState {
        &self.array
    }

    pub fn array_mut(&mut self) -> &mut ArrayState {
        &mut self.array
    }

    /// Steps the issued op to completion, counting cycles.
    fn drive(&mut self, expected: u64) -> std::result::Result<u64, ArrayError> {
        let mut cycles = 0;
        loop {
            cycles += 1;
            match self.array.step() {
                StepOutcome::Busy => {}
                StepOutcome::Done(r) => {
                    r?;
                    debug_assert_eq!(cycles, expected);
                    return Ok(cycles);
                }
                StepOutcome::Idle => unreachable!("op in flight"),
            }
        }
    }
}

impl Datapath for ArrayDatapath {
    type E = FixedComplex;

    fn size(&self) -> usize {
        self.array.size()
    }

    fn one(&mut self) -> FixedComplex {
        self.array.unit_mut().quantize(C64::new(1.0, 0.0))
    }

    fn neg(&mut self, e: FixedComplex) -> FixedComplex {
        self.array.unit_mut().neg(e)
    }

    fn conj(&mut self, e: FixedComplex) -> FixedComplex {
        self.array.unit_mut().conj(e)
    }

    fn quantize(&mut self, z: C64) -> FixedComplex {
        self.array.unit_mut().quantize(z)
    }

    fn to_c64(&self, e: FixedComplex) -> C64 {
        self.array.unit().to_c64(e)
    }

    fn mma(&mut self, a: Mat<FixedComplex>, b: Mat<FixedComplex>, aug: bool) -> std::result::Result<u64, ArrayError> {
        let total = self.array.begin_matmul(&Operand::plain(a), &Operand::plain(b), aug)?;
        self.drive(total)
    }

    fn mms(&mut self, y: FxBlock, p: Mat<FixedComplex>) -> std::result::Result<u64, ArrayError> {
        let total = self.array.begin_matmul_shift(&y, &Operand::plain(p))?;
        self.drive(total)
    }

    fn fad(&mut self, d: FxBlock) -> std::result::Result<u64, ArrayError> {
        let total = self.array.begin_faddeev(&d)?;
        self.drive(total)
    }

    fn state(&self) -> FxBlock {
        self.array.state_block()
    }

    fn acc(&self) -> FxBlock {
        self.array.acc_block()
    }

    fn take_overflow(&mut self) -> bool {
        let o = self.array.unit().overflowed();
        self.array.unit_mut().clear_overflow();
        o
    }
}

/// One executed instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrRecord {
    pub pc: usize,
    pub inst: Instruction,
    /// Innermost loop iteration at execution time.
    pub iteration: usize,
    /// Array (or store) cycles, excluding fetch/decode overhead.
    pub work_cycles: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpStats {
    pub count: usize,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecReport {
    pub program: u8,
    pub sections: usize,
    pub total_cycles: u64,
    pub records: Vec<InstrRecord>,
    /// Any fixed-point saturation or wrap during the run.
    pub overflow: bool,
}

impl ExecReport {
    pub fn breakdown(&self) -> BTreeMap<Opcode, OpStats> {
        let mut out: BTreeMap<Opcode, OpStats> = BTreeMap::new();
        for r in &self.records {
            let s = out.entry(r.inst.opcode()).or_default();
            s.count += 1;
            s.cycles += r.cycles;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct LoopFrame {
    start: usize,
    end: usize,
    count: usize,
    iter: usize,
}

#[derive(Debug, Clone)]
pub struct Machine<D: Datapath> {
    config: MachineConfig,
    dp: D,
    pm: Vec<Instruction>,
    program_table: BTreeMap<u8, usize>,
    msg: Vec<Option<Block<D::E>>>,
    amat: Vec<Option<Mat<D::E>>>,
    fsm: Fsm,
    status: String,
    programs_run: u64,
}

impl Machine<ArrayDatapath> {
    pub fn fixed(config: MachineConfig) -> Result<Self> {
        Ok(Self::with_datapath(config, ArrayDatapath::new(&config)?))
    }

    pub fn array(&self) -> &ArrayState {
        self.dp.array()
    }

    pub fn array_mut(&mut self) -> &mut ArrayState {
        self.dp.array_mut()
    }
}

impl Machine<FloatDatapath> {
    pub fn reference(config: MachineConfig) -> Self {
        Self::with_datapath(config, FloatDatapath::new(config.array_size, config.model))
    }
}

impl<D: Datapath> Machine<D> {
    pub fn with_datapath(config: MachineConfig, dp: D) -> Self {
        Self {
            dp,
            pm: Vec::new(),
            program_table: BTreeMap::new(),
            msg: vec![None; config.msg_slots()],
            amat: vec![None; config.amat_slots()],
            fsm: Fsm::Idle,
            status: "OK reset".into(),
            programs_run: 0,
            config,
        }
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn datapath(&self) -> &D {
        &self.dp
    }

    pub fn fsm(&self) -> Fsm {
        self.fsm
    }

    /// Last status message.
    pub fn status(&self) -> &str {
        &self.status
    }

    pub fn program_table(&self) -> &BTreeMap<u8, usize> {
        &self.program_table
    }

    pub fn programs_run(&self) -> u64 {
        self.programs_run
    }

    fn require_idle(&self) -> Result<()> {
        if self.fsm == Fsm::Idle {
            Ok(())
        } else {
            Err(MachineError::Busy)
        }
    }

    /// Replaces the program memory with `img`.
    pub fn load_program(&mut self, img: &ProgramImage) -> Result<usize> {
        self.require_idle()?;
        if img.len() > self.config.pm_words {
            let e = MachineError::Capacity(format!("image has {} words, PM holds {}", img.len(), self.config.pm_words));
            self.status = format!("ERR {} {e}", e.code());
            return Err(e);
        }
        self.pm = img.instructions();
        self.program_table = img.program_table().clone();
        self.status = format!("OK loaded {} words", img.len());
        Ok(img.len())
    }

    fn slots(&self, bank: Bank) -> usize {
        match bank {
            Bank::Msg => self.msg.len(),
            Bank::StateMat => self.amat.len(),
        }
    }

    fn check_addr(&self, bank: Bank, addr: usize) -> Result<()> {
        if addr < self.slots(bank) {
            Ok(())
        } else {
            Err(MachineError::AddressFault { bank, addr })
        }
    }

    fn zero_block(&self, bank: Bank) -> Block<D::E> {
        let n = self.config.array_size;
        match bank {
            Bank::Msg => Block::new(Mat::zeros(n, n + 1), true),
            Bank::StateMat => Block::plain(Mat::zeros(n, n)),
        }
    }

    fn check_fits(&self, bank: Bank, block: &Block<D::E>) -> Result<()> {
        let n = self.config.array_size;
        let max_cols = match bank {
            Bank::Msg => n + 1,
            Bank::StateMat => n,
        };
        if block.rows() > n || block.mat.cols() > max_cols {
            return Err(MachineError::Capacity(format!(
                "{}x{} block does not fit a {bank} slot ({n}x{max_cols})",
                block.rows(),
                block.mat.cols()
            )));
        }
        Ok(())
    }

    /// Data-in port. State-matrix slots ignore the `aug` marker.
    pub fn write_memory(&mut self, bank: Bank, addr: usize, block: Block<D::E>) -> Result<()> {
        self.require_idle()?;
        self.check_addr(bank, addr)?;
        self.check_fits(bank, &block)?;
        match bank {
            Bank::Msg => self.msg[addr] = Some(block),
            Bank::StateMat => self.amat[addr] = Some(block.mat),
        }
        self.status = format!("OK wrote {bank} {addr:#x}");
        Ok(())
    }

    /// Data-out port. Never-written slots read as zeros of full slot size.
    pub fn read_memory(&self, bank: Bank, addr: usize) -> Result<Block<D::E>> {
        self.check_addr(bank, addr)?;
        Ok(match bank {
            Bank::Msg => self.msg[addr].clone(),
            Bank::StateMat => self.amat[addr].clone().map(Block::plain),
        }
        .unwrap_or_else(|| self.zero_block(bank)))
    }

    /// Writes a message as its augmented block `[V | m]`.
    pub fn write_message(&mut self, addr: usize, msg: &GaussianMessage) -> Result<()> {
        let aug = msg.augmented();
        let mat = Mat::from_fn(aug.rows(), aug.cols(), |r, c| self.dp.quantize(aug[(r, c)]));
        self.write_memory(Bank::Msg, addr, Block::new(mat, true))
    }

    pub fn write_state_matrix(&mut self, addr: usize, a: &CMat) -> Result<()> {
        let mat = Mat::from_fn(a.rows(), a.cols(), |r, c| self.dp.quantize(a[(r, c)]));
        self.write_memory(Bank::StateMat, addr, Block::plain(mat))
    }

    /// A message slot converted back to floating point.
    pub fn read_message(&self, addr: usize, param: Param) -> Result<GaussianMessage> {
        let block = self.read_memory(Bank::Msg, addr)?;
        if !block.aug {
            return Err(MachineError::Shape(format!("slot {addr:#x} holds no mean column")));
        }
        let m = self.block_to_c64(&block);
        GaussianMessage::from_augmented(&m, param).map_err(|e: GmpError| MachineError::Shape(e.to_string()))
    }

    pub fn block_to_c64(&self, block: &Block<D::E>) -> CMat {
        CMat::from_fn(block.rows(), block.mat.cols(), |r, c| self.dp.to_c64(block.mat[(r, c)]))
    }

    fn program_end(&self, start: usize) -> usize {
        (start..self.pm.len()).find(|&i| matches!(self.pm[i], Instruction::Prg { .. })).unwrap_or(self.pm.len())
    }

    /// Runs program `index`: from the word after its `prg` up to the next
    /// `prg` or the end of the image.
    pub fn start_program(&mut self, index: u8, sections: usize) -> Result<ExecReport> {
        self.require_idle()?;
        let result = self.run(index, sections);
        self.fsm = Fsm::Reply;
        self.status = match &result {
            Ok(rep) => format!("OK cycles={}", rep.total_cycles),
            Err(e) => format!("ERR {} {e}", e.code()),
        };
        self.fsm = Fsm::Idle;
        result
    }

    fn run(&mut self, index: u8, sections: usize) -> Result<ExecReport> {
        let &prg_at = self.program_table.get(&index).ok_or(MachineError::UnknownProgram(index))?;
        self.dp.take_overflow();
        let start = prg_at + 1;
        let end = self.program_end(start);
        let mut pc = start;
        let mut stack: Vec<LoopFrame> = Vec::new();
        let mut records = Vec::new();
        let mut total = 0u64;
        while pc < end {
            self.fsm = Fsm::Fetch;
            let inst = self.pm[pc];
            self.fsm = Fsm::Decode;
            let iteration = stack.last().map_or(0, |f| f.iter);
            self.fsm = Fsm::Execute;
            let at = |e: MachineError| MachineError::AtPc { pc, inst: inst.to_string(), source: Box::new(e) };
            let mut next = pc + 1;
            let work = match inst {
                Instruction::Loop { count, extent } => {
                    let count = if count == 0 { sections } else { usize::from(count) };
                    let body_end = pc + 1 + usize::from(extent);
                    if body_end > end {
                        return Err(at(MachineError::Shape(format!("loop body ends at {body_end}, program ends at {end}"))));
                    }
                    if count == 0 {
                        next = body_end;
                    } else {
                        stack.push(LoopFrame { start: pc + 1, end: body_end, count, iter: 0 });
                    }
                    0
                }
                _ => self.execute_instruction(&inst, iteration).map_err(at)?,
            };
            let cycles = work + self.config.overhead_cycles;
            total += cycles;
            records.push(InstrRecord { pc, inst, iteration, work_cycles: work, cycles });
            pc = next;
            while let Some(top) = stack.last_mut() {
                if pc != top.end {
                    break;
                }
                top.iter += 1;
                if top.iter < top.count {
                    pc = top.start;
                    break;
                }
                stack.pop();
            }
        }
        self.programs_run += 1;
        Ok(ExecReport { program: index, sections, total_cycles: total, records, overflow: self.dp.take_overflow() })
    }

    fn effective(&self, sel: Select, addr: u8, iteration: usize) -> Result<(Bank, usize)> {
        let bank = if sel.is_state_bank() { Bank::StateMat } else { Bank::Msg };
        let addr = usize::from(addr) + if sel.is_indexed() { iteration } else { 0 };
        self.check_addr(bank, addr)?;
        Ok((bank, addr))
    }

    /// Memory operand after the Mask unit; `None` for synthesized selects.
    fn fetch(&mut self, sel: Select, addr: u8, part: Part, iteration: usize) -> Result<Option<Block<D::E>>> {
        if !sel.is_memory() {
            return Ok(None);
        }
        let (bank, addr) = self.effective(sel, addr, iteration)?;
        let block = self.read_memory(bank, addr)?;
        self.mask(block, part).map(Some)
    }

    fn mask(&mut self, block: Block<D::E>, part: Part) -> Result<Block<D::E>> {
        let no_mean = || MachineError::Shape("part selects a mean column the block does not have".into());
        Ok(match part {
            Part::Cov => Block::plain(block.lead()),
            Part::Full => block,
            Part::FullNegMean => {
                if !block.aug {
                    return Err(no_mean());
                }
                let mut b = block;
                let c = b.mat.cols() - 1;
                for r in 0..b.rows() {
                    b.mat[(r, c)] = self.dp.neg(b.mat[(r, c)]);
                }
                b
            }
            Part::Mean => Block::plain(block.mean().ok_or_else(no_mean)?),
        })
    }

    /// Transpose-unit flags. A transposed block loses its mean marker.
    fn transpose_unit(&mut self, block: Block<D::E>, herm: bool, neg: bool) -> Block<D::E> {
        let mut b = if herm {
            let m = &block.mat;
            let mut t = Mat::zeros(m.cols(), m.rows());
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    t[(c, r)] = self.dp.conj(m[(r, c)]);
                }
            }
            Block::plain(t)
        } else {
            block
        };
        if neg {
            for r in 0..b.rows() {
                for c in 0..b.mat.cols() {
                    b.mat[(r, c)] = self.dp.neg(b.mat[(r, c)]);
                }
            }
        }
        b
    }

    fn synth(&mut self, sel: Select, rows: usize, cols: usize) -> Block<D::E> {
        let one = self.dp.one();
        let mat = Mat::from_fn(rows, cols, |r, c| if sel == Select::Identity && r == c { one } else { D::E::default() });
        Block::plain(mat)
    }

    fn operand(
        &mut self,
        r: &OperandRef,
        part: Part,
        iteration: usize,
        shape: impl FnOnce() -> (usize, usize),
    ) -> Result<Block<D::E>> {
        let block = match self.fetch(r.sel, r.addr, part, iteration)? {
            Some(b) => b,
            None => {
                let (rows, cols) = shape();
                self.synth(r.sel, rows, cols)
            }
        };
        Ok(self.transpose_unit(block, r.herm, r.neg))
    }

    /// Executes one non-`loop` instruction; returns its work cycles.
    pub fn execute_instruction(&mut self, inst: &Instruction, iteration: usize) -> Result<u64> {
        let n = self.config.array_size;
        match *inst {
            Instruction::Mma { a, b, part } => {
                let a_mem = a.sel.is_memory();
                let (ab, bb) = if a_mem {
                    let ab = self.operand(&a, Part::Cov, iteration, || (n, n))?;
                    let k = ab.mat.cols();
                    let bb = self.operand(&b, part, iteration, || (k, k))?;
                    (ab, bb)
                } else {
                    let bb = self.operand(&b, part, iteration, || (n, n))?;
                    let k = bb.rows();
                    let ab = self.operand(&a, Part::Cov, iteration, || (k, k))?;
                    (ab, bb)
                };
                Ok(self.dp.mma(ab.mat, bb.mat, bb.aug)?)
            }
            Instruction::Mms { a, b, part } => {
                let state = self.dp.state();
                let lead = state.lead_cols();
                let pb = self.operand(&b, Part::Cov, iteration, || (lead, lead))?;
                let q = pb.mat.cols();
                let yb = self.operand(&a, part, iteration, || (state.rows(), q))?;
                Ok(self.dp.mms(yb, pb.mat)?)
            }
            Instruction::Fad { d, part } => {
                let (state, acc) = (self.dp.state(), self.dp.acc());
                let rows = state.lead_cols();
                let cols = rows + usize::from(acc.aug);
                let mut db = self.operand(&d, part, iteration, || (rows, cols))?;
                if !d.sel.is_memory() {
                    db.aug = acc.aug;
                }
                Ok(self.dp.fad(db)?)
            }
            Instruction::Smm { from_acc, sel, addr, part } => {
                let src = if from_acc { self.dp.acc() } else { self.dp.state() };
                let block = self.mask(src, part)?;
                let (bank, addr) = self.effective(sel, addr, iteration)?;
                self.check_fits(bank, &block)?;
                let words = (block.rows() * block.mat.cols()) as u64;
                match bank {
                    Bank::Msg => self.msg[addr] = Some(block),
                    Bank::StateMat => self.amat[addr] = Some(block.mat),
                }
                Ok(words)
            }
            Instruction::Loop { .. } => Err(MachineError::Shape("loop outside the sequencer".into())),
            Instruction::Prg { .. } => Ok(0),
        }
    }

    /// Snapshot of every written message slot.
    pub fn message_slots(&self) -> BTreeMap<usize, Block<D::E>> {
        self.msg.iter().enumerate().filter_map(|(i, b)| b.clone().map(|b| (i, b))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    fn machine() -> FixedMachine {
        Machine::fixed(MachineConfig::default()).unwrap()
    }

    #[test]
    fn capacity_split() {
        let c = MachineConfig::default();
        assert_eq!(c.msg_slots(), 38);
        assert_eq!(c.amat_slots(), 16);
        let total = c.msg_slots() as u64 * 20 * 64 + c.amat_slots() as u64 * 16 * 64;
        assert!(total <= 64 * 1024);
    }

    #[test]
    fn identity_product_stored() {
        let mut m = machine();
        m.load_program(&assemble("prg 1\nmma 0 2 0 0 2 0 0 0 0\nsmm 0 1 3 0").unwrap()).unwrap();
        let rep = m.start_program(1, 1).unwrap();
        assert_eq!(rep.total_cycles, 25 + 2 + 16 + 2);
        let one = m.dp.one();
        let got = m.read_memory(Bank::Msg, 3).unwrap();
        assert_eq!(got.mat, Mat::from_fn(4, 4, |r, c| if r == c { one } else { FixedComplex::ZERO }));
        assert_eq!(m.fsm(), Fsm::Idle);
    }

    #[test]
    fn memory_write_read_and_faults() {
        let mut m = machine();
        let blk = Block::new(Mat::from_fn(2, 3, |r, c| FixedComplex::new(r as i32, c as i32)), true);
        m.write_memory(Bank::Msg, 0x0c, blk.clone()).unwrap();
        assert_eq!(m.read_memory(Bank::Msg, 0x0c).unwrap(), blk);
        let z = m.read_memory(Bank::Msg, 5).unwrap();
        assert_eq!((z.rows(), z.mat.cols(), z.aug), (4, 5, true));
        assert!(z.mat.iter().all(|v| *v == FixedComplex::ZERO));
        assert_eq!(m.write_memory(Bank::Msg, 38, blk.clone()), Err(MachineError::AddressFault { bank: Bank::Msg, addr: 38 }));
        assert!(matches!(m.write_memory(Bank::StateMat, 0, Block::plain(Mat::zeros(4, 5))), Err(MachineError::Capacity(_))));
    }

    #[test]
    fn pm_capacity_and_reload() {
        let mut m = machine();
        let big: String = std::iter::once("prg 1\n".to_string()).chain((0..300).map(|_| "smm 0 1 0 0\n".to_string())).collect();
        assert!(matches!(m.load_program(&assemble(&big).unwrap()), Err(MachineError::Capacity(_))));
        m.load_program(&assemble("prg 1\nprg 2").unwrap()).unwrap();
        m.load_program(&assemble("prg 3").unwrap()).unwrap();
        assert!(m.program_table().contains_key(&3));
        assert_eq!(m.start_program(1, 1), Err(MachineError::UnknownProgram(1)));
    }

    #[test]
    fn loop_count_zero_uses_sections() {
        let mut m = machine();
        m.load_program(&assemble("prg 1\nloop 0 1\nsmm 0 4 0 0\nprg 2").unwrap()).unwrap();
        let rep = m.start_program(1, 3).unwrap();
        let smm: Vec<_> = rep.records.iter().filter(|r| r.inst.opcode() == Opcode::Smm).map(|r| r.iteration).collect();
        assert_eq!(smm, vec![0, 1, 2]);
        assert_eq!(m.start_program(1, 0).unwrap().records.len(), 1);
    }

    #[test]
    fn singular_fault_reports_pc() {
        let mut m = machine();
        // acc stays zero: mms adds a zero stream to state·0.
        let src = "prg 1\nmma 0 2 0 0 1 0 0 0 1\nmms 0 0 0 0 0 0 0 0 0\nfad 0 1 0 1";
        m.load_program(&assemble(src).unwrap()).unwrap();
        let e = m.start_program(1, 1).unwrap_err();
        assert_eq!(e.code(), "SINGULAR");
        assert_eq!(e.pc(), Some(3));
        assert!(m.status().starts_with("ERR SINGULAR"));
    }
}
