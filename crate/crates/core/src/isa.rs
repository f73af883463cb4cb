//! Instruction set, assembler, disassembler and binary images.
//!
//! Assembly is one instruction per line, `#` starts a comment:
//!
//! ```text
//! mma  hermA selA addrA negA selB addrB hermB negB part
//! mms  hermA selA addrA negA selB addrB hermB negB part
//! fad  herm sel addr part
//! smm  src sel addr part
//! loop count extent
//! prg  index
//! ```
//!
//! Flags are `0`/`1`, selects and parts are decimal, addresses are hex.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Header word of a binary image (`"FGP0"`).
pub const IMAGE_MAGIC: u32 = 0x4647_5030;
/// Number of addressable slots per memory bank.
pub const ADDR_SLOTS: u8 = 64;
pub const MAX_LOOP_COUNT: u32 = u16::MAX as u32;
pub const MAX_LOOP_EXTENT: u8 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Mma,
    Mms,
    Fad,
    Smm,
    Loop,
    Prg,
}

impl Opcode {
    pub const ALL: [Opcode; 6] = [Opcode::Mma, Opcode::Mms, Opcode::Fad, Opcode::Smm, Opcode::Loop, Opcode::Prg];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mma => "mma",
            Opcode::Mms => "mms",
            Opcode::Fad => "fad",
            Opcode::Smm => "smm",
            Opcode::Loop => "loop",
            Opcode::Prg => "prg",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.mnemonic() == s)
    }

    /// Number of operand fields in the textual form.
    pub fn arity(self) -> usize {
        match self {
            Opcode::Mma | Opcode::Mms => 9,
            Opcode::Fad | Opcode::Smm => 4,
            Opcode::Loop => 2,
            Opcode::Prg => 1,
        }
    }

    fn code(self) -> u32 {
        self as u32
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Operand source chosen by the Select unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Select {
    Zero,
    Msg,
    Identity,
    StateMat,
    /// Message slot `addr + loop iteration`.
    MsgIndexed,
    /// State-matrix slot `addr + loop iteration`.
    StateMatIndexed,
}

impl Select {
    pub const ALL: [Select; 6] =
        [Select::Zero, Select::Msg, Select::Identity, Select::StateMat, Select::MsgIndexed, Select::StateMatIndexed];

    pub fn code(self) -> u8 {
        match self {
            Select::Zero => 0,
            Select::Msg => 1,
            Select::Identity => 2,
            Select::StateMat => 3,
            Select::MsgIndexed => 4,
            Select::StateMatIndexed => 5,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|s| u32::from(s.code()) == c)
    }

    /// Whether the select reads or writes a memory slot.
    pub fn is_memory(self) -> bool {
        !matches!(self, Select::Zero | Select::Identity)
    }

    pub fn is_indexed(self) -> bool {
        matches!(self, Select::MsgIndexed | Select::StateMatIndexed)
    }

    pub fn is_state_bank(self) -> bool {
        matches!(self, Select::StateMat | Select::StateMatIndexed)
    }
}

/// Which part of a message block the Mask unit passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Part {
    /// Matrix part only.
    #[default]
    Cov,
    /// Matrix part with the mean column appended.
    Full,
    /// As `Full` with the mean column negated.
    FullNegMean,
    /// Mean column only.
    Mean,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Cov, Part::Full, Part::FullNegMean, Part::Mean];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

/// One operand reference with its Transpose-unit flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperandRef {
    pub sel: Select,
    pub addr: u8,
    pub herm: bool,
    pub neg: bool,
}

impl OperandRef {
    pub fn new(sel: Select, addr: u8) -> Self {
        Self { sel, addr, herm: false, neg: false }
    }

    pub fn herm(mut self) -> Self {
        self.herm = true;
        self
    }

    pub fn negated(mut self) -> Self {
        self.neg = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// StateRegs <- a·b. `part` masks `b`.
    Mma { a: OperandRef, b: OperandRef, part: Part },
    /// acc <- a + StateRegs·b. `part` masks `a`, the streamed operand.
    Mms { a: OperandRef, b: OperandRef, part: Part },
    /// StateRegs <- d - c·a^-1·b on the resident blocks with `d` streamed.
    Fad { d: OperandRef, part: Part },
    /// Stores the StateRegs (`from_acc` false) or accumulators into a slot.
    Smm { from_acc: bool, sel: Select, addr: u8, part: Part },
    /// Repeats the next `extent` instructions `count` times; `count` 0 takes
    /// the section count given at program start.
    Loop { count: u16, extent: u8 },
    /// Marks the start of program `index`.
    Prg { index: u8 },
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Mma { .. } => Opcode::Mma,
            Instruction::Mms { .. } => Opcode::Mms,
            Instruction::Fad { .. } => Opcode::Fad,
            Instruction::Smm { .. } => Opcode::Smm,
            Instruction::Loop { .. } => Opcode::Loop,
            Instruction::Prg { .. } => Opcode::Prg,
        }
    }

    /// Checks field ranges that the type system does not.
    pub fn validate(&self) -> Result<(), String> {
        let addr_ok = |a: u8| {
            if a < ADDR_SLOTS {
                Ok(())
            } else {
                Err(format!("address {a:#x} outside 0..{ADDR_SLOTS:#x}"))
            }
        };
        match *self {
            Instruction::Mma { a, b, .. } | Instruction::Mms { a, b, .. } => {
                addr_ok(a.addr)?;
                addr_ok(b.addr)
            }
            Instruction::Fad { d, .. } => {
                if d.neg {
                    return Err("fad has no negation flag".into());
                }
                addr_ok(d.addr)
            }
            Instruction::Smm { sel, addr, .. } => {
                if !sel.is_memory() {
                    return Err(format!("smm cannot store to select {}", sel.code()));
                }
                addr_ok(addr)
            }
            Instruction::Loop { extent, .. } => {
                if extent == 0 || extent > MAX_LOOP_EXTENT {
                    Err(format!("loop extent {extent} outside 1..={MAX_LOOP_EXTENT}"))
                } else {
                    Ok(())
                }
            }
            Instruction::Prg { .. } => Ok(()),
        }
    }

    /// Encodes a valid instruction.
    ///
    /// Layout: `[31:28]` opcode, `[27:26]` part, `[25:23]` select A,
    /// `[22:17]` address A, `[16]` herm A / flag, `[15]` neg A, `[14:12]`
    /// select B, `[11:6]` address B, `[5]` herm B, `[4]` neg B, `[3:0]` zero.
    /// `loop` holds the count in `[15:0]` and the extent in `[21:16]`, `prg`
    /// the index in `[7:0]`.
    pub fn encode(&self) -> u32 {
        debug_assert!(self.validate().is_ok(), "{self:?}");
        let op = self.opcode().code() << 28;
        let a_fields = |r: &OperandRef| {
            (u32::from(r.sel.code()) << 23) | (u32::from(r.addr) << 17) | (u32::from(r.herm) << 16) | (u32::from(r.neg) << 15)
        };
        let b_fields = |r: &OperandRef| {
            (u32::from(r.sel.code()) << 12) | (u32::from(r.addr) << 6) | (u32::from(r.herm) << 5) | (u32::from(r.neg) << 4)
        };
        match self {
            Instruction::Mma { a, b, part } | Instruction::Mms { a, b, part } => {
                op | (u32::from(part.code()) << 26) | a_fields(a) | b_fields(b)
            }
            Instruction::Fad { d, part } => op | (u32::from(part.code()) << 26) | a_fields(d),
            Instruction::Smm { from_acc, sel, addr, part } => {
                op | (u32::from(part.code()) << 26)
                    | a_fields(&OperandRef { sel: *sel, addr: *addr, herm: *from_acc, neg: false })
            }
            Instruction::Loop { count, extent } => op | (u32::from(*extent) << 16) | u32::from(*count),
            Instruction::Prg { index } => op | u32::from(*index),
        }
    }

    /// Decodes one word; every bit outside the defined fields must be zero.
    pub fn decode(word: u32) -> Result<Self, String> {
        let bits = |hi: u32, lo: u32| (word >> lo) & ((1 << (hi - lo + 1)) - 1);
        let op = bits(31, 28);
        let sel = |c: u32| Select::from_code(c).ok_or_else(|| format!("invalid select code {c}"));
        let part = || Part::from_code(bits(27, 26)).expect("2-bit part");
        let opa = || -> Result<OperandRef, String> {
            Ok(OperandRef { sel: sel(bits(25, 23))?, addr: bits(22, 17) as u8, herm: bits(16, 16) == 1, neg: bits(15, 15) == 1 })
        };
        let opb = || -> Result<OperandRef, String> {
            Ok(OperandRef { sel: sel(bits(14, 12))?, addr: bits(11, 6) as u8, herm: bits(5, 5) == 1, neg: bits(4, 4) == 1 })
        };
        let need_zero = |mask: u32| {
            if word & mask != 0 {
                Err(format!("reserved bits set in {word:#010x}"))
            } else {
                Ok(())
            }
        };
        let inst = match op {
            0 | 1 => {
                need_zero(0xf)?;
                let (a, b, part) = (opa()?, opb()?, part());
                if op == 0 {
                    Instruction::Mma { a, b, part }
                } else {
                    Instruction::Mms { a, b, part }
                }
            }
            2 => {
                need_zero(0x7fff)?;
                Instruction::Fad { d: opa()?, part: part() }
            }
            3 => {
                need_zero(0x7fff)?;
                let a = opa()?;
                Instruction::Smm { from_acc: a.herm, sel: a.sel, addr: a.addr, part: part() }
            }
            4 => {
                need_zero(0x0fc0_0000)?;
                Instruction::Loop { count: bits(15, 0) as u16, extent: bits(21, 16) as u8 }
            }
            5 => {
                need_zero(0x0fff_ff00)?;
                Instruction::Prg { index: bits(7, 0) as u8 }
            }
            _ => return Err(format!("unknown opcode {op}")),
        };
        inst.validate()?;
        Ok(inst)
    }
}

fn fmt_a(r: &OperandRef) -> String {
    format!("{} {} {:x} {}", u8::from(r.herm), r.sel.code(), r.addr, u8::from(r.neg))
}

impl fmt::Display for Instruction {
    /// Canonical text: lowercase, single spaces, hex addresses.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.opcode();
        match self {
            Instruction::Mma { a, b, part } | Instruction::Mms { a, b, part } => write!(
                f,
                "{op} {} {} {:x} {} {} {}",
                fmt_a(a),
                b.sel.code(),
                b.addr,
                u8::from(b.herm),
                u8::from(b.neg),
                part.code()
            ),
            Instruction::Fad { d, part } => {
                write!(f, "{op} {} {} {:x} {}", u8::from(d.herm), d.sel.code(), d.addr, part.code())
            }
            Instruction::Smm { from_acc, sel, addr, part } => {
                write!(f, "{op} {} {} {:x} {}", u8::from(*from_acc), sel.code(), addr, part.code())
            }
            Instruction::Loop { count, extent } => write!(f, "{op} {count} {extent}"),
            Instruction::Prg { index } => write!(f, "{op} {index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown opcode {name:?}")]
    UnknownOpcode { line: usize, col: usize, name: String },
    #[error("{line}:{col}: address {value:#x} out of range (max {max:#x})")]
    AddressRange { line: usize, col: usize, value: u64, max: u8 },
    #[error("{line}:{col}: duplicate program index {index}")]
    DuplicatePrg { line: usize, col: usize, index: u8 },
    #[error("word {offset}: {msg}")]
    Decode { offset: usize, msg: String },
    #[error("image: {0}")]
    Image(String),
}

/// A decodable program image plus its program table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    words: Vec<u32>,
    program_table: BTreeMap<u8, usize>,
}

impl ProgramImage {
    /// Validates every word and builds the program table.
    pub fn from_words(words: Vec<u32>) -> Result<Self, IsaError> {
        let mut program_table = BTreeMap::new();
        for (offset, &w) in words.iter().enumerate() {
            let inst = Instruction::decode(w).map_err(|msg| IsaError::Decode { offset, msg })?;
            if let Instruction::Prg { index } = inst {
                if program_table.insert(index, offset).is_some() {
                    return Err(IsaError::Decode { offset, msg: format!("duplicate program index {index}") });
                }
            }
        }
        Ok(Self { words, program_table })
    }

    pub fn from_instructions(insts: &[Instruction]) -> Result<Self, IsaError> {
        Self::from_words(insts.iter().map(Instruction::encode).collect())
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Program index to the offset of its `prg` word.
    pub fn program_table(&self) -> &BTreeMap<u8, usize> {
        &self.program_table
    }

    pub fn instructions(&self) -> Vec<Instruction> {
        self.words.iter().map(|&w| Instruction::decode(w).expect("validated on construction")).collect()
    }

    /// Little-endian: magic, word count, words.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.words.len());
        out.extend_from_slice(&IMAGE_MAGIC.to_le_bytes());
        out.extend_from_slice(&(self.words.len() as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IsaError> {
        if bytes.len() < 8 || !bytes.len().is_multiple_of(4) {
            return Err(IsaError::Image(format!("length {} is not a whole image", bytes.len())));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        if word(0) != IMAGE_MAGIC {
            return Err(IsaError::Image(format!("bad magic {:#010x}", word(0))));
        }
        let n = word(1) as usize;
        if bytes.len() != 8 + 4 * n {
            return Err(IsaError::Image(format!("header says {n} words, file holds {}", bytes.len() / 4 - 2)));
        }
        Self::from_words((0..n).map(|i| word(i + 2)).collect())
    }
}

struct Field<'a> {
    text: &'a str,
    col: usize,
}

fn fields(line: &str) -> Vec<Field<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Field { text: &code[s..i], col: s + 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Field { text: &code[s..], col: s + 1 });
    }
    out
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn syntax(&self, col: usize, msg: impl Into<String>) -> IsaError {
        IsaError::Syntax { line: self.line, col, msg: msg.into() }
    }

    fn flag(&self, f: &Field) -> Result<bool, IsaError> {
        match f.text {
            "0" => Ok(false),
            "1" => Ok(true),
            t => Err(self.syntax(f.col, format!("expected flag 0 or 1, got {t:?}"))),
        }
    }

    fn select(&self, f: &Field) -> Result<Select, IsaError> {
        f.text
            .parse::<u32>()
            .ok()
            .and_then(Select::from_code)
            .ok_or_else(|| self.syntax(f.col, format!("invalid select {:?}", f.text)))
    }

    fn part(&self, f: &Field) -> Result<Part, IsaError> {
        f.text
            .parse::<u32>()
            .ok()
            .and_then(Part::from_code)
            .ok_or_else(|| self.syntax(f.col, format!("invalid part {:?}", f.text)))
    }

    fn addr(&self, f: &Field) -> Result<u8, IsaError> {
        let t = f.text.strip_prefix("0x").unwrap_or(f.text);
        let v = u64::from_str_radix(t, 16).map_err(|_| self.syntax(f.col, format!("bad hex address {:?}", f.text)))?;
        if v >= u64::from(ADDR_SLOTS) {
            return Err(IsaError::AddressRange { line: self.line, col: f.col, value: v, max: ADDR_SLOTS - 1 });
        }
        Ok(v as u8)
    }

    fn number(&self, f: &Field, max: u64, what: &str) -> Result<u64, IsaError> {
        let v: u64 = f.text.parse().map_err(|_| self.syntax(f.col, format!("bad {what} {:?}", f.text)))?;
        if v > max {
            return Err(self.syntax(f.col, format!("{what} {v} exceeds {max}")));
        }
        Ok(v)
    }
}

/// Parses one line; `Ok(None)` for blank or comment-only lines.
pub fn parse_line(line_no: usize, line: &str) -> Result<Option<Instruction>, IsaError> {
    let fs = fields(line);
    let Some(head) = fs.first() else {
        return Ok(None);
    };
    let cx = LineCtx { line: line_no };
    let op = Opcode::from_mnemonic(&head.text.to_ascii_lowercase()).ok_or_else(|| IsaError::UnknownOpcode {
        line: line_no,
        col: head.col,
        name: head.text.to_string(),
    })?;
    let args = &fs[1..];
    if args.len() != op.arity() {
        let col = args.get(op.arity()).map_or(line.trim_end().len() + 1, |f| f.col);
        return Err(cx.syntax(col, format!("{op} takes {} fields, got {}", op.arity(), args.len())));
    }
    let inst = match op {
        Opcode::Mma | Opcode::Mms => {
            let a = OperandRef {
                herm: cx.flag(&args[0])?,
                sel: cx.select(&args[1])?,
                addr: cx.addr(&args[2])?,
                neg: cx.flag(&args[3])?,
            };
            let b = OperandRef {
                sel: cx.select(&args[4])?,
                addr: cx.addr(&args[5])?,
                herm: cx.flag(&args[6])?,
                neg: cx.flag(&args[7])?,
            };
            let part = cx.part(&args[8])?;
            if op == Opcode::Mma {
                Instruction::Mma { a, b, part }
            } else {
                Instruction::Mms { a, b, part }
            }
        }
        Opcode::Fad => Instruction::Fad {
            d: OperandRef { herm: cx.flag(&args[0])?, sel: cx.select(&args[1])?, addr: cx.addr(&args[2])?, neg: false },
            part: cx.part(&args[3])?,
        },
        Opcode::Smm => {
            let sel = cx.select(&args[1])?;
            if !sel.is_memory() {
                return Err(cx.syntax(args[1].col, format!("smm needs a memory select, got {}", sel.code())));
            }
            Instruction::Smm { from_acc: cx.flag(&args[0])?, sel, addr: cx.addr(&args[2])?, part: cx.part(&args[3])? }
        }
        Opcode::Loop => {
            let count = cx.number(&args[0], MAX_LOOP_COUNT.into(), "loop count")? as u16;
            let extent = cx.number(&args[1], MAX_LOOP_EXTENT.into(), "loop extent")? as u8;
            if extent == 0 {
                return Err(cx.syntax(args[1].col, "loop extent must be at least 1"));
            }
            Instruction::Loop { count, extent }
        }
        Opcode::Prg => Instruction::Prg { index: cx.number(&args[0], 255, "program index")? as u8 },
    };
    Ok(Some(inst))
}

/// Assembles source text. No image is produced if any line is malformed.
pub fn assemble(source: &str) -> Result<ProgramImage, IsaError> {
    let mut words = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in source.lines().enumerate() {
        let Some(inst) = parse_line(i + 1, line)? else {
            continue;
        };
        if let Instruction::Prg { index } = inst {
            if seen.insert(index, ()).is_some() {
                let col = fields(line).get(1).map_or(1, |f| f.col);
                return Err(IsaError::DuplicatePrg { line: i + 1, col, index });
            }
        }
        words.push(inst.encode());
    }
    ProgramImage::from_words(words)
}

/// Canonical assembly text, one instruction per line.
pub fn disassemble(img: &ProgramImage) -> String {
    img.instructions().iter().map(|i| format!("{i}\n")).collect()
}

/// Disassembles raw words, reporting the first undecodable offset.
pub fn disassemble_words(words: &[u32]) -> Result<String, IsaError> {
    Ok(disassemble(&ProgramImage::from_words(words.to_vec())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prg_only() {
        let img = assemble("prg 1").unwrap();
        assert_eq!(img.len(), 1);
        assert_eq!(img.program_table().get(&1), Some(&0));
        assert_eq!(disassemble(&img), "prg 1\n");
    }

    #[test]
    fn diagnostics_have_locations() {
        match assemble("prg 1\nmmx 1").unwrap_err() {
            IsaError::UnknownOpcode { line, col, .. } => assert_eq!((line, col), (2, 1)),
            e => panic!("{e}"),
        }
        match assemble("  fad 0 1 40 1").unwrap_err() {
            IsaError::AddressRange { line, col, value, .. } => assert_eq!((line, col, value), (1, 11, 0x40)),
            e => panic!("{e}"),
        }
        match assemble("prg 1\nprg 1").unwrap_err() {
            IsaError::DuplicatePrg { line, index, .. } => assert_eq!((line, index), (2, 1)),
            e => panic!("{e}"),
        }
        assert!(matches!(assemble("smm 0 0 1 0"), Err(IsaError::Syntax { col: 7, .. })));
        assert!(matches!(assemble("loop 1 0"), Err(IsaError::Syntax { .. })));
        assert!(matches!(assemble("fad 0 1 1"), Err(IsaError::Syntax { .. })));
    }

    #[test]
    fn every_field_reaches_its_bits() {
        let base = "mma 0 0 0 0 0 0 0 0 0";
        let w0 = assemble(base).unwrap().words()[0];
        let cases = [
            ("mma 1 0 0 0 0 0 0 0 0", 1 << 16),
            ("mma 0 1 0 0 0 0 0 0 0", 1 << 23),
            ("mma 0 0 1 0 0 0 0 0 0", 1 << 17),
            ("mma 0 0 0 1 0 0 0 0 0", 1 << 15),
            ("mma 0 0 0 0 1 0 0 0 0", 1 << 12),
            ("mma 0 0 0 0 0 1 0 0 0", 1 << 6),
            ("mma 0 0 0 0 0 0 1 0 0", 1 << 5),
            ("mma 0 0 0 0 0 0 0 1 0", 1 << 4),
            ("mma 0 0 0 0 0 0 0 0 1", 1 << 26),
        ];
        for (src, bit) in cases {
            assert_eq!(assemble(src).unwrap().words()[0] ^ w0, bit, "{src}");
        }
        assert_eq!(assemble("loop 3 7").unwrap().words()[0], (4 << 28) | (7 << 16) | 3);
        assert_eq!(assemble("prg 9").unwrap().words()[0], (5 << 28) | 9);
        assert_eq!(assemble("smm 1 1 d 1").unwrap().words()[0], (3 << 28) | (1 << 26) | (1 << 23) | (0xd << 17) | (1 << 16));
    }

    #[test]
    fn image_bytes_roundtrip() {
        let img = assemble("prg 1\nloop 0 1\nsmm 0 1 3 1\n").unwrap();
        let bytes = img.to_bytes();
        assert_eq!(&bytes[..4], &IMAGE_MAGIC.to_le_bytes());
        assert_eq!(ProgramImage::from_bytes(&bytes).unwrap(), img);
        assert!(ProgramImage::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn decode_rejects_reserved_bits() {
        let w = Instruction::Prg { index: 1 }.encode();
        assert!(Instruction::decode(w | 0x100).is_err());
        assert!(Instruction::decode(0xf000_0000).is_err());
        assert!(matches!(ProgramImage::from_words(vec![w, 0x6000_0000]), Err(IsaError::Decode { offset: 1, .. })));
    }
}
