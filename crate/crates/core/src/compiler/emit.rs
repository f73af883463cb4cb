//! Lowering of allocated steps to instructions and assembly text.

use std::fmt::Write as _;

use crate::gmp::{Direction, NodeKind};
use crate::isa::{Instruction, OperandRef, Part, Select};

use super::loops::LoopInfo;

/// A memory reference after allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ref {
    Slot(usize),
    /// Element `index` of an array of `len` slots starting at `base`.
    Elem {
        base: usize,
        index: usize,
        len: usize,
    },
}

impl Ref {
    pub fn addr(&self) -> usize {
        match *self {
            Ref::Slot(s) => s,
            Ref::Elem { base, index, .. } => base + index,
        }
    }

    fn shifted(&self, k: usize) -> Option<Ref> {
        match *self {
            Ref::Slot(_) => Some(*self),
            Ref::Elem { base, index, len } => (index + k < len).then_some(Ref::Elem { base, index: index + k, len }),
        }
    }
}

/// A schedule step with physical references.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LStep {
    pub kind: NodeKind,
    pub inputs: Vec<Ref>,
    pub output: Ref,
    pub state: Option<Ref>,
}

impl LStep {
    /// The step with every array reference advanced by `k` elements.
    pub fn shifted(&self, k: usize) -> Option<LStep> {
        Some(LStep {
            kind: self.kind,
            inputs: self.inputs.iter().map(|r| r.shifted(k)).collect::<Option<_>>()?,
            output: self.output.shifted(k)?,
            state: match self.state {
                Some(r) => Some(r.shifted(k)?),
                None => None,
            },
        })
    }
}

fn mref(r: Ref, in_loop: bool) -> OperandRef {
    let sel = match r {
        Ref::Elem { .. } if in_loop => Select::MsgIndexed,
        _ => Select::Msg,
    };
    OperandRef::new(sel, r.addr() as u8)
}

fn aref(r: Ref, in_loop: bool) -> OperandRef {
    let sel = match r {
        Ref::Elem { .. } if in_loop => Select::StateMatIndexed,
        _ => Select::StateMat,
    };
    OperandRef::new(sel, r.addr() as u8)
}

fn store(from_acc: bool, r: Ref, in_loop: bool) -> Instruction {
    let o = mref(r, in_loop);
    Instruction::Smm { from_acc, sel: o.sel, addr: o.addr, part: Part::Full }
}

/// Instructions computing one node update.
pub fn lower_step(s: &LStep, in_loop: bool) -> Vec<Instruction> {
    let zero = OperandRef::new(Select::Zero, 0);
    let ident = OperandRef::new(Select::Identity, 0);
    let m = |i: usize| mref(s.inputs[i], in_loop);
    let a = || aref(s.state.expect("node has a state matrix"), in_loop);
    match s.kind {
        NodeKind::Adder(_) | NodeKind::Equality => {
            let y_part = if s.kind == NodeKind::Adder(Direction::Backward) { Part::FullNegMean } else { Part::Full };
            vec![
                Instruction::Mma { a: ident, b: m(0), part: Part::Full },
                Instruction::Mms { a: m(1), b: ident, part: y_part },
                store(true, s.output, in_loop),
            ]
        }
        NodeKind::MatrixMult(Direction::Forward) => vec![
            Instruction::Mma { a: a(), b: m(0), part: Part::Full },
            Instruction::Mms { a: zero, b: a().herm(), part: Part::Cov },
            store(true, s.output, in_loop),
        ],
        NodeKind::MatrixMult(Direction::Backward) => vec![
            Instruction::Mma { a: a().herm(), b: m(0), part: Part::Full },
            Instruction::Mms { a: zero, b: a(), part: Part::Cov },
            store(true, s.output, in_loop),
        ],
        NodeKind::CompoundAddObs => vec![
            Instruction::Mma { a: a(), b: m(1), part: Part::Full },
            Instruction::Mms { a: m(0), b: a().herm(), part: Part::Full },
            store(true, s.output, in_loop),
        ],
        NodeKind::CompoundMultEq => vec![
            Instruction::Mma { a: a(), b: m(0), part: Part::Full },
            Instruction::Mms { a: m(1), b: a().herm(), part: Part::FullNegMean },
            Instruction::Fad { d: m(0), part: Part::Full },
            store(false, s.output, in_loop),
        ],
    }
}

/// Emitted program: instructions plus a per-instruction comment.
pub fn emit(program_index: u8, steps: &[LStep], labels: &[String], info: Option<LoopInfo>) -> Vec<(Instruction, String)> {
    let mut out = vec![(Instruction::Prg { index: program_index }, String::new())];
    let body_range = info.map(|l| l.start..l.start + l.period);
    let mut i = 0;
    while i < steps.len() {
        let in_loop = body_range.as_ref().is_some_and(|r| r.contains(&i));
        if let (Some(l), true) = (info, in_loop && Some(i) == body_range.as_ref().map(|r| r.start)) {
            let extent: usize = steps[l.start..l.start + l.period].iter().map(|s| lower_step(s, true).len()).sum();
            out.push((Instruction::Loop { count: l.count as u16, extent: extent as u8 }, format!("{} sections", l.count)));
        }
        for (j, inst) in lower_step(&steps[i], in_loop).into_iter().enumerate() {
            out.push((inst, if j == 0 { labels[i].clone() } else { String::new() }));
        }
        i += 1;
        if let Some(l) = info {
            if i == l.start + l.period {
                i = l.end();
            }
        }
    }
    out
}

/// Assembly text with aligned trailing comments.
pub fn format_asm(header: &[String], lines: &[(Instruction, String)]) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    for (inst, comment) in lines {
        let text = inst.to_string();
        if comment.is_empty() {
            let _ = writeln!(s, "{text}");
        } else {
            let _ = writeln!(s, "{text:<24}# {comment}");
        }
    }
    s
}
