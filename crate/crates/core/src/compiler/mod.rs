//! Graph program to optimized assembly.
//!
//! Pipeline: [`frontend::parse_graph`] → [`build_schedule`] (unrolled,
//! SSA-versioned node updates) → [`optimize_memory`] (identifier remapping)
//! → [`loops::find_loop`] (section folding) → [`emit`].

pub mod emit;
pub mod frontend;
pub mod liveness;
pub mod loops;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::gmp::{Direction, GaussianMessage, Node, NodeKind, Param, StateMatrix};
use crate::isa::{Instruction, IsaError, ProgramImage, MAX_LOOP_EXTENT};
use crate::linalg::CMat;
use crate::machine::{Bank, Datapath, ExecReport, Machine, MachineConfig, MachineError};

pub use emit::{LStep, Ref};
pub use frontend::{parse_graph, Graph, MatDecl, MsgDecl};
pub use liveness::{liveness, optimize_memory, Allocation, LivenessInfo};
pub use loops::LoopInfo;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("line {line}: {msg}")]
    Type { line: usize, msg: String },
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("reference evaluation: {0}")]
    Reference(String),
}

pub type Result<T> = std::result::Result<T, CompileError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    External,
    ExternalElem { index: usize, len: usize },
    Computed { step: usize },
}

/// One SSA value: a message produced once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Value {
    pub name: String,
    pub version: usize,
    pub dim: usize,
    pub form: Param,
    pub origin: Origin,
}

impl Value {
    pub fn label(&self) -> String {
        match self.origin {
            Origin::ExternalElem { index, .. } => format!("{}[{index}]", self.name),
            _ => format!("{}.{}", self.name, self.version),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatRef {
    pub name: String,
    pub index: Option<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl MatRef {
    pub fn label(&self) -> String {
        match self.index {
            Some(i) => format!("{}[{i}]", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub func: String,
    pub kind: NodeKind,
    pub inputs: Vec<usize>,
    pub output: usize,
    pub state: Option<MatRef>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    pub values: Vec<Value>,
    pub steps: Vec<Step>,
    /// `(name, value)` of every declared output.
    pub outputs: Vec<usize>,
    pub msg_decls: Vec<MsgDecl>,
    pub mat_decls: Vec<MatDecl>,
}

struct FnSig {
    kind: NodeKind,
    msgs: usize,
    has_mat: bool,
}

fn signature(func: &str) -> Option<FnSig> {
    let (kind, msgs, has_mat) = match func {
        "add_f" => (NodeKind::Adder(Direction::Forward), 2, false),
        "add_b" => (NodeKind::Adder(Direction::Backward), 2, false),
        "eq" => (NodeKind::Equality, 2, false),
        "mult_f" => (NodeKind::MatrixMult(Direction::Forward), 1, true),
        "mult_b" => (NodeKind::MatrixMult(Direction::Backward), 1, true),
        "mult_eq_f" => (NodeKind::CompoundMultEq, 2, true),
        "add_mult_f" => (NodeKind::CompoundAddObs, 2, true),
        _ => return None,
    };
    Some(FnSig { kind, msgs, has_mat })
}

struct Builder<'g> {
    g: &'g Graph,
    s: Schedule,
    scalars: BTreeMap<String, usize>,
    arrays: BTreeMap<String, Vec<usize>>,
}

impl Builder<'_> {
    fn index(&self, idx: &Option<frontend::Index>, env: &BTreeMap<String, usize>, line: usize) -> Result<Option<usize>> {
        match idx {
            None => Ok(None),
            Some(frontend::Index::Lit(n)) => Ok(Some(*n)),
            Some(frontend::Index::Var(v)) => env
                .get(v)
                .copied()
                .map(Some)
                .ok_or_else(|| CompileError::Type { line, msg: format!("unbound index variable `{v}`") }),
        }
    }

    fn msg_arg(&self, a: &frontend::Arg, env: &BTreeMap<String, usize>, line: usize) -> Result<usize> {
        let idx = self.index(&a.index, env, line)?;
        match (self.arrays.get(&a.name), idx) {
            (Some(elems), Some(i)) => elems.get(i).copied().ok_or_else(|| CompileError::Type {
                line,
                msg: format!("index {i} out of range for `{}` ({} elements)", a.name, elems.len()),
            }),
            (Some(_), None) => Err(CompileError::Type { line, msg: format!("array `{}` needs an index", a.name) }),
            (None, Some(_)) => Err(CompileError::Type { line, msg: format!("`{}` is not an array", a.name) }),
            (None, None) => self
                .scalars
                .get(&a.name)
                .copied()
                .ok_or_else(|| CompileError::Type { line, msg: format!("unknown message `{}`", a.name) }),
        }
    }

    fn mat_arg(&self, a: &frontend::Arg, env: &BTreeMap<String, usize>, line: usize) -> Result<MatRef> {
        let d = self.g.mat(&a.name).ok_or_else(|| CompileError::Type { line, msg: format!("unknown matrix `{}`", a.name) })?;
        let idx = self.index(&a.index, env, line)?;
        match (d.count, idx) {
            (Some(n), Some(i)) if i >= n => {
                Err(CompileError::Type { line, msg: format!("index {i} out of range for `{}`", a.name) })
            }
            (Some(_), None) => Err(CompileError::Type { line, msg: format!("array `{}` needs an index", a.name) }),
            (None, Some(_)) => Err(CompileError::Type { line, msg: format!("`{}` is not an array", a.name) }),
            _ => Ok(MatRef { name: d.name.clone(), index: idx, rows: d.rows, cols: d.cols }),
        }
    }

    fn stmts(&mut self, body: &[frontend::Stmt], env: &mut BTreeMap<String, usize>) -> Result<()> {
        for st in body {
            match st {
                frontend::Stmt::For { var, count, body, line } => {
                    if env.contains_key(var) {
                        return Err(CompileError::Type {
                            line: *line,
                            msg: format!("loop variable `{var}` shadows an outer one"),
                        });
                    }
                    for i in 0..*count {
                        env.insert(var.clone(), i);
                        self.stmts(body, env)?;
                    }
                    env.remove(var);
                }
                frontend::Stmt::Assign { lhs, func, args, line } => self.assign(lhs, func, args, *line, env)?,
            }
        }
        Ok(())
    }

    fn assign(
        &mut self,
        lhs: &str,
        func: &str,
        args: &[frontend::Arg],
        line: usize,
        env: &BTreeMap<String, usize>,
    ) -> Result<()> {
        let terr = |msg: String| CompileError::Type { line, msg };
        let sig = signature(func).ok_or_else(|| terr(format!("unknown node function `{func}`")))?;
        let want = sig.msgs + usize::from(sig.has_mat);
        if args.len() != want {
            return Err(terr(format!("`{func}` takes {want} arguments, got {}", args.len())));
        }
        if self.arrays.contains_key(lhs) || self.g.mat(lhs).is_some() {
            return Err(terr(format!("cannot assign to array or matrix `{lhs}`")));
        }
        let inputs: Vec<usize> = args[..sig.msgs].iter().map(|a| self.msg_arg(a, env, line)).collect::<Result<_>>()?;
        let state = if sig.has_mat { Some(self.mat_arg(&args[sig.msgs], env, line)?) } else { None };
        let v = |i: usize| &self.s.values[inputs[i]];
        let need_form = |i: usize, f: Param| -> Result<()> {
            if v(i).form != f {
                return Err(terr(format!("`{func}` needs {} input, `{}` is {}", f.name(), v(i).label(), v(i).form.name())));
            }
            Ok(())
        };
        let need_dim = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(terr(format!("dimension mismatch: {what} is {got}, expected {want}")));
            }
            Ok(())
        };
        let (dim, form) = match sig.kind {
            NodeKind::Adder(_) => {
                need_form(0, Param::MeanCov)?;
                need_form(1, Param::MeanCov)?;
                need_dim("second operand", v(1).dim, v(0).dim)?;
                (v(0).dim, Param::MeanCov)
            }
            NodeKind::Equality => {
                need_form(0, Param::WeightedMean)?;
                need_form(1, Param::WeightedMean)?;
                need_dim("second operand", v(1).dim, v(0).dim)?;
                (v(0).dim, Param::WeightedMean)
            }
            NodeKind::MatrixMult(Direction::Forward) => {
                let a = state.as_ref().expect("has_mat");
                need_form(0, Param::MeanCov)?;
                need_dim("message", v(0).dim, a.cols)?;
                (a.rows, Param::MeanCov)
            }
            NodeKind::MatrixMult(Direction::Backward) => {
                let a = state.as_ref().expect("has_mat");
                need_form(0, Param::WeightedMean)?;
                need_dim("message", v(0).dim, a.rows)?;
                (a.cols, Param::WeightedMean)
            }
            NodeKind::CompoundMultEq => {
                let a = state.as_ref().expect("has_mat");
                need_form(0, Param::MeanCov)?;
                need_form(1, Param::MeanCov)?;
                need_dim("state message", v(0).dim, a.cols)?;
                need_dim("observation", v(1).dim, a.rows)?;
                (a.cols, Param::MeanCov)
            }
            NodeKind::CompoundAddObs => {
                let a = state.as_ref().expect("has_mat");
                need_form(0, Param::MeanCov)?;
                need_form(1, Param::MeanCov)?;
                need_dim("state message", v(0).dim, a.rows)?;
                need_dim("input", v(1).dim, a.cols)?;
                (a.rows, Param::MeanCov)
            }
        };
        let version = self.scalars.get(lhs).map_or(1, |&p| self.s.values[p].version + 1);
        let step = self.s.steps.len();
        let out = self.s.values.len();
        self.s.values.push(Value { name: lhs.to_string(), version, dim, form, origin: Origin::Computed { step } });
        self.scalars.insert(lhs.to_string(), out);
        self.s.steps.push(Step { func: func.to_string(), kind: sig.kind, inputs, output: out, state, line });
        Ok(())
    }
}

/// Unrolls loops and versions every assignment.
pub fn build_schedule(g: &Graph) -> Result<Schedule> {
    let mut b = Builder { g, s: Schedule::default(), scalars: BTreeMap::new(), arrays: BTreeMap::new() };
    b.s.msg_decls = g.msgs.clone();
    b.s.mat_decls = g.mats.clone();
    for d in &g.msgs {
        match d.count {
            None => {
                b.scalars.insert(d.name.clone(), b.s.values.len());
                b.s.values.push(Value { name: d.name.clone(), version: 0, dim: d.dim, form: d.form, origin: Origin::External });
            }
            Some(n) => {
                let ids = (0..n)
                    .map(|index| {
                        b.s.values.push(Value {
                            name: d.name.clone(),
                            version: 0,
                            dim: d.dim,
                            form: d.form,
                            origin: Origin::ExternalElem { index, len: n },
                        });
                        b.s.values.len() - 1
                    })
                    .collect();
                b.arrays.insert(d.name.clone(), ids);
            }
        }
    }
    b.stmts(&g.body, &mut BTreeMap::new())?;
    for o in &g.outputs {
        let v = b
            .scalars
            .get(o)
            .copied()
            .ok_or_else(|| CompileError::Type { line: 0, msg: format!("output `{o}` is not a message") })?;
        b.s.outputs.push(v);
    }
    Ok(b.s)
}

impl Schedule {
    /// Steps in a form mirroring a message-update graph listing.
    pub fn dump(&self, alloc: Option<&Allocation>) -> String {
        let name = |v: usize| match alloc {
            Some(a) => format!("{}@{:x}", self.values[v].label(), a.slot_of[v]),
            None => self.values[v].label(),
        };
        let mut s = String::new();
        for (i, st) in self.steps.iter().enumerate() {
            let mut args: Vec<String> = st.inputs.iter().map(|&v| name(v)).collect();
            if let Some(m) = &st.state {
                args.push(m.label());
            }
            let _ = writeln!(s, "s{i:<3} {} = {}({})", name(st.output), st.func, args.join(", "));
        }
        if let Some(a) = alloc {
            let _ = writeln!(s, "# identifiers: {}", a.distinct_ids());
        }
        s
    }

    /// Floating-point evaluation in schedule order with the reference rules.
    pub fn evaluate(&self, inputs: &Inputs) -> Result<Vec<Option<GaussianMessage>>> {
        let mut vals: Vec<Option<GaussianMessage>> = vec![None; self.values.len()];
        for (v, val) in self.values.iter().enumerate() {
            vals[v] = match val.origin {
                Origin::External => Some(inputs.message(&val.name, None)?),
                Origin::ExternalElem { index, .. } => Some(inputs.message(&val.name, Some(index))?),
                Origin::Computed { .. } => None,
            };
        }
        for st in &self.steps {
            let a = match &st.state {
                Some(m) => Some(StateMatrix::new(inputs.matrix(&m.name, m.index)?)),
                None => None,
            };
            let node = Node::new(st.kind, a).map_err(|e| CompileError::Reference(e.to_string()))?;
            let ins: Vec<&GaussianMessage> = st.inputs.iter().map(|&v| vals[v].as_ref().expect("defined before use")).collect();
            let out = node.update(&ins).map_err(|e| CompileError::Reference(format!("line {}: {e}", st.line)))?;
            vals[st.output] = Some(out);
        }
        Ok(vals)
    }

    pub fn evaluate_outputs(&self, inputs: &Inputs) -> Result<BTreeMap<String, GaussianMessage>> {
        let vals = self.evaluate(inputs)?;
        Ok(self.outputs.iter().map(|&v| (self.values[v].name.clone(), vals[v].clone().expect("evaluated"))).collect())
    }
}

/// Input data bound by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub msgs: BTreeMap<String, Vec<GaussianMessage>>,
    pub mats: BTreeMap<String, Vec<CMat>>,
}

impl Inputs {
    pub fn with_msg(mut self, name: &str, m: GaussianMessage) -> Self {
        self.msgs.insert(name.to_string(), vec![m]);
        self
    }

    pub fn with_msgs(mut self, name: &str, ms: Vec<GaussianMessage>) -> Self {
        self.msgs.insert(name.to_string(), ms);
        self
    }

    pub fn with_mat(mut self, name: &str, m: CMat) -> Self {
        self.mats.insert(name.to_string(), vec![m]);
        self
    }

    pub fn with_mats(mut self, name: &str, ms: Vec<CMat>) -> Self {
        self.mats.insert(name.to_string(), ms);
        self
    }

    fn message(&self, name: &str, index: Option<usize>) -> Result<GaussianMessage> {
        self.msgs
            .get(name)
            .and_then(|v| v.get(index.unwrap_or(0)))
            .cloned()
            .ok_or_else(|| CompileError::MissingInput(index.map_or(name.to_string(), |i| format!("{name}[{i}]"))))
    }

    fn matrix(&self, name: &str, index: Option<usize>) -> Result<CMat> {
        self.mats
            .get(name)
            .and_then(|v| v.get(index.unwrap_or(0)))
            .cloned()
            .ok_or_else(|| CompileError::MissingInput(index.map_or(name.to_string(), |i| format!("{name}[{i}]"))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// Identifier remapping; loop folding only finds repeats when enabled.
    pub optimize: bool,
    pub compress: bool,
    pub program_index: u8,
    pub array_size: usize,
    pub msg_slots: usize,
    pub amat_slots: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self::for_machine(&MachineConfig::default())
    }
}

impl CompileOptions {
    pub fn for_machine(c: &MachineConfig) -> Self {
        Self {
            optimize: true,
            compress: true,
            program_index: 1,
            array_size: c.array_size,
            msg_slots: c.msg_slots(),
            amat_slots: c.amat_slots(),
        }
    }

    pub fn unoptimized(mut self) -> Self {
        self.optimize = false;
        self
    }
}

/// Where a named input or output lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub name: String,
    pub bank: Bank,
    pub addr: usize,
    /// Element count for arrays (consecutive slots).
    pub count: Option<usize>,
    pub form: Param,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub inputs: Vec<Binding>,
    pub outputs: Vec<Binding>,
    pub msg_slots: usize,
    pub amat_slots: usize,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub schedule: Schedule,
    pub allocation: Allocation,
    /// Straight-line steps with physical references.
    pub steps: Vec<LStep>,
    pub loop_info: Option<LoopInfo>,
    pub instructions: Vec<Instruction>,
    pub asm: String,
    pub layout: Layout,
    pub options: CompileOptions,
}

/// Compiles `.fgg` source.
pub fn compile(src: &str, opts: &CompileOptions) -> Result<Compiled> {
    compile_graph(&parse_graph(src)?, opts)
}

pub fn compile_graph(g: &Graph, opts: &CompileOptions) -> Result<Compiled> {
    let schedule = build_schedule(g)?;
    for v in &schedule.values {
        if v.dim == 0 || v.dim > opts.array_size {
            return Err(CompileError::Capacity(format!(
                "message `{}` has dimension {}, array size is {}",
                v.label(),
                v.dim,
                opts.array_size
            )));
        }
    }
    for m in &g.mats {
        if m.rows > opts.array_size || m.cols > opts.array_size {
            return Err(CompileError::Capacity(format!(
                "matrix `{}` is {}x{}, array size is {}",
                m.name, m.rows, m.cols, opts.array_size
            )));
        }
    }
    let allocation = optimize_memory(&schedule, opts.optimize);
    if allocation.slots_used > opts.msg_slots {
        let at = schedule
            .steps
            .iter()
            .enumerate()
            .find(|(_, st)| allocation.slot_of[st.output] >= opts.msg_slots)
            .map_or("external inputs".to_string(), |(i, st)| {
                format!("step s{i} (line {}, `{}`)", st.line, schedule.values[st.output].label())
            });
        return Err(CompileError::Capacity(format!(
            "{} message slots needed, {} available; first overflow at {at}",
            allocation.slots_used, opts.msg_slots
        )));
    }
    let mut amat_base = BTreeMap::new();
    let mut next_a = 0;
    for m in &g.mats {
        amat_base.insert(m.name.clone(), next_a);
        next_a += m.count.unwrap_or(1);
    }
    if next_a > opts.amat_slots {
        return Err(CompileError::Capacity(format!("{next_a} state-matrix slots needed, {} available", opts.amat_slots)));
    }
    let mref = |v: usize| match schedule.values[v].origin {
        Origin::ExternalElem { index, len } => Ref::Elem { base: allocation.slot_of[v] - index, index, len },
        _ => Ref::Slot(allocation.slot_of[v]),
    };
    let steps: Vec<LStep> = schedule
        .steps
        .iter()
        .map(|st| LStep {
            kind: st.kind,
            inputs: st.inputs.iter().map(|&v| mref(v)).collect(),
            output: mref(st.output),
            state: st.state.as_ref().map(|m| {
                let base = amat_base[&m.name];
                match (m.index, g.mat(&m.name).and_then(|d| d.count)) {
                    (Some(index), Some(len)) => Ref::Elem { base, index, len },
                    _ => Ref::Slot(base),
                }
            }),
        })
        .collect();
    let loop_info = if opts.compress {
        loops::find_loop(&steps).filter(|l| {
            let extent: usize = steps[l.start..l.start + l.period].iter().map(|s| emit::lower_step(s, true).len()).sum();
            extent <= usize::from(MAX_LOOP_EXTENT) && l.count <= usize::from(u16::MAX)
        })
    } else {
        None
    };
    let labels: Vec<String> = schedule
        .steps
        .iter()
        .map(|st| {
            let ins: Vec<String> = st.inputs.iter().map(|&v| schedule.values[v].label()).collect();
            let mut l = format!("{} = {}({}", schedule.values[st.output].label(), st.func, ins.join(", "));
            if let Some(m) = &st.state {
                l.push_str(", ");
                l.push_str(&m.label());
            }
            l.push(')');
            l
        })
        .collect();
    let lines = emit::emit(opts.program_index, &steps, &labels, loop_info);

    let mut layout = Layout { msg_slots: allocation.slots_used, amat_slots: next_a, ..Default::default() };
    let mut header = vec!["memory map".to_string()];
    let mut seen = std::collections::BTreeSet::new();
    for (v, val) in schedule.values.iter().enumerate() {
        match val.origin {
            Origin::External => {
                layout.inputs.push(Binding {
                    name: val.name.clone(),
                    bank: Bank::Msg,
                    addr: allocation.slot_of[v],
                    count: None,
                    form: val.form,
                });
                header.push(format!("  msg {:#04x}      {} (input)", allocation.slot_of[v], val.name));
            }
            Origin::ExternalElem { index: 0, len } => {
                let a = allocation.slot_of[v];
                layout.inputs.push(Binding {
                    name: val.name.clone(),
                    bank: Bank::Msg,
                    addr: a,
                    count: Some(len),
                    form: val.form,
                });
                header.push(format!("  msg {a:#04x}..{:#04x} {}[0..{len}] (input)", a + len - 1, val.name));
            }
            Origin::ExternalElem { .. } => {}
            Origin::Computed { .. } => {
                if seen.insert(allocation.slot_of[v])
                    && !schedule.values.iter().enumerate().any(|(u, x)| {
                        !matches!(x.origin, Origin::Computed { .. }) && allocation.slot_of[u] == allocation.slot_of[v]
                    })
                {
                    header.push(format!("  msg {:#04x}      {} (first use)", allocation.slot_of[v], val.label()));
                }
            }
        }
    }
    for m in &g.mats {
        let a = amat_base[&m.name];
        match m.count {
            Some(n) => header.push(format!("  a   {a:#04x}..{:#04x} {}[0..{n}] {}x{}", a + n - 1, m.name, m.rows, m.cols)),
            None => header.push(format!("  a   {a:#04x}      {} {}x{}", m.name, m.rows, m.cols)),
        }
    }
    for &o in &schedule.outputs {
        let val = &schedule.values[o];
        layout.outputs.push(Binding {
            name: val.name.clone(),
            bank: Bank::Msg,
            addr: allocation.slot_of[o],
            count: None,
            form: val.form,
        });
        header.push(format!("  out {:#04x}      {}", allocation.slot_of[o], val.label()));
    }
    let asm = emit::format_asm(&header, &lines);
    let instructions = lines.into_iter().map(|(i, _)| i).collect();
    Ok(Compiled { schedule, allocation, steps, loop_info, instructions, asm, layout, options: *opts })
}

impl Compiled {
    pub fn image(&self) -> ProgramImage {
        ProgramImage::from_instructions(&self.instructions).expect("compiler emits valid instructions")
    }

    pub fn distinct_ids(&self) -> usize {
        self.allocation.distinct_ids()
    }

    /// Writes every input to its slot.
    pub fn load_inputs<D: Datapath>(&self, m: &mut Machine<D>, inputs: &Inputs) -> Result<()> {
        for b in &self.layout.inputs {
            for k in 0..b.count.unwrap_or(1) {
                let msg = inputs.message(&b.name, b.count.map(|_| k))?;
                m.write_message(b.addr + k, &msg)?;
            }
        }
        let mut a = 0;
        for d in &self.schedule.mat_decls {
            for k in 0..d.count.unwrap_or(1) {
                let mat = inputs.matrix(&d.name, d.count.map(|_| k))?;
                if mat.shape() != (d.rows, d.cols) {
                    return Err(CompileError::Type {
                        line: d.line,
                        msg: format!("matrix `{}` bound with shape {:?}, declared {}x{}", d.name, mat.shape(), d.rows, d.cols),
                    });
                }
                m.write_state_matrix(a, &mat)?;
                a += 1;
            }
        }
        Ok(())
    }

    pub fn read_outputs<D: Datapath>(&self, m: &Machine<D>) -> Result<BTreeMap<String, GaussianMessage>> {
        self.layout.outputs.iter().map(|b| Ok((b.name.clone(), m.read_message(b.addr, b.form)?))).collect()
    }

    /// Loads program and inputs, runs, and reads the outputs back.
    pub fn run<D: Datapath>(
        &self,
        m: &mut Machine<D>,
        inputs: &Inputs,
    ) -> Result<(ExecReport, BTreeMap<String, GaussianMessage>)> {
        m.load_program(&self.image())?;
        self.load_inputs(m, inputs)?;
        let rep = m.start_program(self.options.program_index, 1)?;
        Ok((rep, self.read_outputs(m)?))
    }
}
