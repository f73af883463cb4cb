//! Command-line front end: compile, assemble, simulate, verify, demo.
//!
//! [`run_cli`] takes the argument list and output streams so that every
//! path can be driven from tests; the `fgp` binary is a thin wrapper.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bench::{message_error, CompoundCase};
use crate::compiler::{compile, CompileError, CompileOptions, Compiled, Inputs};
use crate::fxp::{FxError, FxFormat};
use crate::gmp::{faddeev, GaussianMessage};
use crate::isa::{assemble, disassemble, IsaError, Opcode, ProgramImage};
use crate::machine::{
    format_block_dump, read_image, Bank, ExecReport, FixedMachine, Machine, MachineConfig, MachineError, OpStats,
};
use crate::rls::RlsProblem;
use crate::text::{format_matrix, format_message, parse_matrices, parse_messages, TextError};

pub const DEFAULT_CLOCK_MHZ: f64 = 130.0;
/// Cycles per compound-node update measured on a TI C66x DSP. External
/// data, shown only as a comparison line in the demo report.
pub const DSP_REFERENCE_CYCLES: u64 = 1076;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

macro_rules! user_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::User(e.to_string())
            }
        }
    )*};
}

user_error!(CompileError, IsaError, TextError, FxError);

impl From<MachineError> for CliError {
    fn from(e: MachineError) -> Self {
        CliError::User(format!("{} {e}", e.code()))
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "fgp", version, about = "Factor-graph processor toolchain and simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Fixed-point format of the array, `Qi.f`.
    #[arg(long, global = true, default_value = "Q8.24")]
    pub fxformat: FxFormat,
    #[arg(long, global = true, default_value_t = 4)]
    pub array_size: usize,
    /// Print the per-cycle PE trace to stderr.
    #[arg(long, global = true)]
    pub trace: bool,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
}

impl Global {
    pub fn machine_config(&self) -> MachineConfig {
        MachineConfig::default().with_array_size(self.array_size).with_format(self.fxformat)
    }
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Compile a `.fgg` graph program to `.fga` assembly or `.fgb` binary.
    Compile(CompileArgs),
    /// Assemble `.fga` text to a `.fgb` image.
    Asm(AsmArgs),
    /// Disassemble a `.fgb` image.
    Disasm(DisasmArgs),
    /// Execute a program on the fixed-point machine.
    Run(RunArgs),
    /// Randomized machine-vs-reference equivalence trials.
    Verify(VerifyArgs),
    /// Channel estimation end to end, with a cycle report.
    DemoRls(DemoArgs),
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    pub input: PathBuf,
    /// Output file; `.fgb` writes the binary image, anything else assembly.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Additionally write the binary image here.
    #[arg(long)]
    pub bin: Option<PathBuf>,
    #[arg(long)]
    pub no_optimize: bool,
    #[arg(long)]
    pub no_compress: bool,
    /// Print the schedule before and after identifier remapping.
    #[arg(long)]
    pub dump_schedule: bool,
    #[arg(long, default_value_t = 1)]
    pub program: u8,
}

#[derive(Debug, Args)]
pub struct AsmArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DisasmArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `.fgg` (compiled on the fly), `.fga` or `.fgb`.
    pub program: PathBuf,
    /// Graph program describing the image's inputs and outputs.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Bind a declared input by name (needs a graph program).
    #[arg(long = "bind", value_name = "NAME=FILE")]
    pub binds: Vec<String>,
    /// Write a message file (one or more records) starting at a hex address.
    #[arg(long = "msg", value_name = "ADDR=FILE")]
    pub msgs: Vec<String>,
    /// Write a matrix file (one or more records) starting at a hex address.
    #[arg(long = "mat", value_name = "ADDR=FILE")]
    pub mats: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub index: u8,
    /// Loop count used by `loop 0` instructions.
    #[arg(long, default_value_t = 1)]
    pub sections: usize,
    /// Print the message slot at this hex address after the run.
    #[arg(long = "read", value_name = "ADDR")]
    pub reads: Vec<String>,
    /// Write memory dumps of outputs and `--read` slots here.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    /// Write the report as key=value lines.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CLOCK_MHZ)]
    pub clock_mhz: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Perturb one machine result so that verification must fail.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 4)]
    pub taps: usize,
    #[arg(long, default_value_t = 2)]
    pub sections: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise_var: f64,
    /// Write the graph program, assembly, image, inputs and report here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CLOCK_MHZ)]
    pub clock_mhz: f64,
}

/// Cycle and accuracy summary of one program run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub program: u8,
    pub sections: usize,
    pub total_cycles: u64,
    /// Executed `fad` instructions, one per compound-node update.
    pub compound_nodes: usize,
    pub clock_hz: f64,
    pub max_abs_error: Option<f64>,
    pub breakdown: BTreeMap<Opcode, OpStats>,
    pub overflow: bool,
}

impl RunReport {
    pub fn new(rep: &ExecReport, clock_hz: f64, max_abs_error: Option<f64>) -> Self {
        let breakdown = rep.breakdown();
        Self {
            program: rep.program,
            sections: rep.sections,
            total_cycles: rep.total_cycles,
            compound_nodes: breakdown.get(&Opcode::Fad).map_or(0, |s| s.count),
            clock_hz,
            max_abs_error,
            breakdown,
            overflow: rep.overflow,
        }
    }

    /// Total cycles divided by compound-node updates (total if there are none).
    pub fn cycles_per_compound_node(&self) -> f64 {
        self.total_cycles as f64 / self.compound_nodes.max(1) as f64
    }

    pub fn throughput_at(&self, clock_hz: f64) -> f64 {
        clock_hz / self.cycles_per_compound_node()
    }

    pub fn throughput(&self) -> f64 {
        self.throughput_at(self.clock_hz)
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "program={}", self.program);
        let _ = writeln!(s, "sections={}", self.sections);
        let _ = writeln!(s, "total_cycles={}", self.total_cycles);
        let _ = writeln!(s, "compound_nodes={}", self.compound_nodes);
        let _ = writeln!(s, "cycles_per_compound_node={}", self.cycles_per_compound_node());
        let _ = writeln!(s, "clock_hz={}", self.clock_hz);
        let _ = writeln!(s, "throughput_cn_per_s={}", self.throughput());
        match self.max_abs_error {
            Some(e) => writeln!(s, "max_abs_error={e:e}"),
            None => writeln!(s, "max_abs_error=na"),
        }
        .expect("string write");
        let _ = writeln!(s, "overflow={}", u8::from(self.overflow));
        for (op, st) in &self.breakdown {
            let _ = writeln!(s, "op.{op}.count={}", st.count);
            let _ = writeln!(s, "op.{op}.cycles={}", st.cycles);
        }
        s
    }

    /// Parses the output of [`RunReport::to_key_values`].
    pub fn parse_key_values(text: &str) -> Option<BTreeMap<String, String>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect()
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {} ({} sections)", self.program, self.sections)?;
        writeln!(f, "  total cycles            {}", self.total_cycles)?;
        writeln!(f, "  compound-node updates   {}", self.compound_nodes)?;
        writeln!(f, "  cycles per update       {:.1}", self.cycles_per_compound_node())?;
        writeln!(f, "  throughput at {:.0} MHz  {:.4e} updates/s", self.clock_hz / 1e6, self.throughput())?;
        match self.max_abs_error {
            Some(e) => writeln!(f, "  max abs error vs float  {e:.3e}")?,
            None => writeln!(f, "  max abs error vs float  n/a")?,
        }
        if self.overflow {
            writeln!(f, "  fixed-point overflow occurred")?;
        }
        writeln!(f, "  per opcode:")?;
        for (op, st) in &self.breakdown {
            writeln!(f, "    {:<5} x{:<4} {:>7} cycles", op.to_string(), st.count, st.cycles)?;
        }
        Ok(())
    }
}

/// Parses arguments and runs one command. Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; `Ok` carries the exit code (verify may fail
/// without an error).
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let g = &cli.global;
    if g.array_size == 0 || g.array_size > crate::systolic::MAX_ARRAY_SIZE {
        return Err(CliError::User(format!("array size {} out of range 1..={}", g.array_size, crate::systolic::MAX_ARRAY_SIZE)));
    }
    match &cli.cmd {
        Cmd::Compile(a) => cmd_compile(g, a, out).map(|_| 0),
        Cmd::Asm(a) => cmd_asm(a, out).map(|_| 0),
        Cmd::Disasm(a) => cmd_disasm(a, out).map(|_| 0),
        Cmd::Run(a) => cmd_run(g, a, out, err).map(|_| 0),
        Cmd::Verify(a) => cmd_verify(g, a, out),
        Cmd::DemoRls(a) => cmd_demo(g, a, out, err).map(|_| 0),
    }
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| CliError::User(format!("{}: {e}", p.display())))
}

fn write_file(p: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(p, data).map_err(|e| CliError::User(format!("{}: {e}", p.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Internal(format!("output: {e}"))
}

fn compile_options(g: &Global, program: u8) -> CompileOptions {
    CompileOptions { program_index: program, ..CompileOptions::for_machine(&g.machine_config()) }
}

fn is_binary(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "fgb")
}

pub fn cmd_compile(g: &Global, a: &CompileArgs, out: &mut dyn Write) -> Result<Compiled> {
    let src = read_text(&a.input)?;
    let mut opts = compile_options(g, a.program);
    opts.optimize = !a.no_optimize;
    opts.compress = !a.no_compress;
    let c = compile(&src, &opts).map_err(|e| match e {
        CompileError::Parse { .. } | CompileError::Type { .. } => CliError::User(format!("{}:{e}", a.input.display())),
        e => e.into(),
    })?;
    if a.dump_schedule {
        let raw = compile(&src, &CompileOptions { optimize: false, ..opts })?;
        writeln!(out, "# schedule before remapping").map_err(io)?;
        write!(out, "{}", raw.schedule.dump(Some(&raw.allocation))).map_err(io)?;
        writeln!(out, "# schedule after remapping").map_err(io)?;
        write!(out, "{}", c.schedule.dump(Some(&c.allocation))).map_err(io)?;
    }
    match &a.output {
        Some(p) if is_binary(p) => write_file(p, &c.image().to_bytes())?,
        Some(p) => write_file(p, c.asm.as_bytes())?,
        None if !a.dump_schedule => write!(out, "{}", c.asm).map_err(io)?,
        None => {}
    }
    if let Some(p) = &a.bin {
        write_file(p, &c.image().to_bytes())?;
    }
    Ok(c)
}

pub fn cmd_asm(a: &AsmArgs, out: &mut dyn Write) -> Result<()> {
    let img = assemble(&read_text(&a.input)?).map_err(|e| CliError::User(format!("{}:{e}", a.input.display())))?;
    write_file(&a.output, &img.to_bytes())?;
    writeln!(out, "{} words", img.len()).map_err(io)
}

pub fn cmd_disasm(a: &DisasmArgs, out: &mut dyn Write) -> Result<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| CliError::User(format!("{}: {e}", a.input.display())))?;
    let text = disassemble(&ProgramImage::from_bytes(&bytes)?);
    match &a.output {
        Some(p) => write_file(p, text.as_bytes()),
        None => write!(out, "{text}").map_err(io),
    }
}

/// Parses a hex address with an optional `0x`.
pub fn parse_addr(s: &str) -> Result<usize> {
    let t = s.trim();
    let t = t.strip_prefix("0x").unwrap_or(t);
    usize::from_str_radix(t, 16).map_err(|_| CliError::User(format!("bad address {s:?}")))
}

fn split_binding(s: &str) -> Result<(&str, PathBuf)> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::User(format!("expected KEY=FILE, got {s:?}")))?;
    Ok((k, PathBuf::from(v)))
}

fn graph_inputs(c: &Compiled, binds: &[String]) -> Result<Inputs> {
    let mut inputs = Inputs::default();
    for b in binds {
        let (name, path) = split_binding(b)?;
        let text = read_text(&path)?;
        if c.schedule.mat_decls.iter().any(|d| d.name == name) {
            inputs =
                inputs.with_mats(name, parse_matrices(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?);
        } else if c.schedule.msg_decls.iter().any(|d| d.name == name) {
            inputs =
                inputs.with_msgs(name, parse_messages(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?);
        } else {
            return Err(CliError::User(format!("`{name}` is not a declared input")));
        }
    }
    Ok(inputs)
}

/// Largest entry-wise difference between machine and float outputs.
pub fn output_error(got: &BTreeMap<String, GaussianMessage>, want: &BTreeMap<String, GaussianMessage>) -> f64 {
    got.iter().map(|(k, g)| want.get(k).map_or(f64::INFINITY, |w| message_error(g, w))).fold(0.0, f64::max)
}

fn dump_name(addr: usize) -> String {
    format!("msg_{addr:02x}.hex")
}

pub fn cmd_run(g: &Global, a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<RunReport> {
    let opts = compile_options(g, a.index);
    let is_graph = a.program.extension().is_some_and(|e| e == "fgg");
    let graph = match (&a.graph, is_graph) {
        (Some(p), _) => Some(compile(&read_text(p)?, &opts).map_err(|e| CliError::User(format!("{}:{e}", p.display())))?),
        (None, true) => {
            Some(compile(&read_text(&a.program)?, &opts).map_err(|e| CliError::User(format!("{}:{e}", a.program.display())))?)
        }
        (None, false) => None,
    };
    let image = if is_graph { graph.as_ref().expect("compiled above").image() } else { read_image(&a.program)? };
    let mut m = FixedMachine::fixed(g.machine_config())?;
    m.load_program(&image)?;
    let inputs = match &graph {
        Some(c) => {
            let inputs = graph_inputs(c, &a.binds)?;
            c.load_inputs(&mut m, &inputs)?;
            Some(inputs)
        }
        None if !a.binds.is_empty() => return Err(CliError::User("--bind needs a graph program".into())),
        None => None,
    };
    for b in &a.msgs {
        let (addr, path) = split_binding(b)?;
        let base = parse_addr(addr)?;
        let msgs = parse_messages(&read_text(&path)?).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        for (k, msg) in msgs.iter().enumerate() {
            m.write_message(base + k, msg)?;
        }
    }
    for b in &a.mats {
        let (addr, path) = split_binding(b)?;
        let base = parse_addr(addr)?;
        let mats = parse_matrices(&read_text(&path)?).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        for (k, mat) in mats.iter().enumerate() {
            m.write_state_matrix(base + k, mat)?;
        }
    }
    if g.trace {
        m.array_mut().enable_trace();
    }
    let result = m.start_program(a.index, a.sections);
    if g.trace {
        for l in m.array_mut().take_trace() {
            writeln!(err, "{l}").map_err(io)?;
        }
    }
    let rep = result?;

    let mut error = None;
    let mut dumps: Vec<usize> = Vec::new();
    if let (Some(c), Some(inputs)) = (&graph, &inputs) {
        let got = c.read_outputs(&m)?;
        let want = c.schedule.evaluate_outputs(inputs)?;
        error = Some(output_error(&got, &want));
        for b in &c.layout.outputs {
            writeln!(out, "out {} @{:#x}", b.name, b.addr).map_err(io)?;
            write!(out, "{}", format_message(&got[&b.name])).map_err(io)?;
            dumps.push(b.addr);
        }
    }
    for r in &a.reads {
        let addr = parse_addr(r)?;
        let block = m.read_memory(Bank::Msg, addr)?;
        writeln!(out, "read msg {addr:#x}").map_err(io)?;
        write!(out, "{}", format_block_dump(m.array().unit(), &block)).map_err(io)?;
        dumps.push(addr);
    }
    if let Some(dir) = &a.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::User(format!("{}: {e}", dir.display())))?;
        for addr in dumps {
            let block = m.read_memory(Bank::Msg, addr)?;
            write_file(&dir.join(dump_name(addr)), format_block_dump(m.array().unit(), &block).as_bytes())?;
        }
    }
    let report = RunReport::new(&rep, a.clock_mhz * 1e6, error);
    write!(out, "{report}").map_err(io)?;
    if let Some(p) = &a.report {
        write_file(p, report.to_key_values().as_bytes())?;
    }
    Ok(report)
}

/// Outcome of one verification trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub suite: &'static str,
    pub error: f64,
    /// Human-readable inputs and results, kept for failing trials.
    pub detail: String,
}

pub const SUITES: [&str; 3] = ["faddeev", "compound", "rls"];

/// Seed of trial `index`: independent of thread count and trial order.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs one randomized trial against the floating-point reference.
pub fn run_trial(config: &MachineConfig, seed: u64, index: usize, inject_fault: bool) -> std::result::Result<Trial, CliError> {
    use rand::Rng;
    let mut rng = trial_rng(seed, index);
    let n = config.array_size;
    let suite = SUITES[index % SUITES.len()];
    let (mut error, detail) = match suite {
        "faddeev" => {
            let p = rng.gen_range(1..=n);
            let q = rng.gen_range(1..=n);
            let r = rng.gen_range(1..=n);
            let a = crate::bench::random_pd(&mut rng, p, 0.5);
            let b = crate::bench::random_pd(&mut rng, p.max(q), 0.0).block(0, 0, p, q);
            let c = crate::bench::random_pd(&mut rng, r.max(p), 0.0).block(0, 0, r, p);
            let d = crate::bench::random_pd(&mut rng, r.max(q), 0.0).block(0, 0, r, q);
            let want = faddeev(&a, &b, &c, &d).map_err(|e| CliError::Internal(e.to_string()))?;
            let mut arr = crate::systolic::ArrayState::new(n, config.format, config.model).map_err(MachineError::from)?;
            let u = arr.unit_mut();
            let fx = |u: &mut crate::fxp::FxUnit, m: &crate::linalg::CMat| m.map(|z| u.quantize(*z));
            let (fa, fb, fc, fd) = (fx(u, &a), fx(u, &b), fx(u, &c), fx(u, &d));
            let (got, _) = arr.faddeev_blocks(&fa, &fb, &fc, &fd).map_err(MachineError::from)?;
            let got = got.map(|z| arr.unit().to_c64(*z));
            let f = format_matrix;
            (
                got.max_abs_diff(&want),
                format!("A: {}B: {}C: {}D: {}expected: {}got: {}", f(&a), f(&b), f(&c), f(&d), f(&want), f(&got)),
            )
        }
        "compound" => {
            let m_rows = rng.gen_range(1..=n);
            let case = CompoundCase::generate(&mut rng, n, m_rows);
            let want = case.expected().map_err(|e| CliError::Internal(e.to_string()))?;
            let (_, got) = case.run(&mut Machine::fixed(*config)?)?;
            (
                message_error(&got, &want),
                format!(
                    "x:\n{}y:\n{}A:\n{}expected:\n{}got:\n{}",
                    format_message(&case.x),
                    format_message(&case.y),
                    format_matrix(case.a.matrix()),
                    format_message(&want),
                    format_message(&got)
                ),
            )
        }
        _ => {
            let sections = rng.gen_range(1..=4);
            let p = RlsProblem::generate(&mut rng, n, sections, 0.01);
            let c = compile(&p.source(), &CompileOptions::for_machine(config))?;
            let want = c.schedule.evaluate_outputs(&p.inputs())?;
            let (_, got) = c.run(&mut Machine::fixed(*config)?, &p.inputs())?;
            (
                output_error(&got, &want),
                format!("{} sections\nexpected:\n{}got:\n{}", sections, format_message(&want["x"]), format_message(&got["x"])),
            )
        }
    };
    if inject_fault && index == 0 {
        error += 1.0;
    }
    Ok(Trial { index, suite, error, detail })
}

pub fn cmd_verify(g: &Global, a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let config = g.machine_config();
    let trials: Vec<Trial> =
        (0..a.trials).into_par_iter().map(|i| run_trial(&config, g.seed, i, a.inject_fault)).collect::<Result<_>>()?;
    let mut worst: BTreeMap<&str, (f64, usize, usize)> = BTreeMap::new();
    for t in &trials {
        let w = worst.entry(t.suite).or_insert((0.0, 0, 0));
        w.2 += 1;
        if t.error >= w.0 {
            *w = (t.error, t.index, w.2);
        }
    }
    writeln!(out, "verify seed={} trials={} format={} array={}", g.seed, a.trials, g.fxformat, g.array_size).map_err(io)?;
    for (suite, (e, idx, n)) in &worst {
        writeln!(out, "  {suite:<9} trials={n:<4} worst={e:.3e} (trial {idx})").map_err(io)?;
    }
    let failed: Vec<&Trial> = trials.iter().filter(|t| t.error.is_nan() || t.error > a.tol).collect();
    if let Some(t) = failed.first() {
        writeln!(out, "FAIL {} of {} trials exceed {:e}", failed.len(), a.trials, a.tol).map_err(io)?;
        writeln!(out, "counterexample: trial {} suite {} error {:.3e}", t.index, t.suite, t.error).map_err(io)?;
        write!(out, "{}", t.detail).map_err(io)?;
        return Ok(1);
    }
    writeln!(out, "PASS").map_err(io)?;
    Ok(0)
}

pub fn cmd_demo(g: &Global, a: &DemoArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<RunReport> {
    if a.taps == 0 || a.taps > g.array_size {
        return Err(CliError::User(format!("taps must be in 1..={}", g.array_size)));
    }
    if a.sections == 0 {
        return Err(CliError::User("need at least one section".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let p = RlsProblem::generate(&mut rng, a.taps, a.sections, a.noise_var);
    let src = p.source();
    let c = compile(&src, &compile_options(g, 1))?;
    let mut m = FixedMachine::fixed(g.machine_config())?;
    if g.trace {
        m.array_mut().enable_trace();
    }
    let run = c.run(&mut m, &p.inputs());
    if g.trace {
        for l in m.array_mut().take_trace() {
            writeln!(err, "{l}").map_err(io)?;
        }
    }
    let (rep, got) = run?;
    let want = c.schedule.evaluate_outputs(&p.inputs())?;
    let report = RunReport::new(&rep, a.clock_mhz * 1e6, Some(output_error(&got, &want)));

    writeln!(out, "channel estimate: {} taps, {} training symbols, noise variance {}", a.taps, a.sections, a.noise_var)
        .map_err(io)?;
    writeln!(out, "  {} instructions, {} message slots", c.instructions.len(), c.distinct_ids()).map_err(io)?;
    writeln!(out, "  tap  true                 estimate").map_err(io)?;
    for (i, h) in p.channel.iter().enumerate() {
        let e = got["x"].mean[(i, 0)];
        writeln!(out, "  {i:<4} {:>9.5}{:+.5}j  {:>9.5}{:+.5}j", h.re, h.im, e.re, e.im).map_err(io)?;
    }
    write!(out, "{report}").map_err(io)?;
    writeln!(out, "reference (external data): TI C66x DSP, {DSP_REFERENCE_CYCLES} cycles per compound-node update")
        .map_err(io)?;

    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::User(format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("rls.fgg"), src.as_bytes())?;
        write_file(&dir.join("rls.fga"), c.asm.as_bytes())?;
        write_file(&dir.join("rls.fgb"), &c.image().to_bytes())?;
        let msgs = |ms: &[GaussianMessage]| ms.iter().map(format_message).collect::<String>();
        write_file(&dir.join("x.msg"), format_message(&p.prior).as_bytes())?;
        write_file(&dir.join("n.msg"), format_message(&p.noise).as_bytes())?;
        write_file(&dir.join("y.msg"), msgs(&p.observations).as_bytes())?;
        let mats: String = p.rows.iter().map(format_matrix).collect();
        write_file(&dir.join("A.mat"), mats.as_bytes())?;
        write_file(&dir.join("report.txt"), report.to_key_values().as_bytes())?;
    }
    if let Some(path) = &a.report {
        write_file(path, report.to_key_values().as_bytes())?;
    }
    Ok(report)
}
