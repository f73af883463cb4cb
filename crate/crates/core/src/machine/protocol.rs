//! Command port: typed commands, status replies and the line protocol.
//!
//! ```text
//! LOAD <file.fgb|file.fga>      -> OK words=<n> programs=<i,j,..>
//! START <prg> <sections>        -> OK cycles=<n>
//! WRITE <msg|a> <addr> <file>   -> OK wrote <bank> <addr>   (addresses in hex)
//! READ <msg|a> <addr>           -> OK rows=<r> cols=<c> aug=<0|1> <hex words..>
//! STATUS                        -> OK state=<fsm> programs_run=<n> last=<status>
//! ```
//!
//! Failures reply `ERR <code> <detail>`. Block files use the memory-dump
//! format with a `# rows=<r> cols=<c> aug=<0|1>` header line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use crate::fxp::{hex_dump, parse_hex_dump, FxUnit};
use crate::isa::{assemble, ProgramImage};
use crate::linalg::Mat;
use crate::systolic::FxBlock;

use super::{Bank, ExecReport, FixedMachine, MachineError};

#[derive(Debug, Clone)]
pub enum Command {
    LoadProgram(ProgramImage),
    StartProgram { index: u8, sections: usize },
    ReadMemory { bank: Bank, addr: usize },
    WriteMemory { bank: Bank, addr: usize, block: FxBlock },
    Status,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Loaded { words: usize, programs: Vec<u8> },
    Ran(ExecReport),
    Data(FxBlock),
    Written { bank: Bank, addr: usize },
    Status { state: String, programs_run: u64, last: String },
}

/// Exactly one reply per command.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub result: Result<Payload, MachineError>,
    unit: FxUnit,
}

impl Reply {
    pub fn is_ok(&self) -> bool {
        self.result.is_ok()
    }
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.result {
            Err(e) => write!(f, "ERR {} {e}", e.code()),
            Ok(Payload::Loaded { words, programs }) => {
                let p: Vec<String> = programs.iter().map(u8::to_string).collect();
                write!(f, "OK words={words} programs={}", p.join(","))
            }
            Ok(Payload::Ran(rep)) => write!(f, "OK cycles={}", rep.total_cycles),
            Ok(Payload::Data(b)) => {
                write!(f, "OK rows={} cols={} aug={}", b.rows(), b.mat.cols(), u8::from(b.aug))?;
                for w in hex_dump(&self.unit, b.mat.as_slice()).lines() {
                    write!(f, " {w}")?;
                }
                Ok(())
            }
            Ok(Payload::Written { bank, addr }) => write!(f, "OK wrote {bank} {addr:#x}"),
            Ok(Payload::Status { state, programs_run, last }) => {
                write!(f, "OK state={state} programs_run={programs_run} last={last}")
            }
        }
    }
}

impl FixedMachine {
    /// Processes one command.
    pub fn handle(&mut self, cmd: Command) -> Reply {
        let result = match cmd {
            Command::LoadProgram(img) => self
                .load_program(&img)
                .map(|words| Payload::Loaded { words, programs: img.program_table().keys().copied().collect() }),
            Command::StartProgram { index, sections } => self.start_program(index, sections).map(Payload::Ran),
            Command::ReadMemory { bank, addr } => self.read_memory(bank, addr).map(Payload::Data),
            Command::WriteMemory { bank, addr, block } => {
                self.write_memory(bank, addr, block).map(|_| Payload::Written { bank, addr })
            }
            Command::Status => Ok(Payload::Status {
                state: self.fsm().to_string(),
                programs_run: self.programs_run(),
                last: self.status().to_string(),
            }),
        };
        Reply { result, unit: self.array().unit().clone() }
    }

    /// Parses and executes one protocol line. Relative paths resolve
    /// against `base`.
    pub fn handle_line(&mut self, line: &str, base: &Path) -> String {
        let unit = self.array().unit().clone();
        match parse_command(line, base, &unit) {
            Ok(cmd) => self.handle(cmd).to_string(),
            Err(e) => Reply { result: Err(e), unit }.to_string(),
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a program image from `.fgb` bytes or `.fga` text.
pub fn read_image(path: &Path) -> Result<ProgramImage, MachineError> {
    let bytes = std::fs::read(path).map_err(|e| MachineError::Io(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "fga") {
        let text = String::from_utf8(bytes).map_err(|e| MachineError::Io(e.to_string()))?;
        Ok(assemble(&text)?)
    } else {
        Ok(ProgramImage::from_bytes(&bytes)?)
    }
}

fn parse_command(line: &str, base: &Path, unit: &FxUnit) -> Result<Command, MachineError> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let bad = || MachineError::Protocol(format!("malformed command {:?}", line.trim()));
    let num = |s: &str| -> Result<usize, MachineError> {
        let r = match s.strip_prefix("0x") {
            Some(h) => usize::from_str_radix(h, 16),
            None => s.parse(),
        };
        r.map_err(|_| MachineError::Protocol(format!("bad number {s:?}")))
    };
    let addr = |s: &str| -> Result<usize, MachineError> {
        usize::from_str_radix(s.strip_prefix("0x").unwrap_or(s), 16)
            .map_err(|_| MachineError::Protocol(format!("bad hex address {s:?}")))
    };
    let Some(head) = toks.first() else {
        return Err(bad());
    };
    match (head.to_ascii_uppercase().as_str(), &toks[1..]) {
        ("LOAD", [file]) => Ok(Command::LoadProgram(read_image(&resolve(base, file))?)),
        ("START", [prg, sections]) => {
            let index = u8::try_from(num(prg)?).map_err(|_| bad())?;
            Ok(Command::StartProgram { index, sections: num(sections)? })
        }
        ("WRITE", [bank, a, file]) => {
            let path = resolve(base, file);
            let text = std::fs::read_to_string(&path).map_err(|e| MachineError::Io(format!("{}: {e}", path.display())))?;
            Ok(Command::WriteMemory { bank: bank.parse()?, addr: addr(a)?, block: parse_block_dump(unit, &text)? })
        }
        ("READ", [bank, a]) => Ok(Command::ReadMemory { bank: bank.parse()?, addr: addr(a)? }),
        ("STATUS", []) => Ok(Command::Status),
        _ => Err(bad()),
    }
}

pub fn format_block_dump(unit: &FxUnit, block: &FxBlock) -> String {
    format!(
        "# rows={} cols={} aug={}\n{}",
        block.rows(),
        block.mat.cols(),
        u8::from(block.aug),
        hex_dump(unit, block.mat.as_slice())
    )
}

pub fn parse_block_dump(unit: &FxUnit, text: &str) -> Result<FxBlock, MachineError> {
    let header = text
        .lines()
        .find_map(|l| l.trim().strip_prefix('#').map(str::trim).filter(|h| h.starts_with("rows=")))
        .ok_or_else(|| MachineError::Protocol("dump lacks a `# rows= cols= aug=` header".into()))?;
    let (mut rows, mut cols, mut aug) = (None, None, false);
    for kv in header.split_whitespace() {
        match kv.split_once('=') {
            Some(("rows", v)) => rows = v.parse::<usize>().ok(),
            Some(("cols", v)) => cols = v.parse::<usize>().ok(),
            Some(("aug", v)) => aug = v == "1",
            _ => {}
        }
    }
    let (Some(rows), Some(cols)) = (rows, cols) else {
        return Err(MachineError::Protocol(format!("bad dump header {header:?}")));
    };
    let values = parse_hex_dump(unit, text).map_err(|e| MachineError::Protocol(e.to_string()))?;
    if values.len() != rows * cols {
        return Err(MachineError::Protocol(format!("dump has {} entries, header says {}", values.len(), rows * cols)));
    }
    if aug && cols == 0 {
        return Err(MachineError::Protocol("augmented block needs a column".into()));
    }
    Ok(FxBlock { mat: Mat::from_vec(rows, cols, values), aug })
}

type Job = (Command, mpsc::Sender<Reply>);

/// A machine running on its own thread. Commands are served one at a time in
/// arrival order; every command gets exactly one reply.
pub struct CommandPort {
    tx: Option<mpsc::Sender<Job>>,
    worker: Option<thread::JoinHandle<FixedMachine>>,
}

impl CommandPort {
    pub fn spawn(mut machine: FixedMachine) -> Self {
        let (tx, rx) = mpsc::channel::<Job>();
        let worker = thread::spawn(move || {
            for (cmd, reply_to) in rx {
                let reply = machine.handle(cmd);
                // A caller that stopped listening is not an error for the machine.
                let _ = reply_to.send(reply);
            }
            machine
        });
        Self { tx: Some(tx), worker: Some(worker) }
    }

    /// Queues a command; the reply arrives on the returned receiver.
    pub fn submit(&self, cmd: Command) -> mpsc::Receiver<Reply> {
        let (rtx, rrx) = mpsc::channel();
        self.tx.as_ref().expect("port open").send((cmd, rtx)).expect("machine thread alive");
        rrx
    }

    pub fn send(&self, cmd: Command) -> Reply {
        self.submit(cmd).recv().expect("machine thread replies")
    }

    /// A cloneable handle for issuing commands from other threads.
    pub fn handle(&self) -> PortHandle {
        PortHandle { tx: self.tx.clone().expect("port open") }
    }

    /// Stops the worker and returns the machine.
    pub fn shutdown(mut self) -> FixedMachine {
        self.tx.take();
        self.worker.take().expect("worker").join().expect("machine thread panicked")
    }
}

impl Drop for CommandPort {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[derive(Clone)]
pub struct PortHandle {
    tx: mpsc::Sender<Job>,
}

impl PortHandle {
    pub fn send(&self, cmd: Command) -> Reply {
        let (rtx, rrx) = mpsc::channel();
        self.tx.send((cmd, rtx)).expect("machine thread alive");
        rrx.recv().expect("machine thread replies")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxp::FixedComplex;
    use crate::machine::{Machine, MachineConfig};

    #[test]
    fn line_protocol_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Machine::fixed(MachineConfig::default()).unwrap();
        let unit = m.array().unit().clone();
        std::fs::write(dir.path().join("p.fga"), "prg 1\nsmm 0 1 2 0\n").unwrap();
        let blk = FxBlock { mat: Mat::from_fn(1, 2, |_, c| FixedComplex::new(c as i32 - 1, 7)), aug: true };
        std::fs::write(dir.path().join("b.hex"), format_block_dump(&unit, &blk)).unwrap();

        assert_eq!(m.handle_line("LOAD p.fga", dir.path()), "OK words=2 programs=1");
        assert_eq!(m.handle_line("WRITE msg 0x0c b.hex", dir.path()), "OK wrote msg 0xc");
        assert_eq!(m.handle_line("READ msg c", dir.path()).split_whitespace().take(1).collect::<String>(), "OK");
        assert_eq!(m.handle_line("READ msg 0x0c", dir.path()), "OK rows=1 cols=2 aug=1 ffffffff 00000007 00000000 00000007");
        assert!(m.handle_line("START 1 1", dir.path()).starts_with("OK cycles="));
        assert!(m.handle_line("STATUS", dir.path()).starts_with("OK state=idle programs_run=1"));
        assert!(m.handle_line("START 9 1", dir.path()).starts_with("ERR UNKNOWN_PROGRAM"));
        assert!(m.handle_line("READ msg 0x40", dir.path()).starts_with("ERR ADDRESS_FAULT"));
        assert!(m.handle_line("FROB", dir.path()).starts_with("ERR PROTOCOL"));
    }

    #[test]
    fn port_replies_in_order() {
        let port = CommandPort::spawn(Machine::fixed(MachineConfig::default()).unwrap());
        let rx: Vec<_> = (0..5).map(|i| port.submit(Command::ReadMemory { bank: Bank::Msg, addr: 36 + i })).collect();
        let ok: Vec<bool> = rx.into_iter().map(|r| r.recv().unwrap().is_ok()).collect();
        assert_eq!(ok, vec![true, true, false, false, false]);
        let m = port.shutdown();
        assert_eq!(m.programs_run(), 0);
    }
}
