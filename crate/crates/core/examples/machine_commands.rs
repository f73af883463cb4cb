//! Driving the machine through its command port from another thread.
//!
//! ```bash
//! cargo run --example machine_commands
//! ```

use fgp::bench::{compound_image, CompoundCase, A_SLOT, OUT_SLOT, X_SLOT, Y_SLOT};
use fgp::machine::{Bank, Command, CommandPort, Machine, MachineConfig, Payload};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = CompoundCase::generate(&mut ChaCha8Rng::seed_from_u64(3), 4, 2);
    // Quantize the inputs on a scratch machine to get memory blocks.
    let mut scratch = Machine::fixed(MachineConfig::default())?;
    scratch.write_message(X_SLOT, &case.x)?;
    scratch.write_message(Y_SLOT, &case.y)?;
    scratch.write_state_matrix(A_SLOT, case.a.matrix())?;

    let port = CommandPort::spawn(Machine::fixed(MachineConfig::default())?);
    let handle = port.handle();
    let commands = vec![
        Command::LoadProgram(compound_image()),
        Command::WriteMemory { bank: Bank::Msg, addr: X_SLOT, block: scratch.read_memory(Bank::Msg, X_SLOT)? },
        Command::WriteMemory { bank: Bank::Msg, addr: Y_SLOT, block: scratch.read_memory(Bank::Msg, Y_SLOT)? },
        Command::WriteMemory { bank: Bank::StateMat, addr: A_SLOT, block: scratch.read_memory(Bank::StateMat, A_SLOT)? },
        Command::StartProgram { index: 1, sections: 1 },
        Command::ReadMemory { bank: Bank::Msg, addr: OUT_SLOT },
        Command::Status,
    ];
    let worker = std::thread::spawn(move || commands.into_iter().map(|c| handle.send(c)).collect::<Vec<_>>());
    for reply in worker.join().expect("sender thread") {
        match &reply.result {
            Ok(Payload::Ran(rep)) => println!("ran {} instructions, {} cycles", rep.records.len(), rep.total_cycles),
            _ => println!("{reply}"),
        }
    }
    let m = port.shutdown();
    let got = m.read_message(OUT_SLOT, fgp::gmp::Param::MeanCov)?;
    println!("max error vs float = {:.2e}", fgp::bench::message_error(&got, &case.expected()?));
    Ok(())
}
