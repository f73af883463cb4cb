//! Cycle count and throughput of one 4x4 compound-node update.
//!
//! ```bash
//! cargo run --release --example compound_benchmark -- 130
//! ```

use fgp::bench::CompoundCase;
use fgp::machine::{Machine, MachineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mhz: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(130.0);
    let case = CompoundCase::generate(&mut ChaCha8Rng::seed_from_u64(7), 4, 4);
    let mut m = Machine::fixed(MachineConfig::default())?;
    let (rep, out) = case.run(&mut m)?;
    for r in &rep.records {
        println!("{:<32} {:>4} cycles", r.inst.to_string(), r.cycles);
    }
    println!("total {} cycles", rep.total_cycles);
    println!("{:.4e} updates/s at {mhz} MHz", mhz * 1e6 / rep.total_cycles as f64);
    println!("max error vs float {:.2e}", fgp::bench::message_error(&out, &case.expected()?));
    Ok(())
}
