//! Channel estimation on the fixed-point machine against the float reference
//! and the batch estimate.
//!
//! ```bash
//! cargo run --release --example rls_demo -- 8
//! ```

use fgp::compiler::{compile, CompileOptions};
use fgp::gmp::run_rls_reference;
use fgp::machine::{Machine, MachineConfig};
use fgp::rls::RlsProblem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sections: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(8);
    let p = RlsProblem::generate(&mut ChaCha8Rng::seed_from_u64(1), 4, sections, 0.01);
    let c = compile(&p.source(), &CompileOptions::default())?;
    let mut m = Machine::fixed(MachineConfig::default())?;
    let (rep, out) = c.run(&mut m, &p.inputs())?;
    let x = &out["x"];
    let float = run_rls_reference(&p.state_matrices(), &p.observations, &p.prior, &p.noise)?;
    let float = float.last().expect("at least one section");

    println!("{:>4} {:>24} {:>24} {:>24}", "tap", "channel", "machine", "float");
    for k in 0..p.taps {
        println!("{k:>4} {:>24.6} {:>24.6} {:>24.6}", p.channel[k], x.mean[(k, 0)], float.mean[(k, 0)]);
    }
    println!("posterior variance trace {:.4e}", x.cov.trace().re);
    println!("max |machine - float| = {:.2e}", fgp::bench::message_error(x, float));
    println!("{} cycles over {sections} sections, overflow {}", rep.total_cycles, rep.overflow);
    Ok(())
}
