//! Compiling a graph program: schedule, identifier reuse and loop folding.
//!
//! ```bash
//! cargo run --example compile_rls
//! ```

use fgp::compiler::{compile, CompileOptions};
use fgp::rls::rls_source;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let src = rls_source(4, 6);
    println!("{src}");
    let raw = compile(&src, &CompileOptions { compress: false, ..CompileOptions::default().unoptimized() })?;
    let opt = compile(&src, &CompileOptions::default())?;
    println!("unoptimized schedule:\n{}", raw.schedule.dump(Some(&raw.allocation)));
    println!("remapped schedule:\n{}", opt.schedule.dump(Some(&opt.allocation)));
    println!(
        "{} instructions / {} identifiers before, {} / {} after",
        raw.instructions.len(),
        raw.distinct_ids(),
        opt.instructions.len(),
        opt.distinct_ids()
    );
    print!("{}", opt.asm);
    Ok(())
}
