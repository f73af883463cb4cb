//! Assembling, encoding and disassembling a looped two-node program.
//!
//! ```bash
//! cargo run --example assemble
//! ```

use fgp::isa::{assemble, disassemble, ProgramImage};

const SOURCE: &str = "\
prg 1
loop 1 1
mma 1 1 c 0 1 e 0 0 0   # operands: herm sel addr neg | sel addr herm neg | part
mms 0 1 d 0 1 e 1 0 0
smm 1 1 d 0
mma 0 4 d 0 4 c 0 1 0
mms 1 1 d 0 4 c 1 0 0
fad 0 4 d 1
smm 0 4 d 1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = assemble(SOURCE)?;
    for (w, inst) in img.words().iter().zip(img.instructions()) {
        println!("{w:08x}  {inst}");
    }
    let bytes = img.to_bytes();
    println!("{} bytes, programs {:?}", bytes.len(), img.program_table());
    let back = ProgramImage::from_bytes(&bytes)?;
    assert_eq!(back, img);
    print!("{}", disassemble(&back));

    if let Err(e) = assemble("prg 1\nmma 1 1 c\n") {
        println!("rejected: {e}");
    }
    Ok(())
}
