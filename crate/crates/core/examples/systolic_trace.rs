//! Cycle-level run of a 2x2 product and a Faddeev reduction, with the PE trace.
//!
//! ```bash
//! cargo run --example systolic_trace
//! ```

use fgp::fxp::FxFormat;
use fgp::linalg::{CMat, Mat};
use fgp::systolic::{ArrayState, CycleModel, Operand};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut arr = ArrayState::new(2, FxFormat::default(), CycleModel::default())?;
    let q = |arr: &mut ArrayState, m: &CMat| Mat::from_fn(m.rows(), m.cols(), |r, c| arr.unit_mut().quantize(m[(r, c)]));
    let x = q(&mut arr, &CMat::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let y = q(&mut arr, &CMat::from_real(2, 2, &[0.5, 0.0, 0.0, 0.25]));

    arr.enable_trace();
    let cycles = arr.array_matmul(&Operand::plain(x.clone()), &Operand::plain(y))?;
    for line in arr.take_trace() {
        println!("{line}");
    }
    let s = arr.state_block().mat;
    println!("product in {cycles} cycles: {:?}", s.iter().map(|z| arr.unit().to_c64(*z)).collect::<Vec<_>>());

    // d - c a^-1 b with a row exchange: a[0][0] is the smaller pivot.
    let a = q(&mut arr, &CMat::from_real(2, 2, &[0.1, 1.0, 2.0, 0.5]));
    let one = q(&mut arr, &CMat::identity(2));
    let (res, rep) = arr.faddeev_blocks(&a, &one, &one, &Mat::zeros(2, 2))?;
    println!("-a^-1 in {} cycles, swaps {:?}:", rep.cycles, rep.swaps);
    for r in 0..2 {
        println!("  {} {}", arr.unit().to_c64(res[(r, 0)]), arr.unit().to_c64(res[(r, 1)]));
    }
    Ok(())
}
