//! Q-format arithmetic: rounding, saturation and the sticky overflow flag.
//!
//! ```bash
//! cargo run --example fixed_point
//! ```

use fgp::fxp::{FxFormat, FxUnit, Overflow, Rounding};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut u = FxUnit::new("Q4.12".parse::<FxFormat>()?);
    let acc = u.quantize(Complex64::new(0.5, 0.0));
    let a = u.quantize(Complex64::new(0.25, 0.5));
    let b = u.quantize(Complex64::new(0.5, -0.25));
    let z = u.mac(acc, a, b, false);
    println!("0.5 + (0.25+0.5i)(0.5-0.25i) = {} (raw {:?})", u.to_c64(z), z);

    let (q, cycles) = u.div(a, b)?;
    println!(
        "(0.25+0.5i)/(0.5-0.25i) = {} in {cycles} cycles, exact {}",
        u.to_c64(q),
        Complex64::new(0.25, 0.5) / Complex64::new(0.5, -0.25)
    );

    let big = u.quantize(Complex64::new(7.5, -7.5));
    let s = u.add(big, big);
    println!("saturating 7.5-7.5i doubled = {}, overflow flag {}", u.to_c64(s), u.overflowed());

    let mut w = FxUnit::new(FxFormat::new(4, 12, Rounding::Truncate, Overflow::Wrap)?);
    let big = w.quantize(Complex64::new(7.5, 0.0));
    let d = w.add(big, big);
    println!("wrapping 7.5 doubled = {}", w.to_c64(d));
    Ok(())
}
