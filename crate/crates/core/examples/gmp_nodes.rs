//! Floating-point node updates on small Gaussian messages.
//!
//! ```bash
//! cargo run --example gmp_nodes
//! ```

use fgp::gmp::{adder_update, compound_mult_eq_update, convert, equality_update, faddeev, matmult_update};
use fgp::gmp::{Direction, GaussianMessage, Param, StateMatrix};
use fgp::linalg::{CMat, C64};
use fgp::text::format_message;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = GaussianMessage::mean_cov(vec![C64::new(1.0, 0.0), C64::new(0.0, -1.0)], CMat::diag_real(&[2.0, 1.0]))?;
    let y = GaussianMessage::mean_cov(vec![C64::new(0.5, 0.5), C64::new(0.0, 0.0)], CMat::diag_real(&[0.5, 0.5]))?;
    let a = StateMatrix::new(CMat::from_real(2, 2, &[1.0, 0.5, 0.0, 1.0]));

    println!("sum X + Y:\n{}", format_message(&adder_update(&x, &y, false)?));
    println!("A X:\n{}", format_message(&matmult_update(&x, &a, Direction::Forward)?));

    let wx = convert(&x, Param::WeightedMean)?;
    let wy = convert(&y, Param::WeightedMean)?;
    let eq = convert(&equality_update(&wx, &wy)?, Param::MeanCov)?;
    println!("equality (product of densities):\n{}", format_message(&eq));

    let post = compound_mult_eq_update(&x, &y, &a)?;
    println!("measurement update of X by Y through A:\n{}", format_message(&post));

    // The same covariance via the Schur complement the array evaluates.
    let g = y.cov.add(&a.matrix().matmul(&x.cov).matmul(&a.matrix().adjoint()));
    let ax = a.matrix().matmul(&x.cov);
    let schur = faddeev(&g, &ax, &ax.adjoint(), &x.cov)?;
    println!("max |V_z - schur| = {:.2e}", post.cov.max_abs_diff(&schur));
    Ok(())
}
