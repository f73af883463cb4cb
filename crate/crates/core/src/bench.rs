//! Single compound-node measurement update as a stand-alone microprogram.
//!
//! Memory map: state message at msg 0, observation at msg 1, `A` at a 0,
//! result written to msg 2.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gmp::{compound_mult_eq_update, GaussianMessage, GmpError, Param, StateMatrix};
use crate::isa::{Instruction, OperandRef, Part, ProgramImage, Select};
use crate::linalg::{CMat, C64};
use crate::machine::{Datapath, ExecReport, Machine, MachineError};

pub const X_SLOT: usize = 0;
pub const Y_SLOT: usize = 1;
pub const OUT_SLOT: usize = 2;
pub const A_SLOT: usize = 0;

/// `prg 1; mma; mms; fad; smm`.
pub fn compound_program() -> Vec<Instruction> {
    let x = OperandRef::new(Select::Msg, X_SLOT as u8);
    let y = OperandRef::new(Select::Msg, Y_SLOT as u8);
    let a = OperandRef::new(Select::StateMat, A_SLOT as u8);
    vec![
        Instruction::Prg { index: 1 },
        Instruction::Mma { a, b: x, part: Part::Full },
        Instruction::Mms { a: y, b: a.herm(), part: Part::FullNegMean },
        Instruction::Fad { d: x, part: Part::Full },
        Instruction::Smm { from_acc: false, sel: Select::Msg, addr: OUT_SLOT as u8, part: Part::Full },
    ]
}

pub fn compound_image() -> ProgramImage {
    ProgramImage::from_instructions(&compound_program()).expect("valid program")
}

fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Random unit-scale Hermitian positive definite matrix with eigenvalues
/// bounded below by `floor`.
pub fn random_pd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> CMat {
    let b = CMat::from_vec(n, n, (0..n * n).map(|_| cn(rng, 1.0 / n as f64)).collect());
    let mut m = b.matmul(&b.adjoint()).scale(C64::new(0.5, 0.0));
    for i in 0..n {
        m[(i, i)] += C64::new(floor, 0.0);
    }
    m.hermitize()
}

/// Inputs of one compound-node update.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundCase {
    pub x: GaussianMessage,
    pub y: GaussianMessage,
    pub a: StateMatrix,
}

impl CompoundCase {
    /// `x` of dimension `n`, `A` of shape `m x n`, observation of dimension `m`.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Self {
        let x = GaussianMessage::mean_cov((0..n).map(|_| cn(rng, 1.0)).collect(), random_pd(rng, n, 0.5)).expect("pd");
        let y = GaussianMessage::mean_cov((0..m).map(|_| cn(rng, 1.0)).collect(), random_pd(rng, m, 0.5)).expect("pd");
        let a = StateMatrix::new(CMat::from_vec(m, n, (0..m * n).map(|_| cn(rng, 1.0 / n as f64)).collect()));
        Self { x, y, a }
    }

    pub fn expected(&self) -> Result<GaussianMessage, GmpError> {
        compound_mult_eq_update(&self.x, &self.y, &self.a)
    }

    /// Loads the program and inputs, runs it, and reads the result.
    pub fn run<D: Datapath>(&self, m: &mut Machine<D>) -> Result<(ExecReport, GaussianMessage), MachineError> {
        m.load_program(&compound_image())?;
        m.write_message(X_SLOT, &self.x)?;
        m.write_message(Y_SLOT, &self.y)?;
        m.write_state_matrix(A_SLOT, self.a.matrix())?;
        let rep = m.start_program(1, 1)?;
        Ok((rep, m.read_message(OUT_SLOT, Param::MeanCov)?))
    }
}

/// Largest entry-wise difference over mean and covariance.
pub fn message_error(a: &GaussianMessage, b: &GaussianMessage) -> f64 {
    a.mean.max_abs_diff(&b.mean).max(a.cov.max_abs_diff(&b.cov))
}
