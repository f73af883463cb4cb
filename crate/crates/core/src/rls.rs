//! Channel-estimation workload: recursive least squares over known training
//! symbols, expressed as a graph program.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compiler::Inputs;
use crate::gmp::{GaussianMessage, StateMatrix};
use crate::linalg::{CMat, C64};

/// A random channel, its training rows and the noisy observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsProblem {
    pub taps: usize,
    pub channel: Vec<C64>,
    /// One `1 x taps` row of training symbols per section.
    pub rows: Vec<CMat>,
    /// Scalar observations, exact (zero covariance).
    pub observations: Vec<GaussianMessage>,
    pub prior: GaussianMessage,
    pub noise: GaussianMessage,
    pub noise_var: f64,
}

fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

impl RlsProblem {
    /// Channel taps drawn from CN(0, 1/taps), QPSK training symbols, and
    /// observation noise of variance `noise_var`. The prior is CN(0, I).
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, taps: usize, sections: usize, noise_var: f64) -> Self {
        let channel: Vec<C64> = (0..taps).map(|_| cn(rng, 1.0 / taps as f64)).collect();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut rows = Vec::with_capacity(sections);
        let mut observations = Vec::with_capacity(sections);
        for _ in 0..sections {
            let sym: Vec<C64> =
                (0..taps).map(|_| C64::new(if rng.gen() { h } else { -h }, if rng.gen() { h } else { -h })).collect();
            let y = sym.iter().zip(&channel).map(|(a, x)| a * x).sum::<C64>() + cn(rng, noise_var);
            rows.push(CMat::from_vec(1, taps, sym));
            observations.push(GaussianMessage::mean_cov(vec![y], CMat::zeros(1, 1)).expect("1x1"));
        }
        let prior = GaussianMessage::mean_cov(vec![C64::new(0.0, 0.0); taps], CMat::identity(taps)).expect("identity");
        let noise = GaussianMessage::mean_cov(vec![C64::new(0.0, 0.0)], CMat::from_real(1, 1, &[noise_var])).expect("1x1");
        Self { taps, channel, rows, observations, prior, noise, noise_var }
    }

    pub fn sections(&self) -> usize {
        self.rows.len()
    }

    pub fn state_matrices(&self) -> Vec<StateMatrix> {
        self.rows.iter().cloned().map(StateMatrix::new).collect()
    }

    /// The graph program; names match [`RlsProblem::inputs`].
    pub fn source(&self) -> String {
        rls_source(self.taps, self.sections())
    }

    pub fn inputs(&self) -> Inputs {
        Inputs::default()
            .with_msg("x", self.prior.clone())
            .with_msg("n", self.noise.clone())
            .with_msgs("y", self.observations.clone())
            .with_mats("A", self.rows.clone())
    }
}

/// Graph program for `sections` measurement updates of a `taps`-tap channel.
pub fn rls_source(taps: usize, sections: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# channel estimate, {taps} taps, {sections} training symbols");
    let _ = writeln!(s, "msg x {taps}");
    let _ = writeln!(s, "msg n 1");
    let _ = writeln!(s, "msg y[{sections}] 1");
    let _ = writeln!(s, "mat A[{sections}] 1x{taps}");
    let _ = writeln!(s, "out x");
    let _ = writeln!(s, "for i in {sections}");
    let _ = writeln!(s, "  Y = add_b(y[i], n)");
    let _ = writeln!(s, "  x = mult_eq_f(x, Y, A[i])");
    let _ = writeln!(s, "end");
    s
}
