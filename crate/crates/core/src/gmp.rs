//! Floating-point Gaussian message passing.
//!
//! Node update rules for the equality, adder and matrix-multiplier nodes and
//! the two compound nodes built from them, plus the Faddeev kernel that the
//! compound measurement update is expressed in. These routines are the
//! semantic reference for the fixed-point machine and can also be used on
//! their own as a small estimation library.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, GmpError>;

/// Which pair of quantities a message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    /// Mean `m` and covariance `V`.
    MeanCov,
    /// Transformed mean `W m` and weight matrix `W = V^-1`.
    WeightedMean,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::MeanCov => "MeanCov",
            Param::WeightedMean => "WeightedMean",
        }
    }
}

/// A complex Gaussian message. In [`Param::WeightedMean`] form `mean` holds
/// `W m` and `cov` holds `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMessage {
    pub mean: CMat,
    pub cov: CMat,
    pub param: Param,
}

impl GaussianMessage {
    pub fn new(mean: Vec<C64>, cov: CMat, param: Param) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(GmpError::Dimension(format!("mean has length {n} but matrix is {}x{}", cov.rows(), cov.cols())));
        }
        Ok(Self { mean: CMat::column(mean), cov, param })
    }

    pub fn mean_cov(mean: Vec<C64>, cov: CMat) -> Result<Self> {
        Self::new(mean, cov, Param::MeanCov)
    }

    pub fn weighted(weighted_mean: Vec<C64>, weight: CMat) -> Result<Self> {
        Self::new(weighted_mean, weight, Param::WeightedMean)
    }

    /// Message that carries no information (`W = 0`).
    pub fn vacuous(n: usize) -> Self {
        Self { mean: CMat::zeros(n, 1), cov: CMat::zeros(n, n), param: Param::WeightedMean }
    }

    pub fn dim(&self) -> usize {
        self.mean.rows()
    }

    pub fn mean_vec(&self) -> Vec<C64> {
        self.mean.as_slice().to_vec()
    }

    /// `[cov | mean]`, the block layout used by the machine.
    pub fn augmented(&self) -> CMat {
        self.cov.hcat(&self.mean)
    }

    pub fn from_augmented(block: &CMat, param: Param) -> Result<Self> {
        let n = block.rows();
        if block.cols() != n + 1 {
            return Err(GmpError::Dimension(format!("augmented block must be n x (n+1), got {}x{}", block.rows(), block.cols())));
        }
        Ok(Self { mean: block.block(0, n, n, 1), cov: block.block(0, 0, n, n), param })
    }

    pub fn to_param(&self, target: Param) -> Result<Self> {
        convert(self, target)
    }

    /// Checks Hermitian symmetry and positive semidefiniteness of the matrix part.
    pub fn check_invariants(&self) -> Result<()> {
        if self.cov.shape() != (self.dim(), self.dim()) {
            return Err(GmpError::Dimension("matrix does not match mean length".into()));
        }
        if self.cov.hermitian_defect() > 1e-12 {
            return Err(GmpError::Dimension("matrix is not Hermitian".into()));
        }
        let ev = self.cov.hermitian_eigenvalues();
        let max = ev.last().copied().unwrap_or(0.0);
        if ev.first().is_some_and(|&lo| lo < -1e-10 * max.abs()) {
            return Err(GmpError::Dimension("matrix is not positive semidefinite".into()));
        }
        Ok(())
    }
}

/// Smallest eigenvalue of `m` relative to its trace; used for PSD checks
/// with a `-1e-9 * trace` allowance.
pub fn is_psd(m: &CMat, rel_tol: f64) -> bool {
    let ev = m.hermitian_eigenvalues();
    let scale = m.trace().re.abs().max(f64::MIN_POSITIVE);
    ev.first().is_none_or(|&lo| lo >= -rel_tol * scale)
}

/// General (not necessarily square) state matrix `A` of a multiplier node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix(pub CMat);

impl StateMatrix {
    pub fn new(a: CMat) -> Self {
        Self(a)
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// Node kinds without their state matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Equality,
    Adder(Direction),
    MatrixMult(Direction),
    /// Matrix multiplier followed by an equality node: the measurement update.
    CompoundMultEq,
    /// Matrix multiplier feeding an adder: `Z = X + A U`.
    CompoundAddObs,
}

impl NodeKind {
    pub fn needs_state_matrix(self) -> bool {
        matches!(self, NodeKind::MatrixMult(_) | NodeKind::CompoundMultEq | NodeKind::CompoundAddObs)
    }

    pub fn arity(self) -> usize {
        match self {
            NodeKind::MatrixMult(_) => 1,
            _ => 2,
        }
    }
}

/// A node together with its state matrix, ready to compute an outgoing message.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub a: Option<StateMatrix>,
}

impl Node {
    pub fn new(kind: NodeKind, a: Option<StateMatrix>) -> Result<Self> {
        if kind.needs_state_matrix() != a.is_some() {
            return Err(GmpError::Dimension(format!("{kind:?} state matrix presence mismatch")));
        }
        Ok(Self { kind, a })
    }

    pub fn update(&self, inputs: &[&GaussianMessage]) -> Result<GaussianMessage> {
        if inputs.len() != self.kind.arity() {
            return Err(GmpError::Dimension(format!("{:?} takes {} inputs, got {}", self.kind, self.kind.arity(), inputs.len())));
        }
        let a = self.a.as_ref();
        match self.kind {
            NodeKind::Equality => equality_update(inputs[0], inputs[1]),
            NodeKind::Adder(dir) => adder_update(inputs[0], inputs[1], dir == Direction::Backward),
            NodeKind::MatrixMult(dir) => matmult_update(inputs[0], a.unwrap(), dir),
            NodeKind::CompoundMultEq => compound_mult_eq_update(inputs[0], inputs[1], a.unwrap()),
            NodeKind::CompoundAddObs => compound_add_update(inputs[0], inputs[1], a.unwrap()),
        }
    }
}

fn same_dim(x: &GaussianMessage, y: &GaussianMessage) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(GmpError::Dimension(format!("message dimensions {} and {}", x.dim(), y.dim())));
    }
    Ok(())
}

fn as_param(msg: &GaussianMessage, p: Param) -> Result<GaussianMessage> {
    if msg.param == p {
        Ok(msg.clone())
    } else {
        convert(msg, p)
    }
}

/// Equality node: weights and weighted means add.
pub fn equality_update(x: &GaussianMessage, y: &GaussianMessage) -> Result<GaussianMessage> {
    same_dim(x, y)?;
    let x = as_param(x, Param::WeightedMean)?;
    let y = as_param(y, Param::WeightedMean)?;
    Ok(GaussianMessage { mean: x.mean.add(&y.mean), cov: x.cov.add(&y.cov).hermitize(), param: Param::WeightedMean })
}

/// Adder node. With `negate_y` the mean of `y` is subtracted (the backward
/// message through the adder); covariances always add.
pub fn adder_update(x: &GaussianMessage, y: &GaussianMessage, negate_y: bool) -> Result<GaussianMessage> {
    same_dim(x, y)?;
    let x = as_param(x, Param::MeanCov)?;
    let y = as_param(y, Param::MeanCov)?;
    let mean = if negate_y { x.mean.sub(&y.mean) } else { x.mean.add(&y.mean) };
    Ok(GaussianMessage { mean, cov: x.cov.add(&y.cov).hermitize(), param: Param::MeanCov })
}

/// Matrix multiplier node `Y = A X`.
///
/// Forward works in mean/covariance form, backward in weighted-mean form.
pub fn matmult_update(x: &GaussianMessage, a: &StateMatrix, direction: Direction) -> Result<GaussianMessage> {
    let a = a.matrix();
    match direction {
        Direction::Forward => {
            if a.cols() != x.dim() {
                return Err(GmpError::Dimension(format!("A is {}x{} but message has dimension {}", a.rows(), a.cols(), x.dim())));
            }
            let x = as_param(x, Param::MeanCov)?;
            Ok(GaussianMessage {
                mean: a.matmul(&x.mean),
                cov: a.matmul(&x.cov).matmul(&a.adjoint()).hermitize(),
                param: Param::MeanCov,
            })
        }
        Direction::Backward => {
            if a.rows() != x.dim() {
                return Err(GmpError::Dimension(format!("A is {}x{} but message has dimension {}", a.rows(), a.cols(), x.dim())));
            }
            let y = as_param(x, Param::WeightedMean)?;
            let ah = a.adjoint();
            Ok(GaussianMessage {
                mean: ah.matmul(&y.mean),
                cov: ah.matmul(&y.cov).matmul(a).hermitize(),
                param: Param::WeightedMean,
            })
        }
    }
}

fn check_compound(x: &GaussianMessage, y: &GaussianMessage, a: &CMat) -> Result<()> {
    if a.cols() != x.dim() || a.rows() != y.dim() {
        return Err(GmpError::Dimension(format!(
            "A is {}x{}, x has dimension {}, y has dimension {}",
            a.rows(),
            a.cols(),
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// The Faddeev blocks of the compound measurement update.
///
/// Returns `(a, b, c, d)` with `a = V_y + A V_x A^H`,
/// `b = [A V_x | A m_x - m_y]`, `c = V_x A^H` and `d = [V_x | m_x]`, so that
/// `d - c a^-1 b = [V_z | m_z]`.
pub fn compound_faddeev_blocks(x: &GaussianMessage, y: &GaussianMessage, a: &StateMatrix) -> Result<(CMat, CMat, CMat, CMat)> {
    let a = a.matrix();
    check_compound(x, y, a)?;
    let x = as_param(x, Param::MeanCov)?;
    let y = as_param(y, Param::MeanCov)?;
    let a_vx = a.matmul(&x.cov);
    let pivot = y.cov.add(&a_vx.matmul(&a.adjoint()));
    let innovation = a.matmul(&x.mean).sub(&y.mean);
    let b = a_vx.hcat(&innovation);
    let c = x.cov.matmul(&a.adjoint());
    let d = x.augmented();
    Ok((pivot, b, c, d))
}

/// Compound multiplier/equality node (Kalman measurement update).
///
/// `G = (V_y + A V_x A^H)^-1`, `m_z = m_x + V_x A^H G (m_y - A m_x)`,
/// `V_z = V_x - V_x A^H G A V_x`. The Schur complement is evaluated with
/// [`faddeev`], the mean riding along as an augmented column.
pub fn compound_mult_eq_update(x: &GaussianMessage, y: &GaussianMessage, a: &StateMatrix) -> Result<GaussianMessage> {
    let (pa, pb, pc, pd) = compound_faddeev_blocks(x, y, a)?;
    let z = faddeev(&pa, &pb, &pc, &pd)?;
    let mut msg = GaussianMessage::from_augmented(&z, Param::MeanCov)?;
    msg.cov = msg.cov.hermitize();
    Ok(msg)
}

/// The same update as [`compound_mult_eq_update`], computed by inverting `G`
/// explicitly. Kept as an independent route for cross-checking.
pub fn compound_mult_eq_direct(x: &GaussianMessage, y: &GaussianMessage, a: &StateMatrix) -> Result<GaussianMessage> {
    let a = a.matrix();
    check_compound(x, y, a)?;
    let x = as_param(x, Param::MeanCov)?;
    let y = as_param(y, Param::MeanCov)?;
    let vx_ah = x.cov.matmul(&a.adjoint());
    let g = inverse(&y.cov.add(&a.matmul(&vx_ah)))?;
    let gain = vx_ah.matmul(&g);
    let mean = x.mean.add(&gain.matmul(&y.mean.sub(&a.matmul(&x.mean))));
    let cov = x.cov.sub(&gain.matmul(&a.matmul(&x.cov))).hermitize();
    Ok(GaussianMessage { mean, cov, param: Param::MeanCov })
}

/// Compound multiplier/adder node `Z = X + A U` (Kalman prediction).
pub fn compound_add_update(x: &GaussianMessage, u: &GaussianMessage, a: &StateMatrix) -> Result<GaussianMessage> {
    let am = a.matrix();
    if am.rows() != x.dim() || am.cols() != u.dim() {
        return Err(GmpError::Dimension(format!(
            "A is {}x{}, x has dimension {}, u has dimension {}",
            am.rows(),
            am.cols(),
            x.dim(),
            u.dim()
        )));
    }
    let x = as_param(x, Param::MeanCov)?;
    let au = matmult_update(u, a, Direction::Forward)?;
    adder_update(&x, &au, false)
}

/// Schur complement `d - c a^-1 b` by Faddeev elimination.
///
/// The block array `[a b; c d]` is triangularized with partial pivoting on
/// the rows of `a` (largest squared magnitude, first occurrence wins) and `c`
/// is eliminated against the pivot rows. `a^-1` is never formed.
pub fn faddeev(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> Result<CMat> {
    let p = a.rows();
    if !a.is_square() || b.rows() != p || c.cols() != p || d.rows() != c.rows() || d.cols() != b.cols() {
        return Err(GmpError::Dimension(format!(
            "faddeev blocks a {:?}, b {:?}, c {:?}, d {:?}",
            a.shape(),
            b.shape(),
            c.shape(),
            d.shape()
        )));
    }
    let r = c.rows();
    let q = b.cols();
    let mut w = a.hcat(b).vcat(&c.hcat(d));
    let tol = a.max_abs() * f64::EPSILON * (p.max(1) as f64);
    for k in 0..p {
        let mut best = k;
        let mut best_mag = w[(k, k)].norm_sqr();
        for i in k + 1..p {
            let mag = w[(i, k)].norm_sqr();
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        if best_mag.sqrt() <= tol || best_mag == 0.0 {
            return Err(GmpError::Singular(format!("zero pivot in column {k}")));
        }
        w.swap_rows(k, best);
        let pivot = w[(k, k)];
        for i in k + 1..p + r {
            let l = w[(i, k)] / pivot;
            if l == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k + 1..p + q {
                let t = w[(k, j)];
                w[(i, j)] -= l * t;
            }
            w[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(w.block(p, p, r, q))
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(m: &CMat) -> Result<CMat> {
    if !m.is_square() {
        return Err(GmpError::Dimension(format!("cannot invert {}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    let mut w = m.hcat(&CMat::identity(n));
    let tol = m.max_abs() * f64::EPSILON * (n.max(1) as f64);
    for k in 0..n {
        let best = (k..n).max_by(|&i, &j| w[(i, k)].norm_sqr().total_cmp(&w[(j, k)].norm_sqr()).then(j.cmp(&i))).unwrap();
        if w[(best, k)].norm() <= tol || w[(best, k)].norm() == 0.0 {
            return Err(GmpError::Singular(format!("zero pivot in column {k}")));
        }
        w.swap_rows(k, best);
        let inv_p = w[(k, k)].inv();
        for j in 0..2 * n {
            w[(k, j)] *= inv_p;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let l = w[(i, k)];
            for j in 0..2 * n {
                let t = w[(k, j)];
                w[(i, j)] -= l * t;
            }
        }
    }
    Ok(w.block(0, n, n, n))
}

/// Switch between mean/covariance and weighted-mean form.
///
/// The inversion goes through [`faddeev`]: with `a = M`, `b = [I | v]`,
/// `c = -I`, `d = 0` the Schur complement is `[M^-1 | M^-1 v]`.
pub fn convert(msg: &GaussianMessage, target: Param) -> Result<GaussianMessage> {
    if msg.param == target {
        return Ok(msg.clone());
    }
    let n = msg.dim();
    if n == 0 {
        return Ok(GaussianMessage { param: target, ..msg.clone() });
    }
    let b = CMat::identity(n).hcat(&msg.mean);
    let c = CMat::identity(n).neg();
    let d = CMat::zeros(n, n + 1);
    let z = faddeev(&msg.cov, &b, &c, &d).map_err(|e| match e {
        GmpError::Singular(_) => GmpError::Singular(format!("cannot convert {} message to {}", msg.param.name(), target.name())),
        other => other,
    })?;
    let mut out = GaussianMessage::from_augmented(&z, target)?;
    out.cov = out.cov.hermitize();
    Ok(out)
}

/// Recursive least squares on a chain factor graph.
///
/// Per section: `msg_Y = observation - noise` through the adder, then the
/// compound measurement update with that section's `A`. Returns the state
/// message after each section.
pub fn run_rls_reference(
    a_rows: &[StateMatrix],
    observations: &[GaussianMessage],
    prior: &GaussianMessage,
    noise: &GaussianMessage,
) -> Result<Vec<GaussianMessage>> {
    if a_rows.len() != observations.len() {
        return Err(GmpError::Dimension(format!("{} state matrices but {} observations", a_rows.len(), observations.len())));
    }
    let mut state = as_param(prior, Param::MeanCov)?;
    let mut out = Vec::with_capacity(a_rows.len());
    for (a, obs) in a_rows.iter().zip(observations) {
        let msg_y = adder_update(obs, noise, true)?;
        state = compound_mult_eq_update(&state, &msg_y, a)?;
        out.push(state.clone());
    }
    Ok(out)
}
