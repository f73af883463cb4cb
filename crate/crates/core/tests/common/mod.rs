//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the crate's own linear algebra or message rules:
//! floating oracles use plain nested vectors, and the fixed-point oracle
//! runs each macro-op as a straight sequential loop over the arithmetic
//! unit's primitives.

#![allow(dead_code, clippy::needless_range_loop)]

use fgp::fxp::{FixedComplex, FxError, FxUnit};
use fgp::gmp::GaussianMessage;
use fgp::linalg::{CMat, Mat, C64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type V = Vec<Vec<C64>>;

pub fn to_v(m: &CMat) -> V {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn from_v(v: &V) -> CMat {
    let rows = v.len();
    let cols = v.first().map_or(0, Vec::len);
    CMat::from_fn(rows, cols, |r, c| v[r][c])
}

/// Triple-loop product.
pub fn mul(a: &V, b: &V) -> V {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![C64::new(0.0, 0.0); m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn sub(a: &V, b: &V) -> V {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

pub fn add(a: &V, b: &V) -> V {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn adj(a: &V) -> V {
    let (n, m) = (a.len(), a.first().map_or(0, Vec::len));
    (0..m).map(|j| (0..n).map(|i| a[i][j].conj()).collect()).collect()
}

pub fn eye(n: usize) -> V {
    (0..n).map(|i| (0..n).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect()).collect()
}

pub fn scale(a: &V, s: f64) -> V {
    a.iter().map(|r| r.iter().map(|z| z * s).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gj_inverse(a: &V) -> V {
    let n = a.len();
    let mut m: V = a.iter().zip(eye(n)).map(|(r, e)| r.iter().copied().chain(e).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.norm() > 1e-300, "singular");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for c in 0..2 * n {
                    let t = m[col][c];
                    m[r][c] -= f * t;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `d - c·a⁻¹·b`.
pub fn schur(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let ainv = gj_inverse(&to_v(a));
    from_v(&sub(&to_v(d), &mul(&mul(&to_v(c), &ainv), &to_v(b))))
}

pub fn frob(v: &CMat) -> f64 {
    v.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Textbook Kalman measurement update with an explicit gain.
pub fn kalman_update(mx: &CMat, vx: &CMat, my: &CMat, vy: &CMat, a: &CMat) -> (CMat, CMat) {
    let (mx, vx, my, vy, a) = (to_v(mx), to_v(vx), to_v(my), to_v(vy), to_v(a));
    let vxah = mul(&vx, &adj(&a));
    let s = add(&vy, &mul(&a, &vxah));
    let k = mul(&vxah, &gj_inverse(&s));
    let innov = sub(&my, &mul(&a, &mx));
    let mz = add(&mx, &mul(&k, &innov));
    let vz = sub(&vx, &mul(&k, &mul(&a, &vx)));
    (from_v(&mz), from_v(&vz))
}

/// Batch LMMSE estimate of `x` from `y = H x + w`, `x ~ CN(m0, V0)`,
/// `w ~ CN(0, s2 I)`, in information form.
pub fn batch_lmmse(h_rows: &[CMat], y: &[C64], m0: &CMat, v0: &CMat, s2: f64) -> (CMat, CMat) {
    let h: V = h_rows.iter().map(|r| to_v(r)[0].clone()).collect();
    let yv: V = y.iter().map(|&z| vec![z]).collect();
    let w0 = gj_inverse(&to_v(v0));
    let info = add(&w0, &scale(&mul(&adj(&h), &h), 1.0 / s2));
    let p = gj_inverse(&info);
    let rhs = add(&mul(&w0, &to_v(m0)), &scale(&mul(&adj(&h), &yv), 1.0 / s2));
    (from_v(&mul(&p, &rhs)), from_v(&p))
}

pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub fn random_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn(rng, var))
}

/// Diagonally dominant, hence well conditioned, square matrix.
pub fn well_conditioned<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let mut m = random_mat(rng, n, n, 1.0 / n as f64);
    for i in 0..n {
        m[(i, i)] += C64::new(2.0, 0.0);
    }
    m
}

/// Hermitian positive definite with smallest eigenvalue at least `floor`.
pub fn random_hpd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> CMat {
    let b = to_v(&random_mat(rng, n, n, 1.0 / n as f64));
    let mut m = mul(&b, &adj(&b));
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += C64::new(floor, 0.0);
    }
    let m = from_v(&m);
    CMat::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5)
}

pub fn msg_error(a: &GaussianMessage, b: &GaussianMessage) -> f64 {
    let d = |x: &CMat, y: &CMat| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    d(&a.mean, &b.mean).max(d(&a.cov, &b.cov))
}

/// Sequential fixed-point reference for the array's macro-ops: every entry
/// is produced by the same primitive calls, in the documented order, without
/// any notion of wavefronts or PEs.
pub struct SeqFxp {
    pub unit: FxUnit,
}

pub type FxM = Mat<FixedComplex>;

impl SeqFxp {
    pub fn new(unit: FxUnit) -> Self {
        Self { unit }
    }

    pub fn quantize(&mut self, m: &CMat) -> FxM {
        FxM::from_fn(m.rows(), m.cols(), |r, c| self.unit.quantize(m[(r, c)]))
    }

    pub fn to_c64(&self, m: &FxM) -> CMat {
        CMat::from_fn(m.rows(), m.cols(), |r, c| self.unit.to_c64(m[(r, c)]))
    }

    pub fn herm(&mut self, m: &FxM) -> FxM {
        FxM::from_fn(m.cols(), m.rows(), |r, c| self.unit.conj(m[(c, r)]))
    }

    pub fn identity(&mut self, n: usize) -> FxM {
        let one = self.unit.quantize(C64::new(1.0, 0.0));
        FxM::from_fn(n, n, |r, c| if r == c { one } else { FixedComplex::ZERO })
    }

    /// `init + x·y` with one rounded MAC per inner index, ascending.
    pub fn mac_product(&mut self, init: &FxM, x: &FxM, y: &FxM) -> FxM {
        let mut out = init.clone();
        for r in 0..x.rows() {
            for c in 0..y.cols() {
                let mut acc = init[(r, c)];
                for k in 0..x.cols() {
                    acc = self.unit.mac(acc, x[(r, k)], y[(k, c)], false);
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    pub fn matmul(&mut self, x: &FxM, y: &FxM) -> FxM {
        self.mac_product(&FxM::zeros(x.rows(), y.cols()), x, y)
    }

    /// Gaussian elimination of `[a b; c d]` with partial pivoting on the
    /// rounded squared magnitude (first maximum wins). Returns the reduced
    /// lower-right block and the row swaps.
    pub fn faddeev(&mut self, a: &FxM, b: &FxM, c: &FxM, d: &FxM) -> Result<(FxM, Vec<(usize, usize)>), FxError> {
        let (p, q, r) = (a.rows(), b.cols(), c.rows());
        let mut w: Vec<Vec<FixedComplex>> = (0..p + r)
            .map(|i| {
                (0..p + q)
                    .map(|j| match (i < p, j < p) {
                        (true, true) => a[(i, j)],
                        (true, false) => b[(i, j - p)],
                        (false, true) => c[(i - p, j)],
                        (false, false) => d[(i - p, j - p)],
                    })
                    .collect()
            })
            .collect();
        let mut swaps = Vec::new();
        for s in 0..p {
            let mut best = s;
            let mut best_mag = self.unit.abs2(w[s][s]);
            for row in s + 1..p {
                let m = self.unit.abs2(w[row][s]);
                if m > best_mag {
                    best = row;
                    best_mag = m;
                }
            }
            if best_mag <= 0 {
                return Err(FxError::DivideByZero);
            }
            if best != s {
                w.swap(s, best);
                swaps.push((s, best));
            }
            let pivot = w[s][s];
            let factors: Vec<FixedComplex> =
                (s + 1..p + r).map(|i| self.unit.div(w[i][s], pivot).map(|x| x.0)).collect::<Result<_, _>>()?;
            for col in s + 1..p + q {
                let top = w[s][col];
                for (k, i) in (s + 1..p + r).enumerate() {
                    w[i][col] = self.unit.mac(w[i][col], factors[k], top, true);
                }
            }
        }
        Ok((FxM::from_fn(r, q, |i, j| w[p + i][p + j]), swaps))
    }

    fn neg_last_col(&mut self, m: &FxM) -> FxM {
        let last = m.cols() - 1;
        FxM::from_fn(m.rows(), m.cols(), |r, c| if c == last { self.unit.neg(m[(r, c)]) } else { m[(r, c)] })
    }

    /// `add_b(y, n)` on augmented blocks: identity product, then the noise
    /// block with negated mean streamed into the shift.
    pub fn adder_backward(&mut self, y: &FxM, n: &FxM) -> FxM {
        let dim = y.rows();
        let ident = self.identity(dim);
        let s = self.matmul(&ident, y);
        let stream = self.neg_last_col(n);
        let lead = s.block(0, 0, dim, dim);
        let mut acc = self.mac_product(&stream.block(0, 0, dim, dim), &lead, &ident);
        let mean = FxM::from_fn(dim, 1, |r, _| self.unit.add(s[(r, dim)], stream[(r, dim)]));
        acc = acc.hcat(&mean);
        acc
    }

    /// Compound measurement update on augmented blocks `x = [V_x | m_x]`,
    /// `y = [V_y | m_y]`.
    pub fn compound(&mut self, x: &FxM, y: &FxM, a: &FxM) -> Result<FxM, FxError> {
        let (m, n) = (a.rows(), a.cols());
        let s = self.matmul(a, x);
        let ah = self.herm(a);
        let stream = self.neg_last_col(y);
        let s_lead = s.block(0, 0, m, n);
        let g = self.mac_product(&stream.block(0, 0, m, m), &s_lead, &ah);
        let acc_mean = FxM::from_fn(m, 1, |r, _| self.unit.add(s[(r, n)], stream[(r, m)]));
        let b = s_lead.hcat(&acc_mean);
        let c = self.herm(&s_lead);
        self.faddeev(&g, &b, &c, x).map(|r| r.0)
    }
}

/// Augmented block `[V | m]` of a message, quantized.
pub fn quantized_block(seq: &mut SeqFxp, msg: &GaussianMessage) -> FxM {
    seq.quantize(&msg.cov.hcat(&msg.mean))
}
