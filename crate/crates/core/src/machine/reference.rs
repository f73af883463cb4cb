use crate::gmp::{self, GmpError};
use crate::linalg::{Block, CMat, C64};
use crate::systolic::{ArrayError, CycleModel};

use super::Datapath;

/// Double-precision datapath with the register semantics of the array.
#[derive(Debug, Clone)]
pub struct FloatDatapath {
    size: usize,
    model: CycleModel,
    state: Block<C64>,
    acc: Block<C64>,
}

impl FloatDatapath {
    pub fn new(size: usize, model: CycleModel) -> Self {
        Self { size, model, state: Block::empty(), acc: Block::empty() }
    }

    fn fits(&self, rows: usize, cols: usize) -> Result<(), ArrayError> {
        if rows > self.size || cols > self.size + 1 {
            return Err(ArrayError::Size(format!("{rows}x{cols} on a {} array", self.size)));
        }
        Ok(())
    }
}

impl Datapath for FloatDatapath {
    type E = C64;

    fn size(&self) -> usize {
        self.size
    }

    fn one(&mut self) -> C64 {
        C64::new(1.0, 0.0)
    }

    fn neg(&mut self, e: C64) -> C64 {
        -e
    }

    fn conj(&mut self, e: C64) -> C64 {
        e.conj()
    }

    fn quantize(&mut self, z: C64) -> C64 {
        z
    }

    fn to_c64(&self, e: C64) -> C64 {
        e
    }

    fn mma(&mut self, a: CMat, b: CMat, aug: bool) -> Result<u64, ArrayError> {
        if a.cols() != b.rows() {
            return Err(ArrayError::Shape(format!("{:?} times {:?}", a.shape(), b.shape())));
        }
        self.fits(a.rows(), b.cols())?;
        let cycles = self.model.matmul(a.rows(), a.cols(), b.cols());
        self.state = Block { mat: a.matmul(&b), aug: aug && b.cols() > 0 };
        Ok(cycles)
    }

    fn mms(&mut self, y: Block<C64>, p: CMat) -> Result<u64, ArrayError> {
        let lead = p.rows();
        if self.state.lead_cols() < lead || y.rows() != self.state.rows() || y.lead_cols() != p.cols() {
            return Err(ArrayError::Shape("shift operands do not conform".into()));
        }
        if y.aug && !self.state.aug {
            return Err(ArrayError::Shape("streamed mean column but no resident mean column".into()));
        }
        let rows = self.state.rows();
        let s_lead = self.state.mat.block(0, 0, rows, lead);
        let mut out = y.lead().add(&s_lead.matmul(&p));
        if let Some(sm) = self.state.mean() {
            let m = match y.mean() {
                Some(ym) => sm.add(&ym),
                None => sm,
            };
            out = out.hcat(&m);
        }
        self.fits(out.rows(), out.cols())?;
        self.acc = Block { mat: out, aug: self.state.aug };
        Ok(self.model.matmul(rows, lead, p.cols()))
    }

    fn fad(&mut self, d: Block<C64>) -> Result<u64, ArrayError> {
        let a = self.acc.lead();
        let s_lead = self.state.lead();
        let b = match self.acc.mean() {
            Some(m) => s_lead.hcat(&m),
            None => s_lead.clone(),
        };
        let c = s_lead.adjoint();
        if !a.is_square() || a.rows() == 0 || b.rows() != a.rows() || c.rows() != d.rows() || b.cols() != d.mat.cols() {
            return Err(ArrayError::Shape("faddeev blocks do not conform".into()));
        }
        self.fits(a.rows(), a.cols())?;
        let res = gmp::faddeev(&a, &b, &c, &d.mat).map_err(|e| match e {
            GmpError::Singular(_) => ArrayError::Singular { column: 0 },
            GmpError::Dimension(m) => ArrayError::Shape(m),
        })?;
        let cycles = self.model.faddeev(a.rows(), b.cols());
        self.state = Block { mat: res, aug: d.aug };
        self.acc = self.state.clone();
        Ok(cycles)
    }

    fn state(&self) -> Block<C64> {
        self.state.clone()
    }

    fn acc(&self) -> Block<C64> {
        self.acc.clone()
    }
}
