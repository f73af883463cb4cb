//! Complex two's-complement fixed-point arithmetic of the array datapath.
//!
//! Every primitive computes its result at full precision and rounds once,
//! so results are bit-exact and platform independent.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

/// Cycles one real division takes on the sequential radix-2 divider.
pub const DIV_CYCLES_PER_REAL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FxError {
    #[error("invalid fixed-point format: {0}")]
    Format(String),
    #[error("division by zero")]
    DivideByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rounding {
    Truncate,
    #[default]
    RoundNearestEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Overflow {
    #[default]
    Saturate,
    Wrap,
}

/// Q(int_bits, frac_bits); `int_bits` includes the sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxFormat {
    int_bits: u32,
    frac_bits: u32,
    pub rounding: Rounding,
    pub overflow: Overflow,
}

impl Default for FxFormat {
    fn default() -> Self {
        Self::q(8, 24).unwrap()
    }
}

impl FxFormat {
    pub fn new(int_bits: u32, frac_bits: u32, rounding: Rounding, overflow: Overflow) -> Result<Self, FxError> {
        if int_bits < 1 {
            return Err(FxError::Format("int_bits must be at least 1".into()));
        }
        if int_bits + frac_bits > 32 {
            return Err(FxError::Format(format!("Q{int_bits}.{frac_bits} is wider than 32 bits")));
        }
        Ok(Self { int_bits, frac_bits, rounding, overflow })
    }

    pub fn q(int_bits: u32, frac_bits: u32) -> Result<Self, FxError> {
        Self::new(int_bits, frac_bits, Rounding::default(), Overflow::default())
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn width(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.width() - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.width() - 1))
    }

    /// Value of one least significant bit.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Bits of storage for one complex entry.
    pub fn complex_bits(&self) -> u64 {
        2 * self.width() as u64
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

impl FromStr for FxFormat {
    type Err = FxError;

    /// Parses `Qi.f` (also accepts `fxformat=Qi.f` and a lowercase `q`).
    fn from_str(s: &str) -> Result<Self, FxError> {
        let s = s.trim();
        let s = s.strip_prefix("fxformat=").unwrap_or(s);
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(|| FxError::Format(format!("expected Qi.f, got {s:?}")))?;
        let (i, f) = body.split_once('.').ok_or_else(|| FxError::Format(format!("expected Qi.f, got {s:?}")))?;
        let i = i.parse().map_err(|_| FxError::Format(format!("bad integer bits in {s:?}")))?;
        let f = f.parse().map_err(|_| FxError::Format(format!("bad fraction bits in {s:?}")))?;
        Self::q(i, f)
    }
}

/// Raw complex fixed-point value; the format is carried by the [`FxUnit`]
/// that operates on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FixedComplex {
    pub re: i32,
    pub im: i32,
}

impl FixedComplex {
    pub const ZERO: FixedComplex = FixedComplex { re: 0, im: 0 };

    pub fn new(re: i32, im: i32) -> Self {
        Self { re, im }
    }

    pub fn is_zero(&self) -> bool {
        self.re == 0 && self.im == 0
    }
}

/// Floor division helpers with the two supported rounding modes.
fn round_div(num: i128, den: i128, mode: Rounding) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match mode {
        Rounding::Truncate => q,
        Rounding::RoundNearestEven => {
            let twice = 2 * r;
            if twice > den || (twice == den && q & 1 == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}

fn round_shift(v: i128, sh: u32, mode: Rounding) -> i128 {
    if sh == 0 {
        return v;
    }
    round_div(v, 1i128 << sh, mode)
}

/// Arithmetic unit bound to one format, with a sticky overflow flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxUnit {
    format: FxFormat,
    overflow: bool,
}

impl FxUnit {
    pub fn new(format: FxFormat) -> Self {
        Self { format, overflow: false }
    }

    pub fn format(&self) -> FxFormat {
        self.format
    }

    pub fn overflowed(&self) -> bool {
        self.overflow
    }

    pub fn clear_overflow(&mut self) {
        self.overflow = false;
    }

    fn fit(&mut self, v: i128) -> i32 {
        let (lo, hi) = (self.format.min_raw() as i128, self.format.max_raw() as i128);
        if v >= lo && v <= hi {
            return v as i32;
        }
        self.overflow = true;
        match self.format.overflow {
            Overflow::Saturate => v.clamp(lo, hi) as i32,
            Overflow::Wrap => {
                let w = self.format.width();
                let shift = 128 - w;
                ((v << shift) >> shift) as i32
            }
        }
    }

    pub fn quantize_real(&mut self, x: f64) -> i32 {
        let scaled = x * (self.format.frac_bits as f64).exp2();
        let r = match self.format.rounding {
            Rounding::Truncate => scaled.floor(),
            Rounding::RoundNearestEven => scaled.round_ties_even(),
        };
        // Beyond i128 range only for absurd inputs; clamp keeps the cast defined.
        self.fit(r.clamp(-1e30, 1e30) as i128)
    }

    pub fn quantize(&mut self, z: Complex64) -> FixedComplex {
        FixedComplex { re: self.quantize_real(z.re), im: self.quantize_real(z.im) }
    }

    pub fn real_to_f64(&self, raw: i32) -> f64 {
        raw as f64 * self.format.lsb()
    }

    pub fn to_c64(&self, z: FixedComplex) -> Complex64 {
        Complex64::new(self.real_to_f64(z.re), self.real_to_f64(z.im))
    }

    /// Exact negation (saturates the most negative value).
    pub fn neg(&mut self, a: FixedComplex) -> FixedComplex {
        FixedComplex { re: self.fit(-(a.re as i128)), im: self.fit(-(a.im as i128)) }
    }

    pub fn conj(&mut self, a: FixedComplex) -> FixedComplex {
        FixedComplex { re: a.re, im: self.fit(-(a.im as i128)) }
    }

    pub fn add(&mut self, a: FixedComplex, b: FixedComplex) -> FixedComplex {
        FixedComplex { re: self.fit(a.re as i128 + b.re as i128), im: self.fit(a.im as i128 + b.im as i128) }
    }

    pub fn sub(&mut self, a: FixedComplex, b: FixedComplex) -> FixedComplex {
        FixedComplex { re: self.fit(a.re as i128 - b.re as i128), im: self.fit(a.im as i128 - b.im as i128) }
    }

    /// `acc ± a·b`, one rounding after the full-precision complex product.
    pub fn mac(&mut self, acc: FixedComplex, a: FixedComplex, b: FixedComplex, subtract: bool) -> FixedComplex {
        let f = self.format.frac_bits;
        let (ar, ai, br, bi) = (a.re as i128, a.im as i128, b.re as i128, b.im as i128);
        let mut pr = ar * br - ai * bi;
        let mut pi = ar * bi + ai * br;
        if subtract {
            pr = -pr;
            pi = -pi;
        }
        let re = round_shift(((acc.re as i128) << f) + pr, f, self.format.rounding);
        let im = round_shift(((acc.im as i128) << f) + pi, f, self.format.rounding);
        FixedComplex { re: self.fit(re), im: self.fit(im) }
    }

    pub fn mul(&mut self, a: FixedComplex, b: FixedComplex) -> FixedComplex {
        self.mac(FixedComplex::ZERO, a, b, false)
    }

    /// Squared magnitude `re² + im²`, rounded once.
    pub fn abs2(&mut self, a: FixedComplex) -> i32 {
        let (r, i) = (a.re as i128, a.im as i128);
        let v = round_shift(r * r + i * i, self.format.frac_bits, self.format.rounding);
        self.fit(v)
    }

    /// Complex division `(a+bi)/(c+di) = ((ac+bd) + (bc-ad)i) / (c²+d²)`.
    ///
    /// The two real quotients come from the sequential radix-2 divider,
    /// which produces the exact quotient rounded once; the returned cycle
    /// count covers both real divisions.
    pub fn div(&mut self, num: FixedComplex, den: FixedComplex) -> Result<(FixedComplex, u64), FxError> {
        if den.is_zero() {
            return Err(FxError::DivideByZero);
        }
        let f = self.format.frac_bits;
        let (a, b, c, d) = (num.re as i128, num.im as i128, den.re as i128, den.im as i128);
        let mag = c * c + d * d;
        let re = round_div((a * c + b * d) << f, mag, self.format.rounding);
        let im = round_div((b * c - a * d) << f, mag, self.format.rounding);
        Ok((FixedComplex { re: self.fit(re), im: self.fit(im) }, 2 * DIV_CYCLES_PER_REAL))
    }

    /// Raw 32-bit word of one real part, as stored in memory dumps.
    pub fn word(raw: i32) -> u32 {
        raw as u32
    }

    /// Inverse of [`FxUnit::word`]: sign-extends the low `width` bits.
    pub fn from_word(&self, word: u32) -> i32 {
        let shift = 32 - self.format.width();
        ((word << shift) as i32) >> shift
    }

    pub fn word_masked(&self, raw: i32) -> u32 {
        let w = self.format.width();
        if w == 32 {
            raw as u32
        } else {
            (raw as u32) & ((1u32 << w) - 1)
        }
    }
}

/// Memory dump: one 32-bit word per line, lowercase hex, real part first.
pub fn hex_dump(unit: &FxUnit, values: &[FixedComplex]) -> String {
    let mut out = String::with_capacity(values.len() * 18);
    for v in values {
        out.push_str(&format!("{:08x}\n{:08x}\n", unit.word_masked(v.re), unit.word_masked(v.im)));
    }
    out
}

/// Parses a dump written by [`hex_dump`]; `#` starts a comment.
pub fn parse_hex_dump(unit: &FxUnit, text: &str) -> Result<Vec<FixedComplex>, FxError> {
    let words = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| u32::from_str_radix(l, 16).map_err(|_| FxError::Format(format!("bad hex word {l:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if words.len() % 2 != 0 {
        return Err(FxError::Format("odd number of words in dump".into()));
    }
    Ok(words.chunks(2).map(|p| FixedComplex::new(unit.from_word(p[0]), unit.from_word(p[1]))).collect())
}
