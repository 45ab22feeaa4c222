//! Boolean functions as explicit truth tables, with Walsh-Hadamard analysis.
//!
//! The table holds f(x) at position x read as an unsigned integer (bit 0 least
//! significant), the same indexing the simulator uses for basis states. Spectra
//! use the +-1 encoding f -> (-1)^f, so Parseval gives exactly sum f_hat(S)^2 = 1.

use std::path::Path;

use crate::bits::Bits;
use crate::rng::Stream;

/// Hard cap on arity; tables above this are out of scope.
pub const MAX_ARITY: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum BitfuncError {
    #[error("arity {0} out of range (need 1..={MAX_ARITY})")]
    Arity(usize),
    #[error("table length {got} does not match 2^{n}")]
    TableLength { n: usize, got: usize },
    #[error("truth-table parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Total Boolean function on n bits, stored as its full truth table.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BooleanFunction {
    n: usize,
    table: Bits,
}

impl std::fmt::Debug for BooleanFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BooleanFunction(n={}, table={})", self.n, self.table)
    }
}

impl BooleanFunction {
    pub fn from_table(n: usize, table: Bits) -> Result<Self, BitfuncError> {
        if n == 0 || n > MAX_ARITY {
            return Err(BitfuncError::Arity(n));
        }
        if table.len() != 1 << n {
            return Err(BitfuncError::TableLength { n, got: table.len() });
        }
        Ok(BooleanFunction { n, table })
    }

    pub fn from_fn(n: usize, f: impl Fn(u64) -> bool) -> Self {
        assert!(n >= 1 && n <= MAX_ARITY, "arity {n} out of range");
        let mut table = Bits::zeros(1 << n);
        for x in 0..(1u64 << n) {
            if f(x) {
                table.set(x as usize, true);
            }
        }
        BooleanFunction { n, table }
    }

    pub fn constant(n: usize, value: bool) -> Self {
        Self::from_fn(n, |_| value)
    }

    /// XOR of the input bits.
    pub fn parity(n: usize) -> Self {
        Self::from_fn(n, |x| x.count_ones() % 2 == 1)
    }

    /// The character function of mask s: f(x) = <s, x> mod 2, so that
    /// (-1)^f = chi_s.
    pub fn chi(n: usize, s: u64) -> Self {
        assert!(s < (1u64 << n), "mask {s} out of range for arity {n}");
        Self::from_fn(n, move |x| (x & s).count_ones() % 2 == 1)
    }

    pub fn negated(&self) -> Self {
        let mut table = Bits::zeros(self.table.len());
        for i in 0..self.table.len() {
            table.set(i, !self.table.get(i));
        }
        BooleanFunction { n: self.n, table }
    }

    /// Table bits drawn i.i.d. from the stream keyed by `seed`; the same
    /// (n, seed) always reproduces the same function.
    pub fn random(n: usize, seed: u64) -> Self {
        assert!(n >= 1 && n <= MAX_ARITY, "arity {n} out of range");
        let mut rng = Stream::new(seed);
        let table = Bits::random(1 << n, &mut rng);
        BooleanFunction { n, table }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> &Bits {
        &self.table
    }

    pub fn get(&self, x: u64) -> bool {
        self.table.get(x as usize)
    }

    pub fn eval(&self, x: &Bits) -> bool {
        assert_eq!(x.len(), self.n, "input width mismatch");
        self.get(x.to_u64())
    }

    /// Fraction of inputs on which the two functions agree.
    pub fn agreement(&self, other: &BooleanFunction) -> f64 {
        assert_eq!(self.n, other.n, "arity mismatch");
        let differ = self.table.xor(&other.table).count_ones() as usize;
        let total = 1usize << self.n;
        (total - differ) as f64 / total as f64
    }

    /// Hex encoding of the table value, most significant digit first.
    pub fn to_hex(&self) -> String {
        let digits = (1usize << self.n).div_ceil(4);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let mut nibble = 0u8;
            for b in 0..4 {
                let pos = 4 * d + b;
                if pos < self.table.len() && self.table.get(pos) {
                    nibble |= 1 << b;
                }
            }
            out.push(char::from_digit(nibble as u32, 16).unwrap().to_ascii_uppercase());
        }
        out
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self, BitfuncError> {
        if n == 0 || n > MAX_ARITY {
            return Err(BitfuncError::Arity(n));
        }
        let bits = 1usize << n;
        let digits = bits.div_ceil(4);
        let chars: Vec<char> = hex.trim().chars().collect();
        if chars.len() != digits {
            return Err(BitfuncError::Parse(format!(
                "expected {digits} hex digits for n={n}, got {}",
                chars.len()
            )));
        }
        let mut table = Bits::zeros(bits);
        for (i, c) in chars.iter().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| BitfuncError::Parse(format!("invalid hex digit {c:?}")))?
                as usize;
            let d = digits - 1 - i;
            for b in 0..4 {
                if nibble >> b & 1 == 1 {
                    let pos = 4 * d + b;
                    if pos >= bits {
                        return Err(BitfuncError::Parse(format!(
                            "hex value sets bit {pos}, beyond table size {bits}"
                        )));
                    }
                    table.set(pos, true);
                }
            }
        }
        Ok(BooleanFunction { n, table })
    }

    /// Serializes as two lines: `n=<int>` then the hex table.
    pub fn to_file_string(&self) -> String {
        format!("n={}\n{}\n", self.n, self.to_hex())
    }

    pub fn from_file_string(text: &str) -> Result<Self, BitfuncError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| BitfuncError::Parse("empty file".into()))?;
        let n: usize = header
            .strip_prefix("n=")
            .ok_or_else(|| BitfuncError::Parse(format!("first line {header:?} is not n=<int>")))?
            .trim()
            .parse()
            .map_err(|e| BitfuncError::Parse(format!("bad arity: {e}")))?;
        let hex = lines.next().ok_or_else(|| BitfuncError::Parse("missing table line".into()))?;
        Self::from_hex(n, hex)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), BitfuncError> {
        Ok(std::fs::write(path, self.to_file_string())?)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, BitfuncError> {
        Self::from_file_string(&std::fs::read_to_string(path)?)
    }

    /// Table in the +-1 encoding: position x holds (-1)^f(x).
    pub fn signs(&self) -> Vec<f64> {
        (0..self.table.len())
            .map(|x| if self.table.get(x) { -1.0 } else { 1.0 })
            .collect()
    }
}

/// Fourier spectrum under the +-1 encoding; position S holds f_hat(S).
#[derive(Clone, Debug)]
pub struct FourierSpectrum {
    n: usize,
    coeffs: Vec<f64>,
}

impl FourierSpectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, s: u64) -> f64 {
        self.coeffs[s as usize]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn parseval_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// The probability distribution {f_hat(S)^2}.
    pub fn squared(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c * c).collect()
    }
}

/// In-place Walsh-Hadamard butterfly, unnormalized: v[S] <- sum_x v[x] (-1)^<S,x>.
pub fn wht_in_place(v: &mut [f64]) {
    assert!(v.len().is_power_of_two(), "length must be a power of two");
    let mut h = 1;
    while h < v.len() {
        for block in (0..v.len()).step_by(h * 2) {
            for i in block..block + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Full spectrum in O(n 2^n): coeffs[S] = 2^-n sum_x (-1)^f(x) (-1)^<S,x>.
pub fn walsh_hadamard(f: &BooleanFunction) -> FourierSpectrum {
    let mut v = f.signs();
    wht_in_place(&mut v);
    let scale = 1.0 / (1u64 << f.n()) as f64;
    for c in &mut v {
        *c *= scale;
    }
    FourierSpectrum { n: f.n(), coeffs: v }
}

/// Best-correlated parity of f.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParityFit {
    /// Mask of the maximizing character; ties broken by smallest mask.
    pub s: u64,
    /// Signed coefficient f_hat(s); negative means the negated parity fits.
    pub coeff: f64,
    /// Agreement of the better of chi_s / not-chi_s with f: 1/2 + |coeff|/2.
    pub agreement: f64,
}

pub fn best_parity_agreement(f: &BooleanFunction) -> ParityFit {
    let spec = walsh_hadamard(f);
    let mut best = 0usize;
    for s in 1..spec.coeffs.len() {
        if spec.coeffs[s].abs() > spec.coeffs[best].abs() {
            best = s;
        }
    }
    let coeff = spec.coeffs[best];
    ParityFit { s: best as u64, coeff, agreement: 0.5 + coeff.abs() / 2.0 }
}
