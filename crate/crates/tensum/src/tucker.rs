//! Tucker-format tensor networks: a core tensor contracted with one factor
//! matrix per mode, decomposition of a dense tensor at prescribed
//! multilinear ranks, exact reconstruction, and the core normalization
//! that spreads the core's norm evenly across the factors.

use crate::error::{Error, Result};
use crate::linalg::tsvd;
use crate::tensor::{DenseTensor, Matrix};

/// Core tensor of shape (R_0,...,R_{N-1}) plus factors, factor n of shape
/// I_n x R_n. Represents the dense tensor core x_0 A_0 x_1 ... x_{N-1}
/// A_{N-1} of shape (I_0,...,I_{N-1}).
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerNetwork {
    core: DenseTensor,
    factors: Vec<Matrix>,
}

impl TuckerNetwork {
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::ShapeMismatch(format!(
                "{} factors for an order-{} core",
                factors.len(),
                core.order()
            )));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.cols() != core.shape()[n] {
                return Err(Error::ShapeMismatch(format!(
                    "factor {n} has {} cols, core mode {n} has length {}",
                    f.cols(),
                    core.shape()[n]
                )));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factor(&self, n: usize) -> &Matrix {
        &self.factors[n]
    }

    pub fn order(&self) -> usize {
        self.core.order()
    }

    /// Multilinear ranks: the core shape.
    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    /// Shape of the represented dense tensor.
    pub fn represented_shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    /// Stored scalars: core elements plus all factor elements.
    pub fn num_parameters(&self) -> usize {
        self.core.num_elements()
            + self
                .factors
                .iter()
                .map(|f| f.rows() * f.cols())
                .sum::<usize>()
    }

    /// Contracts the network into the dense tensor it represents.
    pub fn reconstruct(&self) -> DenseTensor {
        let mut t = self.core.clone();
        for (n, f) in self.factors.iter().enumerate() {
            t = t
                .mode_product(f, n)
                .expect("factor shape validated at construction");
        }
        t
    }

    /// Truncated higher-order SVD: factor n holds the first ranks[n] left
    /// singular vectors of the mode-n unfolding; the core is the input
    /// contracted with the transposed factors. Exact when ranks are full.
    pub fn hosvd(t: &DenseTensor, ranks: &[usize]) -> Result<Self> {
        if ranks.len() != t.order() {
            return Err(Error::ShapeMismatch(format!(
                "{} ranks for an order-{} tensor",
                ranks.len(),
                t.order()
            )));
        }
        let mut factors = Vec::with_capacity(ranks.len());
        for (n, &r) in ranks.iter().enumerate() {
            factors.push(tsvd(&t.unfold(n)?, r)?);
        }
        let mut core = t.clone();
        for (n, f) in factors.iter().enumerate() {
            core = core.mode_product(&f.transpose(), n)?;
        }
        Self::new(core, factors)
    }

    /// Divides the core by its norm eta and multiplies every factor by
    /// eta^(1/N), leaving the represented tensor unchanged while the core
    /// becomes unit-norm. An all-zero core is reported as degenerate.
    pub fn normalize_core(&self) -> Result<Self> {
        let eta = self.core.frobenius_norm();
        if eta == 0.0 {
            return Err(Error::DegenerateSample("all-zero core".into()));
        }
        let spread = eta.powf(1.0 / self.order() as f64);
        let core = self.core.scale(1.0 / eta);
        let factors = self.factors.iter().map(|f| f.scale(spread)).collect();
        Self::new(core, factors)
    }

    /// Text record: a header line, the core (shape plus elements), then
    /// each factor as rows, cols and column-major elements. Values
    /// round-trip bit-exactly.
    pub fn to_record(&self) -> String {
        let mut s = format!("tucker {}\n", self.order());
        let dims: Vec<String> = self.core.shape().iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("core {}\n", dims.join(" ")));
        let vals: Vec<String> = self.core.data().iter().map(|v| format!("{v}")).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
        for (n, f) in self.factors.iter().enumerate() {
            s.push_str(&format!("factor {n} {} {}\n", f.rows(), f.cols()));
            let vals: Vec<String> = f.data().iter().map(|v| format!("{v}")).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut toks = Tokens::new(text);
        toks.expect("tucker")?;
        let order = toks.next_usize()?;
        toks.expect("core")?;
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            shape.push(toks.next_usize()?);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(toks.next_f64()?);
        }
        let core = DenseTensor::new(shape, data)?;
        let mut factors = Vec::with_capacity(order);
        for n in 0..order {
            toks.expect("factor")?;
            let idx = toks.next_usize()?;
            if idx != n {
                return Err(Error::Parse(format!("factor {idx} where {n} expected")));
            }
            let rows = toks.next_usize()?;
            let cols = toks.next_usize()?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(toks.next_f64()?);
            }
            factors.push(Matrix::new(rows, cols, data)?);
        }
        Self::new(core, factors)
    }
}

/// Whitespace token stream for the record format.
struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            iter: text.split_whitespace(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.iter
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of record".into()))
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let tok = self.next()?;
        if tok != word {
            return Err(Error::Parse(format!("expected {word:?}, found {tok:?}")));
        }
        Ok(())
    }

    fn next_usize(&mut self) -> Result<usize> {
        let tok = self.next()?;
        tok.parse()
            .map_err(|e| Error::Parse(format!("bad integer {tok:?}: {e}")))
    }

    fn next_f64(&mut self) -> Result<f64> {
        let tok = self.next()?;
        tok.parse()
            .map_err(|e| Error::Parse(format!("bad number {tok:?}: {e}")))
    }
}
