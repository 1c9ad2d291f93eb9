//! Dense tensor storage and the multilinear primitives everything else
//! builds on: unfold/fold, mode products, general two-tensor contraction,
//! Kronecker and outer products, vectorization, Frobenius norm.
//!
//! Storage convention: the flat buffer holds elements with the first mode
//! varying fastest. An order-2 tensor is therefore a column-major matrix,
//! and `unfold(t, 0)` is a relabeling of the buffer, not a shuffle.
//!
//! Unfolding convention: the columns of `unfold(t, n)` enumerate the
//! remaining modes in their original order with lower-numbered modes
//! varying fastest.

use crate::error::{Error, Result};

/// Dense real tensor of order >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor from a shape and a flat buffer in storage order.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::EmptyInput("tensor shape".into()));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "zero-length mode in shape {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn num_elements(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Linear position of a multi-index, first mode fastest.
    /// Panics if the index is out of range, like slice indexing.
    fn linear_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.order(), "index order mismatch");
        let mut pos = 0;
        let mut stride = 1;
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < self.shape[k], "index {i} out of range in mode {k}");
            pos += i * stride;
            stride *= self.shape[k];
        }
        pos
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let p = self.linear_index(idx);
        self.data[p] = v;
    }

    /// Vectorization: the flat buffer in storage order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Mode-n unfolding: the I_n x (prod of the other dims) matrix whose
    /// columns enumerate the remaining modes, lower modes fastest.
    pub fn unfold(&self, n: usize) -> Result<Matrix> {
        let order = self.order();
        if n >= order {
            return Err(Error::ModeOutOfRange { mode: n, order });
        }
        let i_n = self.shape[n];
        let lo: usize = self.shape[..n].iter().product();
        let hi: usize = self.shape[n + 1..].iter().product();
        let mut out = vec![0.0; self.data.len()];
        for h in 0..hi {
            for i in 0..i_n {
                let src_base = (h * i_n + i) * lo;
                for l in 0..lo {
                    let col = h * lo + l;
                    out[col * i_n + i] = self.data[src_base + l];
                }
            }
        }
        Matrix::new(i_n, lo * hi, out)
    }

    /// Inverse of `unfold`: bit-exact, `fold(unfold(t, n), n, t.shape()) == t`.
    pub fn fold(m: &Matrix, n: usize, shape: &[usize]) -> Result<Self> {
        let order = shape.len();
        if n >= order {
            return Err(Error::ModeOutOfRange { mode: n, order });
        }
        let i_n = shape[n];
        let lo: usize = shape[..n].iter().product();
        let hi: usize = shape[n + 1..].iter().product();
        if m.rows() != i_n || m.cols() != lo * hi {
            return Err(Error::ShapeMismatch(format!(
                "fold of {}x{} into shape {shape:?} along mode {n}",
                m.rows(),
                m.cols()
            )));
        }
        let mut data = vec![0.0; i_n * lo * hi];
        let md = m.data();
        for h in 0..hi {
            for i in 0..i_n {
                let dst_base = (h * i_n + i) * lo;
                for l in 0..lo {
                    let col = h * lo + l;
                    data[dst_base + l] = md[col * i_n + i];
                }
            }
        }
        Self::new(shape.to_vec(), data)
    }

    /// Mode-n product t x_n m: contracts mode n with the columns of m,
    /// replacing dimension I_n by rows(m).
    pub fn mode_product(&self, m: &Matrix, n: usize) -> Result<Self> {
        let order = self.order();
        if n >= order {
            return Err(Error::ModeOutOfRange { mode: n, order });
        }
        if m.cols() != self.shape[n] {
            return Err(Error::ShapeMismatch(format!(
                "mode-{n} product: matrix has {} cols, mode has length {}",
                m.cols(),
                self.shape[n]
            )));
        }
        let unf = self.unfold(n)?;
        let prod = m.matmul(&unf)?;
        let mut shape = self.shape.clone();
        shape[n] = m.rows();
        Self::fold(&prod, n, &shape)
    }

    /// Reinterprets an order-2 tensor as a matrix (shared layout, no copy
    /// of semantics: both are column-major).
    pub fn into_matrix(self) -> Result<Matrix> {
        if self.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "into_matrix on order-{} tensor",
                self.order()
            )));
        }
        Matrix::new(self.shape[0], self.shape[1], self.data)
    }

    /// Debug text dump: one line of shape dims, then all elements in
    /// storage order. Round-trips bit-exactly through `parse`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        s.push_str(&dims.join(" "));
        s.push('\n');
        let vals: Vec<String> = self.data.iter().map(|v| format!("{v}")).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty tensor dump".into()))?;
        let shape: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad dimension {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let rest: String = lines.collect::<Vec<_>>().join(" ");
        let data: Vec<f64> = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad element {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Self::new(shape, data)
    }
}

/// Column-major matrix; interchangeable with an order-2 `DenseTensor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from a column-major buffer.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch(format!("matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Convenience constructor from row slices (fixtures read naturally).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::EmptyInput("matrix rows".into()));
        }
        let r = rows.len();
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let out_col = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = other.data[j * other.rows + k];
                if b == 0.0 {
                    continue;
                }
                let a_col = &self.data[k * self.rows..(k + 1) * self.rows];
                for i in 0..self.rows {
                    out_col[i] += a_col[i] * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// [self other], requires equal row counts.
    pub fn hconcat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "hconcat {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows, self.cols + other.cols, data)
    }

    /// [self; other], requires equal column counts.
    pub fn vconcat(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "vconcat {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let rows = self.rows + other.rows;
        let mut out = Self::zeros(rows, self.cols);
        for c in 0..self.cols {
            out.data[c * rows..c * rows + self.rows]
                .copy_from_slice(self.col(c));
            out.data[c * rows + self.rows..(c + 1) * rows]
                .copy_from_slice(other.col(c));
        }
        Ok(out)
    }

    /// diag(self, other): off-diagonal blocks are exact zeros.
    pub fn block_diag(&self, other: &Self) -> Self {
        let rows = self.rows + other.rows;
        let cols = self.cols + other.cols;
        let mut out = Self::zeros(rows, cols);
        for c in 0..self.cols {
            out.data[c * rows..c * rows + self.rows]
                .copy_from_slice(self.col(c));
        }
        for c in 0..other.cols {
            let base = (self.cols + c) * rows + self.rows;
            out.data[base..base + other.rows].copy_from_slice(other.col(c));
        }
        out
    }

    /// Kronecker product: block (i,j) of the result is self[i,j] * other.
    pub fn kronecker(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for j in 0..self.cols {
            for l in 0..other.cols {
                let c = j * other.cols + l;
                for i in 0..self.rows {
                    let a = self.get(i, j);
                    for k in 0..other.rows {
                        out.set(i * other.rows + k, c, a * other.get(k, l));
                    }
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Elementwise sum; dimensions must match exactly.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "add {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        t.clone().into_matrix()
    }
}

/// (m,n)-contraction product: sums mode m of x against mode n of y.
/// Result modes are x's remaining modes in order, then y's remaining
/// modes in order. Contracting two order-1 tensors yields a shape [1]
/// tensor holding the dot product (order 0 is not representable).
pub fn contract(x: &DenseTensor, y: &DenseTensor, m: usize, n: usize) -> Result<DenseTensor> {
    if m >= x.order() {
        return Err(Error::ModeOutOfRange {
            mode: m,
            order: x.order(),
        });
    }
    if n >= y.order() {
        return Err(Error::ModeOutOfRange {
            mode: n,
            order: y.order(),
        });
    }
    if x.shape()[m] != y.shape()[n] {
        return Err(Error::ShapeMismatch(format!(
            "contract mode {m} (len {}) with mode {n} (len {})",
            x.shape()[m],
            y.shape()[n]
        )));
    }
    let xm = x.unfold(m)?;
    let yn = y.unfold(n)?;
    let prod = xm.transpose().matmul(&yn)?;
    let mut shape: Vec<usize> = Vec::new();
    for (k, &d) in x.shape().iter().enumerate() {
        if k != m {
            shape.push(d);
        }
    }
    for (k, &d) in y.shape().iter().enumerate() {
        if k != n {
            shape.push(d);
        }
    }
    if shape.is_empty() {
        shape.push(1);
    }
    // The column-major product buffer already enumerates x's remaining
    // modes (fastest) then y's remaining modes, so it is the result's
    // storage buffer as-is.
    DenseTensor::new(shape, prod.data)
}

/// Outer product of one or more vectors: element (i,j,...,k) is the
/// product a[i]*b[j]*...*c[k].
pub fn outer(vectors: &[&[f64]]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("outer product needs vectors".into()));
    }
    if vectors.iter().any(|v| v.is_empty()) {
        return Err(Error::EmptyInput("outer product with empty vector".into()));
    }
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    let mut data = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &vi in *v {
            next.extend(data.iter().map(|&d| d * vi));
        }
        data = next;
    }
    DenseTensor::new(shape, data)
}
