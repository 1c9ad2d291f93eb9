//! Summation of tensor networks without contracting them: matrix chains
//! are summed by widening the end links and block-diagonalizing the
//! interior, Tucker networks by concatenating factors per mode and
//! stacking the cores along the superdiagonal of a block tensor. In both
//! cases the represented sum is exact and only the ranks grow.

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};
use crate::tucker::TuckerNetwork;

/// Ordered list of conformable matrices representing their product.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixChain {
    links: Vec<Matrix>,
}

impl MatrixChain {
    pub fn new(links: Vec<Matrix>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::EmptyInput("matrix chain".into()));
        }
        for (n, pair) in links.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::ShapeMismatch(format!(
                    "link {n} has {} cols, link {} has {} rows",
                    pair[0].cols(),
                    n + 1,
                    pair[1].rows()
                )));
            }
        }
        Ok(Self { links })
    }

    pub fn links(&self) -> &[Matrix] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Boundary dimensions of the represented matrix.
    pub fn represented_dims(&self) -> (usize, usize) {
        (
            self.links[0].rows(),
            self.links[self.links.len() - 1].cols(),
        )
    }

    /// Left-to-right product of all links.
    pub fn contract(&self) -> Matrix {
        let mut acc = self.links[0].clone();
        for link in &self.links[1..] {
            acc = acc.matmul(link).expect("conformable by construction");
        }
        acc
    }
}

/// Superdiagonal block stack of two equal-order cores, with the source
/// shapes kept for structural checks. Off-block entries are exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCore {
    tensor: DenseTensor,
    first_shape: Vec<usize>,
    second_shape: Vec<usize>,
}

impl BlockCore {
    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    pub fn first_shape(&self) -> &[usize] {
        &self.first_shape
    }

    pub fn second_shape(&self) -> &[usize] {
        &self.second_shape
    }
}

/// Stacks gy after gx along every mode at once: the result has shape
/// (Qx+Qy, Rx+Ry, ...), gx occupies the leading block, gy the block offset
/// by gx's shape, and everything else is exactly zero.
pub fn superdiag_stack(gx: &DenseTensor, gy: &DenseTensor) -> Result<BlockCore> {
    if gx.order() != gy.order() {
        return Err(Error::ShapeMismatch(format!(
            "superdiagonal stack of order-{} with order-{}",
            gx.order(),
            gy.order()
        )));
    }
    let shape: Vec<usize> = gx
        .shape()
        .iter()
        .zip(gy.shape())
        .map(|(a, b)| a + b)
        .collect();
    let mut out = DenseTensor::zeros(shape)?;
    copy_block(&mut out, gx, &vec![0; gx.order()]);
    copy_block(&mut out, gy, gx.shape());
    Ok(BlockCore {
        tensor: out,
        first_shape: gx.shape().to_vec(),
        second_shape: gy.shape().to_vec(),
    })
}

/// Writes src into dst at the given per-mode offset.
fn copy_block(dst: &mut DenseTensor, src: &DenseTensor, offset: &[usize]) {
    let order = src.order();
    let mut idx = vec![0usize; order];
    let mut dst_idx = offset.to_vec();
    loop {
        dst.set(&dst_idx, src.get(&idx));
        let mut k = 0;
        loop {
            if k == order {
                return;
            }
            idx[k] += 1;
            dst_idx[k] += 1;
            if idx[k] < src.shape()[k] {
                break;
            }
            idx[k] = 0;
            dst_idx[k] = offset[k];
            k += 1;
        }
    }
}

/// Sums two matrix chains of equal length and boundary dimensions: the
/// first links concatenate side by side, the last links stack, and every
/// interior link becomes a diagonal block pair. The product of the result
/// equals the sum of the two chain products.
pub fn sum_chains(x: &MatrixChain, y: &MatrixChain) -> Result<MatrixChain> {
    if x.num_links() != y.num_links() {
        return Err(Error::ShapeMismatch(format!(
            "chain lengths {} and {}",
            x.num_links(),
            y.num_links()
        )));
    }
    if x.num_links() < 2 {
        return Err(Error::InvalidArgument(
            "chain summation needs length >= 2".into(),
        ));
    }
    let (xi, xj) = x.represented_dims();
    let (yi, yj) = y.represented_dims();
    if xi != yi || xj != yj {
        return Err(Error::ShapeMismatch(format!(
            "represented dimensions {xi}x{xj} and {yi}x{yj}"
        )));
    }
    let n = x.num_links();
    let mut links = Vec::with_capacity(n);
    links.push(x.links()[0].hconcat(&y.links()[0])?);
    for k in 1..n - 1 {
        links.push(x.links()[k].block_diag(&y.links()[k]));
    }
    links.push(x.links()[n - 1].vconcat(&y.links()[n - 1])?);
    MatrixChain::new(links)
}

/// Sums two Tucker networks over the same physical dimensions: factors
/// concatenate per mode, cores stack along the superdiagonal. The result
/// reconstructs to the sum of the operands' reconstructions; its ranks
/// are the modewise sums of the operand ranks.
pub fn sum_tucker(x: &TuckerNetwork, y: &TuckerNetwork) -> Result<TuckerNetwork> {
    if x.order() != y.order() {
        return Err(Error::ShapeMismatch(format!(
            "summing order-{} with order-{}",
            x.order(),
            y.order()
        )));
    }
    for n in 0..x.order() {
        if x.factor(n).rows() != y.factor(n).rows() {
            return Err(Error::ShapeMismatch(format!(
                "mode {n} has physical dimension {} vs {}",
                x.factor(n).rows(),
                y.factor(n).rows()
            )));
        }
    }
    let mut factors = Vec::with_capacity(x.order());
    for n in 0..x.order() {
        factors.push(x.factor(n).hconcat(y.factor(n))?);
    }
    let core = superdiag_stack(x.core(), y.core())?.into_tensor();
    TuckerNetwork::new(core, factors)
}

/// Left-fold of pairwise sums over one or more networks.
pub fn sum_many(nets: &[TuckerNetwork]) -> Result<TuckerNetwork> {
    let mut iter = nets.iter().enumerate();
    let (_, first) = iter
        .next()
        .ok_or_else(|| Error::EmptyInput("no networks to sum".into()))?;
    let mut acc = first.clone();
    for (i, net) in iter {
        acc = sum_tucker(&acc, net).map_err(|e| {
            Error::ShapeMismatch(format!("network {i} incompatible with networks 0..{i}: {e}"))
        })?;
    }
    Ok(acc)
}
