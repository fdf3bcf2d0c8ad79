//! Dense order-D tensors with mode unfolding, folding and mode products.
//!
//! Values are stored with the first mode varying fastest. The mode-`j`
//! unfolding is a `d_j x (prod of the other extents)` matrix whose column
//! index enumerates the remaining modes lexicographically, lowest remaining
//! mode fastest. Modes are zero-based throughout the API.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Magic prefix of the binary tensor format.
pub const TENSOR_MAGIC: &[u8; 8] = b"MBDATNSR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        })
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.data.fill(value);
        Ok(t)
    }

    /// Wraps values given in canonical layout (first mode fastest).
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        validate_dims(dims)?;
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0usize; dims.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            for (i, d) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < *d {
                    break;
                }
                *i = 0;
            }
        }
        Ok(t)
    }

    /// Views a matrix as an order-2 tensor (rows are mode 0).
    pub fn from_matrix(m: &Matrix) -> Self {
        let (rows, cols) = m.shape();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[i + rows * j] = m[(i, j)];
            }
        }
        Self {
            dims: vec![rows, cols],
            data,
        }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values in canonical layout.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        let mut off = 0;
        let mut stride = 1;
        for (i, d) in index.iter().zip(&self.dims) {
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.order(), "index arity");
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        assert_eq!(index.len(), self.order(), "index arity");
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::InvalidMode {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Product of the extents of modes below `mode`.
    fn inner_size(&self, mode: usize) -> usize {
        self.dims[..mode].iter().product()
    }

    /// Mode-`mode` unfolding.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let rows = self.dims[mode];
        let inner = self.inner_size(mode);
        let outer = self.data.len() / (inner * rows);
        let cols = inner * outer;
        let mut out = vec![0.0; rows * cols];
        for h in 0..outer {
            for r in 0..rows {
                let src = &self.data[inner * (r + rows * h)..inner * (r + rows * h + 1)];
                out[r * cols + h * inner..r * cols + (h + 1) * inner].copy_from_slice(src);
            }
        }
        Matrix::from_row_major(rows, cols, out)
    }

    /// Inverse of [`Tensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<Tensor> {
        validate_dims(dims)?;
        if mode >= dims.len() {
            return Err(Error::InvalidMode {
                mode,
                order: dims.len(),
            });
        }
        let rows = dims[mode];
        let inner: usize = dims[..mode].iter().product();
        let outer: usize = dims[mode + 1..].iter().product();
        if m.rows() != rows || m.cols() != inner * outer {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {dims:?}",
                m.rows(),
                m.cols()
            )));
        }
        let cols = m.cols();
        let src = m.as_slice();
        let mut data = vec![0.0; rows * cols];
        for h in 0..outer {
            for r in 0..rows {
                data[inner * (r + rows * h)..inner * (r + rows * h + 1)]
                    .copy_from_slice(&src[r * cols + h * inner..r * cols + (h + 1) * inner]);
            }
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Mode product `self x_mode w`: every mode fiber is multiplied by `w`.
    pub fn mode_product(&self, w: &Matrix, mode: usize) -> Result<Tensor> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        if w.cols() != d {
            return Err(Error::DimensionMismatch(format!(
                "mode {mode} has extent {d}, matrix is {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        let r_out = w.rows();
        let inner = self.inner_size(mode);
        let outer = self.data.len() / (inner * d);
        let mut dims = self.dims.clone();
        dims[mode] = r_out;
        let mut out = vec![0.0; inner * r_out * outer];
        for h in 0..outer {
            for r in 0..r_out {
                let dst = &mut out[inner * (r + r_out * h)..inner * (r + r_out * h + 1)];
                for (c, &coef) in w.row(r).iter().enumerate() {
                    if coef == 0.0 {
                        continue;
                    }
                    let src = &self.data[inner * (c + d * h)..inner * (c + d * h + 1)];
                    for (o, s) in dst.iter_mut().zip(src) {
                        *o += coef * s;
                    }
                }
            }
        }
        Ok(Tensor { dims, data: out })
    }

    /// `unfold(mode) * unfold(mode)^T` without materializing the unfolding.
    pub fn mode_gram(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        let mut out = Matrix::zeros(d, d);
        self.add_mode_gram_to(mode, 1.0, &mut out)?;
        Ok(out)
    }

    /// Accumulates `weight * unfold(mode) * unfold(mode)^T` into `acc`.
    pub fn add_mode_gram_to(&self, mode: usize, weight: f64, acc: &mut Matrix) -> Result<()> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        if acc.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "accumulator {:?} for mode extent {d}",
                acc.shape()
            )));
        }
        let inner = self.inner_size(mode);
        let outer = self.data.len() / (inner * d);
        let mut local = vec![0.0; d * d];
        for h in 0..outer {
            let block = &self.data[inner * d * h..inner * d * (h + 1)];
            for r in 0..d {
                let fr = &block[inner * r..inner * (r + 1)];
                for s in r..d {
                    let fs = &block[inner * s..inner * (s + 1)];
                    local[r * d + s] += crate::matrix::dot(fr, fs);
                }
            }
        }
        for r in 0..d {
            for s in r..d {
                let v = weight * local[r * d + s];
                acc[(r, s)] += v;
                if r != s {
                    acc[(s, r)] += v;
                }
            }
        }
        Ok(())
    }

    /// Squared Euclidean distance between two tensors of identical shape.
    pub fn sq_distance(&self, other: &Tensor) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_dims(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    fn check_same_dims(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Entrywise arithmetic mean of a nonempty list of equally shaped tensors.
    pub fn mean<'a, I>(samples: I) -> Result<Tensor>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let mut iter = samples.into_iter();
        let first = iter.next().ok_or(Error::Empty("mean of no tensors"))?;
        let mut acc = first.data.clone();
        let mut count = 1usize;
        for t in iter {
            first.check_same_dims(t)?;
            for (a, v) in acc.iter_mut().zip(&t.data) {
                *a += v;
            }
            count += 1;
        }
        let n = count as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(Tensor {
            dims: first.dims.clone(),
            data: acc,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_u32::<LittleEndian>(to_u32(self.order())?)?;
        for d in &self.dims {
            w.write_u32::<LittleEndian>(to_u32(*d)?)?;
        }
        for v in &self.data {
            w.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Tensor> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Format("bad tensor magic".into()));
        }
        let order = r.read_u32::<LittleEndian>()? as usize;
        if order == 0 {
            return Err(Error::Format("tensor order 0".into()));
        }
        let dims = (0..order)
            .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        validate_dims(&dims)?;
        let n: usize = dims.iter().product();
        let mut data = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        Tensor::from_vec(&dims, data)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("tensor needs at least one mode".into()));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("zero extent in {dims:?}")));
    }
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))
}
