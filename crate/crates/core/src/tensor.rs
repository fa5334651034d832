//! Dense row-major tensors of `f64` and the handful of primitives the
//! layers are built from.
//!
//! Images are stored channel-first, `[C, H, W]`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Magic bytes opening every serialized tensor.
pub const TENSOR_MAGIC: [u8; 4] = *b"DCNT";
/// Current version of the raw tensor binary format.
pub const TENSOR_VERSION: u32 = 1;

/// Statistic used by [`Tensor::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
    /// Index of the maximum, stored as `f64`. Ties resolve to the lowest index.
    Argmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn full(shape: &[usize], fill: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Flattened rank-1 copy.
    pub fn flatten(&self) -> Self {
        Self {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.offset(index).map(|o| self.data[o])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let o = self
            .offset(index)
            .ok_or_else(|| Error::Range(format!("index {index:?} outside {:?}", self.shape)))?;
        self.data[o] = value;
        Ok(())
    }

    /// Copy of the `i`-th slice along the leading axis.
    pub fn slice_outer(&self, i: usize) -> Result<Self> {
        if self.rank() < 2 || i >= self.shape[0] {
            return Err(Error::Range(format!(
                "outer index {i} invalid for shape {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        })
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(format!(
                    "stack of mismatched shapes {:?} and {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Self { shape, data })
    }

    /// Standard matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape(format!(
                "matmul of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, &self.data, &other.data, &mut out);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(Error::shape(format!("expected [C, H, W], got {s:?}"))),
        }
    }

    /// Sub-window `[top, top + h) x [left, left + w)` of every channel.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        let (c, hh, ww) = self.chw()?;
        if h == 0 || w == 0 || top + h > hh || left + w > ww {
            return Err(Error::Range(format!(
                "crop {h}x{w} at ({top}, {left}) outside {hh}x{ww}"
            )));
        }
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in top..top + h {
                let row = (ch * hh + y) * ww;
                data.extend_from_slice(&self.data[row + left..row + left + w]);
            }
        }
        Ok(Self {
            shape: vec![c, h, w],
            data,
        })
    }

    /// Reverse the width axis of every channel.
    pub fn mirror_horizontal(&self) -> Result<Self> {
        let (_, _, w) = self.chw()?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(w) {
            row.reverse();
        }
        Ok(out)
    }

    /// Collapse `axis` with the given statistic. Reducing the only axis of a
    /// rank-1 tensor yields shape `[1]`.
    pub fn reduce(&self, op: Reduce, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(Error::shape(format!(
                "axis {axis} invalid for rank {}",
                self.rank()
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| self.data[(o * len + j) * inner + i];
                let v = match op {
                    Reduce::Sum => (0..len).map(at).sum(),
                    Reduce::Mean => (0..len).map(at).sum::<f64>() / len as f64,
                    Reduce::Max => (0..len).map(at).fold(f64::NEG_INFINITY, f64::max),
                    Reduce::Argmax => argmax_by(len, at) as f64,
                };
                out.push(v);
            }
        }
        let mut shape: Vec<usize> = self.shape[..axis].to_vec();
        shape.extend_from_slice(&self.shape[axis + 1..]);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self { shape, data: out })
    }

    /// `self += alpha * other`, elementwise.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "axpy of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Serialize in the raw tensor binary format.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&TENSOR_MAGIC)?;
        w.write_all(&TENSOR_VERSION.to_le_bytes())?;
        w.write_all(&(self.rank() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for &x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.rank() + self.len()));
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parse one tensor in the raw binary format from a reader.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if magic != TENSOR_MAGIC {
            return Err(Error::format(format!("bad tensor magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != TENSOR_VERSION {
            return Err(Error::format(format!(
                "unsupported tensor version {version}"
            )));
        }
        let rank = read_u32(r)? as usize;
        if rank == 0 || rank > 16 {
            return Err(Error::format(format!("implausible tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = read_u64(r)?;
            shape.push(usize::try_from(d).map_err(|_| Error::format("dimension overflow"))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("element count overflow"))?;
        if n == 0 {
            return Err(Error::format(format!("zero dimension in {shape:?}")));
        }
        let mut bytes = vec![0u8; n.checked_mul(8).ok_or_else(|| Error::format("size overflow"))?];
        read_exact(r, &mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { shape, data })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let t = Self::read_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::format(format!(
                "{} trailing bytes after tensor",
                bytes.len()
            )));
        }
        Ok(t)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format(format!("truncated tensor data: {e}")))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Index of the largest of `len` values; the first one wins ties.
pub(crate) fn argmax_by(len: usize, at: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_v = at(0);
    for j in 1..len {
        let v = at(j);
        if v > best_v {
            best = j;
            best_v = v;
        }
    }
    best
}

#[cfg(test)]
pub(crate) fn argmax(xs: &[f64]) -> usize {
    argmax_by(xs.len(), |i| xs[i])
}

// Row-major GEMM kernels. `c` is accumulated into, never overwritten.

/// c[m,n] += a[m,k] * b[k,n]
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aip * bv;
            }
        }
    }
}

/// c[m,n] += a[m,k] * b[n,k]^T
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            c[i * n + j] += dot;
        }
    }
}

/// c[m,n] += a[k,m]^T * b[k,n]
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += api * bv;
            }
        }
    }
}
