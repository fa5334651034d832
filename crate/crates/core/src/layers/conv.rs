//! 2-D convolution lowered to matrix products through an im2col buffer, plus
//! the explicit dense-matrix form of the same linear map.

use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};

use super::ParamGrads;

/// Borrowed view of one convolution layer's parameters.
///
/// `kernels` is `[K, C, N_W, N_W]`, `bias` is `[K]`.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a> {
    pub kernels: &'a Tensor,
    pub bias: &'a Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernels: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.channels * self.kernel_width * self.kernel_width
    }

    fn out_len(&self) -> usize {
        self.out_height * self.out_width
    }
}

/// Output side length `floor((n + 2 pad - width) / stride) + 1`, or `None`
/// when the kernel does not fit in the padded input.
pub fn conv_output_size(n: usize, width: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if stride == 0 || width == 0 || width > padded {
        return None;
    }
    Some((padded - width) / stride + 1)
}

impl<'a> ConvParams<'a> {
    pub fn new(kernels: &'a Tensor, bias: &'a Tensor, stride: usize, padding: usize) -> Result<Self> {
        let p = Self {
            kernels,
            bias,
            stride,
            padding,
        };
        p.dims()?;
        Ok(p)
    }

    /// `(K, C, N_W)`
    fn dims(&self) -> Result<(usize, usize, usize)> {
        let &[k, c, h, w] = self.kernels.shape() else {
            return Err(Error::shape(format!(
                "conv kernels must be [K, C, N_W, N_W], got {:?}",
                self.kernels.shape()
            )));
        };
        if h != w {
            return Err(Error::shape(format!("conv kernels must be square, got {h}x{w}")));
        }
        if self.bias.shape() != [k] {
            return Err(Error::shape(format!(
                "conv bias must be [{k}], got {:?}",
                self.bias.shape()
            )));
        }
        if self.stride == 0 {
            return Err(Error::param("conv stride must be at least 1"));
        }
        Ok((k, c, h))
    }

    pub(crate) fn geometry(&self, input_shape: &[usize]) -> Result<ConvGeometry> {
        let (k, c, nw) = self.dims()?;
        let &[ic, h, w] = input_shape else {
            return Err(Error::shape(format!(
                "conv input must be [C, H, W], got {input_shape:?}"
            )));
        };
        if ic != c {
            return Err(Error::shape(format!(
                "conv expects {c} input channels, got {ic}"
            )));
        }
        let oh = conv_output_size(h, nw, self.stride, self.padding);
        let ow = conv_output_size(w, nw, self.stride, self.padding);
        let (Some(out_height), Some(out_width)) = (oh, ow) else {
            return Err(Error::shape(format!(
                "kernel {nw}x{nw} larger than padded input {h}x{w} (pad {})",
                self.padding
            )));
        };
        Ok(ConvGeometry {
            channels: c,
            height: h,
            width: w,
            kernels: k,
            kernel_width: nw,
            stride: self.stride,
            padding: self.padding,
            out_height,
            out_width,
        })
    }
}

/// Forward-pass state kept for [`conv2d_backward`].
#[derive(Debug)]
pub struct ConvContext {
    geometry: ConvGeometry,
    cols: Vec<f64>,
}

/// Unfold every receptive field into a column of a `[C*N_W*N_W, H'*W']` matrix.
fn im2col(g: &ConvGeometry, input: &[f64]) -> Vec<f64> {
    let (nw, ol) = (g.kernel_width, g.out_len());
    let mut cols = vec![0.0; g.patch_len() * ol];
    for c in 0..g.channels {
        for r in 0..nw {
            for s in 0..nw {
                let row = (c * nw + r) * nw + s;
                let dst = &mut cols[row * ol..(row + 1) * ol];
                for i in 0..g.out_height {
                    let y = (i * g.stride + r) as isize - g.padding as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let src = (c * g.height + y as usize) * g.width;
                    for j in 0..g.out_width {
                        let x = (j * g.stride + s) as isize - g.padding as isize;
                        if x >= 0 && x < g.width as isize {
                            dst[i * g.out_width + j] = input[src + x as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the input grid.
fn col2im(g: &ConvGeometry, cols: &[f64]) -> Vec<f64> {
    let (nw, ol) = (g.kernel_width, g.out_len());
    let mut out = vec![0.0; g.channels * g.height * g.width];
    for c in 0..g.channels {
        for r in 0..nw {
            for s in 0..nw {
                let row = (c * nw + r) * nw + s;
                let src = &cols[row * ol..(row + 1) * ol];
                for i in 0..g.out_height {
                    let y = (i * g.stride + r) as isize - g.padding as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let dst = (c * g.height + y as usize) * g.width;
                    for j in 0..g.out_width {
                        let x = (j * g.stride + s) as isize - g.padding as isize;
                        if x >= 0 && x < g.width as isize {
                            out[dst + x as usize] += src[i * g.out_width + j];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv2d_forward(input: &Tensor, p: ConvParams<'_>) -> Result<Tensor> {
    conv2d_forward_ctx(input, p).map(|(out, _)| out)
}

/// Convolution without activation; `out[k,i,j] = bias[k] + sum W[k,c,r,s] * x[c, i*stride-pad+r, j*stride-pad+s]`.
pub fn conv2d_forward_ctx(input: &Tensor, p: ConvParams<'_>) -> Result<(Tensor, ConvContext)> {
    let g = p.geometry(input.shape())?;
    let cols = im2col(&g, input.data());
    let ol = g.out_len();
    let mut out = Vec::with_capacity(g.kernels * ol);
    for &b in p.bias.data() {
        out.extend(std::iter::repeat_n(b, ol));
    }
    gemm_nn(g.kernels, g.patch_len(), ol, p.kernels.data(), &cols, &mut out);
    let out = Tensor::from_vec(&[g.kernels, g.out_height, g.out_width], out)?;
    Ok((out, ConvContext { geometry: g, cols }))
}

/// Reverse-mode gradients of a convolution. The input gradient is skipped
/// when `need_input_grad` is false.
pub fn conv2d_backward(
    ctx: ConvContext,
    p: ConvParams<'_>,
    upstream: &Tensor,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, ParamGrads)> {
    let g = ctx.geometry;
    if upstream.shape() != [g.kernels, g.out_height, g.out_width] {
        return Err(Error::shape(format!(
            "conv upstream gradient {:?} does not match forward output [{}, {}, {}]",
            upstream.shape(),
            g.kernels,
            g.out_height,
            g.out_width
        )));
    }
    let (pl, ol) = (g.patch_len(), g.out_len());
    let gy = upstream.data();
    let mut dw = vec![0.0; g.kernels * pl];
    gemm_nt(g.kernels, ol, pl, gy, &ctx.cols, &mut dw);
    let db: Vec<f64> = gy.chunks(ol).map(|row| row.iter().sum()).collect();
    let dx = if need_input_grad {
        let mut dcols = vec![0.0; pl * ol];
        gemm_tn(pl, g.kernels, ol, p.kernels.data(), gy, &mut dcols);
        Some(Tensor::from_vec(
            &[g.channels, g.height, g.width],
            col2im(&g, &dcols),
        )?)
    } else {
        None
    };
    Ok((
        dx,
        ParamGrads {
            weight: Tensor::from_vec(p.kernels.shape(), dw)?,
            bias: Tensor::from_vec(&[g.kernels], db)?,
        },
    ))
}

/// A convolution written out as an explicit dense matrix acting on the
/// flattened `[C, H, W]` input.
///
/// Row `(k, i, j)` holds the weights of output unit `h[k,i,j]`. An entry is
/// nonzero only inside that unit's receptive field, and every nonzero entry is
/// a copy of one kernel element, recorded in `ties`.
#[derive(Debug, Clone)]
pub struct DenseConv {
    /// `[K*H'*W', C*H*W]`
    pub matrix: Tensor,
    /// Bias expanded to one entry per output unit.
    pub bias: Tensor,
    /// For each matrix entry, the flat kernel index it is tied to, or `None`
    /// when the entry is structurally zero.
    pub ties: Vec<Option<usize>>,
    pub output_shape: [usize; 3],
}

impl DenseConv {
    /// `matrix * x + bias`, reshaped to the convolution output.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let x = input.flatten().reshape(&[input.len(), 1])?;
        let mut y = self.matrix.matmul(&x)?;
        y.axpy(1.0, &self.bias.clone().reshape(&[self.bias.len(), 1])?)?;
        y.reshape(&self.output_shape)
    }

    /// Gradient with respect to the kernels obtained from the dense matrix
    /// gradient `upstream * x^T` summed over each tie class.
    pub fn kernel_gradient(&self, input: &Tensor, upstream: &Tensor, kernel_len: usize) -> Vec<f64> {
        let cols = self.matrix.shape()[1];
        let mut g = vec![0.0; kernel_len];
        for (idx, tie) in self.ties.iter().enumerate() {
            if let Some(t) = tie {
                let (row, col) = (idx / cols, idx % cols);
                g[*t] += upstream.data()[row] * input.data()[col];
            }
        }
        g
    }

    /// `matrix^T * upstream`, reshaped to the convolution input.
    pub fn input_gradient(&self, upstream: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
        let (rows, cols) = (self.matrix.shape()[0], self.matrix.shape()[1]);
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            let gr = upstream.data()[r];
            for (o, &m) in out.iter_mut().zip(&self.matrix.data()[r * cols..(r + 1) * cols]) {
                *o += m * gr;
            }
        }
        Tensor::from_vec(input_shape, out)
    }
}

/// Build the dense, constrained matrix realizing the same linear map as
/// [`conv2d_forward`] on inputs of `input_shape`.
pub fn conv2d_as_dense(input_shape: &[usize], p: ConvParams<'_>) -> Result<DenseConv> {
    let g = p.geometry(input_shape)?;
    let nw = g.kernel_width;
    let rows = g.kernels * g.out_len();
    let cols = g.channels * g.height * g.width;
    let mut matrix = vec![0.0; rows * cols];
    let mut ties = vec![None; rows * cols];
    let kdata = p.kernels.data();
    for k in 0..g.kernels {
        for i in 0..g.out_height {
            for j in 0..g.out_width {
                let row = (k * g.out_height + i) * g.out_width + j;
                let top = (i * g.stride) as isize - g.padding as isize;
                let left = (j * g.stride) as isize - g.padding as isize;
                for c in 0..g.channels {
                    for y in 0..g.height {
                        let r = y as isize - top;
                        if r < 0 || r >= nw as isize {
                            continue;
                        }
                        for x in 0..g.width {
                            let s = x as isize - left;
                            if s < 0 || s >= nw as isize {
                                continue;
                            }
                            let col = (c * g.height + y) * g.width + x;
                            let kidx = ((k * g.channels + c) * nw + r as usize) * nw + s as usize;
                            matrix[row * cols + col] = kdata[kidx];
                            ties[row * cols + col] = Some(kidx);
                        }
                    }
                }
            }
        }
    }
    let bias: Vec<f64> = p
        .bias
        .data()
        .iter()
        .flat_map(|&b| std::iter::repeat_n(b, g.out_len()))
        .collect();
    Ok(DenseConv {
        matrix: Tensor::from_vec(&[rows, cols], matrix)?,
        bias: Tensor::from_vec(&[rows], bias)?,
        ties,
        output_shape: [g.kernels, g.out_height, g.out_width],
    })
}
