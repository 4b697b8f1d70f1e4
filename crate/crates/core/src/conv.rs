//! N-dimensional (1/2/3-D) cross-correlation with zero padding.
//!
//! Kernels are applied without flipping, the usual machine-learning
//! convention. Lower ranks are handled by padding the spatial shape to three
//! axes with unit extents.

use crate::error::{Result, TensorError};
use crate::model::infer_conv_output_size;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Resolved sizes of a batched convolution, spatial axes padded to 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub rank: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    /// `input` is `[B, C_in, spatial...]`, `kernel` is `[C_out, C_in, k...]`.
    pub fn resolve(
        input: &[usize],
        kernel: &[usize],
        stride: &[usize],
        padding: &[usize],
    ) -> Result<Self> {
        let rank = input.len().saturating_sub(2);
        if !(1..=3).contains(&rank) {
            return Err(TensorError::Config(format!(
                "convolution needs 1 to 3 spatial axes, got input shape {input:?}"
            )));
        }
        if kernel.len() != rank + 2 || kernel[1] != input[1] {
            return Err(TensorError::Shape {
                op: "convolve_nd",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        if stride.len() != rank || padding.len() != rank {
            return Err(TensorError::Config(format!(
                "stride {stride:?} and padding {padding:?} must have {rank} entries"
            )));
        }
        let mut g = ConvGeometry {
            batch: input[0],
            c_in: input[1],
            c_out: kernel[0],
            rank,
            input: [1; 3],
            kernel: [1; 3],
            stride: [1; 3],
            padding: [0; 3],
            output: [1; 3],
        };
        let off = 3 - rank;
        for axis in 0..rank {
            let out = infer_conv_output_size(input[2 + axis], kernel[2 + axis], stride[axis], padding[axis])
                .map_err(|e| TensorError::Config(format!("spatial axis {axis}: {e}")))?;
            g.input[off + axis] = input[2 + axis];
            g.kernel[off + axis] = kernel[2 + axis];
            g.stride[off + axis] = stride[axis];
            g.padding[off + axis] = padding[axis];
            g.output[off + axis] = out;
        }
        Ok(g)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let mut s = vec![self.batch, self.c_out];
        s.extend_from_slice(&self.output[3 - self.rank..]);
        s
    }

    fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    fn k_len(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Input coordinate along `axis` for output index `o` and kernel tap `k`,
    /// or `None` when it falls into the zero padding.
    #[inline]
    fn source(&self, axis: usize, o: usize, k: usize) -> Option<usize> {
        let pos = (o * self.stride[axis] + k) as isize - self.padding[axis] as isize;
        (pos >= 0 && (pos as usize) < self.input[axis]).then_some(pos as usize)
    }

    /// Calls `f(input_offset_within_channel, output_offset_within_channel,
    /// kernel_offset_within_slice)` for every valid tap, in a fixed order.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        let [kd, kh, kw] = self.kernel;
        for od in 0..self.output[0] {
            for ohi in 0..oh {
                for owi in 0..ow {
                    let o = (od * oh + ohi) * ow + owi;
                    for a in 0..kd {
                        let Some(id) = self.source(0, od, a) else { continue };
                        for b in 0..kh {
                            let Some(ihi) = self.source(1, ohi, b) else { continue };
                            for c in 0..kw {
                                let Some(iwi) = self.source(2, owi, c) else { continue };
                                f((id * ih + ihi) * iw + iwi, o, (a * kh + b) * kw + c);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(g: &ConvGeometry, x: &[T], w: &[T], bias: &[T]) -> Vec<T> {
    let (il, ol, kl) = (g.in_len(), g.out_len(), g.k_len());
    let mut out = vec![T::zero(); g.batch * g.c_out * ol];
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let y = &mut out[(b * g.c_out + co) * ol..][..ol];
            y.fill(bias[co]);
            for ci in 0..g.c_in {
                let xs = &x[(b * g.c_in + ci) * il..][..il];
                let ws = &w[(co * g.c_in + ci) * kl..][..kl];
                g.for_each_tap(|i, o, k| y[o] += xs[i] * ws[k]);
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel, d_bias)` for upstream gradient `gy`.
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    gy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (il, ol, kl) = (g.in_len(), g.out_len(), g.k_len());
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); g.c_out];
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let dy = &gy[(b * g.c_out + co) * ol..][..ol];
            gb[co] += dy.iter().copied().sum();
            for ci in 0..g.c_in {
                let xs = &x[(b * g.c_in + ci) * il..][..il];
                let ws = &w[(co * g.c_in + ci) * kl..][..kl];
                let dx = &mut gx[(b * g.c_in + ci) * il..][..il];
                let dw = &mut gw[(co * g.c_in + ci) * kl..][..kl];
                g.for_each_tap(|i, o, k| {
                    dx[i] += dy[o] * ws[k];
                    dw[k] += dy[o] * xs[i];
                });
            }
        }
    }
    (gx, gw, gb)
}

/// Cross-correlates a single sample `[C_in × spatial...]` with kernels
/// `[C_out × C_in × k...]`, adding one bias per output channel.
pub fn convolve_nd<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
    stride: &[usize],
    padding: &[usize],
) -> Result<Tensor<T>> {
    let mut batched = vec![1];
    batched.extend_from_slice(input.shape());
    let g = ConvGeometry::resolve(&batched, kernels.shape(), stride, padding)?;
    if bias.len() != g.c_out {
        return Err(TensorError::Shape {
            op: "convolve_nd bias",
            lhs: vec![g.c_out],
            rhs: vec![bias.len()],
        });
    }
    let out = conv_forward(&g, input.data(), kernels.data(), bias);
    Ok(Tensor::from_parts(g.output_shape()[1..].to_vec(), out))
}
