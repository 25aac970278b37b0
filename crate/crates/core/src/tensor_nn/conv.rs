//! Channel-last cross-correlation over (time, height, width).
//!
//! `conv2d` is the `kt = 1` special case of `conv3d`; both share one forward
//! and one backward kernel so the gradient code is written once.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

/// Output length and leading pad along one axis.
///
/// `same` pads symmetrically with the odd pixel going to the end.
pub fn axis_geometry(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Option<(usize, usize)> {
    if kernel == 0 || stride == 0 {
        return None;
    }
    match padding {
        Padding::Valid => {
            if kernel > input {
                None
            } else {
                Some(((input - kernel) / stride + 1, 0))
            }
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    output: [usize; 3],
    cin: usize,
    cout: usize,
}

fn geometry(
    op: &'static str,
    input: &[usize],
    kernel: &[usize],
    bias: Option<&[usize]>,
    stride: [usize; 3],
    padding: Padding,
) -> Result<Geometry> {
    if input.len() != 4 {
        return Err(Error::shape(
            op,
            format!("input must be [T,H,W,C], got {input:?}"),
        ));
    }
    if kernel.len() != 5 {
        return Err(Error::shape(
            op,
            format!("kernel must be [kt,kh,kw,Cin,Cout], got {kernel:?}"),
        ));
    }
    let cin = input[3];
    if kernel[3] != cin {
        return Err(Error::shape(
            op,
            format!("input channels {cin} do not match kernel Cin {}", kernel[3]),
        ));
    }
    let cout = kernel[4];
    if let Some(b) = bias {
        if b != [cout] {
            return Err(Error::shape(
                op,
                format!("bias shape {b:?} does not match Cout {cout}"),
            ));
        }
    }
    let names = ["time", "height", "width"];
    let mut out = [0; 3];
    let mut pad = [0; 3];
    for axis in 0..3 {
        let (o, p) =
            axis_geometry(input[axis], kernel[axis], stride[axis], padding).ok_or_else(|| {
                Error::shape(
                    op,
                    format!(
                        "{} axis: kernel {} with stride {} does not fit input {}",
                        names[axis], kernel[axis], stride[axis], input[axis]
                    ),
                )
            })?;
        out[axis] = o;
        pad[axis] = p;
    }
    Ok(Geometry {
        input: [input[0], input[1], input[2]],
        kernel: [kernel[0], kernel[1], kernel[2]],
        stride,
        pad,
        output: out,
        cin,
        cout,
    })
}

#[inline]
fn source_index(out: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
    let pos = (out * stride + k).checked_sub(pad)?;
    (pos < len).then_some(pos)
}

fn forward_kernel(g: &Geometry, input: &[f64], kernel: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let [t_in, h_in, w_in] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [ot_n, oh_n, ow_n] = g.output;
    let (cin, cout) = (g.cin, g.cout);
    let mut out = vec![0.0; ot_n * oh_n * ow_n * cout];
    for ot in 0..ot_n {
        for oy in 0..oh_n {
            for ox in 0..ow_n {
                let o_off = ((ot * oh_n + oy) * ow_n + ox) * cout;
                let row = &mut out[o_off..o_off + cout];
                if let Some(b) = bias {
                    row.copy_from_slice(b);
                }
                for dt in 0..kt {
                    let Some(it) = source_index(ot, dt, g.stride[0], g.pad[0], t_in) else {
                        continue;
                    };
                    for dy in 0..kh {
                        let Some(iy) = source_index(oy, dy, g.stride[1], g.pad[1], h_in) else {
                            continue;
                        };
                        for dx in 0..kw {
                            let Some(ix) = source_index(ox, dx, g.stride[2], g.pad[2], w_in) else {
                                continue;
                            };
                            let i_off = ((it * h_in + iy) * w_in + ix) * cin;
                            let k_off = ((dt * kh + dy) * kw + dx) * cin * cout;
                            for ci in 0..cin {
                                let x = input[i_off + ci];
                                if x == 0.0 {
                                    continue;
                                }
                                let k_row = &kernel[k_off + ci * cout..k_off + (ci + 1) * cout];
                                for (o, k) in row.iter_mut().zip(k_row) {
                                    *o += x * k;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a cross-correlation with respect to its input, kernel and bias.
pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

fn backward_kernel(
    g: &Geometry,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [t_in, h_in, w_in] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [ot_n, oh_n, ow_n] = g.output;
    let (cin, cout) = (g.cin, g.cout);
    let mut d_in = vec![0.0; input.len()];
    let mut d_k = vec![0.0; kernel.len()];
    let mut d_b = vec![0.0; cout];
    for ot in 0..ot_n {
        for oy in 0..oh_n {
            for ox in 0..ow_n {
                let o_off = ((ot * oh_n + oy) * ow_n + ox) * cout;
                let go = &grad_out[o_off..o_off + cout];
                for (b, d) in d_b.iter_mut().zip(go) {
                    *b += d;
                }
                for dt in 0..kt {
                    let Some(it) = source_index(ot, dt, g.stride[0], g.pad[0], t_in) else {
                        continue;
                    };
                    for dy in 0..kh {
                        let Some(iy) = source_index(oy, dy, g.stride[1], g.pad[1], h_in) else {
                            continue;
                        };
                        for dx in 0..kw {
                            let Some(ix) = source_index(ox, dx, g.stride[2], g.pad[2], w_in) else {
                                continue;
                            };
                            let i_off = ((it * h_in + iy) * w_in + ix) * cin;
                            let k_off = ((dt * kh + dy) * kw + dx) * cin * cout;
                            for ci in 0..cin {
                                let x = input[i_off + ci];
                                let r = k_off + ci * cout..k_off + (ci + 1) * cout;
                                let k_row = &kernel[r.clone()];
                                let mut acc = 0.0;
                                for (k, d) in k_row.iter().zip(go) {
                                    acc += k * d;
                                }
                                d_in[i_off + ci] += acc;
                                if x != 0.0 {
                                    for (dk, d) in d_k[r].iter_mut().zip(go) {
                                        *dk += x * d;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (d_in, d_k, d_b)
}

/// 3-D cross-correlation: input `[T,H,W,Cin]`, kernel `[kt,kh,kw,Cin,Cout]`, bias `[Cout]`.
pub fn conv3d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: [usize; 3],
    padding: Padding,
) -> Result<Tensor> {
    let g = geometry(
        "conv3d",
        input.shape(),
        kernel.shape(),
        Some(bias.shape()),
        stride,
        padding,
    )?;
    let out = forward_kernel(&g, input.data(), kernel.data(), Some(bias.data()));
    Tensor::new(vec![g.output[0], g.output[1], g.output[2], g.cout], out)
}

pub fn conv3d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: [usize; 3],
    padding: Padding,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let g = geometry(
        "conv3d",
        input.shape(),
        kernel.shape(),
        None,
        stride,
        padding,
    )?;
    let expected = [g.output[0], g.output[1], g.output[2], g.cout];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv3d",
            format!(
                "output gradient {:?}, expected {expected:?}",
                grad_out.shape()
            ),
        ));
    }
    let (d_in, d_k, d_b) = backward_kernel(&g, input.data(), kernel.data(), grad_out.data());
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), d_in)?,
        kernel: Tensor::new(kernel.shape().to_vec(), d_k)?,
        bias: Tensor::new(vec![g.cout], d_b)?,
    })
}

fn lift2d(op: &'static str, input: &Tensor, kernel: &Tensor) -> Result<(Vec<usize>, Vec<usize>)> {
    if input.rank() != 3 {
        return Err(Error::shape(
            op,
            format!("input must be [H,W,C], got {:?}", input.shape()),
        ));
    }
    if kernel.rank() != 4 {
        return Err(Error::shape(
            op,
            format!("kernel must be [kh,kw,Cin,Cout], got {:?}", kernel.shape()),
        ));
    }
    let mut i = vec![1];
    i.extend_from_slice(input.shape());
    let mut k = vec![1];
    k.extend_from_slice(kernel.shape());
    Ok((i, k))
}

/// 2-D cross-correlation: input `[H,W,Cin]`, kernel `[kh,kw,Cin,Cout]`, bias `[Cout]`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: [usize; 2],
    padding: Padding,
) -> Result<Tensor> {
    let (i_shape, k_shape) = lift2d("conv2d", input, kernel)?;
    let g = geometry(
        "conv2d",
        &i_shape,
        &k_shape,
        Some(bias.shape()),
        [1, stride[0], stride[1]],
        padding,
    )?;
    let out = forward_kernel(&g, input.data(), kernel.data(), Some(bias.data()));
    Tensor::new(vec![g.output[1], g.output[2], g.cout], out)
}

pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: [usize; 2],
    padding: Padding,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (i_shape, k_shape) = lift2d("conv2d", input, kernel)?;
    let g = geometry(
        "conv2d",
        &i_shape,
        &k_shape,
        None,
        [1, stride[0], stride[1]],
        padding,
    )?;
    let expected = [g.output[1], g.output[2], g.cout];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d",
            format!(
                "output gradient {:?}, expected {expected:?}",
                grad_out.shape()
            ),
        ));
    }
    let (d_in, d_k, d_b) = backward_kernel(&g, input.data(), kernel.data(), grad_out.data());
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), d_in)?,
        kernel: Tensor::new(kernel.shape().to_vec(), d_k)?,
        bias: Tensor::new(vec![g.cout], d_b)?,
    })
}

/// Output shape of a 2-D convolution over `[H,W,C]`, or `None` if the kernel does not fit.
pub fn conv2d_output_shape(
    input: &[usize],
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: Padding,
    filters: usize,
) -> Option<Vec<usize>> {
    let (h, _) = axis_geometry(input[0], kernel[0], stride[0], padding)?;
    let (w, _) = axis_geometry(input[1], kernel[1], stride[1], padding)?;
    Some(vec![h, w, filters])
}
