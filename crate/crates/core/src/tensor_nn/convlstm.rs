//! Convolutional LSTM without peepholes.
//!
//! Gate pre-activations are `conv(x, W) + conv(h, U) + b` with same padding and
//! unit stride; the 4·F output channels are laid out as `[i | f | g | o]`.

use super::activation::sigmoid_scalar;
use super::conv::{conv2d, conv2d_backward, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
pub struct ConvLstmParams<'a> {
    /// `[kh,kw,Cin,4F]`
    pub kernel: &'a Tensor,
    /// `[kh,kw,F,4F]`
    pub recurrent: &'a Tensor,
    /// `[4F]`
    pub bias: &'a Tensor,
}

impl ConvLstmParams<'_> {
    pub fn filters(&self) -> usize {
        self.bias.len() / 4
    }

    fn validate(&self) -> Result<usize> {
        let f4 = self.bias.len();
        if self.bias.rank() != 1 || !f4.is_multiple_of(4) {
            return Err(Error::shape(
                "convlstm2d",
                format!("bias {:?} is not [4F]", self.bias.shape()),
            ));
        }
        let f = f4 / 4;
        let k = self.kernel.shape();
        let r = self.recurrent.shape();
        if k.len() != 4 || k[3] != f4 {
            return Err(Error::shape(
                "convlstm2d",
                format!("kernel {k:?} is not [kh,kw,Cin,{f4}]"),
            ));
        }
        if r.len() != 4 || r[0] != k[0] || r[1] != k[1] || r[2] != f || r[3] != f4 {
            return Err(Error::shape(
                "convlstm2d",
                format!("recurrent kernel {r:?} is not [{},{},{f},{f4}]", k[0], k[1]),
            ));
        }
        Ok(f)
    }
}

/// Everything the backward pass of one step needs.
#[derive(Clone, Debug)]
pub struct StepCache {
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    /// Activated gates `[H,W,4F]` in `[i | f | g | o]` order.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub fn convlstm2d_step(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    p: ConvLstmParams<'_>,
) -> Result<(Tensor, Tensor)> {
    convlstm2d_step_cached(x, h_prev, c_prev, p).map(|(h, c, _)| (h, c))
}

pub fn convlstm2d_step_cached(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    p: ConvLstmParams<'_>,
) -> Result<(Tensor, Tensor, StepCache)> {
    let f = p.validate()?;
    if x.rank() != 3 {
        return Err(Error::shape(
            "convlstm2d",
            format!("input must be [H,W,C], got {:?}", x.shape()),
        ));
    }
    let (hh, ww) = (x.shape()[0], x.shape()[1]);
    let state = [hh, ww, f];
    if h_prev.shape() != state || c_prev.shape() != state {
        return Err(Error::shape(
            "convlstm2d",
            format!(
                "input spatial dims {:?} disagree with hidden {:?} / cell {:?}",
                &x.shape()[..2],
                h_prev.shape(),
                c_prev.shape()
            ),
        ));
    }
    let zx = conv2d(x, p.kernel, p.bias, [1, 1], Padding::Same)?;
    let zero_bias = Tensor::zeros(&[4 * f]);
    let zh = conv2d(h_prev, p.recurrent, &zero_bias, [1, 1], Padding::Same)?;
    let n = hh * ww;
    let mut gates = vec![0.0; n * 4 * f];
    let mut c = vec![0.0; n * f];
    let mut h = vec![0.0; n * f];
    let mut tanh_c = vec![0.0; n * f];
    let (zx, zh, cp) = (zx.data(), zh.data(), c_prev.data());
    for px in 0..n {
        let z = px * 4 * f;
        for j in 0..f {
            let i_g = sigmoid_scalar(zx[z + j] + zh[z + j]);
            let f_g = sigmoid_scalar(zx[z + f + j] + zh[z + f + j]);
            let g_g = (zx[z + 2 * f + j] + zh[z + 2 * f + j]).tanh();
            let o_g = sigmoid_scalar(zx[z + 3 * f + j] + zh[z + 3 * f + j]);
            gates[z + j] = i_g;
            gates[z + f + j] = f_g;
            gates[z + 2 * f + j] = g_g;
            gates[z + 3 * f + j] = o_g;
            let s = px * f + j;
            c[s] = f_g * cp[s] + i_g * g_g;
            tanh_c[s] = c[s].tanh();
            h[s] = o_g * tanh_c[s];
        }
    }
    let cache = StepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        gates,
        tanh_c,
    };
    Ok((
        Tensor::new(state.to_vec(), h)?,
        Tensor::new(state.to_vec(), c)?,
        cache,
    ))
}

pub struct StepGrads {
    pub x: Tensor,
    pub h_prev: Tensor,
    pub c_prev: Tensor,
    pub kernel: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

/// Back-propagates `dL/dh_t` and `dL/dc_t` through one step.
pub fn convlstm2d_step_backward(
    cache: &StepCache,
    p: ConvLstmParams<'_>,
    dh: &Tensor,
    dc: &Tensor,
) -> Result<StepGrads> {
    let f = p.validate()?;
    let n = cache.tanh_c.len() / f;
    let mut dz = vec![0.0; n * 4 * f];
    let mut dc_prev = vec![0.0; n * f];
    let (dh, dc, cp) = (dh.data(), dc.data(), cache.c_prev.data());
    for px in 0..n {
        let z = px * 4 * f;
        for j in 0..f {
            let s = px * f + j;
            let (i_g, f_g, g_g, o_g) = (
                cache.gates[z + j],
                cache.gates[z + f + j],
                cache.gates[z + 2 * f + j],
                cache.gates[z + 3 * f + j],
            );
            let tc = cache.tanh_c[s];
            let d_o = dh[s] * tc;
            let d_c = dc[s] + dh[s] * o_g * (1.0 - tc * tc);
            dz[z + j] = d_c * g_g * i_g * (1.0 - i_g);
            dz[z + f + j] = d_c * cp[s] * f_g * (1.0 - f_g);
            dz[z + 2 * f + j] = d_c * i_g * (1.0 - g_g * g_g);
            dz[z + 3 * f + j] = d_o * o_g * (1.0 - o_g);
            dc_prev[s] = d_c * f_g;
        }
    }
    let state_shape = cache.c_prev.shape().to_vec();
    let mut gate_shape = state_shape.clone();
    gate_shape[2] = 4 * f;
    let dz = Tensor::new(gate_shape, dz)?;
    let gx = conv2d_backward(&cache.x, p.kernel, [1, 1], Padding::Same, &dz)?;
    let gh = conv2d_backward(&cache.h_prev, p.recurrent, [1, 1], Padding::Same, &dz)?;
    Ok(StepGrads {
        x: gx.input,
        h_prev: gh.input,
        c_prev: Tensor::new(state_shape, dc_prev)?,
        kernel: gx.kernel,
        recurrent: gh.kernel,
        bias: gx.bias,
    })
}

/// Runs a ConvLSTM over `[T,H,W,Cin]` from zero state.
///
/// Returns `[T,H,W,F]` when `return_sequences`, otherwise the final hidden state `[H,W,F]`.
pub fn convlstm2d_sequence(
    xs: &Tensor,
    p: ConvLstmParams<'_>,
    return_sequences: bool,
) -> Result<(Tensor, Vec<StepCache>)> {
    let f = p.validate()?;
    if xs.rank() != 4 {
        return Err(Error::shape(
            "convlstm2d",
            format!("sequence must be [T,H,W,C], got {:?}", xs.shape()),
        ));
    }
    let s = xs.shape();
    let state = [s[1], s[2], f];
    let mut h = Tensor::zeros(&state);
    let mut c = Tensor::zeros(&state);
    let mut caches = Vec::with_capacity(s[0]);
    let mut outputs = Vec::with_capacity(s[0]);
    for t in 0..s[0] {
        let (h_next, c_next, cache) = convlstm2d_step_cached(&xs.outer(t), &h, &c, p)?;
        caches.push(cache);
        h = h_next;
        c = c_next;
        if return_sequences {
            outputs.push(h.clone());
        }
    }
    let out = if return_sequences {
        Tensor::stack(&outputs)?
    } else {
        h
    };
    Ok((out, caches))
}

pub struct SequenceGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

pub fn convlstm2d_sequence_backward(
    caches: &[StepCache],
    p: ConvLstmParams<'_>,
    return_sequences: bool,
    grad_out: &Tensor,
) -> Result<SequenceGrads> {
    let t_len = caches.len();
    let state_shape = caches[0].c_prev.shape().to_vec();
    let x_shape = caches[0].x.shape().to_vec();
    let mut dh = Tensor::zeros(&state_shape);
    let mut dc = Tensor::zeros(&state_shape);
    let mut d_kernel = Tensor::zeros(p.kernel.shape());
    let mut d_rec = Tensor::zeros(p.recurrent.shape());
    let mut d_bias = Tensor::zeros(p.bias.shape());
    let mut d_inputs = vec![Tensor::zeros(&x_shape); t_len];
    if !return_sequences {
        dh = grad_out.clone();
    }
    for t in (0..t_len).rev() {
        if return_sequences {
            dh.add_assign(&grad_out.outer(t));
        }
        let g = convlstm2d_step_backward(&caches[t], p, &dh, &dc)?;
        d_kernel.add_assign(&g.kernel);
        d_rec.add_assign(&g.recurrent);
        d_bias.add_assign(&g.bias);
        d_inputs[t] = g.x;
        dh = g.h_prev;
        dc = g.c_prev;
    }
    Ok(SequenceGrads {
        input: Tensor::stack(&d_inputs)?,
        kernel: d_kernel,
        recurrent: d_rec,
        bias: d_bias,
    })
}
