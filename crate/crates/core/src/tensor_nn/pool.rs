use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Max pooling result plus the flat input index that won each window.
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

fn pool_dims(
    op: &'static str,
    input: &[usize],
    window: &[usize],
    stride: &[usize],
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(window.len());
    for (axis, (&n, (&k, &s))) in input.iter().zip(window.iter().zip(stride)).enumerate() {
        if k == 0 || s == 0 {
            return Err(Error::shape(op, "window and stride must be positive"));
        }
        if k > n {
            return Err(Error::shape(
                op,
                format!("window {k} larger than input {n} on axis {axis}"),
            ));
        }
        out.push((n - k) / s + 1);
    }
    Ok(out)
}

/// Valid-mode max pooling over `[H,W,C]`.
pub fn maxpool2d(x: &Tensor, window: [usize; 2], stride: [usize; 2]) -> Result<Pooled> {
    if x.rank() != 3 {
        return Err(Error::shape(
            "maxpool2d",
            format!("input must be [H,W,C], got {:?}", x.shape()),
        ));
    }
    let s = x.shape();
    let lifted = Tensor::new(vec![1, s[0], s[1], s[2]], x.data().to_vec())?;
    let p = maxpool3d(
        &lifted,
        [1, window[0], window[1]],
        [1, stride[0], stride[1]],
    )?;
    let o = p.output.shape();
    Ok(Pooled {
        output: Tensor::new(vec![o[1], o[2], o[3]], p.output.into_data())?,
        argmax: p.argmax,
    })
}

/// Valid-mode max pooling over `[T,H,W,C]`. Ties go to the first element in scan order.
pub fn maxpool3d(x: &Tensor, window: [usize; 3], stride: [usize; 3]) -> Result<Pooled> {
    if x.rank() != 4 {
        return Err(Error::shape(
            "maxpool3d",
            format!("input must be [T,H,W,C], got {:?}", x.shape()),
        ));
    }
    let s = x.shape();
    let o = pool_dims("maxpool3d", &s[..3], &window, &stride)?;
    let c = s[3];
    let data = x.data();
    let mut out = Vec::with_capacity(o[0] * o[1] * o[2] * c);
    let mut argmax = Vec::with_capacity(out.capacity());
    for ot in 0..o[0] {
        for oy in 0..o[1] {
            for ox in 0..o[2] {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for dt in 0..window[0] {
                        for dy in 0..window[1] {
                            for dx in 0..window[2] {
                                let (t, y, xx) = (
                                    ot * stride[0] + dt,
                                    oy * stride[1] + dy,
                                    ox * stride[2] + dx,
                                );
                                let i = ((t * s[1] + y) * s[2] + xx) * c + ch;
                                if data[i] > best || best_i == usize::MAX {
                                    best = data[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![o[0], o[1], o[2], c], out)?,
        argmax,
    })
}

pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&i, &d) in argmax.iter().zip(grad_out.data()) {
        gd[i] += d;
    }
    g
}
