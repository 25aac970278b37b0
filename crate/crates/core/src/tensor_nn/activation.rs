use super::tensor::Tensor;

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    zip_map(input, grad_out, |x, g| if x > 0.0 { g } else { 0.0 })
}

/// Takes the forward *output*.
pub fn tanh_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    zip_map(output, grad_out, |y, g| g * (1.0 - y * y))
}

/// Takes the forward *output*.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    zip_map(output, grad_out, |y, g| g * y * (1.0 - y))
}

/// Output head for a 2-vector: sigmoid on the linear-speed unit, tanh on the angular one.
pub fn command_head(x: &Tensor) -> Tensor {
    let d = x.data();
    Tensor::from_vec(vec![sigmoid_scalar(d[0]), d[1].tanh()])
}

pub fn command_head_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let (y, g) = (output.data(), grad_out.data());
    Tensor::from_vec(vec![g[0] * y[0] * (1.0 - y[0]), g[1] * (1.0 - y[1] * y[1])])
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape as input")
}
