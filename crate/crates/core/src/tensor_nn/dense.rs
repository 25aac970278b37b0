use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check(x: &Tensor, weight: &Tensor) -> Result<(usize, usize)> {
    if weight.rank() != 2 {
        return Err(Error::shape(
            "dense",
            format!("weight must be [n,m], got {:?}", weight.shape()),
        ));
    }
    let (n, m) = (weight.shape()[0], weight.shape()[1]);
    if x.rank() != 1 || x.len() != n {
        return Err(Error::shape(
            "dense",
            format!("input {:?} does not match weight rows {n}", x.shape()),
        ));
    }
    Ok((n, m))
}

/// `y = x W + b` for `x: [n]`, `W: [n,m]`, `b: [m]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, m) = check(x, weight)?;
    if bias.shape() != [m] {
        return Err(Error::shape(
            "dense",
            format!("bias {:?} does not match {m} units", bias.shape()),
        ));
    }
    let mut y = bias.data().to_vec();
    for (xi, row) in x.data().iter().zip(weight.data().chunks_exact(m)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, w) in y.iter_mut().zip(row) {
            *o += xi * w;
        }
    }
    Tensor::new(vec![m], y)
}

/// Returns `(dx, dW, db)`.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, m) = check(x, weight)?;
    if grad_out.shape() != [m] {
        return Err(Error::shape(
            "dense",
            format!("output gradient {:?}, expected [{m}]", grad_out.shape()),
        ));
    }
    let go = grad_out.data();
    let mut dx = vec![0.0; n];
    let mut dw = vec![0.0; n * m];
    for (i, row) in weight.data().chunks_exact(m).enumerate() {
        dx[i] = row.iter().zip(go).map(|(w, g)| w * g).sum();
        let xi = x.data()[i];
        for (d, g) in dw[i * m..(i + 1) * m].iter_mut().zip(go) {
            *d = xi * g;
        }
    }
    Ok((
        Tensor::new(vec![n], dx)?,
        Tensor::new(vec![n, m], dw)?,
        grad_out.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let x = Tensor::from_vec(vec![1.5, -2.0, 0.25]);
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(dense(&x, &w, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let b = Tensor::from_vec(vec![0.3, -0.7]);
        let w = Tensor::from_fn(&[4, 2], |i| i as f64);
        assert_eq!(dense(&Tensor::zeros(&[4]), &w, &b).unwrap(), b);
    }

    #[test]
    fn shape_errors() {
        let w = Tensor::zeros(&[4, 2]);
        assert!(dense(&Tensor::zeros(&[3]), &w, &Tensor::zeros(&[2])).is_err());
        assert!(dense(&Tensor::zeros(&[4]), &w, &Tensor::zeros(&[3])).is_err());
    }
}
