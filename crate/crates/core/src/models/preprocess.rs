use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::ImageFrame;
use crate::tensor_nn::Tensor;

/// Horizon crop, bilinear resize, scale to `[0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    /// Rows above this one are removed.
    pub horizon_row: usize,
    pub height: usize,
    pub width: usize,
}

pub fn preprocess(image: &ImageFrame, spec: &PreprocessSpec) -> Result<Tensor> {
    if spec.horizon_row >= image.height {
        return Err(Error::InvalidArgument(format!(
            "horizon row {} leaves an empty crop of a {}-row image",
            spec.horizon_row, image.height
        )));
    }
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::InvalidArgument("empty preprocessing target".into()));
    }
    let rows = image.height - spec.horizon_row;
    let start = 3 * spec.horizon_row * image.width;
    let crop: Vec<f64> = image.rgb[start..]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let crop = Tensor::new(vec![rows, image.width, 3], crop)?;
    Ok(bilinear_resize(&crop, spec.height, spec.width))
}

/// Half-pixel-centre bilinear resampling of `[H,W,C]`, edges clamped.
pub fn bilinear_resize(src: &Tensor, height: usize, width: usize) -> Tensor {
    let (sh, sw, c) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    if sh == height && sw == width {
        return src.clone();
    }
    let taps = |dst: usize, n_src: usize, n_dst: usize| {
        let pos =
            ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_src - 1);
        (lo, hi, pos - lo as f64)
    };
    let d = src.data();
    let mut out = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = taps(y, sh, height);
        for x in 0..width {
            let (x0, x1, fx) = taps(x, sw, width);
            for ch in 0..c {
                let p = |yy: usize, xx: usize| d[(yy * sw + xx) * c + ch];
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![height, width, c], out).expect("resize shape")
}
