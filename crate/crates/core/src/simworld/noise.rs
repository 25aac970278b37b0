use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::ImageFrame;

/// Replaces each pixel by black or white (even odds) with probability `p`.
pub fn salt_pepper(image: &ImageFrame, p: f64, seed: u64) -> ImageFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    salt_pepper_with(image, p, &mut rng)
}

pub fn salt_pepper_with(image: &ImageFrame, p: f64, rng: &mut impl Rng) -> ImageFrame {
    let mut out = image.clone();
    if p <= 0.0 {
        return out;
    }
    for px in out.rgb.chunks_exact_mut(3) {
        if rng.random::<f64>() < p {
            let v = if rng.random::<bool>() { 255 } else { 0 };
            px.fill(v);
        }
    }
    out
}
