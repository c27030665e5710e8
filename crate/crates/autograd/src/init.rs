//! Parameter initialisation.

use rand::Rng;

use crate::Tensor;

/// He-uniform weights for a `Cout × Cin × kh × kw` convolution, scaled by
/// `gain`.
pub fn conv_weight<R: Rng + ?Sized>(rng: &mut R, shape: [usize; 4], gain: f64) -> Tensor {
    let fan_in = (shape[1] * shape[2] * shape[3]).max(1) as f64;
    let bound = gain * (6.0 / fan_in).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(&shape, data).expect("shape matches length")
}
