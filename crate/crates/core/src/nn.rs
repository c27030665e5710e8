// Shared layer plumbing: every layer is a named `weight`/`bias` pair in a
// `ParamStore`.

use rand::Rng;
use thermsynth_autograd::{init, Bindings, ParamStore, Tensor, Var};

use crate::Result;

pub(crate) const LRELU_SLOPE: f64 = 0.2;

pub(crate) fn add_conv<R: Rng + ?Sized>(
    store: &mut ParamStore,
    rng: &mut R,
    name: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    gain: f64,
) {
    store.insert(
        format!("{name}.weight"),
        init::conv_weight(rng, [cout, cin, kernel, kernel], gain),
    );
    store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
}

pub(crate) fn conv<'g>(b: &Bindings<'g>, x: Var<'g>, name: &str, stride: usize, pad: usize) -> Result<Var<'g>> {
    let w = b.get(&format!("{name}.weight"))?;
    let bias = b.get(&format!("{name}.bias"))?;
    Ok(x.conv2d(w, Some(bias), stride, pad)?)
}
