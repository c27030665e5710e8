use std::cell::{Ref, RefCell};

use crate::kernels::{self, ConvGeom};
use crate::{conv_output_size, Result, ShapeError, Tensor};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    MulConst(usize, Tensor),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Softplus(usize),
    Abs(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        stride: usize,
        pad: usize,
    },
    AvgPool(usize, usize),
    Upsample(usize, usize),
    Concat(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording tape. Values are computed eagerly as nodes are appended.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub(crate) fn take_id(&mut self, id: usize) -> Option<Tensor> {
        self.grads.get_mut(id).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds a leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Adds a leaf that gradients are accumulated into.
    pub fn variable(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse-mode sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(loss.graph, self), "loss belongs to another graph");
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(ShapeError::new(
                "backward",
                format!("loss must be a scalar, got {:?}", nodes[loss.id].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                propagate(&nodes, node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("same-shape zip")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let needs = |id: usize| nodes[id].requires_grad;
    let val = |id: usize| &nodes[id].value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*b) {
                accumulate(grads, *b, g.clone());
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*b) {
                accumulate(grads, *b, g.map(|v| -v));
            }
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, zip_map(g, val(*b), |x, y| x * y));
            }
            if needs(*b) {
                accumulate(grads, *b, zip_map(g, val(*a), |x, y| x * y));
            }
        }
        Op::Scale(a, s) => accumulate(grads, *a, g.map(|v| v * s)),
        Op::AddConst(a) => accumulate(grads, *a, g.clone()),
        Op::MulConst(a, c) => accumulate(grads, *a, zip_map(g, c, |x, y| x * y)),
        Op::LeakyRelu(a, slope) => {
            let d = zip_map(g, val(*a), |gv, x| if x > 0.0 { gv } else { gv * slope });
            accumulate(grads, *a, d);
        }
        Op::Sigmoid(a) => {
            let d = zip_map(g, &node.value, |gv, s| gv * s * (1.0 - s));
            accumulate(grads, *a, d);
        }
        Op::Softplus(a) => {
            let d = zip_map(g, val(*a), |gv, x| gv * sigmoid(x));
            accumulate(grads, *a, d);
        }
        Op::Abs(a) => {
            let d = zip_map(g, val(*a), |gv, x| gv * x.signum() * (x != 0.0) as u8 as f64);
            accumulate(grads, *a, d);
        }
        Op::Square(a) => {
            let d = zip_map(g, val(*a), |gv, x| 2.0 * gv * x);
            accumulate(grads, *a, d);
        }
        Op::Sum(a) => {
            accumulate(grads, *a, Tensor::full(val(*a).shape(), g.item()));
        }
        Op::Mean(a) => {
            let n = val(*a).len() as f64;
            accumulate(grads, *a, Tensor::full(val(*a).shape(), g.item() / n));
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            pad,
        } => {
            let x = val(*input);
            let w = val(*weight);
            let geom = conv_geom(x, w, *stride, *pad).expect("validated at forward");
            let cg = kernels::conv2d_backward(
                x.data(),
                w.data(),
                g.data(),
                &geom,
                needs(*input),
                needs(*weight),
                bias.is_some_and(needs),
            );
            if let Some(dx) = cg.dx {
                accumulate(grads, *input, Tensor::from_vec(x.shape(), dx).unwrap());
            }
            if let Some(dw) = cg.dw {
                accumulate(grads, *weight, Tensor::from_vec(w.shape(), dw).unwrap());
            }
            if let (Some(b), Some(db)) = (bias, cg.db) {
                accumulate(grads, *b, Tensor::from_vec(val(*b).shape(), db).unwrap());
            }
        }
        Op::AvgPool(a, f) => {
            let (n, c, h, w) = val(*a).dims4().unwrap();
            let dx = kernels::avg_pool_backward(g.data(), n * c, h, w, *f);
            accumulate(grads, *a, Tensor::from_vec(val(*a).shape(), dx).unwrap());
        }
        Op::Upsample(a, f) => {
            let (n, c, h, w) = val(*a).dims4().unwrap();
            let dx = kernels::upsample_backward(g.data(), n * c, h, w, *f);
            accumulate(grads, *a, Tensor::from_vec(val(*a).shape(), dx).unwrap());
        }
        Op::Concat(parts) => {
            let (n, _, h, w) = g.dims4().unwrap();
            let hw = h * w;
            let total_c = g.shape()[1];
            let mut offset = 0;
            for &p in parts {
                let c = val(p).shape()[1];
                if needs(p) {
                    let mut d = Vec::with_capacity(n * c * hw);
                    for s in 0..n {
                        let start = (s * total_c + offset) * hw;
                        d.extend_from_slice(&g.data()[start..start + c * hw]);
                    }
                    accumulate(grads, p, Tensor::from_vec(val(p).shape(), d).unwrap());
                }
                offset += c;
            }
        }
    }
}

fn conv_geom(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<ConvGeom> {
    let (batch, cin, h, wd) = x.dims4()?;
    let (cout, wcin, kh, kw) = w.dims4()?;
    if cin != wcin {
        return Err(ShapeError::new(
            "conv2d",
            format!("input has {cin} channels but weight expects {wcin}"),
        ));
    }
    let (Some(oh), Some(ow)) = (
        conv_output_size(h, kh, stride, pad),
        conv_output_size(wd, kw, stride, pad),
    ) else {
        return Err(ShapeError::new(
            "conv2d",
            format!("{kh}x{kw} kernel (stride {stride}, pad {pad}) does not fit a {h}x{wd} input"),
        ));
    };
    Ok(ConvGeom {
        batch,
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        stride,
        pad,
        oh,
        ow,
    })
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires(self.id)
    }

    /// Copies the current value into a new constant leaf.
    pub fn detach(&self) -> Var<'g> {
        let v = self.value().clone();
        self.graph.constant(v)
    }

    fn same_graph(&self, other: &Var<'g>) {
        assert!(std::ptr::eq(self.graph, other.graph), "vars from different graphs");
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let out = self.value().map(f);
        self.graph.push(out, op, self.requires_grad())
    }

    fn binary(
        &self,
        other: Var<'g>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'g>> {
        self.same_graph(&other);
        let out = {
            let a = self.value();
            let b = other.value();
            if a.shape() != b.shape() {
                return Err(ShapeError::new(
                    name,
                    format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
                ));
            }
            zip_map(&a, &b, f)
        };
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(out, op, rg))
    }

    pub fn add(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, s), |v| v * s)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'g> {
        self.unary(Op::AddConst(self.id), |v| v + c)
    }

    /// Adds a constant tensor of identical shape.
    pub fn add_const(&self, c: &Tensor) -> Result<Var<'g>> {
        let out = {
            let a = self.value();
            check_same("add_const", a.shape(), c.shape())?;
            zip_map(&a, c, |x, y| x + y)
        };
        Ok(self.graph.push(out, Op::AddConst(self.id), self.requires_grad()))
    }

    /// Multiplies elementwise by a constant tensor of identical shape.
    pub fn mul_const(&self, c: &Tensor) -> Result<Var<'g>> {
        let out = {
            let a = self.value();
            check_same("mul_const", a.shape(), c.shape())?;
            zip_map(&a, c, |x, y| x * y)
        };
        Ok(self
            .graph
            .push(out, Op::MulConst(self.id, c.clone()), self.requires_grad()))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'g> {
        self.unary(Op::LeakyRelu(self.id, slope), |v| if v > 0.0 { v } else { v * slope })
    }

    pub fn relu(&self) -> Var<'g> {
        self.leaky_relu(0.0)
    }

    pub fn sigmoid(&self) -> Var<'g> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&self) -> Var<'g> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn abs(&self) -> Var<'g> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    pub fn square(&self) -> Var<'g> {
        self.unary(Op::Square(self.id), |v| v * v)
    }

    pub fn sum(&self) -> Var<'g> {
        let s = self.value().data().iter().sum::<f64>();
        self.graph
            .push(Tensor::scalar(s), Op::Sum(self.id), self.requires_grad())
    }

    pub fn mean(&self) -> Var<'g> {
        let m = {
            let v = self.value();
            v.data().iter().sum::<f64>() / v.len() as f64
        };
        self.graph
            .push(Tensor::scalar(m), Op::Mean(self.id), self.requires_grad())
    }

    /// 2-D cross-correlation. `weight` is `Cout × Cin × kh × kw`, `bias` is
    /// `Cout`.
    pub fn conv2d(
        &self,
        weight: Var<'g>,
        bias: Option<Var<'g>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'g>> {
        self.same_graph(&weight);
        let (out, rg) = {
            let x = self.value();
            let w = weight.value();
            let geom = conv_geom(&x, &w, stride, pad)?;
            let b = bias.map(|b| b.value());
            if let Some(b) = &b {
                if b.shape() != [geom.cout] {
                    return Err(ShapeError::new(
                        "conv2d",
                        format!("bias shape {:?} does not match {} outputs", b.shape(), geom.cout),
                    ));
                }
            }
            let data = kernels::conv2d_forward(x.data(), w.data(), b.as_ref().map(|b| b.data()), &geom);
            let out = Tensor::from_vec(&[geom.batch, geom.cout, geom.oh, geom.ow], data)?;
            let rg = self.requires_grad()
                || weight.requires_grad()
                || bias.is_some_and(|b| b.requires_grad());
            (out, rg)
        };
        let op = Op::Conv2d {
            input: self.id,
            weight: weight.id,
            bias: bias.map(|b| b.id),
            stride,
            pad,
        };
        Ok(self.graph.push(out, op, rg))
    }

    /// Non-overlapping `factor × factor` average pooling.
    pub fn avg_pool2d(&self, factor: usize) -> Result<Var<'g>> {
        let out = {
            let x = self.value();
            let (n, c, h, w) = x.dims4()?;
            if factor == 0 || h % factor != 0 || w % factor != 0 {
                return Err(ShapeError::new(
                    "avg_pool2d",
                    format!("{h}x{w} is not divisible by pool factor {factor}"),
                ));
            }
            let data = kernels::avg_pool_forward(x.data(), n * c, h, w, factor);
            Tensor::from_vec(&[n, c, h / factor, w / factor], data)?
        };
        Ok(self
            .graph
            .push(out, Op::AvgPool(self.id, factor), self.requires_grad()))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Var<'g>> {
        let out = {
            let x = self.value();
            let (n, c, h, w) = x.dims4()?;
            if factor == 0 {
                return Err(ShapeError::new("upsample_nearest", "factor must be positive"));
            }
            let data = kernels::upsample_forward(x.data(), n * c, h, w, factor);
            Tensor::from_vec(&[n, c, h * factor, w * factor], data)?
        };
        Ok(self
            .graph
            .push(out, Op::Upsample(self.id, factor), self.requires_grad()))
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts
            .first()
            .ok_or_else(|| ShapeError::new("concat_channels", "nothing to concatenate"))?;
        let graph = first.graph;
        let out = {
            let values: Vec<_> = parts
                .iter()
                .map(|p| {
                    first.same_graph(p);
                    p.value()
                })
                .collect();
            let (n, _, h, w) = values[0].dims4()?;
            let mut total_c = 0;
            for v in &values {
                let (vn, vc, vh, vw) = v.dims4()?;
                if (vn, vh, vw) != (n, h, w) {
                    return Err(ShapeError::new(
                        "concat_channels",
                        format!("{:?} does not match {:?}", v.shape(), values[0].shape()),
                    ));
                }
                total_c += vc;
            }
            let hw = h * w;
            let mut data = Vec::with_capacity(n * total_c * hw);
            for s in 0..n {
                for v in &values {
                    let c = v.shape()[1];
                    data.extend_from_slice(&v.data()[s * c * hw..(s + 1) * c * hw]);
                }
            }
            Tensor::from_vec(&[n, total_c, h, w], data)?
        };
        let rg = parts.iter().any(Var::requires_grad);
        Ok(graph.push(out, Op::Concat(parts.iter().map(|p| p.id).collect()), rg))
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(ShapeError::new(op, format!("shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize], scale: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|i| ((i * 7919 % 97) as f64 / 97.0 - 0.5) * scale)
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Central-difference check of d(loss)/d(input) for a scalar-valued
    /// builder.
    fn check_grad(input: Tensor, build: impl Fn(Var<'_>) -> Var<'_>) {
        let g = Graph::new();
        let x = g.variable(input.clone());
        let loss = build(x);
        let grads = g.backward(loss).unwrap();
        let analytic = grads.get(x).unwrap().clone();
        let h = 1e-6;
        for i in 0..input.len() {
            let eval = |delta: f64| {
                let mut t = input.clone();
                t.data_mut()[i] += delta;
                let g = Graph::new();
                let v = build(g.constant(t)).value().item();
                v
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (a - numeric).abs() / denom < 1e-5,
                "element {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    #[test]
    fn elementwise_gradients() {
        let t = ramp(&[2, 3, 2, 2], 3.0);
        check_grad(t.clone(), |x| x.sigmoid().sum());
        check_grad(t.clone(), |x| x.softplus().sum());
        check_grad(t.clone(), |x| x.leaky_relu(0.2).square().mean());
        check_grad(t.clone(), |x| x.abs().scale(0.5).add_scalar(1.0).sum());
        check_grad(t, |x| x.mul(x.sigmoid()).unwrap().sum());
    }

    #[test]
    fn conv_gradients() {
        let x = ramp(&[2, 3, 5, 4], 2.0);
        let w = ramp(&[4, 3, 3, 3], 1.0);
        let b = ramp(&[4], 1.0);
        check_grad(x.clone(), |xv| {
            let g = xv.graph();
            let wv = g.constant(w.clone());
            let bv = g.constant(b.clone());
            xv.conv2d(wv, Some(bv), 2, 1).unwrap().square().sum()
        });
        check_grad(w.clone(), |wv| {
            let g = wv.graph();
            let xv = g.constant(x.clone());
            xv.conv2d(wv, None, 1, 1).unwrap().square().mean()
        });
        check_grad(b.clone(), |bv| {
            let g = bv.graph();
            let xv = g.constant(x.clone());
            let wv = g.constant(w.clone());
            xv.conv2d(wv, Some(bv), 1, 0).unwrap().sigmoid().sum()
        });
        let w1 = ramp(&[2, 3, 1, 1], 1.0);
        check_grad(x, |xv| {
            let g = xv.graph();
            let wv = g.constant(w1.clone());
            xv.conv2d(wv, None, 1, 0).unwrap().square().sum()
        });
    }

    #[test]
    fn structural_gradients() {
        let t = ramp(&[2, 2, 4, 4], 2.0);
        check_grad(t.clone(), |x| x.avg_pool2d(2).unwrap().square().sum());
        check_grad(t.clone(), |x| x.upsample_nearest(2).unwrap().square().sum());
        check_grad(t, |x| {
            let y = x.sigmoid();
            Var::concat_channels(&[x, y, x]).unwrap().square().sum()
        });
    }

    #[test]
    fn constants_receive_no_gradient() {
        let g = Graph::new();
        let c = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
        let v = g.variable(Tensor::full(&[1, 1, 2, 2], 2.0));
        let loss = c.mul(v).unwrap().sum();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(v).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
        let b = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
        assert!(a.add(b).is_err());
        let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
        assert!(a.conv2d(w, None, 1, 1).is_err());
        assert!(a.avg_pool2d(3).is_err());
        let big = g.constant(Tensor::zeros(&[1, 2, 8, 8]));
        assert!(a.concat_channels_check(big).is_err());
    }

    impl<'g> Var<'g> {
        fn concat_channels_check(&self, other: Var<'g>) -> Result<Var<'g>> {
            Var::concat_channels(&[*self, other])
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let g = Graph::new();
        let v = g.variable(Tensor::zeros(&[2]));
        assert!(g.backward(v).is_err());
    }
}
