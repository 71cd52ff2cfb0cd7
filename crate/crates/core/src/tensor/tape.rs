use rand::Rng;

use super::kernels::{self, gelu, gelu_grad};
use super::{Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Pointwise { x: Var, w: Var, b: Option<Var> },
    Depthwise { x: Var, w: Var, b: Option<Var> },
    Norm { x: Var, gamma: Var, beta: Var, xhat: Tensor<T>, rstd: Vec<T> },
    Gelu(Var),
    Relu(Var),
    /// Elementwise multiplication by a constant mask (dropout).
    Mask { x: Var, mask: Vec<T> },
    /// Per-sample scaling of the leading axis (drop path).
    SampleScale { x: Var, scale: Vec<T> },
    ToComplex(Var),
    RealPart(Var),
    Fft { x: Var, axis: usize, inverse: bool },
    Resize { x: Var, axis: usize, from: usize },
    ModeMix { x: Var, r: Var, axis: usize },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize, len: usize },
    Nmae { pred: Var, target: Tensor<T>, norms: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of a computation. Parents always precede children, so
/// a single reverse sweep visits each node once.
///
/// Shape errors in the recorded ops are programming errors and panic.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every `requires_grad` leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.value(a).shape, self.value(b).shape, "{what}: shape mismatch");
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (self.value(a), self.value(b));
        Tensor { shape: x.shape.clone(), data: x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect() }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let v = self.zip_with(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let v = self.zip_with(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let v = self.zip_with(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.value(x).map(|p| p * s);
        self.push(v, Op::Scale(x, s), &[x])
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    /// 1×1 convolution: `x [B, Ci, ...]`, `w [Co, Ci]`, optional bias `[Co]`.
    pub fn conv_pointwise(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (xs, ws) = (&self.value(x).shape, &self.value(w).shape);
        assert!(xs.len() >= 2 && ws.len() == 2 && ws[1] == xs[1], "conv_pointwise: x {xs:?} w {ws:?}");
        if let Some(b) = b {
            assert_eq!(self.value(b).shape, [ws[0]], "conv_pointwise bias");
        }
        let v = kernels::pointwise(self.value(x), self.value(w), b.map(|b| self.value(b)));
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(v, Op::Pointwise { x, w, b }, &parents)
    }

    /// Per-channel 3×3 convolution, zero padded: `x [B, C, H, W]`, `w [C, 3, 3]`.
    pub fn conv_depthwise3x3(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (xs, ws) = (&self.value(x).shape, &self.value(w).shape);
        assert!(xs.len() == 4 && ws.as_slice() == [xs[1], 3, 3], "conv_depthwise3x3: x {xs:?} w {ws:?}");
        if let Some(b) = b {
            assert_eq!(self.value(b).shape, [xs[1]], "conv_depthwise3x3 bias");
        }
        let v = kernels::depthwise3(self.value(x), self.value(w), b.map(|b| self.value(b)));
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(v, Op::Depthwise { x, w, b }, &parents)
    }

    /// Blueprint convolution: bias-free pointwise channel mixing, then a
    /// depthwise 3×3 with bias.
    pub fn conv_blueprint3x3(&mut self, x: Var, pw: Var, dw: Var, b: Option<Var>) -> Var {
        let mixed = self.conv_pointwise(x, pw, None);
        self.conv_depthwise3x3(mixed, dw, b)
    }

    /// Layer norm across channels at each pixel with affine `gamma`, `beta` of shape `[C]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let c = self.value(x).shape[1];
        assert_eq!(self.value(gamma).shape, [c], "layer_norm gamma");
        assert_eq!(self.value(beta).shape, [c], "layer_norm beta");
        let (v, xhat, rstd) = kernels::channel_norm(self.value(x), self.value(gamma), self.value(beta));
        self.push(v, Op::Norm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta])
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(gelu);
        self.push(v, Op::Gelu(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|p| p.max(T::zero()));
        self.push(v, Op::Relu(x), &[x])
    }

    /// Inverted dropout; identity in eval mode or for `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut impl Rng) -> Var {
        if mode == Mode::Eval || p <= 0.0 {
            return x;
        }
        assert!(p < 1.0, "dropout rate must be below 1");
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len()).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect();
        let v = Tensor { shape: self.value(x).shape.clone(), data: self.value(x).data.iter().zip(&mask).map(|(a, m)| *a * *m).collect() };
        self.push(v, Op::Mask { x, mask }, &[x])
    }

    /// Drops the whole of `x` per batch item with probability `p`; identity in eval mode.
    pub fn droppath(&mut self, x: Var, p: f64, mode: Mode, rng: &mut impl Rng) -> Var {
        if mode == Mode::Eval || p <= 0.0 {
            return x;
        }
        assert!(p < 1.0, "drop path rate must be below 1");
        let batch = self.value(x).shape[0];
        let keep = T::of(1.0 / (1.0 - p));
        let scale: Vec<T> = (0..batch).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect();
        let src = self.value(x);
        let per = src.len() / batch;
        let data = src.data.iter().enumerate().map(|(k, a)| *a * scale[k / per]).collect();
        let v = Tensor { shape: src.shape.clone(), data };
        self.push(v, Op::SampleScale { x, scale }, &[x])
    }

    /// Real tensor `[...]` to complex `[..., 2]` with zero imaginary part.
    pub fn to_complex(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut shape = src.shape.clone();
        shape.push(2);
        let mut data = vec![T::zero(); src.len() * 2];
        for (k, v) in src.data.iter().enumerate() {
            data[2 * k] = *v;
        }
        self.push(Tensor { shape, data }, Op::ToComplex(x), &[x])
    }

    /// Real part of a complex tensor `[..., 2]`.
    pub fn real_part(&mut self, x: Var) -> Var {
        let src = self.value(x);
        assert_eq!(src.shape.last(), Some(&2), "real_part expects a complex tensor");
        let shape = src.shape[..src.shape.len() - 1].to_vec();
        let data = src.data.chunks_exact(2).map(|c| c[0]).collect();
        self.push(Tensor { shape, data }, Op::RealPart(x), &[x])
    }

    fn complex_axis(&self, x: Var, axis: usize) -> usize {
        let s = &self.value(x).shape;
        assert!(s.last() == Some(&2) && axis + 1 < s.len(), "axis {axis} invalid for complex tensor {s:?}");
        s[axis]
    }

    /// Unitary DFT of a complex tensor along spatial `axis`.
    pub fn fft_1d(&mut self, x: Var, axis: usize) -> Var {
        self.complex_axis(x, axis);
        let v = kernels::fft_axis(self.value(x), axis, false);
        self.push(v, Op::Fft { x, axis, inverse: false }, &[x])
    }

    /// Unitary inverse DFT along spatial `axis`.
    pub fn ifft_1d(&mut self, x: Var, axis: usize) -> Var {
        self.complex_axis(x, axis);
        let v = kernels::fft_axis(self.value(x), axis, true);
        self.push(v, Op::Fft { x, axis, inverse: true }, &[x])
    }

    /// Keeps the lowest `k` modes along `axis`.
    pub fn mode_truncate(&mut self, x: Var, axis: usize, k: usize) -> Var {
        let n = self.complex_axis(x, axis);
        assert!(k >= 1 && k <= n, "mode_truncate: k={k} for axis length {n}");
        let v = kernels::resize_axis(self.value(x), axis, k);
        self.push(v, Op::Resize { x, axis, from: n }, &[x])
    }

    /// Zero-pads `axis` up to length `n`.
    pub fn mode_pad(&mut self, x: Var, axis: usize, n: usize) -> Var {
        let k = self.complex_axis(x, axis);
        assert!(n >= k, "mode_pad: target {n} below current {k}");
        let v = kernels::resize_axis(self.value(x), axis, n);
        self.push(v, Op::Resize { x, axis, from: k }, &[x])
    }

    /// Per-mode complex channel mixing: `x [B, Ci, H, W, 2]` with modes on
    /// spatial `axis ∈ {2, 3}`, `r [k, Ci, Co, 2]`.
    pub fn complex_mode_mix(&mut self, x: Var, r: Var, axis: usize) -> Var {
        let (xs, rs) = (&self.value(x).shape, &self.value(r).shape);
        assert!(
            xs.len() == 5 && (axis == 2 || axis == 3) && rs.len() == 4 && rs[0] == xs[axis] && rs[1] == xs[1] && rs[3] == 2,
            "complex_mode_mix: x {xs:?} r {rs:?} axis {axis}"
        );
        let v = kernels::mode_mix(self.value(x), self.value(r), axis);
        self.push(v, Op::ModeMix { x, r, axis }, &[x, r])
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|p| self.value(*p)).collect();
        let v = kernels::concat_channels(&tensors);
        self.push(v, Op::Concat(parts.to_vec()), parts)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = kernels::slice_channels(self.value(x), start, len);
        self.push(v, Op::Slice { x, start, len }, &[x])
    }

    /// `‖pred − target‖₁ / ‖target‖₁` per batch item, averaged over the batch.
    pub fn nmae(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var, TensorError> {
        let p = self.value(pred);
        assert_eq!(p.shape, target.shape, "nmae: shape mismatch");
        let batch = p.shape[0];
        let per = p.len() / batch;
        let mut norms = Vec::with_capacity(batch);
        let mut total = T::zero();
        for b in 0..batch {
            let t = &target.data[b * per..(b + 1) * per];
            let norm: T = t.iter().map(|v| v.abs()).sum();
            if !(norm > T::zero()) {
                return Err(TensorError::DegenerateTarget { item: b });
            }
            let err: T = p.data[b * per..(b + 1) * per].iter().zip(t).map(|(a, c)| (*a - *c).abs()).sum();
            total += err / norm;
            norms.push(norm);
        }
        let v = Tensor::scalar(total / T::of(batch as f64));
        Ok(self.push(v, Op::Nmae { pred, target: target.clone(), norms }, &[pred]))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&self.value(loss).shape, T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            for (parent, contribution) in self.adjoint(node, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_scaled(T::one(), &contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[idx] = None;
            }
        }
        Gradients { grads }
    }

    fn adjoint(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let val = |v: Var| self.value(v);
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let shaped = |shape: &[usize], data: Vec<T>| Tensor { shape: shape.to_vec(), data };
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let ga = shaped(&g.shape, g.data.iter().zip(&y.data).map(|(p, q)| *p * *q).collect());
                let gb = shaped(&g.shape, g.data.iter().zip(&x.data).map(|(p, q)| *p * *q).collect());
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, s) => vec![(*x, g.map(|v| v * *s))],
            Op::Sum(x) => vec![(*x, Tensor::full(&val(*x).shape, g.data[0]))],
            Op::Pointwise { x, w, b } => {
                let (gx, gw, gb) = kernels::pointwise_backward(val(*x), val(*w), g, needs(*x));
                let mut out = vec![(*w, gw)];
                out.extend(gx.map(|t| (*x, t)));
                out.extend(b.map(|b| (b, gb)));
                out
            }
            Op::Depthwise { x, w, b } => {
                let (gx, gw, gb) = kernels::depthwise3_backward(val(*x), val(*w), g, needs(*x));
                let mut out = vec![(*w, gw)];
                out.extend(gx.map(|t| (*x, t)));
                out.extend(b.map(|b| (b, gb)));
                out
            }
            Op::Norm { x, gamma, beta, xhat, rstd } => {
                let (gx, gg, gb) = kernels::channel_norm_backward(xhat, rstd, val(*gamma), g);
                vec![(*x, gx), (*gamma, gg), (*beta, gb)]
            }
            Op::Gelu(x) => {
                let data = g.data.iter().zip(&val(*x).data).map(|(p, q)| *p * gelu_grad(*q)).collect();
                vec![(*x, shaped(&g.shape, data))]
            }
            Op::Relu(x) => {
                let data =
                    g.data.iter().zip(&val(*x).data).map(|(p, q)| if *q > T::zero() { *p } else { T::zero() }).collect();
                vec![(*x, shaped(&g.shape, data))]
            }
            Op::Mask { x, mask } => {
                vec![(*x, shaped(&g.shape, g.data.iter().zip(mask).map(|(p, m)| *p * *m).collect()))]
            }
            Op::SampleScale { x, scale } => {
                let per = g.len() / scale.len();
                vec![(*x, shaped(&g.shape, g.data.iter().enumerate().map(|(k, p)| *p * scale[k / per]).collect()))]
            }
            Op::ToComplex(x) => vec![(*x, shaped(&val(*x).shape, g.data.chunks_exact(2).map(|c| c[0]).collect()))],
            Op::RealPart(x) => {
                let mut data = vec![T::zero(); g.len() * 2];
                for (k, v) in g.data.iter().enumerate() {
                    data[2 * k] = *v;
                }
                vec![(*x, shaped(&val(*x).shape, data))]
            }
            // the adjoint of a unitary transform is its inverse
            Op::Fft { x, axis, inverse } => vec![(*x, kernels::fft_axis(g, *axis, !*inverse))],
            Op::Resize { x, axis, from } => vec![(*x, kernels::resize_axis(g, *axis, *from))],
            Op::ModeMix { x, r, axis } => {
                let (gx, gr) = kernels::mode_mix_backward(val(*x), val(*r), g, *axis);
                vec![(*x, gx), (*r, gr)]
            }
            Op::Concat(parts) => {
                let mut start = 0;
                parts
                    .iter()
                    .map(|p| {
                        let c = val(*p).shape[1];
                        let piece = kernels::slice_channels(g, start, c);
                        start += c;
                        (*p, piece)
                    })
                    .collect()
            }
            Op::Slice { x, start, len } => {
                let src = val(*x);
                let (batch, c) = (src.shape[0], src.shape[1]);
                let p: usize = src.shape[2..].iter().product();
                let mut out = Tensor::zeros(&src.shape);
                for b in 0..batch {
                    out.data[(b * c + start) * p..(b * c + start + len) * p]
                        .copy_from_slice(&g.data[b * len * p..(b + 1) * len * p]);
                }
                vec![(*x, out)]
            }
            Op::Nmae { pred, target, norms } => {
                let p = val(*pred);
                let batch = norms.len();
                let per = p.len() / batch;
                let g0 = g.data[0] / T::of(batch as f64);
                let data = p
                    .data
                    .iter()
                    .zip(&target.data)
                    .enumerate()
                    .map(|(k, (a, t))| {
                        let d = *a - *t;
                        let s = if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        g0 * s / norms[k / per]
                    })
                    .collect();
                vec![(*pred, shaped(&p.shape, data))]
            }
        }
    }
}
