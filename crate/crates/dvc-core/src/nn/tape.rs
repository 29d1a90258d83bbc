//! Tape-based reverse-mode autodiff over dense row-major tensors.

use crate::error::{Error, Result};

/// Float type the tape runs on.
pub trait Real:
    num_traits::Float + num_traits::NumAssign + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// Dense row-major tensor with an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    /// a * x + b with scalar constants.
    Affine(TensorId, f64, f64),
    Matmul(TensorId, TensorId),
    Conv1d {
        x: TensorId,
        w: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        pad: usize,
    },
    Glu(TensorId, TensorId),
    InstanceNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    },
    LeakyRelu(TensorId, f64),
    Sigmoid(TensorId),
    Mean(TensorId),
    L1(TensorId, TensorId),
    L2(TensorId, TensorId),
    Slice {
        x: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    },
    Pad {
        x: TensorId,
        axis: usize,
        before: usize,
        after: usize,
    },
    Concat {
        a: TensorId,
        b: TensorId,
        axis: usize,
    },
    Upsample1d {
        x: TensorId,
        factor: usize,
    },
}

struct Node<T> {
    tensor: Tensor<T>,
    op: Op,
}

/// Ordered record of primitive operations; one backward pass per forward
/// pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn axis_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    pub fn values(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].tensor.values
    }

    /// Gradient of the last backward pass; `None` before backward.
    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor<T> {
        &self.nodes[id.0].tensor
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<T>, op: Op) -> TensorId {
        debug_assert_eq!(numel(&shape), values.len());
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                values,
                grad: None,
            },
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Record an input (leaf) tensor.
    pub fn input(&mut self, shape: &[usize], values: Vec<T>) -> Result<TensorId> {
        if numel(shape) != values.len() {
            return Err(Error::shape(
                "input",
                format!("shape {shape:?} expects {} values, got {}", numel(shape), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("input", "non-finite value".to_string()));
        }
        Ok(self.push(shape.to_vec(), values, Op::Input))
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![], vec![T::from_f64(v)], Op::Input)
    }

    fn same_shape(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("add", a, b)?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), values, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("sub", a, b)?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x - y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), values, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("mul", a, b)?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), values, Op::Mul(a, b)))
    }

    /// Elementwise `scale * x + shift` with constants.
    pub fn affine(&mut self, x: TensorId, scale: f64, shift: f64) -> TensorId {
        let (s, o) = (T::from_f64(scale), T::from_f64(shift));
        let values = self.values(x).iter().map(|&v| s * v + o).collect();
        self.push(self.shape(x).to_vec(), values, Op::Affine(x, scale, shift))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(
                "matmul",
                format!("{sa:?} x {sb:?}"),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.values(a);
        let bv = self.values(b);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aval = av[i * k + p];
                for j in 0..n {
                    out[i * n + j] += aval * bv[p * n + j];
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::Matmul(a, b)))
    }

    /// 1-D convolution over `[C_in, T]` with weight `[C_out, C_in, K]`,
    /// optional bias `[C_out]`, symmetric zero padding.
    pub fn conv1d(
        &mut self,
        x: TensorId,
        w: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[0] {
            return Err(Error::shape(
                "conv1d",
                format!("input {sx:?} weight {sw:?}"),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv1d", "stride must be >= 1".to_string()));
        }
        let (c_in, t_in) = (sx[0], sx[1]);
        let (c_out, ksize) = (sw[0], sw[2]);
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return Err(Error::shape(
                    "conv1d",
                    format!("bias {:?} vs C_out {c_out}", self.shape(b)),
                ));
            }
        }
        let t_pad = t_in + 2 * pad;
        if t_pad < ksize {
            return Err(Error::shape(
                "conv1d",
                format!("kernel {ksize} exceeds padded length {t_pad}"),
            ));
        }
        let t_out = (t_pad - ksize) / stride + 1;
        let mut xp = vec![T::zero(); c_in * t_pad];
        {
            let xv = self.values(x);
            for c in 0..c_in {
                xp[c * t_pad + pad..c * t_pad + pad + t_in]
                    .copy_from_slice(&xv[c * t_in..(c + 1) * t_in]);
            }
        }
        let wv = self.values(w);
        let mut out = vec![T::zero(); c_out * t_out];
        for co in 0..c_out {
            for ci in 0..c_in {
                for k in 0..ksize {
                    let wval = wv[(co * c_in + ci) * ksize + k];
                    let xrow = &xp[ci * t_pad..(ci + 1) * t_pad];
                    let orow = &mut out[co * t_out..(co + 1) * t_out];
                    if stride == 1 {
                        for t in 0..t_out {
                            orow[t] += wval * xrow[t + k];
                        }
                    } else {
                        for t in 0..t_out {
                            orow[t] += wval * xrow[t * stride + k];
                        }
                    }
                }
            }
        }
        if let Some(b) = bias {
            let bv = self.values(b).to_vec();
            for co in 0..c_out {
                for t in 0..t_out {
                    out[co * t_out + t] += bv[co];
                }
            }
        }
        Ok(self.push(
            vec![c_out, t_out],
            out,
            Op::Conv1d {
                x,
                w,
                bias,
                stride,
                pad,
            },
        ))
    }

    /// Gated linear unit `a * sigmoid(b)`, elementwise.
    pub fn gated_linear_unit(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("gated_linear_unit", a, b)?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x * sigmoid(y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), values, Op::Glu(a, b)))
    }

    /// Per-channel normalization over the time axis of `[C, T]`, with
    /// learnable `gamma`/`beta` of shape `[C]`.
    pub fn instance_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape("instance_norm", format!("input {sx:?}")));
        }
        let (c, t) = (sx[0], sx[1]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "instance_norm",
                format!(
                    "gamma {:?} beta {:?} vs C {c}",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        if t == 0 {
            return Err(Error::shape("instance_norm", "empty time axis".to_string()));
        }
        let xv = self.values(x);
        let gv = self.values(gamma);
        let bv = self.values(beta);
        let epst = T::from_f64(eps);
        let tn = T::from_f64(t as f64);
        let mut out = vec![T::zero(); c * t];
        for ch in 0..c {
            let row = &xv[ch * t..(ch + 1) * t];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean /= tn;
            let mut var = T::zero();
            for &v in row {
                var += (v - mean) * (v - mean);
            }
            var /= tn;
            let inv = (var + epst).sqrt().recip();
            for i in 0..t {
                out[ch * t + i] = gv[ch] * (row[i] - mean) * inv + bv[ch];
            }
        }
        Ok(self.push(
            vec![c, t],
            out,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                eps,
            },
        ))
    }

    pub fn leaky_relu(&mut self, x: TensorId, alpha: f64) -> TensorId {
        let a = T::from_f64(alpha);
        let values = self
            .values(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { a * v })
            .collect();
        self.push(self.shape(x).to_vec(), values, Op::LeakyRelu(x, alpha))
    }

    pub fn sigmoid_op(&mut self, x: TensorId) -> TensorId {
        let values = self.values(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(self.shape(x).to_vec(), values, Op::Sigmoid(x))
    }

    /// Mean over all elements, yielding a scalar.
    pub fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        let n = self.values(x).len();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor".to_string()));
        }
        let mut acc = T::zero();
        for &v in self.values(x) {
            acc += v;
        }
        let m = acc / T::from_f64(n as f64);
        Ok(self.push(vec![], vec![m], Op::Mean(x)))
    }

    /// Mean absolute difference, scalar.
    pub fn l1(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("l1", a, b)?;
        let n = self.values(a).len();
        if n == 0 {
            return Err(Error::shape("l1", "empty tensor".to_string()));
        }
        let mut acc = T::zero();
        for (&x, &y) in self.values(a).iter().zip(self.values(b)) {
            acc += (x - y).abs();
        }
        let m = acc / T::from_f64(n as f64);
        Ok(self.push(vec![], vec![m], Op::L1(a, b)))
    }

    /// Mean squared difference, scalar.
    pub fn l2(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("l2", a, b)?;
        let n = self.values(a).len();
        if n == 0 {
            return Err(Error::shape("l2", "empty tensor".to_string()));
        }
        let mut acc = T::zero();
        for (&x, &y) in self.values(a).iter().zip(self.values(b)) {
            acc += (x - y) * (x - y);
        }
        let m = acc / T::from_f64(n as f64);
        Ok(self.push(vec![], vec![m], Op::L2(a, b)))
    }

    /// Contiguous slice along `axis`.
    pub fn slice(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || start + len > sx[axis] || len == 0 {
            return Err(Error::shape(
                "slice",
                format!("axis {axis} range {start}..{} of {sx:?}", start + len),
            ));
        }
        let (outer, alen, inner) = axis_dims(&sx, axis);
        let xv = self.values(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for a in start..start + len {
                let base = (o * alen + a) * inner;
                out.extend_from_slice(&xv[base..base + inner]);
            }
        }
        let mut shape = sx.clone();
        shape[axis] = len;
        Ok(self.push(shape, out, Op::Slice { x, axis, start, len }))
    }

    /// Zero padding along `axis`.
    pub fn pad(&mut self, x: TensorId, axis: usize, before: usize, after: usize) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::shape("pad", format!("axis {axis} of {sx:?}")));
        }
        let (outer, alen, inner) = axis_dims(&sx, axis);
        let new_len = alen + before + after;
        let xv = self.values(x);
        let mut out = vec![T::zero(); outer * new_len * inner];
        for o in 0..outer {
            for a in 0..alen {
                let src = (o * alen + a) * inner;
                let dst = (o * new_len + a + before) * inner;
                out[dst..dst + inner].copy_from_slice(&xv[src..src + inner]);
            }
        }
        let mut shape = sx.clone();
        shape[axis] = new_len;
        Ok(self.push(shape, out, Op::Pad { x, axis, before, after }))
    }

    /// Concatenate along `axis`; other dims must match.
    pub fn concat(&mut self, a: TensorId, b: TensorId, axis: usize) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len()
            || axis >= sa.len()
            || sa
                .iter()
                .zip(&sb)
                .enumerate()
                .any(|(i, (x, y))| i != axis && x != y)
        {
            return Err(Error::shape("concat", format!("{sa:?} + {sb:?} on axis {axis}")));
        }
        let (outer, alen, inner) = axis_dims(&sa, axis);
        let blen = sb[axis];
        let av = self.values(a);
        let bv = self.values(b);
        let mut out = Vec::with_capacity((alen + blen) * outer * inner);
        for o in 0..outer {
            out.extend_from_slice(&av[o * alen * inner..(o + 1) * alen * inner]);
            out.extend_from_slice(&bv[o * blen * inner..(o + 1) * blen * inner]);
        }
        let mut shape = sa.clone();
        shape[axis] = alen + blen;
        Ok(self.push(shape, out, Op::Concat { a, b, axis }))
    }

    /// Nearest-neighbour upsampling along the last axis of `[C, T]`.
    pub fn upsample1d(&mut self, x: TensorId, factor: usize) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || factor == 0 {
            return Err(Error::shape(
                "upsample1d",
                format!("input {sx:?} factor {factor}"),
            ));
        }
        let (c, t) = (sx[0], sx[1]);
        let xv = self.values(x);
        let mut out = vec![T::zero(); c * t * factor];
        for ch in 0..c {
            for i in 0..t {
                let v = xv[ch * t + i];
                for f in 0..factor {
                    out[ch * t * factor + i * factor + f] = v;
                }
            }
        }
        Ok(self.push(vec![c, t * factor], out, Op::Upsample1d { x, factor }))
    }

    /// Reverse pass from a scalar loss; fills `grad` on every node.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.backward_done {
            return Err(Error::shape(
                "backward",
                "tape already consumed by a backward pass".to_string(),
            ));
        }
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::shape("backward", "loss is not on this tape".to_string()));
        }
        if numel(&self.nodes[loss.0].tensor.shape) != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.nodes[loss.0].tensor.shape),
            ));
        }
        self.backward_done = true;
        for node in self.nodes.iter_mut() {
            node.tensor.grad = Some(vec![T::zero(); node.tensor.values.len()]);
        }
        self.nodes[loss.0].tensor.grad.as_mut().unwrap()[0] = T::one();

        for idx in (0..self.nodes.len()).rev() {
            let op = self.nodes[idx].op.clone();
            let g = self.nodes[idx].tensor.grad.clone().unwrap();
            if g.iter().all(|v| v.is_zero()) {
                continue;
            }
            match op {
                Op::Input => {}
                Op::Add(a, b) => {
                    self.accumulate(a, |ga| {
                        for (gi, &go) in ga.iter_mut().zip(&g) {
                            *gi += go;
                        }
                    });
                    self.accumulate(b, |gb| {
                        for (gi, &go) in gb.iter_mut().zip(&g) {
                            *gi += go;
                        }
                    });
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, |ga| {
                        for (gi, &go) in ga.iter_mut().zip(&g) {
                            *gi += go;
                        }
                    });
                    self.accumulate(b, |gb| {
                        for (gi, &go) in gb.iter_mut().zip(&g) {
                            *gi -= go;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].tensor.values.clone();
                    let bv = self.nodes[b.0].tensor.values.clone();
                    self.accumulate(a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    });
                    self.accumulate(b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] += g[i] * av[i];
                        }
                    });
                }
                Op::Affine(x, scale, _) => {
                    let s = T::from_f64(scale);
                    self.accumulate(x, |gx| {
                        for i in 0..gx.len() {
                            gx[i] += s * g[i];
                        }
                    });
                }
                Op::Matmul(a, b) => {
                    let (m, k) = {
                        let sa = &self.nodes[a.0].tensor.shape;
                        (sa[0], sa[1])
                    };
                    let n = self.nodes[b.0].tensor.shape[1];
                    let av = self.nodes[a.0].tensor.values.clone();
                    let bv = self.nodes[b.0].tensor.values.clone();
                    self.accumulate(a, |ga| {
                        for i in 0..m {
                            for j in 0..n {
                                let go = g[i * n + j];
                                for p in 0..k {
                                    ga[i * k + p] += go * bv[p * n + j];
                                }
                            }
                        }
                    });
                    self.accumulate(b, |gb| {
                        for i in 0..m {
                            for j in 0..n {
                                let go = g[i * n + j];
                                for p in 0..k {
                                    gb[p * n + j] += av[i * k + p] * go;
                                }
                            }
                        }
                    });
                }
                Op::Conv1d {
                    x,
                    w,
                    bias,
                    stride,
                    pad,
                } => {
                    let (c_in, t_in) = {
                        let s = &self.nodes[x.0].tensor.shape;
                        (s[0], s[1])
                    };
                    let (c_out, ksize) = {
                        let s = &self.nodes[w.0].tensor.shape;
                        (s[0], s[2])
                    };
                    let t_pad = t_in + 2 * pad;
                    let t_out = (t_pad - ksize) / stride + 1;
                    let xv = self.nodes[x.0].tensor.values.clone();
                    let wv = self.nodes[w.0].tensor.values.clone();
                    let mut xp = vec![T::zero(); c_in * t_pad];
                    for c in 0..c_in {
                        xp[c * t_pad + pad..c * t_pad + pad + t_in]
                            .copy_from_slice(&xv[c * t_in..(c + 1) * t_in]);
                    }
                    // Gradient w.r.t. the padded input, then unpad.
                    let mut gxp = vec![T::zero(); c_in * t_pad];
                    for co in 0..c_out {
                        for ci in 0..c_in {
                            for k in 0..ksize {
                                let wval = wv[(co * c_in + ci) * ksize + k];
                                for t in 0..t_out {
                                    gxp[ci * t_pad + t * stride + k] += wval * g[co * t_out + t];
                                }
                            }
                        }
                    }
                    self.accumulate(x, |gx| {
                        for c in 0..c_in {
                            for t in 0..t_in {
                                gx[c * t_in + t] += gxp[c * t_pad + pad + t];
                            }
                        }
                    });
                    self.accumulate(w, |gw| {
                        for co in 0..c_out {
                            for ci in 0..c_in {
                                for k in 0..ksize {
                                    let mut acc = T::zero();
                                    for t in 0..t_out {
                                        acc += g[co * t_out + t] * xp[ci * t_pad + t * stride + k];
                                    }
                                    gw[(co * c_in + ci) * ksize + k] += acc;
                                }
                            }
                        }
                    });
                    if let Some(b) = bias {
                        self.accumulate(b, |gb| {
                            for co in 0..c_out {
                                let mut acc = T::zero();
                                for t in 0..t_out {
                                    acc += g[co * t_out + t];
                                }
                                gb[co] += acc;
                            }
                        });
                    }
                }
                Op::Glu(a, b) => {
                    let av = self.nodes[a.0].tensor.values.clone();
                    let bv = self.nodes[b.0].tensor.values.clone();
                    self.accumulate(a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * sigmoid(bv[i]);
                        }
                    });
                    self.accumulate(b, |gb| {
                        for i in 0..gb.len() {
                            let s = sigmoid(bv[i]);
                            gb[i] += g[i] * av[i] * s * (T::one() - s);
                        }
                    });
                }
                Op::InstanceNorm { x, gamma, beta, eps } => {
                    let (c, t) = {
                        let s = &self.nodes[x.0].tensor.shape;
                        (s[0], s[1])
                    };
                    let xv = self.nodes[x.0].tensor.values.clone();
                    let gv = self.nodes[gamma.0].tensor.values.clone();
                    let tn = T::from_f64(t as f64);
                    let epst = T::from_f64(eps);
                    // Recompute per-channel stats.
                    let mut xhat = vec![T::zero(); c * t];
                    let mut inv_std = vec![T::zero(); c];
                    for ch in 0..c {
                        let row = &xv[ch * t..(ch + 1) * t];
                        let mut mean = T::zero();
                        for &v in row {
                            mean += v;
                        }
                        mean /= tn;
                        let mut var = T::zero();
                        for &v in row {
                            var += (v - mean) * (v - mean);
                        }
                        var /= tn;
                        let inv = (var + epst).sqrt().recip();
                        inv_std[ch] = inv;
                        for i in 0..t {
                            xhat[ch * t + i] = (row[i] - mean) * inv;
                        }
                    }
                    self.accumulate(gamma, |gg| {
                        for ch in 0..c {
                            let mut acc = T::zero();
                            for i in 0..t {
                                acc += g[ch * t + i] * xhat[ch * t + i];
                            }
                            gg[ch] += acc;
                        }
                    });
                    self.accumulate(beta, |gb| {
                        for ch in 0..c {
                            let mut acc = T::zero();
                            for i in 0..t {
                                acc += g[ch * t + i];
                            }
                            gb[ch] += acc;
                        }
                    });
                    self.accumulate(x, |gx| {
                        for ch in 0..c {
                            let mut mean_g = T::zero();
                            let mut mean_gx = T::zero();
                            for i in 0..t {
                                mean_g += g[ch * t + i];
                                mean_gx += g[ch * t + i] * xhat[ch * t + i];
                            }
                            mean_g /= tn;
                            mean_gx /= tn;
                            let scale = gv[ch] * inv_std[ch];
                            for i in 0..t {
                                gx[ch * t + i] += scale
                                    * (g[ch * t + i] - mean_g - xhat[ch * t + i] * mean_gx);
                            }
                        }
                    });
                }
                Op::LeakyRelu(x, alpha) => {
                    let a = T::from_f64(alpha);
                    let xv = self.nodes[x.0].tensor.values.clone();
                    self.accumulate(x, |gx| {
                        for i in 0..gx.len() {
                            gx[i] += g[i] * if xv[i] > T::zero() { T::one() } else { a };
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let yv = self.nodes[idx].tensor.values.clone();
                    self.accumulate(x, |gx| {
                        for i in 0..gx.len() {
                            gx[i] += g[i] * yv[i] * (T::one() - yv[i]);
                        }
                    });
                }
                Op::Mean(x) => {
                    let n = self.nodes[x.0].tensor.values.len();
                    let go = g[0] / T::from_f64(n as f64);
                    self.accumulate(x, |gx| {
                        for v in gx.iter_mut() {
                            *v += go;
                        }
                    });
                }
                Op::L1(a, b) => {
                    let n = self.nodes[a.0].tensor.values.len();
                    let go = g[0] / T::from_f64(n as f64);
                    let av = self.nodes[a.0].tensor.values.clone();
                    let bv = self.nodes[b.0].tensor.values.clone();
                    self.accumulate(a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += go * sign(av[i] - bv[i]);
                        }
                    });
                    self.accumulate(b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] -= go * sign(av[i] - bv[i]);
                        }
                    });
                }
                Op::L2(a, b) => {
                    let n = self.nodes[a.0].tensor.values.len();
                    let go = g[0] / T::from_f64(n as f64);
                    let two = T::from_f64(2.0);
                    let av = self.nodes[a.0].tensor.values.clone();
                    let bv = self.nodes[b.0].tensor.values.clone();
                    self.accumulate(a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += go * two * (av[i] - bv[i]);
                        }
                    });
                    self.accumulate(b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] -= go * two * (av[i] - bv[i]);
                        }
                    });
                }
                Op::Slice { x, axis, start, len } => {
                    let sx = self.nodes[x.0].tensor.shape.clone();
                    let (outer, alen, inner) = axis_dims(&sx, axis);
                    self.accumulate(x, |gx| {
                        let mut src = 0usize;
                        for o in 0..outer {
                            for a in start..start + len {
                                let dst = (o * alen + a) * inner;
                                for i in 0..inner {
                                    gx[dst + i] += g[src + i];
                                }
                                src += inner;
                            }
                        }
                    });
                }
                Op::Pad { x, axis, before, .. } => {
                    let sx = self.nodes[x.0].tensor.shape.clone();
                    let (outer, alen, inner) = axis_dims(&sx, axis);
                    let new_len = self.nodes[idx].tensor.shape[axis];
                    self.accumulate(x, |gx| {
                        for o in 0..outer {
                            for a in 0..alen {
                                let src = (o * new_len + a + before) * inner;
                                let dst = (o * alen + a) * inner;
                                for i in 0..inner {
                                    gx[dst + i] += g[src + i];
                                }
                            }
                        }
                    });
                }
                Op::Concat { a, b, axis } => {
                    let sa = self.nodes[a.0].tensor.shape.clone();
                    let sb = self.nodes[b.0].tensor.shape.clone();
                    let (outer, alen, inner) = axis_dims(&sa, axis);
                    let blen = sb[axis];
                    let total = alen + blen;
                    self.accumulate(a, |ga| {
                        for o in 0..outer {
                            for x in 0..alen * inner {
                                ga[o * alen * inner + x] += g[o * total * inner + x];
                            }
                        }
                    });
                    self.accumulate(b, |gb| {
                        for o in 0..outer {
                            for x in 0..blen * inner {
                                gb[o * blen * inner + x] +=
                                    g[o * total * inner + alen * inner + x];
                            }
                        }
                    });
                }
                Op::Upsample1d { x, factor } => {
                    let (c, t) = {
                        let s = &self.nodes[x.0].tensor.shape;
                        (s[0], s[1])
                    };
                    self.accumulate(x, |gx| {
                        for ch in 0..c {
                            for i in 0..t {
                                let mut acc = T::zero();
                                for f in 0..factor {
                                    acc += g[ch * t * factor + i * factor + f];
                                }
                                gx[ch * t + i] += acc;
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }

    fn accumulate<F: FnOnce(&mut [T])>(&mut self, id: TensorId, f: F) {
        let grad = self.nodes[id.0]
            .tensor
            .grad
            .as_mut()
            .expect("grads initialized in backward");
        f(grad);
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
