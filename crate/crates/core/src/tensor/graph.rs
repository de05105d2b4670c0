use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvDims};
use super::{broadcast_shape, numel, Activation, Scalar, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type CustomBackward<T> = Box<dyn Fn(&Tensor<T>, &Tensor<T>, &[T]) -> Vec<T>>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

// How an operand's elements map onto the broadcast output.
enum IndexMap {
    Same,
    // operand shape is a suffix of the output shape
    Modulo(usize),
    General(Vec<usize>),
}

impl IndexMap {
    fn new(out: &[usize], input: &[usize]) -> Self {
        if out == input {
            return IndexMap::Same;
        }
        let suffix = out.len() >= input.len() && out[out.len() - input.len()..] == *input;
        if suffix {
            return IndexMap::Modulo(numel(input));
        }
        // General case: strides of the input aligned to the output, zero
        // along broadcast axes.
        let rank = out.len();
        let offset = rank - input.len();
        let mut strides = vec![0usize; rank];
        let mut acc = 1;
        for i in (0..input.len()).rev() {
            if input[i] != 1 {
                strides[i + offset] = acc;
            }
            acc *= input[i];
        }
        let total = numel(out);
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; rank];
        for _ in 0..total {
            map.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
            for axis in (0..rank).rev() {
                idx[axis] += 1;
                if idx[axis] < out[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        IndexMap::General(map)
    }

    #[inline]
    fn get(&self, i: usize) -> usize {
        match self {
            IndexMap::Same => i,
            IndexMap::Modulo(n) => i % n,
            IndexMap::General(map) => map[i],
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Activation(Activation, Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        dims: ConvDims,
    },
    Depthwise {
        input: Var,
        kernel: Var,
        dims: ConvDims,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    TimeStep {
        input: Var,
        t: usize,
    },
    Stack(Vec<Var>),
    ReverseTime(Var),
    Concat(Var, Var),
    SliceLast {
        input: Var,
        start: usize,
    },
    Bce {
        probs: Var,
        targets: Vec<T>,
        eps: T,
    },
    Custom {
        input: Var,
        backward: CustomBackward<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order of the
/// graph. Leaves created with [`Graph::variable`] receive gradients on
/// [`Graph::backward`]; leaves created with [`Graph::constant`] do not.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    tracking: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            tracking: true,
        }
    }

    /// A graph that evaluates forward ops without recording backward rules.
    pub fn untracked() -> Self {
        Self {
            nodes: Vec::new(),
            tracking: false,
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.tracking
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf variable, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        let tracked = self.tracking;
        self.push(value, Op::Leaf, tracked)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let (op, requires_grad) = if self.tracking && requires_grad {
            (op, true)
        } else {
            (Op::Leaf, false)
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Mul, a, b)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let out_shape = broadcast_shape(sa, sb).ok_or_else(|| TensorError::ShapeMismatch {
            op: name,
            left: sa.to_vec(),
            right: sb.to_vec(),
        })?;
        let ma = IndexMap::new(&out_shape, sa);
        let mb = IndexMap::new(&out_shape, sb);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let out: Vec<T> = (0..numel(&out_shape))
            .map(|i| {
                let (x, y) = (da[ma.get(i)], db[mb.get(i)]);
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::Binary(kind, a, b), rg))
    }

    pub fn activation(&mut self, act: Activation, x: Var) -> Var {
        if act == Activation::Linear {
            return x;
        }
        let value = self.value(x);
        let out: Vec<T> = value.data().iter().map(|&v| act.apply(v)).collect();
        let t = Tensor::new(value.shape(), out).expect("same shape");
        let rg = self.needs(x);
        self.push(t, Op::Activation(act, x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(Activation::Relu, x)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self
            .value(x)
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let rg = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let data = self.value(x).data();
        let n = T::of(data.len() as f64);
        let s = data.iter().fold(T::zero(), |acc, &v| acc + v) / n;
        let rg = self.needs(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Row gather from a `[rows, d]` table. The output has shape
    /// `out_shape ++ [d]`, where `out_shape` must hold `indices.len()` elements.
    pub fn gather(
        &mut self,
        table: Var,
        indices: &[usize],
        out_shape: &[usize],
    ) -> Result<Var, TensorError> {
        let ts = self.shape(table);
        if ts.len() != 2 {
            return Err(TensorError::Rank {
                op: "gather",
                expected: 2,
                shape: ts.to_vec(),
            });
        }
        if numel(out_shape) != indices.len() {
            return Err(TensorError::DataLength {
                shape: out_shape.to_vec(),
                len: indices.len(),
            });
        }
        let (rows, d) = (ts[0], ts[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather",
                index: bad,
                bound: rows,
            });
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let mut shape = out_shape.to_vec();
        shape.push(d);
        let rg = self.needs(table);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Valid-padding convolution of `[n, L, c_in]` with a `[k, c_in, c_out]`
    /// kernel and optional `[c_out]` bias. No activation is applied.
    pub fn conv1d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
    ) -> Result<Var, TensorError> {
        let (xs, ks) = (self.shape(input), self.shape(kernel));
        if xs.len() != 3 {
            return Err(TensorError::Rank {
                op: "conv1d",
                expected: 3,
                shape: xs.to_vec(),
            });
        }
        if ks.len() != 3 || ks[1] != xs[2] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                left: xs.to_vec(),
                right: ks.to_vec(),
            });
        }
        let dims = ConvDims {
            batch: xs[0],
            len: xs[1],
            c_in: xs[2],
            width: ks[0],
            c_out: ks[2],
        };
        if dims.width == 0 || dims.len < dims.width {
            return Err(TensorError::WindowTooLong {
                op: "conv1d",
                len: dims.len,
                window: dims.width,
            });
        }
        if let Some(b) = bias {
            if self.shape(b) != [dims.c_out] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv1d bias",
                    left: ks.to_vec(),
                    right: self.shape(b).to_vec(),
                });
            }
        }
        let out_len = dims.out_len();
        let mut out = vec![T::zero(); dims.batch * out_len * dims.c_out];
        kernels::conv1d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            &mut out,
            dims,
        );
        let rg = self.needs(input) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            Tensor::new(&[dims.batch, out_len, dims.c_out], out)?,
            Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
            },
            rg,
        ))
    }

    /// Per-channel valid convolution of `[n, L, c]` with a `[k, c]` kernel.
    pub fn depthwise_conv1d(&mut self, input: Var, kernel: Var) -> Result<Var, TensorError> {
        let (xs, ks) = (self.shape(input), self.shape(kernel));
        if xs.len() != 3 {
            return Err(TensorError::Rank {
                op: "depthwise_conv1d",
                expected: 3,
                shape: xs.to_vec(),
            });
        }
        if ks.len() != 2 || ks[1] != xs[2] {
            return Err(TensorError::ShapeMismatch {
                op: "depthwise_conv1d",
                left: xs.to_vec(),
                right: ks.to_vec(),
            });
        }
        let dims = ConvDims {
            batch: xs[0],
            len: xs[1],
            c_in: xs[2],
            width: ks[0],
            c_out: xs[2],
        };
        if dims.width == 0 || dims.len < dims.width {
            return Err(TensorError::WindowTooLong {
                op: "depthwise_conv1d",
                len: dims.len,
                window: dims.width,
            });
        }
        let out_len = dims.out_len();
        let mut out = vec![T::zero(); dims.batch * out_len * dims.c_in];
        kernels::depthwise_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            &mut out,
            dims,
        );
        let rg = self.needs(input) || self.needs(kernel);
        Ok(self.push(
            Tensor::new(&[dims.batch, out_len, dims.c_in], out)?,
            Op::Depthwise {
                input,
                kernel,
                dims,
            },
            rg,
        ))
    }

    /// Windowed max over the time axis of `[n, L, c]`; backward routes each
    /// window's gradient to its first maximal element.
    pub fn maxpool1d(
        &mut self,
        input: Var,
        width: usize,
        stride: usize,
    ) -> Result<Var, TensorError> {
        let xs = self.shape(input);
        if xs.len() != 3 {
            return Err(TensorError::Rank {
                op: "maxpool1d",
                expected: 3,
                shape: xs.to_vec(),
            });
        }
        if width == 0 || stride == 0 {
            return Err(TensorError::Invalid {
                op: "maxpool1d",
                reason: "pool width and stride must be positive",
            });
        }
        let (n, len, c) = (xs[0], xs[1], xs[2]);
        if len < width {
            return Err(TensorError::WindowTooLong {
                op: "maxpool1d",
                len,
                window: width,
            });
        }
        let out_len = (len - width) / stride + 1;
        let mut out = vec![T::zero(); n * out_len * c];
        let argmax =
            kernels::maxpool_forward(self.value(input).data(), &mut out, n, len, c, width, stride);
        let rg = self.needs(input);
        Ok(self.push(
            Tensor::new(&[n, out_len, c], out)?,
            Op::MaxPool { input, argmax },
            rg,
        ))
    }

    /// Max over the whole time axis: `[n, L, c] -> [n, c]`.
    pub fn global_maxpool(&mut self, input: Var) -> Result<Var, TensorError> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 3 {
            return Err(TensorError::Rank {
                op: "global_maxpool",
                expected: 3,
                shape: xs,
            });
        }
        let pooled = self.maxpool1d(input, xs[1], 1)?;
        self.reshape(pooled, &[xs[0], xs[2]])
    }

    /// Slice `[n, L, c] -> [n, c]` at time step `t`.
    pub fn time_step(&mut self, input: Var, t: usize) -> Result<Var, TensorError> {
        let xs = self.shape(input);
        if xs.len() != 3 {
            return Err(TensorError::Rank {
                op: "time_step",
                expected: 3,
                shape: xs.to_vec(),
            });
        }
        let (n, len, c) = (xs[0], xs[1], xs[2]);
        if t >= len {
            return Err(TensorError::IndexOutOfRange {
                op: "time_step",
                index: t,
                bound: len,
            });
        }
        let src = self.value(input).data();
        let mut out = Vec::with_capacity(n * c);
        for b in 0..n {
            out.extend_from_slice(&src[(b * len + t) * c..(b * len + t + 1) * c]);
        }
        let rg = self.needs(input);
        Ok(self.push(Tensor::new(&[n, c], out)?, Op::TimeStep { input, t }, rg))
    }

    /// Stack `L` tensors of shape `[n, c]` into `[n, L, c]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = steps.first() else {
            return Err(TensorError::Invalid {
                op: "stack_time",
                reason: "no steps to stack",
            });
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() != 2 {
            return Err(TensorError::Rank {
                op: "stack_time",
                expected: 2,
                shape: s0,
            });
        }
        for &s in steps {
            if self.shape(s) != s0.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_time",
                    left: s0,
                    right: self.shape(s).to_vec(),
                });
            }
        }
        let (n, c, len) = (s0[0], s0[1], steps.len());
        let mut out = vec![T::zero(); n * len * c];
        for (t, &s) in steps.iter().enumerate() {
            let src = self.value(s).data();
            for b in 0..n {
                out[(b * len + t) * c..(b * len + t + 1) * c]
                    .copy_from_slice(&src[b * c..(b + 1) * c]);
            }
        }
        let rg = steps.iter().any(|&s| self.needs(s));
        Ok(self.push(
            Tensor::new(&[n, len, c], out)?,
            Op::Stack(steps.to_vec()),
            rg,
        ))
    }

    /// Reverse the time axis of `[n, L, c]`.
    pub fn reverse_time(&mut self, input: Var) -> Result<Var, TensorError> {
        let xs = self.shape(input);
        if xs.len() != 3 {
            return Err(TensorError::Rank {
                op: "reverse_time",
                expected: 3,
                shape: xs.to_vec(),
            });
        }
        let shape = xs.to_vec();
        let out = reverse_time_data(self.value(input).data(), shape[0], shape[1], shape[2]);
        let rg = self.needs(input);
        Ok(self.push(Tensor::new(&shape, out)?, Op::ReverseTime(input), rg))
    }

    /// Concatenate along the last axis; all leading dimensions must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(TensorError::ShapeMismatch {
                op: "concat_last",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = numel(&sa[..sa.len() - 1]);
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Concat(a, b), rg))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&mut self, input: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let xs = self.shape(input);
        let Some(&m) = xs.last() else {
            return Err(TensorError::Rank {
                op: "slice_last",
                expected: 1,
                shape: Vec::new(),
            });
        };
        if start + len > m || len == 0 {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_last",
                index: start + len,
                bound: m,
            });
        }
        let rows = numel(&xs[..xs.len() - 1]);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = len;
        let src = self.value(input).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&src[r * m + start..r * m + start + len]);
        }
        let rg = self.needs(input);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::SliceLast { input, start },
            rg,
        ))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets, with
    /// probabilities clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, probs: Var, targets: &[T], eps: T) -> Result<Var, TensorError> {
        let p = self.value(probs).data();
        if p.len() != targets.len() || p.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "bce",
                left: self.shape(probs).to_vec(),
                right: vec![targets.len()],
            });
        }
        let one = T::one();
        let mut total = T::zero();
        for (&pi, &yi) in p.iter().zip(targets) {
            let pc = clamp(pi, eps, one - eps);
            total += yi * pc.ln() + (one - yi) * (one - pc).ln();
        }
        let loss = -total / T::of(p.len() as f64);
        let rg = self.needs(probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                probs,
                targets: targets.to_vec(),
                eps,
            },
            rg,
        ))
    }

    /// Elementwise op with caller-supplied forward and backward rules. The
    /// backward closure receives the input value, the output value and the
    /// upstream gradient, and returns the gradient with respect to the input.
    pub fn custom_unary<F, B>(
        &mut self,
        input: Var,
        forward: F,
        backward: B,
    ) -> Result<Var, TensorError>
    where
        F: FnOnce(&Tensor<T>) -> Tensor<T>,
        B: Fn(&Tensor<T>, &Tensor<T>, &[T]) -> Vec<T> + 'static,
    {
        let out = forward(self.value(input));
        let rg = self.needs(input);
        Ok(self.push(
            out,
            Op::Custom {
                input,
                backward: Box::new(backward),
            },
            rg,
        ))
    }

    /// Propagates gradients from a single-element root to every leaf
    /// variable it depends on. Gradients accumulate across calls until
    /// [`Graph::zero_grad`].
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        if !self.tracking {
            return Err(TensorError::Untracked);
        }
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![T::one()]);

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(id, &g, &mut grads);
        }
        Ok(())
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(da) = self.slot(grads, *a) {
                    kernels::gemm_nt(g, bv, da, m, n, k);
                }
                if let Some(db) = self.slot(grads, *b) {
                    kernels::gemm_tn(av, g, db, m, k, n);
                }
            }
            Op::Binary(kind, a, b) => {
                let out_shape = node.value.shape();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let ma = IndexMap::new(out_shape, self.shape(*a));
                let mb = IndexMap::new(out_shape, self.shape(*b));
                if let Some(da) = self.slot(grads, *a) {
                    for (i, &gi) in g.iter().enumerate() {
                        da[ma.get(i)] += match kind {
                            Binary::Add | Binary::Sub => gi,
                            Binary::Mul => gi * bv[mb.get(i)],
                        };
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for (i, &gi) in g.iter().enumerate() {
                        db[mb.get(i)] += match kind {
                            Binary::Add => gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * av[ma.get(i)],
                        };
                    }
                }
            }
            Op::Activation(act, x) => {
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                        *d += gi * act.derivative_from_output(yi);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                let n = T::of(self.value(*x).len() as f64);
                if let Some(dx) = self.slot(grads, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0] / n);
                }
            }
            Op::Reshape(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi);
                }
            }
            Op::Gather { table, indices } => {
                let d = self.shape(*table)[1];
                if let Some(dt) = self.slot(grads, *table) {
                    for (r, &i) in indices.iter().enumerate() {
                        let src = &g[r * d..(r + 1) * d];
                        dt[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, &v)| *a += v);
                    }
                }
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
            } => {
                let xv = self.value(*input).data();
                let kv = self.value(*kernel).data();
                if let Some(dx) = self.slot(grads, *input) {
                    kernels::conv1d_backward_input(g, kv, dx, *dims);
                }
                if let Some(dk) = self.slot(grads, *kernel) {
                    kernels::conv1d_backward_kernel(g, xv, dk, *dims);
                }
                if let Some(b) = bias {
                    if let Some(db) = self.slot(grads, *b) {
                        for row in g.chunks_exact(dims.c_out) {
                            db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                        }
                    }
                }
            }
            Op::Depthwise {
                input,
                kernel,
                dims,
            } => {
                let xv = self.value(*input).data();
                let kv = self.value(*kernel).data();
                // Two disjoint slots cannot be borrowed from `grads` at once,
                // so each side is accumulated separately.
                if let Some(dx) = self.slot(grads, *input) {
                    kernels::depthwise_backward(g, xv, kv, Some(dx), None, *dims);
                }
                if let Some(dk) = self.slot(grads, *kernel) {
                    kernels::depthwise_backward(g, xv, kv, None, Some(dk), *dims);
                }
            }
            Op::MaxPool { input, argmax } => {
                if let Some(dx) = self.slot(grads, *input) {
                    for (&src, &gi) in argmax.iter().zip(g) {
                        dx[src] += gi;
                    }
                }
            }
            Op::TimeStep { input, t } => {
                let xs = self.shape(*input);
                let (n, len, c) = (xs[0], xs[1], xs[2]);
                if let Some(dx) = self.slot(grads, *input) {
                    for b in 0..n {
                        let dst = &mut dx[(b * len + t) * c..(b * len + t + 1) * c];
                        dst.iter_mut()
                            .zip(&g[b * c..(b + 1) * c])
                            .for_each(|(a, &v)| *a += v);
                    }
                }
            }
            Op::Stack(steps) => {
                let s = node.value.shape();
                let (n, len, c) = (s[0], s[1], s[2]);
                for (t, &step) in steps.iter().enumerate() {
                    if let Some(ds) = self.slot(grads, step) {
                        for b in 0..n {
                            let src = &g[(b * len + t) * c..(b * len + t + 1) * c];
                            ds[b * c..(b + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(a, &v)| *a += v);
                        }
                    }
                }
            }
            Op::ReverseTime(x) => {
                let s = node.value.shape();
                let rev = reverse_time_data(g, s[0], s[1], s[2]);
                if let Some(dx) = self.slot(grads, *x) {
                    dx.iter_mut().zip(&rev).for_each(|(a, &v)| *a += v);
                }
            }
            Op::Concat(a, b) => {
                let ca = *self.shape(*a).last().unwrap();
                let cb = *self.shape(*b).last().unwrap();
                let rows = g.len() / (ca + cb);
                if let Some(da) = self.slot(grads, *a) {
                    for r in 0..rows {
                        let src = &g[r * (ca + cb)..r * (ca + cb) + ca];
                        da[r * ca..(r + 1) * ca]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &v)| *x += v);
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for r in 0..rows {
                        let src = &g[r * (ca + cb) + ca..(r + 1) * (ca + cb)];
                        db[r * cb..(r + 1) * cb]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &v)| *x += v);
                    }
                }
            }
            Op::SliceLast { input, start } => {
                let m = *self.shape(*input).last().unwrap();
                let len = *node.value.shape().last().unwrap();
                if let Some(dx) = self.slot(grads, *input) {
                    for (r, src) in g.chunks_exact(len).enumerate() {
                        dx[r * m + start..r * m + start + len]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, &v)| *a += v);
                    }
                }
            }
            Op::Bce {
                probs,
                targets,
                eps,
            } => {
                let p = self.value(*probs).data();
                let n = T::of(p.len() as f64);
                let one = T::one();
                let lo = *eps;
                let hi = one - *eps;
                if let Some(dp) = self.slot(grads, *probs) {
                    for ((d, &pi), &yi) in dp.iter_mut().zip(p).zip(targets) {
                        if pi < lo || pi > hi {
                            continue;
                        }
                        *d += g[0] * (-(yi / pi) + (one - yi) / (one - pi)) / n;
                    }
                }
            }
            Op::Custom { input, backward } => {
                let dx_local = backward(self.value(*input), &node.value, g);
                if let Some(dx) = self.slot(grads, *input) {
                    dx.iter_mut().zip(&dx_local).for_each(|(a, &v)| *a += v);
                }
            }
        }
    }
}

#[inline]
fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn reverse_time_data<T: Scalar>(src: &[T], n: usize, len: usize, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for b in 0..n {
        for t in (0..len).rev() {
            out.extend_from_slice(&src[(b * len + t) * c..(b * len + t + 1) * c]);
        }
    }
    out
}
