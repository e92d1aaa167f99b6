//! Dense `f64` arrays and the differentiable primitives the network is built
//! from. Every primitive comes as a forward/backward pair; there is no tape.
//!
//! Layouts are row-major. Sequences are `[channels, length]`, convolution
//! kernels `[c_out, c_in, k]`, dense weights `[n_out, n_in]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidTensor(format!("extents must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// # Panics
    /// If any extent is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// # Panics
    /// If any extent is zero.
    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor extents must be positive: {shape:?}"
        );
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// One-dimensional tensor. Panics on an empty vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "tensor must not be empty");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape("add_assign", other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub(crate) fn expect_shape(&self, op: &'static str, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::shape(op, &self.shape, shape));
        }
        Ok(())
    }

    fn rows(&self, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [c, l] => Ok((c, l)),
            _ => Err(Error::shape(op, &self.shape, &[0, 0])),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernels: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn new(kernels: Tensor, bias: Tensor) -> Result<Self> {
        let [c_out, _, _] = *kernels.shape() else {
            return Err(Error::InvalidTensor(format!(
                "conv kernels must be [c_out, c_in, k], got {:?}",
                kernels.shape()
            )));
        };
        bias.expect_shape("ConvParams::new", &[c_out])?;
        Ok(Self { kernels, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        Self {
            kernels: Tensor::zeros(&[c_out, c_in, k]),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn c_out(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.c_out(), self.c_in(), self.kernel_size())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let [n_out, _] = *weights.shape() else {
            return Err(Error::InvalidTensor(format!(
                "dense weights must be [n_out, n_in], got {:?}",
                weights.shape()
            )));
        };
        bias.expect_shape("DenseParams::new", &[n_out])?;
        Ok(Self { weights, bias })
    }

    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[n_out, n_in]),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    pub fn n_out(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn n_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_out(), self.n_in())
    }
}

/// Left padding for a "same" convolution; the extra sample for even `k`
/// goes on the right.
pub fn same_padding(k: usize) -> (usize, usize) {
    let left = (k - 1) / 2;
    (left, k - 1 - left)
}

/// Valid output range `t` for tap `j` when reading `input[t + j - pad_left]`.
#[inline]
fn tap_range(j: usize, pad_left: usize, len: usize) -> (isize, usize, usize) {
    let shift = j as isize - pad_left as isize;
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).clamp(0, len as isize) as usize;
    (shift, lo, hi)
}

/// Zero-padded cross-correlation that preserves sequence length.
pub fn conv1d_same(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let (c_in, len) = input.rows("conv1d_same")?;
    if c_in != params.c_in() {
        return Err(Error::shape("conv1d_same", input.shape(), params.kernels.shape()));
    }
    let (c_out, k) = (params.c_out(), params.kernel_size());
    let (pad_left, _) = same_padding(k);
    let w = params.kernels.data();
    let x = input.data();
    let mut out = vec![0.0; c_out * len];
    for (o, row) in out.chunks_exact_mut(len).enumerate() {
        row.fill(params.bias.data()[o]);
        for i in 0..c_in {
            let xi = &x[i * len..(i + 1) * len];
            for j in 0..k {
                let wv = w[(o * c_in + i) * k + j];
                let (shift, lo, hi) = tap_range(j, pad_left, len);
                if lo >= hi {
                    continue;
                }
                let src = &xi[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                for (y, xv) in row[lo..hi].iter_mut().zip(src) {
                    *y += wv * xv;
                }
            }
        }
    }
    Tensor::new(vec![c_out, len], out)
}

/// Gradients of [`conv1d_same`], accumulated into `grads`. Returns the
/// gradient with respect to the input.
pub fn conv1d_same_backward_into(
    input: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
    grads: &mut ConvParams,
) -> Result<Tensor> {
    let (c_in, len) = input.rows("conv1d_same_backward")?;
    let (c_out, k) = (params.c_out(), params.kernel_size());
    if c_in != params.c_in() {
        return Err(Error::shape(
            "conv1d_same_backward",
            input.shape(),
            params.kernels.shape(),
        ));
    }
    grad_out.expect_shape("conv1d_same_backward", &[c_out, len])?;
    grads
        .kernels
        .expect_shape("conv1d_same_backward", params.kernels.shape())?;

    let (pad_left, _) = same_padding(k);
    let x = input.data();
    let g = grad_out.data();
    let w = params.kernels.data();
    let mut grad_in = vec![0.0; c_in * len];
    let gw = grads.kernels.data_mut();
    for o in 0..c_out {
        let go = &g[o * len..(o + 1) * len];
        grads.bias.data_mut()[o] += go.iter().sum::<f64>();
        for i in 0..c_in {
            let xi = &x[i * len..(i + 1) * len];
            let gi = &mut grad_in[i * len..(i + 1) * len];
            for j in 0..k {
                let (shift, lo, hi) = tap_range(j, pad_left, len);
                if lo >= hi {
                    continue;
                }
                let s_lo = (lo as isize + shift) as usize;
                let s_hi = (hi as isize + shift) as usize;
                let widx = (o * c_in + i) * k + j;
                let wv = w[widx];
                let mut acc = 0.0;
                for ((gv, xv), dst) in go[lo..hi].iter().zip(&xi[s_lo..s_hi]).zip(&mut gi[s_lo..s_hi]) {
                    acc += gv * xv;
                    *dst += wv * gv;
                }
                gw[widx] += acc;
            }
        }
    }
    Tensor::new(vec![c_in, len], grad_in)
}

pub fn conv1d_same_backward(input: &Tensor, params: &ConvParams, grad_out: &Tensor) -> Result<(Tensor, ConvParams)> {
    let mut grads = params.zeros_like();
    let grad_in = conv1d_same_backward_into(input, params, grad_out, &mut grads)?;
    Ok((grad_in, grads))
}

/// Winning positions of a [`maxpool2`] call, as flat indices into its input.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolArgmax {
    input_shape: Vec<usize>,
    indices: Vec<usize>,
}

impl PoolArgmax {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

/// Non-overlapping max pooling with window and stride 2 along the last axis.
/// Ties go to the earlier element.
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, PoolArgmax)> {
    let (c, len) = input.rows("maxpool2")?;
    if len % 2 != 0 {
        return Err(Error::InvalidTensor(format!(
            "maxpool2 needs an even length, got {len}"
        )));
    }
    let half = len / 2;
    let x = input.data();
    let mut out = Vec::with_capacity(c * half);
    let mut indices = Vec::with_capacity(c * half);
    for pair in 0..c * half {
        let a = 2 * pair;
        // `>=` keeps the earlier index on ties.
        let idx = if x[a] >= x[a + 1] { a } else { a + 1 };
        out.push(x[idx]);
        indices.push(idx);
    }
    Ok((
        Tensor::new(vec![c, half], out)?,
        PoolArgmax {
            input_shape: input.shape().to_vec(),
            indices,
        },
    ))
}

pub fn maxpool2_backward(argmax: &PoolArgmax, grad_out: &Tensor) -> Result<Tensor> {
    let (c, len) = (argmax.input_shape[0], argmax.input_shape[1]);
    grad_out.expect_shape("maxpool2_backward", &[c, len / 2])?;
    let mut grad_in = vec![0.0; c * len];
    for (&idx, &g) in argmax.indices.iter().zip(grad_out.data()) {
        grad_in[idx] += g;
    }
    Tensor::new(argmax.input_shape.clone(), grad_in)
}

/// Affine map `weights · input + bias`. Any input shape is accepted as long
/// as it holds `n_in` elements, which makes flattening implicit.
pub fn dense(input: &Tensor, params: &DenseParams) -> Result<Tensor> {
    let (n_out, n_in) = (params.n_out(), params.n_in());
    if input.len() != n_in {
        return Err(Error::shape("dense", input.shape(), params.weights.shape()));
    }
    let x = input.data();
    let out = params
        .weights
        .data()
        .chunks_exact(n_in)
        .zip(params.bias.data())
        .map(|(row, b)| b + dot(row, x))
        .collect::<Vec<_>>();
    debug_assert_eq!(out.len(), n_out);
    Ok(Tensor::from_vec(out))
}

/// Gradients of [`dense`], accumulated into `grads`. The returned input
/// gradient has the input's shape.
pub fn dense_backward_into(
    input: &Tensor,
    params: &DenseParams,
    grad_out: &Tensor,
    grads: &mut DenseParams,
) -> Result<Tensor> {
    let (n_out, n_in) = (params.n_out(), params.n_in());
    if input.len() != n_in {
        return Err(Error::shape("dense_backward", input.shape(), params.weights.shape()));
    }
    grad_out.expect_shape("dense_backward", &[n_out])?;
    grads.weights.expect_shape("dense_backward", params.weights.shape())?;

    let x = input.data();
    let mut grad_in = vec![0.0; n_in];
    let rows = params.weights.data().chunks_exact(n_in);
    let grows = grads.weights.data_mut().chunks_exact_mut(n_in);
    for ((row, grow), &g) in rows.zip(grows).zip(grad_out.data()) {
        if g == 0.0 {
            continue;
        }
        for ((gi, gw), (w, xv)) in grad_in.iter_mut().zip(grow).zip(row.iter().zip(x)) {
            *gi += w * g;
            *gw += g * xv;
        }
    }
    for (b, g) in grads.bias.data_mut().iter_mut().zip(grad_out.data()) {
        *b += g;
    }
    Tensor::new(input.shape().to_vec(), grad_in)
}

pub fn dense_backward(input: &Tensor, params: &DenseParams, grad_out: &Tensor) -> Result<(Tensor, DenseParams)> {
    let mut grads = params.zeros_like();
    let grad_in = dense_backward_into(input, params, grad_out, &mut grads)?;
    Ok((grad_in, grads))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: t.shape.clone(),
        data: t.data.iter().map(|&v| f(v)).collect(),
    }
}

fn zip_map(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    a.expect_shape(op, b.shape())?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    })
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    map(t, sigmoid_scalar)
}

/// Takes the sigmoid *output*, not its input.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    zip_map("sigmoid_backward", output, grad_out, |s, g| g * s * (1.0 - s))
}

pub fn relu(t: &Tensor) -> Tensor {
    map(t, |v| v.max(0.0))
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    zip_map("relu_backward", input, grad_out, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub fn elementwise_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_map("elementwise_mul", a, b, |x, y| x * y)
}

pub fn elementwise_mul_backward(a: &Tensor, b: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    a.expect_shape("elementwise_mul_backward", b.shape())?;
    Ok((
        zip_map("elementwise_mul_backward", grad_out, b, |g, y| g * y)?,
        zip_map("elementwise_mul_backward", grad_out, a, |g, x| g * x)?,
    ))
}
