//! The sequence-to-sequence network:
//!
//! ```text
//! x [1, l_in]
//!   -> (GLU conv block -> maxpool2) x n_glu_stages
//!   -> flatten -> dense + ReLU (l_out)
//!   -> residual blocks (dense + ReLU -> dense, plus shortcut)
//!   -> dense (l_out, linear)
//! ```
//!
//! Forward passes return an activation cache which the matching backward
//! pass consumes. Parameters are immutable during both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    conv1d_same, conv1d_same_backward_into, dense, dense_backward_into, elementwise_mul, maxpool2, maxpool2_backward,
    relu, relu_backward, sigmoid, ConvParams, DenseParams, PoolArgmax, Tensor,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub l_in: usize,
    pub l_out: usize,
    pub n_glu_stages: usize,
    pub conv_channels: usize,
    pub kernel_size: usize,
    pub n_res_blocks: usize,
    pub res_hidden: usize,
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            l_in: 800,
            l_out: 100,
            n_glu_stages: 3,
            conv_channels: 100,
            kernel_size: 4,
            n_res_blocks: 2,
            res_hidden: 50,
            rng_seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Small configuration used for gradient checks and quick experiments.
    pub fn reduced() -> Self {
        Self {
            l_in: 64,
            l_out: 8,
            conv_channels: 8,
            n_res_blocks: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.l_out == 0 || !self.l_out.is_multiple_of(2) {
            return fail(format!("l_out must be even and positive, got {}", self.l_out));
        }
        if self.n_glu_stages == 0 || self.n_glu_stages > 16 {
            return fail(format!("n_glu_stages must be in 1..=16, got {}", self.n_glu_stages));
        }
        if self.l_out.checked_shl(self.n_glu_stages as u32) != Some(self.l_in) {
            return fail(format!(
                "l_in ({}) must equal l_out ({}) * 2^{}",
                self.l_in, self.l_out, self.n_glu_stages
            ));
        }
        if self.conv_channels == 0 || self.kernel_size == 0 || self.res_hidden == 0 {
            return fail("conv_channels, kernel_size and res_hidden must be positive".into());
        }
        Ok(())
    }

    /// Sequence length entering each GLU stage, followed by the pooled length
    /// after the last stage: `[l_in, l_in/2, ..., l_out]`.
    pub fn stage_lengths(&self) -> Vec<usize> {
        (0..=self.n_glu_stages).map(|s| self.l_in >> s).collect()
    }

    pub fn flatten_size(&self) -> usize {
        self.conv_channels * (self.l_in >> self.n_glu_stages)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluStage {
    pub main: ConvParams,
    pub gate: ConvParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub hidden: DenseParams,
    pub out: DenseParams,
}

/// Every trainable tensor of the network. Also used as the gradient
/// container, since gradients share the parameters' shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub glu: Vec<GluStage>,
    pub dense: DenseParams,
    pub residual: Vec<ResidualBlock>,
    pub output: DenseParams,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let c = config.conv_channels;
        let k = config.kernel_size;
        let glu = (0..config.n_glu_stages)
            .map(|s| {
                let c_in = if s == 0 { 1 } else { c };
                GluStage {
                    main: ConvParams::zeros(c, c_in, k),
                    gate: ConvParams::zeros(c, c_in, k),
                }
            })
            .collect();
        let residual = (0..config.n_res_blocks)
            .map(|_| ResidualBlock {
                hidden: DenseParams::zeros(config.res_hidden, config.l_out),
                out: DenseParams::zeros(config.l_out, config.res_hidden),
            })
            .collect();
        Self {
            glu,
            dense: DenseParams::zeros(config.l_out, config.flatten_size()),
            residual,
            output: DenseParams::zeros(config.l_out, config.l_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Tensors in declaration order; checkpoints and optimizers rely on it.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for s in &self.glu {
            out.extend([&s.main.kernels, &s.main.bias, &s.gate.kernels, &s.gate.bias]);
        }
        out.extend([&self.dense.weights, &self.dense.bias]);
        for r in &self.residual {
            out.extend([&r.hidden.weights, &r.hidden.bias, &r.out.weights, &r.out.bias]);
        }
        out.extend([&self.output.weights, &self.output.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for s in &mut self.glu {
            out.extend([
                &mut s.main.kernels,
                &mut s.main.bias,
                &mut s.gate.kernels,
                &mut s.gate.bias,
            ]);
        }
        out.extend([&mut self.dense.weights, &mut self.dense.bias]);
        for r in &mut self.residual {
            out.extend([
                &mut r.hidden.weights,
                &mut r.hidden.bias,
                &mut r.out.weights,
                &mut r.out.bias,
            ]);
        }
        out.extend([&mut self.output.weights, &mut self.output.bias]);
        out
    }

    /// Names matching [`Parameters::tensors`] position by position.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in 0..self.glu.len() {
            for path in ["main", "gate"] {
                out.push(format!("glu{s}.{path}.kernels"));
                out.push(format!("glu{s}.{path}.bias"));
            }
        }
        out.extend(["dense.weights".to_string(), "dense.bias".to_string()]);
        for r in 0..self.residual.len() {
            for layer in ["hidden", "out"] {
                out.push(format!("res{r}.{layer}.weights"));
                out.push(format!("res{r}.{layer}.bias"));
            }
        }
        out.extend(["output.weights".to_string(), "output.bias".to_string()]);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Parameters) -> Result<()> {
        let src = other.tensors();
        let dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::InvalidTensor(format!(
                "parameter sets differ in tensor count: {} vs {}",
                dst.len(),
                src.len()
            )));
        }
        for (d, s) in dst.into_iter().zip(src) {
            d.add_assign(s)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn same_shapes(&self, other: &Parameters) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
    }
}

/// Glorot-uniform weights, zero biases; fully determined by `seed`.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<Parameters> {
    config.validate()?;
    let mut params = Parameters::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in params.tensors_mut() {
        let (fan_in, fan_out) = match *t.shape() {
            [c_out, c_in, k] => (c_in * k, c_out * k),
            [n_out, n_in] => (n_in, n_out),
            _ => continue, // bias
        };
        let limit = glorot_limit(fan_in, fan_out);
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-limit..=limit));
    }
    Ok(params)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `conv(x, main) ⊗ σ(conv(x, gate))`; both pathways read the same input.
pub fn glu_block_forward(x: &Tensor, main: &ConvParams, gate: &ConvParams) -> Result<Tensor> {
    let a = conv1d_same(x, main)?;
    let b = sigmoid(&conv1d_same(x, gate)?);
    elementwise_mul(&a, &b)
}

/// `out(relu(hidden(z))) + z`.
pub fn residual_block_forward(z: &Tensor, block: &ResidualBlock) -> Result<Tensor> {
    if z.len() != block.out.n_out() {
        return Err(Error::shape(
            "residual_block_forward",
            z.shape(),
            block.out.weights.shape(),
        ));
    }
    let h = relu(&dense(z, &block.hidden)?);
    let mut r = dense(&h, &block.out)?;
    r.add_assign(z)?;
    Ok(r)
}

#[derive(Debug, Clone)]
struct GluCache {
    input: Tensor,
    main: Tensor,
    gate: Tensor,
    argmax: PoolArgmax,
}

#[derive(Debug, Clone)]
struct ResCache {
    input: Tensor,
    hidden_pre: Tensor,
}

/// Activations recorded by [`Network::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    config: NetworkConfig,
    glu: Vec<GluCache>,
    flat: Tensor,
    dense_pre: Tensor,
    residual: Vec<ResCache>,
    output_in: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    params: Parameters,
}

impl Network {
    pub fn build(config: NetworkConfig) -> Result<Self> {
        let params = init_params(&config, config.rng_seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parameters(config: NetworkConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        if !Parameters::zeros(&config).same_shapes(&params) {
            return Err(Error::InvalidConfig("parameter shapes do not match the config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn into_parameters(self) -> Parameters {
        self.params
    }

    fn check_input(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.config.l_in || !matches!(x.shape(), [_] | [1, _]) {
            return Err(Error::shape("forward", x.shape(), &[1, self.config.l_in]));
        }
        x.clone().reshape(vec![1, self.config.l_in])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_batch(&self, xs: &[Tensor]) -> Result<Vec<Tensor>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let mut h = self.check_input(x)?;
        let mut glu = Vec::with_capacity(self.params.glu.len());
        for stage in &self.params.glu {
            let main = conv1d_same(&h, &stage.main)?;
            let gate = sigmoid(&conv1d_same(&h, &stage.gate)?);
            let g = elementwise_mul(&main, &gate)?;
            let (pooled, argmax) = maxpool2(&g)?;
            glu.push(GluCache {
                input: h,
                main,
                gate,
                argmax,
            });
            h = pooled;
        }
        let flat = h;
        let dense_pre = dense(&flat, &self.params.dense)?;
        let mut z = relu(&dense_pre);
        let mut residual = Vec::with_capacity(self.params.residual.len());
        for block in &self.params.residual {
            let hidden_pre = dense(&z, &block.hidden)?;
            let mut r = dense(&relu(&hidden_pre), &block.out)?;
            r.add_assign(&z)?;
            residual.push(ResCache { input: z, hidden_pre });
            z = r;
        }
        let out = dense(&z, &self.params.output)?;
        let cache = ForwardCache {
            config: self.config.clone(),
            glu,
            flat,
            dense_pre,
            residual,
            output_in: z,
        };
        Ok((out, cache))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor) -> Result<Gradients> {
        let mut grads = self.params.zeros_like();
        self.backward_into(cache, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// Chain-rule pass through the whole stack, adding into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_output: &Tensor, grads: &mut Gradients) -> Result<()> {
        if cache.config != self.config {
            return Err(Error::CacheMismatch(format!(
                "cache built for {:?}, network is {:?}",
                cache.config, self.config
            )));
        }
        if !grads.same_shapes(&self.params) {
            return Err(Error::InvalidTensor(
                "gradient buffer does not match parameter shapes".into(),
            ));
        }
        grad_output.expect_shape("backward", &[self.config.l_out])?;

        let p = &self.params;
        let mut g = dense_backward_into(&cache.output_in, &p.output, grad_output, &mut grads.output)?;
        for ((block, rc), gb) in p
            .residual
            .iter()
            .zip(&cache.residual)
            .zip(grads.residual.iter_mut())
            .rev()
        {
            let h = relu(&rc.hidden_pre);
            let gh = dense_backward_into(&h, &block.out, &g, &mut gb.out)?;
            let gh = relu_backward(&rc.hidden_pre, &gh)?;
            let gz = dense_backward_into(&rc.input, &block.hidden, &gh, &mut gb.hidden)?;
            g.add_assign(&gz)?;
        }
        let g = relu_backward(&cache.dense_pre, &g)?;
        let mut g = dense_backward_into(&cache.flat, &p.dense, &g, &mut grads.dense)?;

        for (s, (stage, gc)) in p.glu.iter().zip(&cache.glu).enumerate().rev() {
            let gy = maxpool2_backward(&gc.argmax, &g)?;
            let mut g_main = gy.clone();
            let mut g_gate = gy;
            for (((gm, gg), &a), &sg) in g_main
                .data_mut()
                .iter_mut()
                .zip(g_gate.data_mut())
                .zip(gc.main.data())
                .zip(gc.gate.data())
            {
                let up = *gm;
                *gm = up * sg;
                *gg = up * a * sg * (1.0 - sg);
            }
            let gs = &mut grads.glu[s];
            let mut gx = conv1d_same_backward_into(&gc.input, &stage.main, &g_main, &mut gs.main)?;
            gx.add_assign(&conv1d_same_backward_into(
                &gc.input,
                &stage.gate,
                &g_gate,
                &mut gs.gate,
            )?)?;
            g = gx;
        }
        Ok(())
    }
}
