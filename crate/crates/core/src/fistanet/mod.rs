//! The unrolled network. Each layer takes a weighted gradient step on the
//! data term, passes the result through a shared learned proximal block
//! and applies momentum:
//!
//! ```text
//! r_k = y_k - mu_k W^T (A y_k - b)
//! x_k = r_k + G(soft(F(r_k), theta_k))
//! y_{k+1} = x_k + rho_k (x_k - x_{k-1})
//! ```
//!
//! `F = conv2 . relu . conv1` and `G = conv4 . relu . conv3`, all 3x3
//! without bias, shared by every layer.

mod checkpoint;
mod schedule;

use std::sync::Arc;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use schedule::{schedule_violations, LayerSchedule, ScheduleParams, SignMode, INITIAL_SCHEDULE};

use crate::autodiff::{Graph, NodeId, Parameter};
use crate::error::{invalid, Error, Result};
use crate::operators::{MatrixOperator, SharedOperator};
use crate::rng::Rng;
use crate::tensor::{Image2D, Tensor};
use crate::weights::WeightMode;

pub const DEFAULT_LAYERS: usize = 7;
pub const DEFAULT_FILTERS: usize = 32;
pub const DEFAULT_LAMBDA1: f64 = 0.01;
pub const DEFAULT_LAMBDA2: f64 = 0.001;

/// Names of the learnables, in storage order.
pub const PARAM_NAMES: [&str; 10] = ["conv1", "conv2", "conv3", "conv4", "v1", "c1", "v2", "c2", "v3", "c3"];
/// Indices of the convolution kernels within [`PARAM_NAMES`].
pub const CONV_PARAMS: std::ops::Range<usize> = 0..4;
/// Indices of the schedule scalars within [`PARAM_NAMES`].
pub const SCHEDULE_PARAMS: std::ops::Range<usize> = 4..10;

#[derive(Clone, Debug, PartialEq)]
pub struct FistaNetConfig {
    pub n_layers: usize,
    pub n_filters: usize,
    pub sign_mode: SignMode,
}

impl Default for FistaNetConfig {
    fn default() -> Self {
        Self {
            n_layers: DEFAULT_LAYERS,
            n_filters: DEFAULT_FILTERS,
            sign_mode: SignMode::Reparam,
        }
    }
}

/// Kernel shapes `[c_out, c_in, 3, 3]` of the four convolutions.
pub fn kernel_dims(n_filters: usize) -> [[usize; 4]; 4] {
    let f = n_filters;
    [[f, 1, 3, 3], [f, f, 3, 3], [f, f, 3, 3], [1, f, 3, 3]]
}

/// Xavier-uniform kernel: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_kernel(rng: &mut Rng, dims: [usize; 4]) -> Tensor {
    let fan_in = dims[1] * 9;
    let fan_out = dims[0] * 9;
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = dims.iter().product();
    Tensor::from_parts(&dims, (0..n).map(|_| rng.uniform(-a, a)).collect())
}

/// Node handles of one unrolled forward pass.
pub struct ForwardPass {
    pub graph: Graph,
    /// Parameter leaves, in [`PARAM_NAMES`] order.
    pub params: Vec<NodeId>,
    pub output: NodeId,
    /// `x_k` per layer.
    pub layers: Vec<NodeId>,
    /// `r_k` per layer.
    pub residuals: Vec<NodeId>,
    /// `F(r_k)` per layer.
    pub sparse: Vec<NodeId>,
    /// `G(F(r_k))` per layer, present when transforms were requested.
    pub symmetric: Vec<NodeId>,
}

impl ForwardPass {
    fn image(&self, id: NodeId) -> Image2D {
        Image2D::from_tensor(self.graph.value(id).clone()).expect("layer output is an image")
    }

    pub fn output_image(&self) -> Image2D {
        self.image(self.output)
    }

    pub fn intermediates(&self) -> Vec<Image2D> {
        self.layers.iter().map(|id| self.image(*id)).collect()
    }

    /// Gradients of the parameters after `backward`, zero where unreached.
    pub fn param_grads(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|id| match self.graph.grad(*id) {
                Some(t) => t.clone(),
                None => Tensor::from_parts(self.graph.value(*id).dims(), vec![0.0; self.graph.value(*id).len()]),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions<'a> {
    /// Parameters become gradient-tracking leaves.
    pub track_grad: bool,
    /// Also compute `G(F(r_k))` for the symmetry loss.
    pub transforms: bool,
    /// Replace the learned schedule by fixed per-layer values.
    pub schedule: Option<&'a [LayerSchedule]>,
}

#[derive(Clone)]
pub struct FistaNet {
    op: SharedOperator,
    w_op: SharedOperator,
    weight_mode: WeightMode,
    config: FistaNetConfig,
    params: Vec<Parameter>,
}

impl FistaNet {
    /// Fresh model with Xavier kernels and the initial schedule. `w_tilde`
    /// `None` selects the physical mode `W = A`.
    pub fn new(
        op: SharedOperator,
        w_tilde: Option<&Tensor>,
        config: FistaNetConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut params: Vec<Parameter> = kernel_dims(config.n_filters)
            .iter()
            .zip(PARAM_NAMES)
            .map(|(d, name)| Parameter::new(name, xavier_kernel(rng, *d)))
            .collect();
        let sched = ScheduleParams::initial(config.sign_mode);
        for (i, v) in sched.raw.iter().enumerate() {
            params.push(Parameter::new(PARAM_NAMES[4 + i], Tensor::scalar(*v)));
        }
        Self::from_parts(op, w_tilde, config, params)
    }

    pub fn from_parts(
        op: SharedOperator,
        w_tilde: Option<&Tensor>,
        config: FistaNetConfig,
        params: Vec<Parameter>,
    ) -> Result<Self> {
        if config.n_layers == 0 {
            return Err(invalid("FISTA-Net needs at least one layer"));
        }
        if config.n_filters == 0 {
            return Err(invalid("FISTA-Net needs at least one filter"));
        }
        if op.in_dims().len() != 2 {
            return Err(invalid(format!("operator input {:?} is not an image", op.in_dims())));
        }
        let (w_op, weight_mode): (SharedOperator, _) = match w_tilde {
            None => (op.clone(), WeightMode::Physical),
            Some(w) => {
                if w.dims() != [op.out_len(), op.in_len()] {
                    return Err(Error::ShapeMismatch {
                        expected: vec![op.out_len(), op.in_len()],
                        actual: w.dims().to_vec(),
                    });
                }
                let m = MatrixOperator::new(w.clone())?.with_input_dims(op.in_dims())?;
                (Arc::new(m), WeightMode::Analytic)
            }
        };
        let dims = kernel_dims(config.n_filters);
        if params.len() != PARAM_NAMES.len() {
            return Err(invalid(format!("expected {} parameters, got {}", PARAM_NAMES.len(), params.len())));
        }
        for (i, p) in params.iter().enumerate() {
            if p.name != PARAM_NAMES[i] {
                return Err(invalid(format!("parameter {i} is `{}`, expected `{}`", p.name, PARAM_NAMES[i])));
            }
            let want: &[usize] = if i < 4 { &dims[i] } else { &[1] };
            p.value.ensure_shape(want)?;
        }
        Ok(Self {
            op,
            w_op,
            weight_mode,
            config,
            params,
        })
    }

    pub fn config(&self) -> &FistaNetConfig {
        &self.config
    }

    pub fn weight_mode(&self) -> WeightMode {
        self.weight_mode
    }

    pub fn operator(&self) -> &SharedOperator {
        &self.op
    }

    /// Unroll depth used by subsequent forward passes; the schedule is
    /// closed-form in the layer index, so any depth is valid.
    pub fn set_n_layers(&mut self, n_layers: usize) -> Result<()> {
        if n_layers == 0 {
            return Err(invalid("FISTA-Net needs at least one layer"));
        }
        self.config.n_layers = n_layers;
        Ok(())
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn schedule(&self) -> ScheduleParams {
        let mut raw = [0.0; 6];
        for (r, p) in raw.iter_mut().zip(&self.params[SCHEDULE_PARAMS]) {
            *r = p.value.item();
        }
        ScheduleParams {
            mode: self.config.sign_mode,
            raw,
        }
    }

    /// Re-applies the sign constraints of the clamped mode.
    pub fn project_schedule(&mut self) {
        let mut s = self.schedule();
        s.project();
        for (p, v) in self.params[SCHEDULE_PARAMS].iter_mut().zip(s.raw) {
            p.value.as_mut_slice()[0] = v;
        }
    }

    fn image_dims(&self) -> [usize; 4] {
        let d = self.op.in_dims();
        [1, 1, d[0], d[1]]
    }

    pub fn forward(&self, b: &Tensor, x0: &Image2D, opts: ForwardOptions<'_>) -> Result<ForwardPass> {
        if b.len() != self.op.out_len() {
            return Err(Error::ShapeMismatch {
                expected: self.op.out_dims().to_vec(),
                actual: b.dims().to_vec(),
            });
        }
        let img = self.image_dims();
        if x0.as_tensor().len() != img[2] * img[3] {
            return Err(Error::ShapeMismatch {
                expected: self.op.in_dims().to_vec(),
                actual: x0.as_tensor().dims().to_vec(),
            });
        }
        let n_layers = self.config.n_layers;
        if let Some(s) = opts.schedule {
            if s.len() != n_layers {
                return Err(invalid(format!("schedule override has {} layers, model has {n_layers}", s.len())));
            }
        }

        let mut g = Graph::new();
        let params: Vec<NodeId> =
            self.params.iter().map(|p| g.leaf(p.value.clone(), opts.track_grad)).collect();
        let kernels = [params[0], params[1], params[2], params[3]];
        let sched: Vec<(NodeId, NodeId, NodeId)> = match opts.schedule {
            Some(s) => s
                .iter()
                .map(|l| {
                    (
                        g.constant(Tensor::scalar(l.mu)),
                        g.constant(Tensor::scalar(l.theta)),
                        g.constant(Tensor::scalar(l.rho)),
                    )
                })
                .collect(),
            None => {
                let raw: [NodeId; 6] = params[SCHEDULE_PARAMS].try_into().expect("six scalars");
                schedule::schedule_nodes(&mut g, &raw, self.config.sign_mode, n_layers)?
            }
        };

        let b_node = g.constant(b.clone().reshape(self.op.out_dims())?);
        let x0_node = g.constant(x0.as_tensor().clone().reshape(&img)?);
        let mut y = x0_node;
        let mut x_prev = x0_node;
        let mut pass = ForwardPass {
            graph: Graph::new(),
            params,
            output: x0_node,
            layers: Vec::with_capacity(n_layers),
            residuals: Vec::with_capacity(n_layers),
            sparse: Vec::with_capacity(n_layers),
            symmetric: Vec::new(),
        };
        for (k, &(mu, theta, rho)) in sched.iter().enumerate() {
            let r = gradient_module(&mut g, y, b_node, mu, &self.op, &self.w_op)?;
            let (x, fr) = prox_module(&mut g, r, &kernels, theta)?;
            if opts.transforms {
                let sym = inverse_transform(&mut g, fr, &kernels)?;
                pass.symmetric.push(sym);
            }
            pass.residuals.push(r);
            pass.sparse.push(fr);
            pass.layers.push(x);
            if k + 1 < n_layers {
                let d = g.sub(x, x_prev)?;
                let m = g.scalar_mul(rho, d)?;
                y = g.add(x, m)?;
            }
            x_prev = x;
        }
        pass.output = x_prev;
        pass.graph = g;
        Ok(pass)
    }

    /// Inference pass: the final image and every layer's output.
    pub fn reconstruct(&self, b: &Tensor, x0: &Image2D) -> Result<(Image2D, Vec<Image2D>)> {
        let pass = self.forward(b, x0, ForwardOptions::default())?;
        Ok((pass.output_image(), pass.intermediates()))
    }
}

/// `r = y - mu W^T (A y - b)` with `A` and `W` fixed. `y` is `[1, 1, H, W]`.
pub fn gradient_module(
    g: &mut Graph,
    y: NodeId,
    b: NodeId,
    mu: NodeId,
    op: &SharedOperator,
    w_op: &SharedOperator,
) -> Result<NodeId> {
    let ay = g.linear_apply(y, op)?;
    let res = g.sub(ay, b)?;
    let grad = g.linear_adjoint(res, w_op)?;
    let dims = g.value(y).dims().to_vec();
    let grad = g.reshape(grad, &dims)?;
    let step = g.scalar_mul(mu, grad)?;
    g.sub(y, step)
}

/// `F(r) = conv2(relu(conv1(r)))`.
fn forward_transform(g: &mut Graph, r: NodeId, k: &[NodeId; 4]) -> Result<NodeId> {
    let a = g.conv2d(r, k[0])?;
    let a = g.relu(a);
    g.conv2d(a, k[1])
}

/// `G(z) = conv4(relu(conv3(z)))`.
fn inverse_transform(g: &mut Graph, z: NodeId, k: &[NodeId; 4]) -> Result<NodeId> {
    let a = g.conv2d(z, k[2])?;
    let a = g.relu(a);
    g.conv2d(a, k[3])
}

/// `x = r + G(soft(F(r), theta))`. Returns `(x, F(r))`.
pub fn prox_module(g: &mut Graph, r: NodeId, kernels: &[NodeId; 4], theta: NodeId) -> Result<(NodeId, NodeId)> {
    let c = g.value(r).dims().get(1).copied();
    if c != Some(1) {
        return Err(Error::ShapeMismatch {
            expected: vec![1],
            actual: g.value(r).dims().to_vec(),
        });
    }
    let fr = forward_transform(g, r, kernels)?;
    let z = g.soft_threshold(fr, theta)?;
    let out = inverse_transform(g, z, kernels)?;
    Ok((g.add(r, out)?, fr))
}

/// `|x_N - x_gt|^2 + lambda1 sum_k |G(F(r_k)) - r_k|^2 + lambda2 sum_k |F(r_k)|_1`.
/// The pass must have been built with `transforms`.
pub fn total_loss(pass: &mut ForwardPass, x_gt: &Image2D, lambda1: f64, lambda2: f64) -> Result<NodeId> {
    if pass.symmetric.len() != pass.residuals.len() {
        return Err(invalid("forward pass was built without transforms"));
    }
    let g = &mut pass.graph;
    let dims = g.value(pass.output).dims().to_vec();
    if x_gt.as_tensor().len() != dims.iter().product::<usize>() {
        return Err(Error::ShapeMismatch {
            expected: dims,
            actual: x_gt.as_tensor().dims().to_vec(),
        });
    }
    let gt = g.constant(x_gt.as_tensor().clone().reshape(&dims)?);
    let mut loss = g.mse(pass.output, gt)?;
    let mut sym_total: Option<NodeId> = None;
    let mut sparse_total: Option<NodeId> = None;
    for k in 0..pass.residuals.len() {
        let s = g.mse(pass.symmetric[k], pass.residuals[k])?;
        sym_total = Some(match sym_total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
        let l = g.l1_norm(pass.sparse[k]);
        sparse_total = Some(match sparse_total {
            Some(t) => g.add(t, l)?,
            None => l,
        });
    }
    if let (Some(s), Some(l)) = (sym_total, sparse_total) {
        let s = g.scale(s, lambda1);
        let l = g.scale(l, lambda2);
        loss = g.add(loss, s)?;
        loss = g.add(loss, l)?;
    }
    Ok(loss)
}
