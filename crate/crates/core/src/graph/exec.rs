//! Forward and backward evaluation of a validated graph.

use std::collections::HashMap;

use super::{param_name, GraphSpec, NodeKind, ParamRole, ParamSpec, INPUT};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::layers::{
    batchnorm_backward, batchnorm_backward_infer, batchnorm_forward, concat_channels, conv2d_backward,
    conv2d_forward, crop_spatial, crop_spatial_backward, dropout, dropout_backward, maxpool2d,
    maxpool2d_backward, relu, relu_backward, sigmoid, sigmoid_backward, split_channels, transposed_conv2d_backward,
    transposed_conv2d_forward, upsample, upsample_backward, weighted_pixel_cross_entropy, BatchNormCache,
    BatchNormParams, ConvGeom, Mode, PoolIndexMap,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Source of a node input: the network input or another node's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Src {
    Input,
    Node(usize),
}

/// A validated graph with its evaluation order and parameter layout.
#[derive(Clone, Debug)]
pub struct Network {
    spec: GraphSpec,
    order: Vec<usize>,
    inputs: Vec<Vec<Src>>,
    params: Vec<ParamSpec>,
    spec_hash: u64,
}

/// Per-node values of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations<S = f32> {
    input: Tensor<S>,
    values: Vec<Option<Tensor<S>>>,
    aux: Vec<Aux<S>>,
    mode: Mode,
    fingerprint: u64,
    /// Updated running statistics (train mode), keyed by parameter name.
    pub running_stats: Vec<(String, Tensor<S>)>,
}

#[derive(Clone, Debug)]
enum Aux<S> {
    None,
    Pool(PoolIndexMap),
    BatchNorm(BatchNormCache<S>),
    Mask(Tensor<S>),
    /// Shape before cropping to the reference input.
    Uncropped(Vec<usize>),
}

/// Result of a backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<S = f32> {
    pub loss: S,
    pub valid_pixels: usize,
    /// One gradient per trainable parameter, in parameter order.
    pub grads: Checkpoint<S>,
}

fn spec_hash(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl<S> Activations<S> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn input(&self) -> &Tensor<S> {
        &self.input
    }
}

impl Network {
    pub fn new(spec: GraphSpec) -> Result<Self> {
        let order = spec.validate()?;
        let ids: HashMap<&str, usize> = spec.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let inputs = spec
            .nodes
            .iter()
            .map(|n| {
                n.inputs
                    .iter()
                    .map(|id| if id == INPUT { Src::Input } else { Src::Node(ids[id.as_str()]) })
                    .collect()
            })
            .collect();
        let params = order.iter().flat_map(|&i| spec.nodes[i].params()).collect();
        let spec_hash = spec_hash(&spec.to_text());
        Ok(Self { spec, order, inputs, params, spec_hash })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    /// Every parameter tensor the graph expects, in topological order.
    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.params
    }

    /// Checks that `params` holds every expected tensor with the right shape.
    pub fn check_params<S: Scalar>(&self, params: &Checkpoint<S>) -> Result<()> {
        for p in &self.params {
            match params.get(&p.name) {
                None => {
                    return Err(Error::Config(format!("node `{}`: missing parameter `{}`", p.node, p.name)));
                }
                Some(t) if t.shape() != p.shape.as_slice() => {
                    return Err(Error::Config(format!(
                        "node `{}`: parameter `{}` has shape {:?}, expected {:?}",
                        p.node,
                        p.name,
                        t.shape(),
                        p.shape
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn fingerprint<S: Scalar>(&self, params: &Checkpoint<S>) -> u64 {
        self.spec_hash ^ params.fingerprint().rotate_left(17)
    }

    fn param<'a, S: Scalar>(&self, params: &'a Checkpoint<S>, node: usize, role: ParamRole) -> Result<&'a Tensor<S>> {
        let id = &self.spec.nodes[node].id;
        let name = param_name(id, role);
        params
            .get(&name)
            .ok_or_else(|| Error::Config(format!("node `{id}`: missing parameter `{name}`")))
    }

    fn bn_params<S: Scalar>(&self, params: &Checkpoint<S>, node: usize) -> Result<BatchNormParams<S>> {
        let mut p = BatchNormParams::identity(1);
        p.gamma = self.param(params, node, ParamRole::Gamma)?.clone();
        p.beta = self.param(params, node, ParamRole::Beta)?.clone();
        p.running_mean = self.param(params, node, ParamRole::RunningMean)?.clone();
        p.running_var = self.param(params, node, ParamRole::RunningVar)?.clone();
        Ok(p)
    }

    /// Evaluates one node given its input tensors.
    fn eval_node<S: Scalar>(
        &self,
        i: usize,
        ins: &[&Tensor<S>],
        params: &Checkpoint<S>,
        mode: Mode,
        rng: &mut Rng,
        running: &mut Vec<(String, Tensor<S>)>,
    ) -> Result<(Tensor<S>, Aux<S>)> {
        let node = &self.spec.nodes[i];
        let wrap = |e: Error| match e {
            Error::Config(_) | Error::Graph { .. } => e,
            other => Error::graph(&node.id, other.to_string()),
        };
        let crop = |y: Tensor<S>| -> Result<(Tensor<S>, Aux<S>)> {
            match ins.get(1) {
                None => Ok((y, Aux::None)),
                Some(r) => {
                    let (_, rh, rw) = r.chw()?;
                    let shape = y.shape().to_vec();
                    Ok((crop_spatial(&y, rh, rw)?, Aux::Uncropped(shape)))
                }
            }
        };
        let out = match node.kind {
            NodeKind::Conv { stride, pad, .. } => {
                let k = self.param(params, i, ParamRole::Kernel)?;
                let b = self.param(params, i, ParamRole::Bias)?;
                (conv2d_forward(ins[0], k, b, ConvGeom::new(stride, pad)).map_err(wrap)?, Aux::None)
            }
            NodeKind::TransposedConv { stride, pad, .. } => {
                let k = self.param(params, i, ParamRole::Kernel)?;
                let b = self.param(params, i, ParamRole::Bias)?;
                let y = transposed_conv2d_forward(ins[0], k, b, ConvGeom::new(stride, pad)).map_err(wrap)?;
                crop(y).map_err(wrap)?
            }
            NodeKind::Upsample { factor, algo } => crop(upsample(ins[0], factor, algo).map_err(wrap)?).map_err(wrap)?,
            NodeKind::BatchNorm { .. } => {
                let p = self.bn_params(params, i)?;
                let out = batchnorm_forward(ins[0], &p, mode).map_err(wrap)?;
                if mode == Mode::Train {
                    running.push((param_name(&node.id, ParamRole::RunningMean), out.running_mean));
                    running.push((param_name(&node.id, ParamRole::RunningVar), out.running_var));
                }
                let aux = out.cache.map_or(Aux::None, Aux::BatchNorm);
                (out.y, aux)
            }
            NodeKind::Relu => (relu(ins[0]), Aux::None),
            NodeKind::Sigmoid => (sigmoid(ins[0]), Aux::None),
            NodeKind::MaxPool { window, stride } => {
                let (y, map) = maxpool2d(ins[0], window, stride).map_err(wrap)?;
                (y, Aux::Pool(map))
            }
            NodeKind::Concat => (concat_channels(ins[0], ins[1]).map_err(wrap)?, Aux::None),
            NodeKind::Add => (ins[0].add(ins[1]).map_err(wrap)?, Aux::None),
            NodeKind::Dropout { rate } => {
                let (y, mask) = dropout(ins[0], rate, rng, mode).map_err(wrap)?;
                (y, if mode == Mode::Train { Aux::Mask(mask) } else { Aux::None })
            }
            NodeKind::SoftmaxLoss => {
                let (c, _, _) = ins[0].chw().map_err(wrap)?;
                if c != 2 {
                    return Err(Error::graph(&node.id, format!("loss expects 2 logit channels, got {c}")));
                }
                (ins[0].clone(), Aux::None)
            }
        };
        Ok(out)
    }

    fn check_input<S: Scalar>(&self, x: &Tensor<S>) -> Result<()> {
        let (c, _, _) = x.chw()?;
        if c != self.spec.input_channels {
            return Err(Error::graph(
                INPUT,
                format!("expected {} input channels, got {c}", self.spec.input_channels),
            ));
        }
        Ok(())
    }

    /// Evaluates every node in topological order, keeping all values.
    pub fn forward<S: Scalar>(&self, params: &Checkpoint<S>, x: &Tensor<S>, mode: Mode, rng: &mut Rng) -> Result<Activations<S>> {
        self.check_input(x)?;
        self.check_params(params)?;
        let n = self.spec.nodes.len();
        let mut values: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut aux: Vec<Aux<S>> = (0..n).map(|_| Aux::None).collect();
        let mut running = Vec::new();
        for &i in &self.order {
            let ins: Vec<&Tensor<S>> = self.inputs[i]
                .iter()
                .map(|s| match s {
                    Src::Input => x,
                    Src::Node(j) => values[*j].as_ref().expect("inputs precede consumers"),
                })
                .collect();
            let (y, a) = self.eval_node(i, &ins, params, mode, rng, &mut running)?;
            values[i] = Some(y);
            aux[i] = a;
        }
        Ok(Activations {
            input: x.clone(),
            values,
            aux,
            mode,
            fingerprint: self.fingerprint(params),
            running_stats: running,
        })
    }

    /// Inference-mode logits, releasing intermediate tensors as soon as
    /// their last consumer has run.
    pub fn infer<S: Scalar>(&self, params: &Checkpoint<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        self.check_params(params)?;
        let n = self.spec.nodes.len();
        let mut remaining = vec![0usize; n];
        for srcs in &self.inputs {
            for s in srcs {
                if let Src::Node(j) = s {
                    remaining[*j] += 1;
                }
            }
        }
        let mut values: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut rng = Rng::new(0);
        let mut running = Vec::new();
        let mut logits = None;
        for &i in &self.order {
            let (y, _) = {
                let ins: Vec<&Tensor<S>> = self.inputs[i]
                    .iter()
                    .map(|s| match s {
                        Src::Input => x,
                        Src::Node(j) => values[*j].as_ref().expect("inputs precede consumers"),
                    })
                    .collect();
                self.eval_node(i, &ins, params, Mode::Infer, &mut rng, &mut running)?
            };
            for s in &self.inputs[i] {
                if let Src::Node(j) = s {
                    remaining[*j] -= 1;
                    if remaining[*j] == 0 {
                        values[*j] = None;
                    }
                }
            }
            if matches!(self.spec.nodes[i].kind, NodeKind::SoftmaxLoss) {
                logits = Some(y);
            } else {
                values[i] = Some(y);
            }
        }
        Ok(logits.expect("validated graphs have a loss sink"))
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.spec.nodes.iter().position(|n| n.id == id)
    }

    /// Activation of the node with the given id.
    pub fn value<'a, S>(&self, acts: &'a Activations<S>, id: &str) -> Option<&'a Tensor<S>> {
        if id == INPUT {
            return Some(&acts.input);
        }
        acts.values[self.index_of(id)?].as_ref()
    }

    /// The 2-channel logits of a forward pass.
    pub fn logits<'a, S>(&self, acts: &'a Activations<S>) -> &'a Tensor<S> {
        let sink = self
            .spec
            .nodes
            .iter()
            .position(|n| matches!(n.kind, NodeKind::SoftmaxLoss))
            .expect("validated graphs have a loss sink");
        acts.values[sink].as_ref().expect("forward evaluates every node")
    }

    /// Writes the running statistics gathered by a training forward pass.
    pub fn commit_running_stats<S: Scalar>(&self, params: &mut Checkpoint<S>, acts: &Activations<S>) -> Result<()> {
        for (name, t) in &acts.running_stats {
            params.replace(name, t.clone())?;
        }
        Ok(())
    }

    /// Reverse-mode pass from the class-weighted loss to every trainable
    /// parameter. `acts` must come from [`Network::forward`] with the same
    /// parameters.
    pub fn backward<S: Scalar>(
        &self,
        params: &Checkpoint<S>,
        acts: &Activations<S>,
        labels: &LabelMap,
        class_weights: [S; 2],
    ) -> Result<Gradients<S>> {
        if acts.values.len() != self.spec.nodes.len() || acts.fingerprint != self.fingerprint(params) {
            return Err(Error::Contract(
                "activations are stale: they were not produced by this network with these parameters".into(),
            ));
        }
        let n = self.spec.nodes.len();
        let value = |s: Src| -> &Tensor<S> {
            match s {
                Src::Input => &acts.input,
                Src::Node(j) => acts.values[j].as_ref().expect("forward evaluates every node"),
            }
        };
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut pgrads: HashMap<String, Tensor<S>> = HashMap::new();
        let mut loss_out = None;

        fn accumulate<S: Scalar>(slot: &mut Option<Tensor<S>>, g: Tensor<S>) -> Result<()> {
            match slot {
                Some(t) => t.add_assign(&g),
                None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }
        let send = |grads: &mut Vec<Option<Tensor<S>>>, s: Src, g: Tensor<S>| -> Result<()> {
            match s {
                Src::Input => Ok(()),
                Src::Node(j) => accumulate(&mut grads[j], g),
            }
        };

        for &i in self.order.iter().rev() {
            let node = &self.spec.nodes[i];
            let srcs = &self.inputs[i];
            let wrap = |e: Error| Error::graph(&node.id, e.to_string());
            let g = match node.kind {
                NodeKind::SoftmaxLoss => {
                    let out = weighted_pixel_cross_entropy(value(srcs[0]), labels, class_weights).map_err(wrap)?;
                    let g = out.grad.clone();
                    loss_out = Some(out);
                    send(&mut grads, srcs[0], g)?;
                    continue;
                }
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            let x = value(srcs[0]);
            match (&node.kind, &acts.aux[i]) {
                (NodeKind::Conv { stride, pad, .. }, _) => {
                    let k = self.param(params, i, ParamRole::Kernel)?;
                    let cg = conv2d_backward(x, k, ConvGeom::new(*stride, *pad), &g).map_err(wrap)?;
                    pgrads.insert(param_name(&node.id, ParamRole::Kernel), cg.kernel);
                    pgrads.insert(param_name(&node.id, ParamRole::Bias), cg.bias);
                    send(&mut grads, srcs[0], cg.input)?;
                }
                (NodeKind::TransposedConv { stride, pad, .. }, a) => {
                    let g = match a {
                        Aux::Uncropped(shape) => crop_spatial_backward(shape, &g).map_err(wrap)?,
                        _ => g,
                    };
                    let k = self.param(params, i, ParamRole::Kernel)?;
                    let cg = transposed_conv2d_backward(x, k, ConvGeom::new(*stride, *pad), &g).map_err(wrap)?;
                    pgrads.insert(param_name(&node.id, ParamRole::Kernel), cg.kernel);
                    pgrads.insert(param_name(&node.id, ParamRole::Bias), cg.bias);
                    send(&mut grads, srcs[0], cg.input)?;
                }
                (NodeKind::Upsample { factor, algo }, a) => {
                    let g = match a {
                        Aux::Uncropped(shape) => crop_spatial_backward(shape, &g).map_err(wrap)?,
                        _ => g,
                    };
                    send(&mut grads, srcs[0], upsample_backward(x.shape(), *factor, *algo, &g).map_err(wrap)?)?;
                }
                (NodeKind::BatchNorm { .. }, a) => {
                    let bg = match a {
                        Aux::BatchNorm(cache) => {
                            batchnorm_backward(cache, self.param(params, i, ParamRole::Gamma)?, &g).map_err(wrap)?
                        }
                        _ => batchnorm_backward_infer(x, &self.bn_params(params, i)?, &g).map_err(wrap)?,
                    };
                    pgrads.insert(param_name(&node.id, ParamRole::Gamma), bg.gamma);
                    pgrads.insert(param_name(&node.id, ParamRole::Beta), bg.beta);
                    send(&mut grads, srcs[0], bg.input)?;
                }
                (NodeKind::Relu, _) => send(&mut grads, srcs[0], relu_backward(x, &g).map_err(wrap)?)?,
                (NodeKind::Sigmoid, _) => {
                    let y = acts.values[i].as_ref().expect("forward evaluates every node");
                    send(&mut grads, srcs[0], sigmoid_backward(y, &g).map_err(wrap)?)?
                }
                (NodeKind::MaxPool { .. }, Aux::Pool(map)) => {
                    send(&mut grads, srcs[0], maxpool2d_backward(map, &g).map_err(wrap)?)?
                }
                (NodeKind::Concat, _) => {
                    let (c0, _, _) = x.chw()?;
                    let (ga, gb) = split_channels(&g, c0).map_err(wrap)?;
                    send(&mut grads, srcs[0], ga)?;
                    send(&mut grads, srcs[1], gb)?;
                }
                (NodeKind::Add, _) => {
                    send(&mut grads, srcs[0], g.clone())?;
                    send(&mut grads, srcs[1], g)?;
                }
                (NodeKind::Dropout { .. }, Aux::Mask(mask)) => {
                    send(&mut grads, srcs[0], dropout_backward(mask, &g).map_err(wrap)?)?
                }
                (NodeKind::Dropout { .. }, _) => send(&mut grads, srcs[0], g)?,
                (kind, _) => {
                    return Err(Error::Contract(format!(
                        "node `{}`: {} activation cache missing",
                        node.id,
                        kind.name()
                    )))
                }
            }
        }

        let loss = loss_out.expect("validated graphs have a loss sink");
        let mut out = Checkpoint::new();
        for p in self.params.iter().filter(|p| p.role.is_trainable()) {
            let g = pgrads.remove(&p.name).unwrap_or_else(|| Tensor::zeros(&p.shape));
            out.push(p.name.clone(), g)?;
        }
        Ok(Gradients {
            loss: loss.loss,
            valid_pixels: loss.valid_pixels,
            grads: out,
        })
    }
}

/// Validates `spec` and runs [`Network::forward`].
pub fn forward<S: Scalar>(
    spec: &GraphSpec,
    params: &Checkpoint<S>,
    x: &Tensor<S>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Network, Activations<S>)> {
    let net = Network::new(spec.clone())?;
    let acts = net.forward(params, x, mode, rng)?;
    Ok((net, acts))
}

/// Validates `spec` and runs [`Network::backward`].
pub fn backward<S: Scalar>(
    spec: &GraphSpec,
    params: &Checkpoint<S>,
    acts: &Activations<S>,
    labels: &LabelMap,
    class_weights: [S; 2],
) -> Result<Gradients<S>> {
    Network::new(spec.clone())?.backward(params, acts, labels, class_weights)
}
