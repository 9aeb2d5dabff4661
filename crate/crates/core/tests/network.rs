use lesionseg::checkpoint::{scratch_init, Checkpoint};
use lesionseg::gradcheck::{finite_difference_grad, relative_error};
use lesionseg::graph::{
    build_preset, build_sgn, GraphSpec, LayerNode, Network, NodeKind, ParamRole, Section, PRESET_NAMES,
};
use lesionseg::layers::Mode;
use lesionseg::{Error, LabelMap, Rng, Tensor};

fn random_labels(h: usize, w: usize, rng: &mut Rng) -> LabelMap {
    let data = (0..h * w).map(|_| rng.below(3) as u8).collect();
    LabelMap::new(h, w, data).unwrap()
}

fn flatten(c: &Checkpoint<f64>, names: &[String]) -> Tensor<f64> {
    let data: Vec<f64> = names.iter().flat_map(|n| c.get(n).unwrap().data().to_vec()).collect();
    let len = data.len();
    Tensor::from_vec(&[len], data).unwrap()
}

fn unflatten(c: &mut Checkpoint<f64>, names: &[String], flat: &Tensor<f64>) {
    let mut off = 0;
    for n in names {
        let t = c.get_mut(n).unwrap();
        let len = t.len();
        t.data_mut().copy_from_slice(&flat.data()[off..off + len]);
        off += len;
    }
}

#[test]
fn sgn1_mini_gradient_matches_finite_differences() {
    let spec = build_sgn(1, 1).unwrap();
    let net = Network::new(spec.clone()).unwrap();
    assert!(spec.parameter_count().unwrap() <= 300);
    for point in 0..10u64 {
        let mut rng = Rng::new(100 + point);
        let params: Checkpoint<f64> = scratch_init(&spec, &rng.child("init", 0)).unwrap();
        let x = Tensor::<f64>::randn(&[3, 8, 8], 0.0, 1.0, &mut rng).unwrap();
        let labels = random_labels(8, 8, &mut rng);
        let weights = [0.7, 1.6];
        let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
        let g = net.backward(&params, &acts, &labels, weights).unwrap();
        let names: Vec<String> = g.grads.names().map(str::to_string).collect();
        let analytic = flatten(&g.grads, &names);
        let mut probe = params.clone();
        let numeric = finite_difference_grad(
            |flat| {
                unflatten(&mut probe, &names, flat);
                let a = net.forward(&probe, &x, Mode::Train, &mut Rng::new(0))?;
                Ok(net.backward(&probe, &a, &labels, weights)?.loss)
            },
            &flatten(&params, &names),
            1e-6,
        )
        .unwrap();
        let err = relative_error(&analytic, &numeric).unwrap();
        assert!(err < 1e-3, "point {point}: relative error {err}");
    }
}

fn one_conv_graph() -> GraphSpec {
    let text = "\
input_channels 2
node c conv in=2 out=2 k=3 inputs=input
node loss softmax_loss inputs=c
";
    GraphSpec::from_text(text).unwrap()
}

#[test]
fn identity_conv_reproduces_input() {
    let spec = one_conv_graph();
    let mut params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(0)).unwrap();
    let mut k = Tensor::zeros(&[2, 2, 3, 3]);
    k.set(&[0, 0, 1, 1], 1.0);
    k.set(&[1, 1, 1, 1], 1.0);
    params.replace("c.weight", k).unwrap();
    let x = Tensor::<f32>::randn(&[2, 5, 6], 0.0, 1.0, &mut Rng::new(1)).unwrap();
    let net = Network::new(spec).unwrap();
    let y = net.infer(&params, &x).unwrap();
    assert!(y.bit_eq(&x));
}

#[test]
fn declaration_order_does_not_matter() {
    let spec = build_sgn(2, 2).unwrap();
    let mut shuffled = spec.clone();
    Rng::new(3).shuffle(&mut shuffled.nodes);
    let params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(4)).unwrap();
    let x = Tensor::<f32>::randn(&[3, 12, 10], 0.0, 1.0, &mut Rng::new(5)).unwrap();
    let labels = random_labels(12, 10, &mut Rng::new(6));
    let a = Network::new(spec).unwrap();
    let b = Network::new(shuffled).unwrap();
    let fa = a.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    let fb = b.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    assert!(a.logits(&fa).bit_eq(b.logits(&fb)));
    let ga = a.backward(&params, &fa, &labels, [1.0, 2.0]).unwrap();
    let gb = b.backward(&params, &fb, &labels, [1.0, 2.0]).unwrap();
    for (name, t) in ga.grads.iter() {
        assert!(t.bit_eq(gb.grads.get(name).unwrap()), "{name}");
    }
}

#[test]
fn background_only_labels_give_zero_gradients() {
    let spec = build_sgn(1, 2).unwrap();
    let net = Network::new(spec.clone()).unwrap();
    let params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(1)).unwrap();
    let x = Tensor::<f32>::randn(&[3, 8, 8], 0.0, 1.0, &mut Rng::new(2)).unwrap();
    let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    let g = net.backward(&params, &acts, &LabelMap::filled(8, 8, 0).unwrap(), [1.0, 1.0]).unwrap();
    assert_eq!(g.valid_pixels, 0);
    assert_eq!(g.loss, 0.0);
    assert!(g.grads.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn doubling_weights_doubles_gradients() {
    let spec = build_sgn(1, 2).unwrap();
    let net = Network::new(spec.clone()).unwrap();
    let params: Checkpoint<f64> = scratch_init(&spec, &Rng::new(1)).unwrap();
    let x = Tensor::<f64>::randn(&[3, 8, 8], 0.0, 1.0, &mut Rng::new(2)).unwrap();
    let labels = random_labels(8, 8, &mut Rng::new(3));
    let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    let g1 = net.backward(&params, &acts, &labels, [0.5, 1.5]).unwrap();
    let g2 = net.backward(&params, &acts, &labels, [1.0, 3.0]).unwrap();
    assert!((g2.loss - 2.0 * g1.loss).abs() < 1e-12);
    for (name, t) in g1.grads.iter() {
        let doubled = t.scale(2.0);
        assert!(relative_error(&doubled, g2.grads.get(name).unwrap()).unwrap() < 1e-12, "{name}");
    }
}

#[test]
fn stale_activations_are_rejected() {
    let spec = build_sgn(1, 2).unwrap();
    let net = Network::new(spec.clone()).unwrap();
    let mut params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(1)).unwrap();
    let x = Tensor::<f32>::randn(&[3, 8, 8], 0.0, 1.0, &mut Rng::new(2)).unwrap();
    let labels = random_labels(8, 8, &mut Rng::new(3));
    let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    net.commit_running_stats(&mut params, &acts).unwrap();
    assert!(matches!(
        net.backward(&params, &acts, &labels, [1.0, 1.0]),
        Err(Error::Contract(_))
    ));
    let other = Network::new(build_sgn(1, 2).unwrap()).unwrap();
    let acts = other.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    assert!(net.backward(&params, &acts, &labels, [1.0, 1.0]).is_ok());
}

#[test]
fn missing_parameter_names_the_node() {
    let spec = build_sgn(1, 2).unwrap();
    let net = Network::new(spec.clone()).unwrap();
    let full: Checkpoint<f32> = scratch_init(&spec, &Rng::new(1)).unwrap();
    let mut partial = Checkpoint::new();
    for (n, t) in full.iter().filter(|(n, _)| *n != "dec1_conv2.bias") {
        partial.push(n, t.clone()).unwrap();
    }
    let x = Tensor::<f32>::zeros(&[3, 8, 8]);
    match net.forward(&partial, &x, Mode::Infer, &mut Rng::new(0)) {
        Err(Error::Config(msg)) => assert!(msg.contains("dec1_conv2"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_preset_runs_a_scratch_checkpoint() {
    for name in PRESET_NAMES {
        let spec = build_preset(name).unwrap();
        let net = Network::new(spec.clone()).unwrap();
        let params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(1)).unwrap();
        let x = Tensor::<f32>::randn(&[3, 32, 32], 0.0, 1.0, &mut Rng::new(2)).unwrap();
        let y = net.infer(&params, &x).unwrap();
        assert_eq!(y.shape(), &[2, 32, 32], "{name}");
        assert!(y.all_finite(), "{name}");
    }
}

#[test]
fn training_forward_updates_running_stats() {
    let spec = build_sgn(1, 2).unwrap();
    let net = Network::new(spec.clone()).unwrap();
    let mut params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(1)).unwrap();
    let x = Tensor::<f32>::randn(&[3, 8, 8], 1.0, 2.0, &mut Rng::new(2)).unwrap();
    let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(0)).unwrap();
    let bn_nodes = spec.nodes.iter().filter(|n| matches!(n.kind, NodeKind::BatchNorm { .. })).count();
    assert_eq!(acts.running_stats.len(), 2 * bn_nodes);
    net.commit_running_stats(&mut params, &acts).unwrap();
    assert!(params.get("enc1_bn1.running_mean").unwrap().data().iter().any(|&v| v != 0.0));
    let infer = net.forward(&params, &x, Mode::Infer, &mut Rng::new(0)).unwrap();
    assert!(infer.running_stats.is_empty());
}

#[test]
fn dropout_and_sigmoid_nodes_backpropagate() {
    let spec = GraphSpec {
        nodes: vec![
            LayerNode::new("c", NodeKind::Conv { in_ch: 3, out_ch: 2, kernel: 3, stride: 1, pad: 1 }, &["input"], Section::Other),
            LayerNode::new("s", NodeKind::Sigmoid, &["c"], Section::Other),
            LayerNode::new("d", NodeKind::Dropout { rate: 0.3 }, &["s"], Section::Other),
            LayerNode::new("loss", NodeKind::SoftmaxLoss, &["d"], Section::Head),
        ],
        ..one_conv_graph()
    };
    let spec = GraphSpec { input_channels: 3, ..spec };
    let net = Network::new(spec.clone()).unwrap();
    let params: Checkpoint<f64> = scratch_init(&spec, &Rng::new(1)).unwrap();
    let x = Tensor::<f64>::randn(&[3, 6, 6], 0.0, 1.0, &mut Rng::new(2)).unwrap();
    let labels = random_labels(6, 6, &mut Rng::new(3));
    let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(9)).unwrap();
    let g = net.backward(&params, &acts, &labels, [1.0, 1.0]).unwrap();
    let k = params.get("c.weight").unwrap().clone();
    let numeric = finite_difference_grad(
        |kk| {
            let mut p = params.clone();
            p.replace("c.weight", kk.clone())?;
            let a = net.forward(&p, &x, Mode::Train, &mut Rng::new(9))?;
            Ok(net.backward(&p, &a, &labels, [1.0, 1.0])?.loss)
        },
        &k,
        1e-6,
    )
    .unwrap();
    assert!(relative_error(g.grads.get("c.weight").unwrap(), &numeric).unwrap() < 1e-6);
    assert!(g.grads.names().all(|n| ParamRole::of_name(n).unwrap().is_trainable()));
}
