//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use lesionseg::checkpoint::{scratch_init, transfer_init, Checkpoint, TransferPolicy, TransferTable};
use lesionseg::data::{
    add_noise, crop_protocol, split_counts, synth_lesion, write_samples, CropConfig, GeometricConfig, NoiseKind,
    SplitFractions, SynthConfig,
};
use lesionseg::gradcheck::{finite_difference_grad, relative_error};
use lesionseg::graph::{build_preset, build_sgn, Network, PRESET_NAMES};
use lesionseg::label::{LESION, SKIN};
use lesionseg::layers::{
    batchnorm_backward, batchnorm_backward_infer, batchnorm_forward, concat_channels, conv2d_backward,
    conv2d_forward, crop_spatial, crop_spatial_backward, dropout, dropout_backward, maxpool2d, maxpool2d_backward,
    relu, relu_backward, sigmoid, sigmoid_backward, split_channels, transposed_conv2d_backward,
    transposed_conv2d_forward, upsample, upsample_backward, weighted_pixel_cross_entropy, BatchNormParams,
    ConvGeom, Mode, UpsampleAlgo,
};
use lesionseg::metrics::{boundary_f1, confusion, default_tolerance, iou, precision_recall_f1};
use lesionseg::optim::newton_step;
use lesionseg::trainer::{train, train_samples, train_with, RunConfig, StopReason, Validation, ValidationMetric};
use lesionseg::{LabelMap, Rng, Tensor};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1. gradient suite

type T = Tensor<f64>;

fn randn(shape: &[usize], rng: &mut Rng) -> T {
    Tensor::randn(shape, 0.0, 1.0, rng).unwrap()
}

fn concat_flat(parts: &[&T]) -> T {
    let data: Vec<f64> = parts.iter().flat_map(|t| t.data().to_vec()).collect();
    let n = data.len();
    Tensor::from_vec(&[n], data).unwrap()
}

fn split_flat(flat: &T, shapes: &[Vec<usize>]) -> Vec<T> {
    let mut off = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = Tensor::from_vec(s, flat.data()[off..off + n].to_vec()).unwrap();
            off += n;
            t
        })
        .collect()
}

/// Compares the analytic gradient of `<layer(inputs), r>` with central
/// differences over all inputs jointly.
fn check_layer<F, B>(name: &str, inputs: Vec<T>, forward: F, backward: B, worst: &mut (f64, String)) -> Result<(), String>
where
    F: Fn(&[T]) -> T,
    B: Fn(&[T], &T) -> Vec<T>,
{
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape().to_vec()).collect();
    let y = forward(&inputs);
    let r = randn(y.shape(), &mut Rng::new(y.len() as u64 + 17));
    let analytic = backward(&inputs, &r);
    let analytic = concat_flat(&analytic.iter().collect::<Vec<_>>());
    let x0 = concat_flat(&inputs.iter().collect::<Vec<_>>());
    let numeric = finite_difference_grad(|flat| forward(&split_flat(flat, &shapes)).dot(&r), &x0, 1e-6).map_err(e2s)?;
    let err = relative_error(&analytic, &numeric).map_err(e2s)?;
    if err > worst.0 {
        *worst = (err, name.to_string());
    }
    ensure(err < 1e-3, || format!("{name}: relative error {err:.2e}"))
}

fn labels(h: usize, w: usize, rng: &mut Rng) -> LabelMap {
    LabelMap::new(h, w, (0..h * w).map(|_| rng.below(3) as u8).collect()).unwrap()
}

fn layer_gradients(point: u64, worst: &mut (f64, String)) -> Result<(), String> {
    let mut rng = Rng::new(1000 + point);
    let (c, h, w) = (2 + rng.below(2), 5 + rng.below(3), 5 + rng.below(3));
    let x = randn(&[c, h, w], &mut rng);

    for (stride, pad) in [(1, 1), (2, 0)] {
        let geom = ConvGeom::new(stride, pad);
        let k = randn(&[3, c, 3, 3], &mut rng);
        let b = randn(&[3], &mut rng);
        check_layer(
            "conv",
            vec![x.clone(), k, b],
            |v| conv2d_forward(&v[0], &v[1], &v[2], geom).unwrap(),
            |v, g| {
                let r = conv2d_backward(&v[0], &v[1], geom, g).unwrap();
                vec![r.input, r.kernel, r.bias]
            },
            worst,
        )?;
    }

    let geom = ConvGeom::new(2, 0);
    let k = randn(&[c, 3, 2, 2], &mut rng);
    let b = randn(&[3], &mut rng);
    check_layer(
        "transposed_conv",
        vec![x.clone(), k, b],
        |v| transposed_conv2d_forward(&v[0], &v[1], &v[2], geom).unwrap(),
        |v, g| {
            let r = transposed_conv2d_backward(&v[0], &v[1], geom, g).unwrap();
            vec![r.input, r.kernel, r.bias]
        },
        worst,
    )?;

    let gamma = randn(&[c], &mut rng);
    let beta = randn(&[c], &mut rng);
    let bn = |v: &[T]| {
        let mut p = BatchNormParams::identity(c);
        p.gamma = v[1].clone();
        p.beta = v[2].clone();
        p
    };
    check_layer(
        "batchnorm_train",
        vec![x.clone(), gamma.clone(), beta.clone()],
        |v| batchnorm_forward(&v[0], &bn(v), Mode::Train).unwrap().y,
        |v, g| {
            let out = batchnorm_forward(&v[0], &bn(v), Mode::Train).unwrap();
            let r = batchnorm_backward(out.cache.as_ref().unwrap(), &v[1], g).unwrap();
            vec![r.input, r.gamma, r.beta]
        },
        worst,
    )?;
    let (rm, rv) = (randn(&[c], &mut rng), randn(&[c], &mut rng).map(|v| v.abs() + 0.5));
    let bn_inf = |v: &[T]| {
        let mut p = bn(v);
        p.running_mean = rm.clone();
        p.running_var = rv.clone();
        p
    };
    check_layer(
        "batchnorm_infer",
        vec![x.clone(), gamma, beta],
        |v| batchnorm_forward(&v[0], &bn_inf(v), Mode::Infer).unwrap().y,
        |v, g| {
            let r = batchnorm_backward_infer(&v[0], &bn_inf(v), g).unwrap();
            vec![r.input, r.gamma, r.beta]
        },
        worst,
    )?;

    check_layer("relu", vec![x.clone()], |v| relu(&v[0]), |v, g| vec![relu_backward(&v[0], g).unwrap()], worst)?;
    check_layer(
        "sigmoid",
        vec![x.clone()],
        |v| sigmoid(&v[0]),
        |v, g| vec![sigmoid_backward(&sigmoid(&v[0]), g).unwrap()],
        worst,
    )?;
    check_layer(
        "maxpool",
        vec![x.clone()],
        |v| maxpool2d(&v[0], 2, 2).unwrap().0,
        |v, g| vec![maxpool2d_backward(&maxpool2d(&v[0], 2, 2).unwrap().1, g).unwrap()],
        worst,
    )?;
    for algo in [UpsampleAlgo::Nearest, UpsampleAlgo::Bilinear] {
        check_layer(
            &format!("upsample_{}", algo.name()),
            vec![x.clone()],
            |v| upsample(&v[0], 2, algo).unwrap(),
            |v, g| vec![upsample_backward(v[0].shape(), 2, algo, g).unwrap()],
            worst,
        )?;
    }
    let other = randn(&[1, h, w], &mut rng);
    check_layer(
        "concat",
        vec![x.clone(), other],
        |v| concat_channels(&v[0], &v[1]).unwrap(),
        |_, g| {
            let (a, b) = split_channels(g, c).unwrap();
            vec![a, b]
        },
        worst,
    )?;
    check_layer(
        "crop",
        vec![x.clone()],
        |v| crop_spatial(&v[0], h - 1, w - 2).unwrap(),
        |v, g| vec![crop_spatial_backward(v[0].shape(), g).unwrap()],
        worst,
    )?;
    let seed = rng.next_u64();
    check_layer(
        "dropout",
        vec![x.clone()],
        |v| dropout(&v[0], 0.3, &mut Rng::new(seed), Mode::Train).unwrap().0,
        |v, g| {
            let (_, mask) = dropout(&v[0], 0.3, &mut Rng::new(seed), Mode::Train).unwrap();
            vec![dropout_backward(&mask, g).unwrap()]
        },
        worst,
    )?;

    let logits = randn(&[2, h, w], &mut rng);
    let lab = labels(h, w, &mut rng);
    let cw = [0.6, 1.7];
    let analytic = weighted_pixel_cross_entropy(&logits, &lab, cw).map_err(e2s)?.grad;
    let numeric = finite_difference_grad(
        |z| Ok(weighted_pixel_cross_entropy(z, &lab, cw)?.loss),
        &logits,
        1e-6,
    )
    .map_err(e2s)?;
    let err = relative_error(&analytic, &numeric).map_err(e2s)?;
    if err > worst.0 {
        *worst = (err, "loss".into());
    }
    ensure(err < 1e-3, || format!("loss: relative error {err:.2e}"))
}

fn flatten(c: &Checkpoint<f64>, names: &[String]) -> T {
    concat_flat(&names.iter().map(|n| c.get(n).unwrap()).collect::<Vec<_>>())
}

fn network_gradient(point: u64) -> Result<f64, String> {
    let spec = build_sgn(1, 1).map_err(e2s)?;
    let net = Network::new(spec.clone()).map_err(e2s)?;
    let mut rng = Rng::new(2000 + point);
    let params: Checkpoint<f64> = scratch_init(&spec, &rng.child("init", 0)).map_err(e2s)?;
    let x = randn(&[3, 8, 8], &mut rng);
    let lab = labels(8, 8, &mut rng);
    let cw = [0.8, 1.4];
    let acts = net.forward(&params, &x, Mode::Train, &mut Rng::new(0)).map_err(e2s)?;
    let g = net.backward(&params, &acts, &lab, cw).map_err(e2s)?;
    let names: Vec<String> = g.grads.names().map(str::to_string).collect();
    let mut probe = params.clone();
    let numeric = finite_difference_grad(
        |flat| {
            let mut off = 0;
            for n in &names {
                let t = probe.get_mut(n).unwrap();
                let len = t.len();
                t.data_mut().copy_from_slice(&flat.data()[off..off + len]);
                off += len;
            }
            let a = net.forward(&probe, &x, Mode::Train, &mut Rng::new(0))?;
            Ok(net.backward(&probe, &a, &lab, cw)?.loss)
        },
        &flatten(&params, &names),
        1e-6,
    )
    .map_err(e2s)?;
    relative_error(&flatten(&g.grads, &names), &numeric).map_err(e2s)
}

fn criterion_1() -> Outcome {
    let mut worst = (0.0, String::new());
    for point in 0..10 {
        layer_gradients(point, &mut worst)?;
    }
    let spec = build_sgn(1, 1).map_err(e2s)?;
    let count = spec.parameter_count().map_err(e2s)?;
    ensure(count <= 300, || format!("SGN1-mini has {count} parameters"))?;
    let mut net_worst: f64 = 0.0;
    for point in 0..10 {
        let err = network_gradient(point)?;
        ensure(err < 1e-3, || format!("SGN1-mini point {point}: relative error {err:.2e}"))?;
        net_worst = net_worst.max(err);
    }
    Ok(format!(
        "13 layer checks x 10 points, worst {:.1e} ({}); SGN1-mini ({count} params) worst {:.1e}",
        worst.0, worst.1, net_worst
    ))
}

// ---------------------------------------------------------------------------
// 2. conv oracle

fn naive_conv(x: &T, k: &T, b: &T, stride: usize, pad: usize) -> T {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut y = Tensor::zeros(&[o, oh, ow]);
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b.data()[oc];
                for ic in 0..c {
                    for di in 0..kh {
                        for dj in 0..kw {
                            let r = (i * stride + di) as isize - pad as isize;
                            let s = (j * stride + dj) as isize - pad as isize;
                            if r >= 0 && s >= 0 && (r as usize) < h && (s as usize) < w {
                                acc += x.get(&[ic, r as usize, s as usize]) * k.get(&[oc, ic, di, dj]);
                            }
                        }
                    }
                }
                y.set(&[oc, i, j], acc);
            }
        }
    }
    y
}

fn criterion_2() -> Outcome {
    let mut rng = Rng::new(2);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let k = 1 + rng.below(5);
        let stride = 1 + rng.below(3);
        let pad = rng.below(k);
        let (c, o) = (1 + rng.below(4), 1 + rng.below(4));
        let h = k + rng.below(12);
        let w = k + rng.below(12);
        let x = randn(&[c, h, w], &mut rng);
        let kern = randn(&[o, c, k, k], &mut rng);
        let b = randn(&[o], &mut rng);
        let want = naive_conv(&x, &kern, &b, stride, pad);
        let got = conv2d_forward(&x, &kern, &b, ConvGeom::new(stride, pad)).map_err(e2s)?;
        ensure(got.shape() == want.shape(), || format!("case {case}: shape {:?} vs {:?}", got.shape(), want.shape()))?;
        let diff = got.sub(&want).map_err(e2s)?.max_abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-5, || format!("case {case} (k={k} s={stride} p={pad}): max diff {diff:.2e}"))?;
        // the f32 path agrees with the same reference
        let got32 = conv2d_forward(&x.cast::<f32>(), &kern.cast(), &b.cast(), ConvGeom::new(stride, pad)).map_err(e2s)?;
        let diff32 = got32.cast::<f64>().sub(&want).map_err(e2s)?.max_abs();
        ensure(diff32 <= 1e-5 * (1 + c * k * k) as f64, || format!("case {case}: f32 diff {diff32:.2e}"))?;
    }
    Ok(format!("200 configurations, max |diff| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 3. adjoint identity

fn criterion_3() -> Outcome {
    let mut rng = Rng::new(3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let k = 1 + rng.below(4);
        let stride = 1 + rng.below(3);
        let pad = rng.below(k);
        let (c, o) = (1 + rng.below(4), 1 + rng.below(4));
        // extents for which the transposed map returns exactly the input size
        let oh = 1 + rng.below(8);
        let ow = 1 + rng.below(8);
        let h = ((oh - 1) * stride + k).saturating_sub(2 * pad);
        let w = ((ow - 1) * stride + k).saturating_sub(2 * pad);
        if h == 0 || w == 0 || h + 2 * pad < k || w + 2 * pad < k {
            continue;
        }
        let x = randn(&[c, h, w], &mut rng);
        let kern = randn(&[o, c, k, k], &mut rng);
        let y = randn(&[o, oh, ow], &mut rng);
        let geom = ConvGeom::new(stride, pad);
        let cx = conv2d_forward(&x, &kern, &Tensor::zeros(&[o]), geom).map_err(e2s)?;
        let ty = transposed_conv2d_forward(&y, &kern, &Tensor::zeros(&[c]), geom).map_err(e2s)?;
        let lhs = cx.dot(&y).map_err(e2s)?;
        let rhs = x.dot(&ty).map_err(e2s)?;
        let diff = (lhs - rhs).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-4, || format!("case {case}: <conv x, y> = {lhs}, <x, conv^T y> = {rhs}"))?;
    }
    Ok(format!("100 operand pairs, max |difference| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 4. metric oracles

fn random_pair(n: usize, rng: &mut Rng) -> (LabelMap, LabelMap) {
    // half the pairs are pixel noise, half are blobs over a skin field
    let make = |rng: &mut Rng| -> LabelMap {
        if rng.bernoulli(0.5) {
            return LabelMap::new(n, n, (0..n * n).map(|_| rng.below(3) as u8).collect()).unwrap();
        }
        let mut l = LabelMap::filled(n, n, SKIN).unwrap();
        for _ in 0..1 + rng.below(3) {
            let (r0, c0) = (rng.below(n), rng.below(n));
            let (rh, rw) = (1 + rng.below(n / 2), 1 + rng.below(n / 2));
            let class = if rng.bernoulli(0.8) { LESION } else { 0 };
            for r in r0..(r0 + rh).min(n) {
                for c in c0..(c0 + rw).min(n) {
                    l.set(r, c, class);
                }
            }
        }
        l
    };
    (make(rng), make(rng))
}

/// Pixel-counting reference: `(tp, fp, fn, positives)` for a class.
fn count(p: &LabelMap, t: &LabelMap, class: u8) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fneg, mut pos) = (0, 0, 0, 0);
    for i in 0..t.len() {
        let (pv, tv) = (p.data()[i], t.data()[i]);
        if tv == 0 {
            continue;
        }
        if tv == class {
            pos += 1;
            if pv == class {
                tp += 1;
            } else {
                fneg += 1;
            }
        } else if pv == class {
            fp += 1;
        }
    }
    (tp, fp, fneg, pos)
}

fn div(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn boundary_points(mask: &dyn Fn(usize, usize) -> bool, n: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for r in 0..n as i64 {
        for c in 0..n as i64 {
            if !mask(r as usize, c as usize) {
                continue;
            }
            let inside = |rr: i64, cc: i64| rr >= 0 && cc >= 0 && rr < n as i64 && cc < n as i64 && mask(rr as usize, cc as usize);
            if !(inside(r - 1, c) && inside(r + 1, c) && inside(r, c - 1) && inside(r, c + 1)) {
                out.push((r, c));
            }
        }
    }
    out
}

fn scan_bf1(p: &LabelMap, t: &LabelMap, class: u8, tol: usize) -> f64 {
    let n = t.height();
    let pb = boundary_points(&|r, c| p.get(r, c) == class && t.get(r, c) != 0, n);
    let tb = boundary_points(&|r, c| t.get(r, c) == class, n);
    match (pb.is_empty(), tb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let tol2 = (tol * tol) as i64;
    let matched = |a: &[(i64, i64)], b: &[(i64, i64)]| {
        a.iter()
            .filter(|x| b.iter().any(|y| (x.0 - y.0).pow(2) + (x.1 - y.1).pow(2) <= tol2))
            .count() as f64
            / a.len() as f64
    };
    let (pr, rc) = (matched(&pb, &tb), matched(&tb, &pb));
    if pr + rc == 0.0 {
        0.0
    } else {
        2.0 * pr * rc / (pr + rc)
    }
}

fn criterion_4() -> Outcome {
    let mut rng = Rng::new(4);
    for case in 0..500 {
        let (p, t) = random_pair(16, &mut rng);
        let cm = confusion(&p, &t).map_err(e2s)?;
        for (k, class) in [SKIN, LESION].into_iter().enumerate() {
            let (tp, fp, fneg, pos) = count(&p, &t, class);
            ensure(
                cm.true_positives(k) == tp && cm.false_positives(k) == fp && cm.false_negatives(k) == fneg,
                || format!("case {case}: confusion differs for class {class}"),
            )?;
            ensure(cm.positives(k) == pos, || format!("case {case}: positives differ"))?;
            let want_iou = div(tp, tp + fp + fneg);
            ensure(iou(&p, &t, class).map_err(e2s)? == want_iou, || format!("case {case}: IoU differs"))?;
            let ppv = div(tp, tp + fp);
            let tpr = div(tp, pos);
            let f1 = match (ppv, tpr) {
                (Some(a), Some(b)) if a + b > 0.0 => Some(2.0 * a * b / (a + b)),
                _ => None,
            };
            ensure(precision_recall_f1(&cm, k) == (ppv, tpr, f1), || format!("case {case}: PPV/TPR/F1 differ"))?;
        }
    }
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (p, t) = random_pair(32, &mut rng);
        let tol = if case % 2 == 0 { default_tolerance(32, 32) } else { rng.below(4) };
        for class in [SKIN, LESION] {
            let got = boundary_f1(&p, &t, class, tol).map_err(e2s)?;
            let want = scan_bf1(&p, &t, class, tol);
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() < 1e-12, || format!("case {case}: BF1 {got} vs scan {want}"))?;
        }
    }
    Ok(format!("500 count pairs exact; 100 BF1 pairs, max |diff| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 5. architecture contracts

fn criterion_5() -> Outcome {
    let x = Tensor::<f32>::rand_uniform(&[3, 96, 96], 0.0, 1.0, &mut Rng::new(5)).map_err(e2s)?;
    for name in PRESET_NAMES {
        let spec = build_preset(name).map_err(e2s)?;
        spec.validate().map_err(|e| format!("{name}: {e}"))?;
        let params: Checkpoint<f32> = scratch_init(&spec, &Rng::new(0)).map_err(e2s)?;
        let net = Network::new(spec).map_err(e2s)?;
        let y = net.infer(&params, &x).map_err(|e| format!("{name}: {e}"))?;
        ensure(y.shape() == [2, 96, 96], || format!("{name}: logits {:?}", y.shape()))?;
    }
    let count = |n: &str| build_preset(n).and_then(|s| s.parameter_count()).map_err(e2s);
    let (vgg, sgnvgg) = (count("vgg16")?, count("sgnvgg16")?);
    ensure(vgg == sgnvgg, || format!("vgg16 has {vgg} parameters, sgnvgg16 {sgnvgg}"))?;
    let convs: Vec<usize> = ["fcn8", "fcn16", "fcn32"]
        .iter()
        .map(|n| build_preset(n).map(|s| s.conv_layer_count()).map_err(e2s))
        .collect::<Result<_, _>>()?;
    ensure(convs.iter().all(|&c| c == convs[0]), || format!("FCN conv counts {convs:?}"))?;
    Ok(format!(
        "12 presets map 3x96x96 to 2x96x96; vgg16 = sgnvgg16 = {vgg} params; fcn8/16/32 convs {convs:?}"
    ))
}

// ---------------------------------------------------------------------------
// 6. overfit capacity

fn criterion_6() -> Outcome {
    let samples = synth_lesion(4, &SynthConfig::default(), 6).map_err(e2s)?;
    let mut cfg = RunConfig::for_preset("sgn1").map_err(e2s)?;
    cfg.augment = GeometricConfig::none();
    cfg.epochs = 200;
    // the criterion is about reachable fit, so early stopping must not cut it short
    cfg.patience = 200;
    cfg.metric = ValidationMetric::LesionIou;
    cfg.stop_at = Some(0.95);
    let log = train_samples(&cfg, &samples, &samples).map_err(e2s)?;
    let last = log.epochs.last().unwrap();
    ensure(
        log.stop_reason == StopReason::TargetReached && last.metric >= 0.95,
        || format!("lesion IoU {:.4} after {} epochs", last.metric, last.epoch),
    )?;
    Ok(format!(
        "training lesion IoU {:.4} at epoch {} ({:.1}s)",
        last.metric,
        last.epoch,
        log.wall_clock.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 7. early stopping

/// Hand simulation of the patience counter: returns (stop check, best check).
fn simulate_patience(seq: &[f64], patience: usize) -> (usize, usize) {
    let (mut best, mut best_i, mut since) = (f64::NEG_INFINITY, 0, 0);
    for (i, &m) in seq.iter().enumerate() {
        if m > best {
            best = m;
            best_i = i;
            since = 0;
        } else {
            since += 1;
        }
        if since > patience {
            return (i, best_i);
        }
    }
    (seq.len() - 1, best_i)
}

fn criterion_7() -> Outcome {
    let spec = lesionseg::GraphSpec::from_text(
        "node c conv in=3 out=2 k=3 inputs=input\nnode loss softmax_loss inputs=c\n",
    )
    .map_err(e2s)?;
    let samples = synth_lesion(2, &SynthConfig { height: 32, width: 32, border: false }, 7).map_err(e2s)?;
    let seq = [0.20, 0.35, 0.30, 0.41, 0.41, 0.38, 0.40, 0.39, 0.395, 0.2, 0.9, 0.95];
    let patience = 5;
    let mut cfg = RunConfig::new("custom", spec);
    cfg.augment = GeometricConfig::none();
    cfg.patience = patience;
    cfg.epochs = seq.len() - 1;
    let mut snaps = Vec::new();
    let log = train_with(&cfg, &samples, &mut |epoch, _, params| {
        snaps.push(params.clone());
        Ok(Validation { metric: seq[epoch], report: None })
    })
    .map_err(e2s)?;
    let (stop, best) = simulate_patience(&seq, patience);
    let stopped = log.epochs.last().unwrap().epoch;
    ensure(log.stop_reason == StopReason::EarlyStop, || format!("stop reason {:?}", log.stop_reason))?;
    ensure(stopped == stop, || format!("stopped at epoch {stopped}, simulation says {stop}"))?;
    ensure(log.best_epoch == best, || format!("best epoch {} vs {best}", log.best_epoch))?;
    ensure(log.best.bit_eq(&snaps[best]), || "returned checkpoint is not the best-epoch snapshot".into())?;
    Ok(format!("stopped at epoch {stopped}, best epoch {best} snapshot returned bit-exact"))
}

// ---------------------------------------------------------------------------
// 8. transfer mechanism

fn criterion_8() -> Outcome {
    let samples = synth_lesion(4, &SynthConfig { height: 48, width: 48, border: false }, 8).map_err(e2s)?;
    let mut cfg = RunConfig::for_preset("sgn2").map_err(e2s)?;
    cfg.augment = GeometricConfig::none();
    cfg.epochs = 5;
    cfg.patience = 5;
    let a = train_samples(&cfg, &samples, &samples).map_err(e2s)?.final_params;
    let spec = cfg.arch.clone();
    let table = TransferTable::identity(&spec).map_err(e2s)?;
    let (b, report) = transfer_init(&spec, &a, &table, TransferPolicy::EncoderOnly, &Rng::new(99)).map_err(e2s)?;

    let listed: BTreeSet<String> = report.copied_targets().into_iter().map(String::from).collect();
    let encoder: BTreeSet<String> = spec.encoder_param_names().map_err(e2s)?.into_iter().collect();
    ensure(listed == encoder, || {
        format!("report lists {listed:?}, encoder parameters are {encoder:?}")
    })?;

    let net = Network::new(spec.clone()).map_err(e2s)?;
    let probe = Tensor::<f32>::rand_uniform(&[3, 48, 48], 0.0, 1.0, &mut Rng::new(80)).map_err(e2s)?;
    let acts_a = net.forward(&a, &probe, Mode::Infer, &mut Rng::new(0)).map_err(e2s)?;
    let acts_b = net.forward(&b, &probe, Mode::Infer, &mut Rng::new(0)).map_err(e2s)?;
    let mut compared = 0;
    for node in spec.nodes.iter().filter(|n| n.section.is_encoder()) {
        let (va, vb) = (net.value(&acts_a, &node.id), net.value(&acts_b, &node.id));
        let same = matches!((va, vb), (Some(x), Some(y)) if x.bit_eq(y));
        ensure(same, || format!("encoder node `{}` differs", node.id))?;
        compared += 1;
    }
    let logits_differ = !net.logits(&acts_a).bit_eq(net.logits(&acts_b));
    ensure(logits_differ, || "decoder was copied too".into())?;
    Ok(format!(
        "{compared} encoder activations bit-identical; report lists exactly the {} encoder parameters",
        encoder.len()
    ))
}

// ---------------------------------------------------------------------------
// 9. noise statistics

fn criterion_9() -> Outcome {
    let n = 100_000;
    let level = 0.5f32;
    let img = Tensor::new(&[1, 250, 400], level).map_err(e2s)?;
    let stats = |t: &Tensor<f32>| {
        let m = t.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = t.data().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        var
    };
    let within = |v: f64, target: f64, rel: f64| (v - target).abs() <= rel * target;

    let g = add_noise(&img, NoiseKind::Gaussian { variance: 0.01 }, &mut Rng::new(91)).map_err(e2s)?;
    let gv = stats(&g);
    ensure(within(gv, 0.01, 0.1), || format!("gaussian variance {gv:.5}"))?;

    let s = add_noise(&img, NoiseKind::Speckle { variance: 0.04 }, &mut Rng::new(92)).map_err(e2s)?;
    // out = x + x*n, so var(out) / x^2 estimates var(n)
    let sv = stats(&s) / (level as f64).powi(2);
    ensure(within(sv, 0.04, 0.1), || format!("speckle variance {sv:.5}"))?;

    let sp = add_noise(&img, NoiseKind::SaltPepper { density: 0.05 }, &mut Rng::new(93)).map_err(e2s)?;
    let frac = sp.data().iter().filter(|&&v| v != level).count() as f64 / n as f64;
    ensure((frac - 0.05).abs() <= 0.01, || format!("salt & pepper fraction {frac:.4}"))?;
    Ok(format!(
        "gaussian var {gv:.5}, speckle var {sv:.5}, salt & pepper fraction {frac:.4}"
    ))
}

// ---------------------------------------------------------------------------
// 10. dataset arithmetic

fn criterion_10() -> Outcome {
    let small = SynthConfig { height: 32, width: 32, border: false };
    let cropped = synth_lesion(41, &small, 101).map_err(e2s)?;
    let kept = synth_lesion(126, &small, 102).map_err(e2s)?;
    let set = crop_protocol(&cropped, &kept, &CropConfig::default(), (32, 32), 10).map_err(e2s)?;
    ensure(set.len() == 536, || format!("crop protocol produced {}", set.len()))?;
    let split = SplitFractions { train: 0.7, validation: 0.0 };
    let (_, _, test41) = split_counts(41, split).map_err(e2s)?;
    let (_, _, test536) = split_counts(set.len(), split).map_err(e2s)?;
    ensure(test41 == 12 && test536 == 161, || format!("test sets {test41} and {test536}"))?;
    Ok(format!("41 cropped + 126 kept -> {}; 70/30 test sets {test41} and {test536}", set.len()))
}

// ---------------------------------------------------------------------------
// 11. newton exactness

fn criterion_11() -> Outcome {
    let mut rng = Rng::new(11);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = 1 + rng.below(50);
        let m = randn(&[n, n], &mut rng);
        // A = M^T M + n I is symmetric positive definite
        let mut a = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                let mut s = if i == j { n as f64 } else { 0.0 };
                for k in 0..n {
                    s += m.get(&[k, i]) * m.get(&[k, j]);
                }
                a.set(&[i, j], s);
            }
        }
        // f(w) = 0.5 w^T A w - b^T w with b = A w*, so the minimizer is w*
        let w_star = randn(&[n], &mut rng);
        let w0 = randn(&[n], &mut rng);
        let mut grad = Tensor::zeros(&[n]);
        for i in 0..n {
            let s: f64 = (0..n).map(|j| a.get(&[i, j]) * (w0.data()[j] - w_star.data()[j])).sum();
            grad.data_mut()[i] = s;
        }
        let w1 = newton_step(&w0, &grad, &a, 1.0).map_err(e2s)?;
        let err = w1.sub(&w_star).map_err(e2s)?.max_abs();
        worst = worst.max(err);
        ensure(err <= 1e-8, || format!("case {case} (n={n}): max error {err:.2e}"))?;
    }
    Ok(format!("20 quadratics, max |w1 - w*| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 12. determinism

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let data = tmp.path().join("data");
    let samples = synth_lesion(6, &SynthConfig { height: 48, width: 48, border: false }, 12).map_err(e2s)?;
    write_samples(&data, &samples).map_err(e2s)?;
    let run = |dir: &str| -> Result<Vec<u8>, String> {
        let mut cfg = RunConfig::for_preset("sgn1").map_err(e2s)?;
        cfg.data_root = Some(data.clone());
        cfg.input_size = None;
        cfg.seed = 1234;
        cfg.epochs = 2;
        cfg.augment = GeometricConfig {
            translate_px: (-8.0, 8.0),
            ..GeometricConfig::default()
        };
        cfg.out_dir = Some(tmp.path().join(dir));
        train(&cfg).map_err(e2s)?;
        std::fs::read(tmp.path().join(dir).join("runlog.csv")).map_err(e2s)
    };
    let (a, b) = (run("a")?, run("b")?);
    ensure(!a.is_empty() && a == b, || "runlog.csv differs between identical runs".into())?;
    Ok(format!("runlog.csv byte-identical ({} bytes)", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient suite", criterion_1),
        ("conv oracle", criterion_2),
        ("adjoint identity", criterion_3),
        ("metric oracles", criterion_4),
        ("architecture contracts", criterion_5),
        ("overfit capacity", criterion_6),
        ("early stopping", criterion_7),
        ("transfer mechanism", criterion_8),
        ("noise statistics", criterion_9),
        ("dataset arithmetic", criterion_10),
        ("newton exactness", criterion_11),
        ("determinism", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
