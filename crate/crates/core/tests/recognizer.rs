use std::rc::Rc;

use afe_autograd::{grad_check, Tape, Tensor, TreeLink};
use afe_core::encoder::SampleInput;
use afe_core::model::{Bound, ModelConfig, ModelParams};
use afe_core::recognizer::{classify, count_flops, forward_batch, logits, stream_features, stream_forward, StreamVars};
use afe_core::skeleton::{SkeletonSequence, Topology};
use afe_oracles::SplitMix;

fn small_config(classes: usize) -> ModelConfig {
    ModelConfig {
        channels: [4, 6, 8],
        fc_hidden: 10,
        head_hidden: 6,
        ..ModelConfig::new(Topology::humanoid15(), classes)
    }
}

fn random_input(rng: &mut SplitMix, label: usize) -> SampleInput<f32> {
    let f = (0..64)
        .map(|_| (0..15).map(|_| [0, 1, 2].map(|_| rng.uniform(-1.0, 1.0) as f32)).collect())
        .collect();
    let s = SkeletonSequence::new(f, label).unwrap();
    SampleInput::from_sequence(&s, &Topology::humanoid15()).unwrap()
}

fn zero_biases(p: &mut ModelParams<f32>) {
    let names: Vec<String> = p.names().filter(|n| n.ends_with("bias")).map(str::to_string).collect();
    for n in names {
        let t = p.get_mut(&n).unwrap();
        *t = Tensor::zeros(t.shape());
    }
}

#[test]
fn zero_image_gives_zero_features() {
    let cfg = ModelConfig::new(Topology::ntu25(), 60);
    let p = ModelParams::init(&cfg, 0).unwrap();
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape, false);
    let img = tape.constant(Tensor::zeros(&[3, 64, 64]));
    let sv = StreamVars::from_bound(&bound, 0).unwrap();
    let f = stream_forward(&mut tape, &sv, img, 1, 0.01f32).unwrap();
    assert_eq!(tape.shape(f), &[128]);
    assert!(tape.value(f).data().iter().all(|&x| x == 0.0));
}

#[test]
fn positive_homogeneity() {
    let cfg = small_config(3);
    let mut p = ModelParams::init(&cfg, 1).unwrap().cast::<f64>();
    for l in 1..=3 {
        let w = p.get_mut(&format!("stream0.conv{l}.weight")).unwrap();
        *w = w.map(f64::abs);
    }
    let mut rng = SplitMix::new(2);
    let x = Tensor::from_f64(&[3, 64, 64], &rng.vec(3 * 64 * 64, 0.0, 1.0)).unwrap();
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape, false);
    let sv = StreamVars::from_bound(&bound, 0).unwrap();
    let (a, b) = (tape.constant(x.clone()), tape.constant(x.map(|v| 2.0 * v)));
    let zero_bias: Vec<_> = (0..3).map(|l| tape.constant(Tensor::zeros(&[cfg.channels[l]]))).collect();
    let sv = StreamVars {
        convs: [0, 1, 2].map(|l| (sv.convs[l].0, zero_bias[l])),
    };
    let fa = stream_forward(&mut tape, &sv, a, 1, 0.01).unwrap();
    let fb = stream_forward(&mut tape, &sv, b, 1, 0.01).unwrap();
    let doubled = tape.value(fa).map(|v| 2.0 * v);
    assert!(doubled.data().iter().any(|&v| v > 0.0));
    assert!(tape.value(fb).max_abs_diff(&doubled) < 1e-12);
}

#[test]
fn streams_are_not_weight_tied() {
    let cfg = small_config(5);
    let p = ModelParams::init(&cfg, 3).unwrap();
    let mut rng = SplitMix::new(4);
    let imgs: Vec<Tensor<f32>> = (0..4)
        .map(|_| Tensor::from_f64(&[3, 64, 64], &rng.vec(3 * 64 * 64, -1.0, 1.0)).unwrap())
        .collect();
    let run = |order: [usize; 4]| {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape, false);
        let vars: Vec<_> = order.iter().map(|&i| tape.constant(imgs[i].clone())).collect();
        let f = stream_features(&mut tape, &cfg, &bound, &vars).unwrap();
        let out = classify(&mut tape, &bound, f, 0.01).unwrap();
        tape.value(out).clone()
    };
    let base = run([0, 1, 2, 3]);
    assert_eq!(base.shape(), &[1, 5]);
    assert!(base.max_abs_diff(&run([1, 0, 2, 3])) > 1e-6);
}

#[test]
fn zero_bundle_with_zero_biases_gives_zero_logits() {
    let cfg = small_config(4);
    let mut p = ModelParams::init(&cfg, 5).unwrap();
    zero_biases(&mut p);
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape, false);
    let vars: Vec<_> = (0..4).map(|_| tape.constant(Tensor::zeros(&[3, 64, 64]))).collect();
    let f = stream_features(&mut tape, &cfg, &bound, &vars).unwrap();
    let out = classify(&mut tape, &bound, f, 0.01).unwrap();
    assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
}

#[test]
fn identical_samples_give_identical_rows() {
    let cfg = small_config(4);
    let p = ModelParams::init(&cfg, 6).unwrap();
    let mut rng = SplitMix::new(7);
    let s = random_input(&mut rng, 0);
    let rows = logits(&p, &[&s, &s, &s]).unwrap();
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[1], rows[2]);
    assert_eq!(rows, logits(&p, &[&s, &s, &s]).unwrap());
}

/// A few coordinates from every tensor, then random ones up to `total`.
fn stratified_points(inputs: &[Tensor<f64>], per_tensor: usize, total: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = SplitMix::new(seed);
    let mut pts = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        for _ in 0..per_tensor.min(t.len()) {
            pts.push((i, rng.below(t.len())));
        }
    }
    while pts.len() < total {
        let i = rng.below(inputs.len());
        pts.push((i, rng.below(inputs[i].len())));
    }
    pts
}

#[test]
fn pipeline_gradients_match_finite_differences() {
    let cfg = small_config(3);
    let mut params = ModelParams::init(&cfg, 8).unwrap().cast::<f64>();
    let mut rng = SplitMix::new(9);
    // identity-like embeddings repeat rows, which ties max-pool windows
    let names: Vec<String> = params.names().filter(|n| n.starts_with("emb.") || n.starts_with("te.")).map(str::to_string).collect();
    for n in names {
        let t = params.get_mut(&n).unwrap();
        for v in t.data_mut() {
            *v += rng.uniform(-0.05, 0.05);
        }
    }
    let samples: Vec<SampleInput<f64>> = (0..2)
        .map(|i| {
            let s = random_input(&mut rng, i);
            SampleInput {
                joints_img: s.joints_img.cast(),
                joint_feats: s.joint_feats.cast(),
                bones_img: s.bones_img.cast(),
                bone_feats: s.bone_feats.cast(),
                frame_feats: s.frame_feats.cast(),
                root: s.root.cast(),
                label: s.label,
            }
        })
        .collect();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
    let points = stratified_points(&inputs, 1, 60, 10);
    let links: Rc<[TreeLink]> = cfg.topology.links().into();
    let report = grad_check(&inputs, &points, |tape, vars| {
        let bound = Bound::from_vars(names.iter().map(String::as_str), vars);
        let refs: Vec<&SampleInput<f64>> = samples.iter().collect();
        let out = forward_batch(tape, &cfg, &bound, &links, &refs).expect("forward pass");
        tape.cross_entropy(out, &[0, 1])
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn default_flops_match_hand_sum() {
    let cfg = ModelConfig::new(Topology::ntu25(), 60);
    let report = count_flops(&cfg).unwrap();
    // T = 64, J = 25, b = 24, head 64, channels 32/64/128, hidden 256
    let hand: u64 = 25 * 192 * 64 // kjfe fc1
        + 25 * 64 // kjfe fc2
        + 24 * 192 * 64 // bvfe fc1
        + 24 * 64 // bvfe fc2
        + 64 * 75 * 25 // mfam shared fc
        + 2 * 64 * 25 * 25 // query and key
        + 64 * 64 * 25 // Q K^T
        + 4 * 3 * 64 * 25 * 64 // four embeddings
        + 4 * (32 * 32 * 32 * 3 * 9 + 64 * 8 * 8 * 32 * 9 + 128 * 2 * 2 * 64 * 9) // convs
        + 512 * 256 // cls fc1
        + 256 * 60; // cls fc2
    assert_eq!(hand, 11_720_064);
    assert_eq!(report.total_flops, 2 * hand);
    assert_eq!(report.total_macs(), report.layers.iter().map(|l| l.macs).sum::<u64>());
    let params = ModelParams::init(&cfg, 0).unwrap();
    assert_eq!(report.params, params.value_count() as u64);
}

#[test]
fn doubling_channels_scales_conv_cost() {
    let base = ModelConfig::new(Topology::ntu25(), 60);
    let wide = ModelConfig {
        channels: [64, 128, 256],
        ..base.clone()
    };
    let (a, b) = (count_flops(&base).unwrap(), count_flops(&wide).unwrap());
    let conv = |r: &afe_core::FlopsReport, l: usize| {
        r.layers
            .iter()
            .filter(|x| x.name.ends_with(&format!("conv{l}")))
            .map(|x| x.macs)
            .sum::<u64>()
    };
    assert_eq!(conv(&b, 1), 2 * conv(&a, 1));
    assert_eq!(conv(&b, 2), 4 * conv(&a, 2));
    assert_eq!(conv(&b, 3), 4 * conv(&a, 3));
}

#[test]
fn longer_sequences_cost_more() {
    let base = ModelConfig::new(Topology::ntu25(), 60);
    let long = ModelConfig {
        frames: 128,
        ..base.clone()
    };
    assert!(count_flops(&long).unwrap().total_flops > count_flops(&base).unwrap().total_flops);
}
