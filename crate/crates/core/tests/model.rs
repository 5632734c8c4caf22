use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scs_tensor::{Graph, Tensor, TensorError};
use scsnet::model::{cpm_coords, Ctx, Discriminator, Generator, Mode, ParamSet, ScsNetConfig};
use scsnet::ScsError;

fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random::<f32>())
}

fn full_size(hw: usize) -> Generator {
    Generator::new(ScsNetConfig {
        input_height: hw,
        input_width: hw,
        ..ScsNetConfig::default()
    })
    .unwrap()
}

fn zero_prefix(params: &mut ParamSet<f32>, prefix: &str) {
    let names: Vec<String> = params
        .names()
        .filter(|n| n.starts_with(prefix))
        .cloned()
        .collect();
    for n in names {
        let t = params.get_mut(&n).unwrap();
        t.data_mut().fill(0.0);
    }
}

#[test]
fn init_conv_lifts_gray_to_base_channels() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random(&[1, 1, 16, 16], 1));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.init_conv(&mut cx, x).unwrap();
    assert_eq!(g.shape(y), &[1, 64, 16, 16]);
}

#[test]
fn init_conv_rejects_rgb_source() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random(&[1, 3, 16, 16], 1));
    let mut cx = Ctx::new(&mut g, &params, false);
    let err = gen.init_conv(&mut cx, x).unwrap_err();
    assert!(
        matches!(err, ScsError::Tensor(TensorError::ShapeMismatch { .. })),
        "{err}"
    );
}

#[test]
fn init_conv_zero_input_zero_output() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros([1, 1, 16, 16]));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.init_conv(&mut cx, x).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn init_conv_gradient_reaches_weight_and_input() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let x = g.leaf(random(&[1, 1, 16, 16], 2));
    let mut cx = Ctx::new(&mut g, &params, true);
    let y = gen.init_conv(&mut cx, x).unwrap();
    let w = cx.bound()["init_conv.weight"];
    let loss = g.square(y).and_then(|s| g.reduce_mean(s)).unwrap();
    let grads = g.backward(loss).unwrap();
    let norm = |t: &Tensor<f32>| t.data().iter().map(|v| v * v).sum::<f32>();
    assert!(norm(grads.get(x).unwrap()) > 0.0);
    assert!(norm(grads.get(w).unwrap()) > 0.0);
}

#[test]
fn encoders_reach_quarter_resolution() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(3).unwrap();
    let mut g = Graph::new();
    let src = g.constant(random(&[2, 1, 16, 16], 4));
    let rf = g.constant(random(&[2, 3, 16, 16], 5));
    let mut cx = Ctx::new(&mut g, &params, false);
    let f_init = gen.init_conv(&mut cx, src).unwrap();
    let f_s = gen.encode_source(&mut cx, f_init).unwrap();
    let f_r = gen.encode_reference(&mut cx, rf).unwrap();
    assert_eq!(g.shape(f_s), &[2, 256, 4, 4]);
    assert_eq!(g.shape(f_r), &[2, 256, 4, 4]);
}

#[test]
fn encoder_parameters_are_isolated() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(3).unwrap();
    let mut perturbed = params.clone();
    for v in perturbed
        .get_mut("enc_ref.stage1.conv_a.weight")
        .unwrap()
        .data_mut()
    {
        *v += 0.5;
    }
    let run = |p: &ParamSet<f32>| {
        let mut g = Graph::new();
        let src = g.constant(random(&[1, 1, 16, 16], 4));
        let rf = g.constant(random(&[1, 3, 16, 16], 5));
        let mut cx = Ctx::new(&mut g, p, false);
        let f_init = gen.init_conv(&mut cx, src).unwrap();
        let f_s = gen.encode_source(&mut cx, f_init).unwrap();
        let f_r = gen.encode_reference(&mut cx, rf).unwrap();
        (g.value(f_s).clone(), g.value(f_r).clone())
    };
    let (s0, r0) = run(&params);
    let (s1, r1) = run(&perturbed);
    assert_eq!(s0, s1);
    assert_ne!(r0, r1);
}

#[test]
fn indivisible_input_is_a_configuration_error() {
    let err = Generator::new(ScsNetConfig {
        input_height: 18,
        input_width: 16,
        ..ScsNetConfig::default()
    })
    .unwrap_err();
    assert!(matches!(err, ScsError::Config(_)));
}

fn tiny_attention_inputs(
    gen: &Generator,
    s_hw: (usize, usize),
    r_hw: (usize, usize),
) -> (Tensor<f32>, Tensor<f32>) {
    let c = gen.config().deep_channels;
    (
        random(&[2, c, s_hw.0, s_hw.1], 10),
        random(&[2, c, r_hw.0, r_hw.1], 11),
    )
}

#[test]
fn vcattn_output_follows_source_shape() {
    let gen = Generator::new(ScsNetConfig::desk()).unwrap();
    let params = gen.init_params::<f32>(0).unwrap();
    let (fs, fr) = tiny_attention_inputs(&gen, (4, 6), (3, 5));
    let mut g = Graph::new();
    let fs = g.constant(fs);
    let fr = g.constant(fr);
    let mut cx = Ctx::new(&mut g, &params, false);
    let t = gen.vcattn(&mut cx, 0, fs, fr).unwrap();
    assert_eq!(g.shape(t.output), g.shape(fs));
    assert_eq!(g.shape(t.cmat), &[2, 24, 15]);

    for row in g.value(t.cmat).data().chunks(15) {
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
    }
    for v in [t.valve_source, t.valve_reference] {
        assert!(g.value(v).data().iter().all(|&x| x > 0.0 && x < 1.0));
    }
}

#[test]
fn vcattn_valve_override_passes_source_through() {
    let gen = Generator::new(ScsNetConfig::desk())
        .unwrap()
        .with_valve_override(true);
    let params = gen.init_params::<f32>(0).unwrap();
    let (fs, fr) = tiny_attention_inputs(&gen, (4, 4), (4, 4));
    let mut g = Graph::new();
    let fs_v = g.constant(fs.clone());
    let fr = g.constant(fr);
    let mut cx = Ctx::new(&mut g, &params, false);
    let t = gen.vcattn(&mut cx, 0, fs_v, fr).unwrap();
    assert_eq!(g.value(t.output), &fs);
}

fn pvcattn_config(levels: usize) -> ScsNetConfig {
    ScsNetConfig {
        pyramid_levels: levels,
        ..ScsNetConfig::desk()
    }
}

#[test]
fn single_level_pyramid_has_no_resampling() {
    let gen = Generator::new(pvcattn_config(1)).unwrap();
    let params = gen.init_params::<f32>(0).unwrap();
    let (fs, fr) = tiny_attention_inputs(&gen, (8, 8), (8, 8));
    let mut g = Graph::new();
    let fs = g.constant(fs);
    let fr = g.constant(fr);
    let mut cx = Ctx::new(&mut g, &params, false);
    gen.pvcattn(&mut cx, fs, fr).unwrap();
    let counts = g.op_counts();
    // two pre-convs, query/key/value, valve, post-conv
    assert_eq!(counts.get("conv2d"), Some(&7));
    assert_eq!(counts.get("softmax"), Some(&1));
    // the only concat is the valve input
    assert_eq!(counts.get("concat"), Some(&1));
    assert_eq!(counts.get("avg_pool2"), None);
    assert_eq!(counts.get("resize_bilinear"), None);
}

#[test]
fn pyramid_output_shape_for_each_depth() {
    for levels in 1..=3 {
        let gen = Generator::new(pvcattn_config(levels)).unwrap();
        let params = gen.init_params::<f32>(levels as u64).unwrap();
        let (fs, fr) = tiny_attention_inputs(&gen, (8, 8), (8, 8));
        let mut g = Graph::new();
        let fs = g.constant(fs);
        let fr = g.constant(fr);
        let mut cx = Ctx::new(&mut g, &params, false);
        let (out, traces) = gen.pvcattn(&mut cx, fs, fr).unwrap();
        assert_eq!(g.shape(out), &[2, 64, 8, 8]);
        assert_eq!(traces.len(), levels);
    }
}

#[test]
fn pyramid_too_deep_for_features_is_rejected() {
    let gen = Generator::new(pvcattn_config(3)).unwrap();
    let params = gen.init_params::<f32>(0).unwrap();
    let (fs, fr) = tiny_attention_inputs(&gen, (2, 2), (2, 2));
    let mut g = Graph::new();
    let fs = g.constant(fs);
    let fr = g.constant(fr);
    let mut cx = Ctx::new(&mut g, &params, false);
    assert!(matches!(
        gen.pvcattn(&mut cx, fs, fr),
        Err(ScsError::Config(_))
    ));
}

#[test]
fn forced_valves_make_pyramid_blind_to_reference() {
    let gen = Generator::new(pvcattn_config(3))
        .unwrap()
        .with_valve_override(true);
    let params = gen.init_params::<f32>(0).unwrap();
    let (fs, fr) = tiny_attention_inputs(&gen, (8, 8), (8, 8));
    let run = |fr: Tensor<f32>| {
        let mut g = Graph::new();
        let fs = g.constant(fs.clone());
        let fr = g.constant(fr);
        let mut cx = Ctx::new(&mut g, &params, false);
        let (out, _) = gen.pvcattn(&mut cx, fs, fr).unwrap();
        g.value(out).clone()
    };
    let a = run(fr.clone());
    let b = run(fr.map(|v| v * -3.0 + 1.0));
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn self_attention_is_identity_at_initialization() {
    let gen = Generator::new(ScsNetConfig::desk()).unwrap();
    let params = gen.init_params::<f32>(0).unwrap();
    let x = random(&[1, 64, 8, 8], 3);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.self_attention(&mut cx, xv).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn decoder_restores_source_resolution() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random(&[1, 256, 4, 4], 3));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.decode_color(&mut cx, x).unwrap();
    assert_eq!(g.shape(y), &[1, 64, 16, 16]);
}

#[test]
fn zero_residual_blocks_reduce_to_global_skip() {
    let gen = full_size(16);
    let mut params = gen.init_params::<f32>(0).unwrap();
    zero_prefix(&mut params, "sr.");
    let x = random(&[1, 64, 16, 16], 7);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.sr_encode(&mut cx, xv).unwrap();
    let expected = x.map(|v| v + v);
    assert_eq!(g.shape(y), &[1, 64, 16, 16]);
    assert_eq!(g.value(y), &expected);
}

#[test]
fn texture_branch_parameter_count() {
    let params = full_size(16).init_params::<f32>(0).unwrap();
    assert_eq!(
        params.param_count_with_prefix("sr."),
        4 * (2 * (64 * 64 * 9 + 64))
    );
    assert_eq!(params.param_count_with_prefix("sr."), 295_424);
}

#[test]
fn fuse_widens_to_deep_channels() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let tex = g.leaf(random(&[1, 64, 16, 16], 1));
    let color = g.leaf(random(&[1, 64, 16, 16], 2));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.fuse(&mut cx, tex, color).unwrap();
    assert_eq!(g.shape(y), &[1, 256, 16, 16]);
    let loss = g.square(y).and_then(|s| g.reduce_mean(s)).unwrap();
    let grads = g.backward(loss).unwrap();
    for v in [tex, color] {
        assert!(grads.get(v).unwrap().data().iter().any(|&x| x != 0.0));
    }
}

#[test]
fn fuse_with_zero_color_depends_on_texture_only() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut only_tex = params.clone();
    // drop the colour half of the fuse kernel
    let w = only_tex.get_mut("fuse.weight").unwrap();
    let per_out = 128 * 9;
    for o in 0..256 {
        w.data_mut()[o * per_out + 64 * 9..(o + 1) * per_out].fill(0.0);
    }
    let run = |p: &ParamSet<f32>, color: Tensor<f32>| {
        let mut g = Graph::new();
        let tex = g.constant(random(&[1, 64, 16, 16], 1));
        let color = g.constant(color);
        let mut cx = Ctx::new(&mut g, p, false);
        let y = gen.fuse(&mut cx, tex, color).unwrap();
        g.value(y).clone()
    };
    let a = run(&params, Tensor::zeros([1, 64, 16, 16]));
    let b = run(&only_tex, random(&[1, 64, 16, 16], 9));
    assert!(a.max_abs_diff(&b).unwrap() < 1e-5);
}

#[test]
fn fuse_rejects_spatial_mismatch() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let tex = g.constant(random(&[1, 64, 16, 16], 1));
    let color = g.constant(random(&[1, 64, 8, 8], 2));
    let mut cx = Ctx::new(&mut g, &params, false);
    assert!(matches!(
        gen.fuse(&mut cx, tex, color),
        Err(ScsError::Tensor(_))
    ));
}

#[test]
fn coordinates_start_at_upper_left_corner() {
    for p in [1.0, 1.5, 2.0, 2.5, 3.7] {
        let z = cpm_coords::<f64>(5, 7, p).unwrap();
        let (ho, wo) = (z.shape()[1], z.shape()[2]);
        assert_eq!(z.data()[0], -1.0);
        assert_eq!(z.data()[ho * wo], -1.0);
    }
}

#[test]
fn integer_scale_anchor_columns_are_minus_one() {
    for p in [2usize, 3, 4] {
        let ws = 5;
        let z = cpm_coords::<f64>(3, ws, p as f64).unwrap();
        let wo = ws * p;
        for row in 0..3 * p {
            for k in 0..ws {
                assert_eq!(z.data()[row * wo + k * p], -1.0);
            }
        }
    }
}

#[test]
fn coordinate_hand_case() {
    // Hs = Ws = 2, p = 2: column 1 sits at x = 1/4, half a source pixel in
    let z = cpm_coords::<f64>(2, 2, 2.0).unwrap();
    assert_eq!(z.shape(), &[2, 4, 4]);
    assert_eq!(z.data()[1], 0.0);
    assert_eq!(&z.data()[0..4], &[-1.0, 0.0, -1.0, 0.0]);
    assert_eq!(z.data()[16 + 4], 0.0);
}

#[test]
fn coordinates_rejected_for_non_positive_scale() {
    assert!(cpm_coords::<f32>(4, 4, 0.0).is_err());
    assert!(cpm_coords::<f32>(4, 4, 0.1).is_err());
}

proptest::proptest! {
    #[test]
    fn coordinates_lie_in_half_open_unit_box(hs in 1usize..12, ws in 1usize..12, p in 1.0f64..4.0) {
        let z = cpm_coords::<f64>(hs, ws, p).unwrap();
        for &v in z.data() {
            proptest::prop_assert!((-1.0..1.0).contains(&v));
        }
    }
}

#[test]
fn cpm_output_size_for_fractional_scale() {
    let gen = full_size(16);
    let params = gen.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let f = g.constant(random(&[2, 256, 16, 16], 1));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.cpm_forward(&mut cx, f, 2.5).unwrap();
    assert_eq!(g.shape(y), &[2, 3, 40, 40]);
}

/// Pointwise MLP written out with plain loops.
fn mlp_reference(params: &ParamSet<f32>, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for l in 0..4 {
        let w = params.get(&format!("cpm.fc{l}.weight")).unwrap();
        let b = params.get(&format!("cpm.fc{l}.bias")).unwrap();
        let (dout, din) = (w.shape()[0], w.shape()[1]);
        let mut y = vec![0.0; dout];
        for o in 0..dout {
            let mut acc = b.data()[o] as f64;
            for i in 0..din {
                acc += w.data()[o * din + i] as f64 * x[i];
            }
            y[o] = if l < 3 && acc < 0.0 { 0.2 * acc } else { acc };
        }
        x = y;
    }
    x
}

#[test]
fn cpm_at_unit_scale_is_pointwise_mlp() {
    let gen = Generator::new(ScsNetConfig::desk()).unwrap();
    let params = gen.init_params::<f32>(5).unwrap();
    let (c, h, w) = (64, 4, 4);
    let f = random(&[1, c, h, w], 6);
    let mut g = Graph::new();
    let fv = g.constant(f.clone());
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = gen.cpm_forward(&mut cx, fv, 1.0).unwrap();
    let out = g.value(y);
    for i in 0..h {
        for j in 0..w {
            let mut v: Vec<f64> = (0..c)
                .map(|ch| f.data()[ch * h * w + i * w + j] as f64)
                .collect();
            v.extend([-1.0, -1.0]);
            let expected = mlp_reference(&params, &v);
            for (ch, e) in expected.iter().enumerate() {
                let got = out.data()[ch * h * w + i * w + j] as f64;
                assert!((got - e).abs() < 1e-4, "({i},{j},{ch}): {got} vs {e}");
            }
        }
    }
}

#[test]
fn cpm_head_parameter_count() {
    let params = full_size(16).init_params::<f32>(0).unwrap();
    // layer by layer: (in + 1) * out for 258 -> 128 -> 128 -> 128 -> 3
    let layers = [(258, 128), (128, 128), (128, 128), (128, 3)];
    let expected: usize = layers.iter().map(|(i, o)| (i + 1) * o).sum();
    assert_eq!(expected, 66_563);
    assert_eq!(params.param_count_with_prefix("cpm."), expected);
}

#[test]
fn auto_mode_output_shape_and_reference_invariance() {
    let gen = Generator::new(ScsNetConfig::desk()).unwrap();
    let params = gen.init_params::<f32>(1).unwrap();
    let src = random(&[1, 1, 16, 12], 2);
    let a = gen.predict(&params, &src, None, Mode::Auto, 1.7).unwrap();
    assert_eq!(a.shape(), &[1, 3, 27, 20]);
    let b = gen
        .predict(
            &params,
            &src,
            Some(&random(&[1, 3, 16, 12], 3)),
            Mode::Auto,
            1.7,
        )
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn reference_mode_uses_reference() {
    let gen = Generator::new(ScsNetConfig::desk()).unwrap();
    let params = gen.init_params::<f32>(1).unwrap();
    let src = random(&[1, 1, 16, 16], 2);
    let a = gen
        .predict(
            &params,
            &src,
            Some(&random(&[1, 3, 16, 16], 3)),
            Mode::Ref,
            2.0,
        )
        .unwrap();
    assert_eq!(a.shape(), &[1, 3, 32, 32]);
    let err = gen
        .predict(&params, &src, None, Mode::Ref, 2.0)
        .unwrap_err();
    assert!(matches!(err, ScsError::Argument(_)));
}

#[test]
fn same_seed_same_output() {
    let gen = Generator::new(ScsNetConfig::desk()).unwrap();
    let src = random(&[1, 1, 16, 16], 2);
    let rf = random(&[1, 3, 16, 16], 3);
    let run = |seed| {
        let params = gen.init_params::<f32>(seed).unwrap();
        gen.predict(&params, &src, Some(&rf), Mode::Ref, 2.3)
            .unwrap()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn every_parameter_is_declared_once() {
    let gen = full_size(16);
    let specs = gen.param_specs();
    let params = gen.init_params::<f32>(0).unwrap();
    assert_eq!(specs.len(), params.len());
    params.matches_specs(&specs).unwrap();
    let total: usize = specs
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum();
    assert_eq!(total, params.param_count());
}

#[test]
fn discriminator_logit_shape() {
    let d = Discriminator::new(32);
    let params = d.init_params::<f32>(0).unwrap();
    for (h, w) in [(16, 16), (24, 40), (33, 17)] {
        let mut g = Graph::new();
        let x = g.constant(random(&[2, 3, h, w], 1));
        let mut cx = Ctx::new(&mut g, &params, false);
        let y = d.forward(&mut cx, x).unwrap();
        assert_eq!(g.shape(y), &[2, 1]);
    }
}

#[test]
fn discriminator_widths_double_per_stage() {
    let specs = Discriminator::new(32).param_specs();
    let widths: Vec<usize> = specs
        .iter()
        .filter(|s| s.name.ends_with("weight") && s.name.contains("conv"))
        .map(|s| s.shape[0])
        .collect();
    assert_eq!(widths, vec![32, 64, 128, 256]);
}

#[test]
fn discriminator_gradient_reaches_image() {
    let d = Discriminator::new(8);
    let params = d.init_params::<f32>(0).unwrap();
    let mut g = Graph::new();
    let x = g.leaf(random(&[1, 3, 16, 16], 1));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = d.forward(&mut cx, x).unwrap();
    let loss = g.sum(y).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(x).unwrap().data().iter().any(|&v| v != 0.0));
}

#[test]
fn zero_discriminator_returns_its_bias() {
    let d = Discriminator::new(8);
    let mut params = d.init_params::<f32>(0).unwrap();
    zero_prefix(&mut params, "disc.");
    params.get_mut("disc.fc.bias").unwrap().data_mut()[0] = 0.75;
    let mut g = Graph::new();
    let x = g.constant(random(&[3, 3, 16, 16], 1));
    let mut cx = Ctx::new(&mut g, &params, false);
    let y = d.forward(&mut cx, x).unwrap();
    assert_eq!(g.value(y).data(), &[0.75, 0.75, 0.75]);
}
