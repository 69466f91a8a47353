use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f32> {
    let n = shape.iter().product();
    let mut r = rng(seed);
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn build(input: Vec<usize>, side: usize, specs: &[LayerSpec], seed: u64) -> Network<f32> {
    let mut net = Network::from_specs(input, side, specs).unwrap();
    net.init_glorot(&mut rng(seed));
    // non-zero biases so bias gradients are exercised away from kinks
    let mut r = rng(seed ^ 0xb1a5);
    for (i, p) in net.params_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            p.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
        }
    }
    net
}

fn half_square(out: &[f64]) -> (f64, Vec<f64>) {
    (0.5 * out.iter().map(|v| v * v).sum::<f64>(), out.to_vec())
}

fn mse_against(target: Vec<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |out| mse_loss(out, &target).unwrap()
}

fn huber_against(target: Vec<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |out| huber_loss(out, &target, 1.0).unwrap()
}

#[test]
fn zero_weights_give_zero_output() {
    let specs = [
        LayerSpec::Dense { inputs: 4, outputs: 3 },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 3, outputs: 2 },
    ];
    let net = Network::<f32>::from_specs(vec![4], 0, &specs).unwrap();
    let out = net.predict(&random_tensor(vec![5, 4], 1), None).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_dense_is_relu() {
    let specs = [LayerSpec::Dense { inputs: 1, outputs: 1 }, LayerSpec::Relu];
    let mut net = Network::<f32>::from_specs(vec![1], 0, &specs).unwrap();
    net.params_mut()[0][0] = 1.0;
    for x in [-2.0f32, -0.5, 0.0, 0.25, 3.0] {
        let out = net.predict(&Tensor::new(vec![1, 1], vec![x]).unwrap(), None).unwrap();
        assert_eq!(out.data()[0], x.max(0.0));
    }
}

#[test]
fn inference_is_deterministic_and_ignores_dropout() {
    let mut r = rng(3);
    let net = q_network([6, 8, 8], 5, &ArchConfig::default(), &mut r).unwrap();
    let x = random_tensor(vec![2, 6, 8, 8], 4);
    let a = net.forward(&x, None, false, 1).unwrap().0;
    let b = net.forward(&x, None, false, 999).unwrap().0;
    assert_eq!(a, b);
    assert_eq!(a, net.predict(&x, None).unwrap());
    let t1 = net.forward(&x, None, true, 7).unwrap().0;
    let t2 = net.forward(&x, None, true, 7).unwrap().0;
    assert_eq!(t1, t2);
}

#[test]
fn shape_and_finiteness_errors() {
    let net = build(vec![3], 0, &[LayerSpec::Dense { inputs: 3, outputs: 2 }], 1);
    let bad = Tensor::new(vec![2, 4], vec![0.0; 8]).unwrap();
    assert!(matches!(net.predict(&bad, None), Err(Error::Shape(_))));
    let nan = Tensor::new(vec![1, 3], vec![0.0, f32::NAN, 1.0]).unwrap();
    assert!(matches!(net.predict(&nan, None), Err(Error::InvalidInput(_))));
    assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
}

#[test]
fn stale_cache_is_rejected() {
    let mut net = build(vec![3], 0, &[LayerSpec::Dense { inputs: 3, outputs: 2 }], 1);
    let x = random_tensor(vec![1, 3], 2);
    let (out, cache) = net.forward(&x, None, false, 0).unwrap();
    net.params_mut()[0][0] += 1.0;
    assert!(matches!(net.backward(&cache, &out), Err(Error::Contract(_))));
    let other = net.clone();
    let (out, cache) = net.forward(&x, None, false, 0).unwrap();
    assert!(other.backward(&cache, &out).is_err());
    assert!(net.backward(&cache, &out).is_ok());
}

#[test]
fn relu_blocks_gradient_for_negative_preactivation() {
    let specs = [LayerSpec::Dense { inputs: 1, outputs: 2 }, LayerSpec::Relu];
    let mut net = Network::<f32>::from_specs(vec![1], 0, &specs).unwrap();
    {
        let mut p = net.params_mut();
        p[0].copy_from_slice(&[1.0, -1.0]);
    }
    let x = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
    let (_, cache) = net.forward(&x, None, false, 0).unwrap();
    let g = net
        .backward(&cache, &Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap())
        .unwrap();
    // unit 1 has pre-activation -2: no gradient reaches its weight or bias
    assert_eq!(g.params[0], vec![2.0, 0.0]);
    assert_eq!(g.params[1], vec![1.0, 0.0]);
}

#[test]
fn dropped_units_get_no_gradient() {
    let specs = [
        LayerSpec::Dense { inputs: 4, outputs: 64 },
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { inputs: 64, outputs: 1 },
    ];
    let net = build(vec![4], 0, &specs, 5);
    let x = random_tensor(vec![1, 4], 6);
    let (_, cache) = net.forward(&x, None, true, 11).unwrap();
    let g = net.backward(&cache, &Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap();
    let dropped: Vec<usize> = (0..64).filter(|&j| g.params[1][j] == 0.0 && g.params[2][j] == 0.0).collect();
    let (_, cache2) = net.forward(&x, None, true, 11).unwrap();
    let _ = cache2;
    assert!(!dropped.is_empty() && dropped.len() < 64);
    for &j in &dropped {
        for i in 0..4 {
            assert_eq!(g.params[0][i * 64 + j], 0.0);
        }
    }
}

#[test]
fn gradient_check_linear_mse() {
    let net = build(vec![5], 0, &[LayerSpec::Dense { inputs: 5, outputs: 3 }], 7);
    let x = random_tensor(vec![4, 5], 8);
    let err = gradient_check(&net, &x, None, None, mse_against(vec![0.3; 12])).unwrap();
    assert!(err <= 1e-4, "{err}");
    let err = gradient_check(&net, &x, None, None, half_square).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn linear_half_square_gradient_is_jacobian_transpose() {
    // out = x W + b, L = |out|^2 / 2  =>  dL/dW = x^T out, dL/db = sum out.
    let net = build(vec![3], 0, &[LayerSpec::Dense { inputs: 3, outputs: 2 }], 9);
    let x = random_tensor(vec![2, 3], 10);
    let (out, cache) = net.forward(&x, None, false, 0).unwrap();
    let g = net.backward(&cache, &out).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let want: f32 = (0..2).map(|b| x.data()[b * 3 + i] * out.data()[b * 2 + j]).sum();
            assert!((g.params[0][i * 2 + j] - want).abs() < 1e-5);
        }
    }
}

#[test]
fn gradient_check_single_channel_conv() {
    let specs = [
        LayerSpec::Conv2d { in_ch: 1, out_ch: 1, in_h: 5, in_w: 5, kernel: 3, layout: InputLayout::Chw },
        LayerSpec::Dense { inputs: 9, outputs: 2 },
    ];
    let net = build(vec![1, 5, 5], 0, &specs, 11);
    let x = random_tensor(vec![2, 1, 5, 5], 12);
    let err = gradient_check(&net, &x, None, None, mse_against(vec![0.1, -0.2, 0.3, 0.0])).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn gradient_check_every_layer_kind() {
    let specs = [
        LayerSpec::Conv2d { in_ch: 2, out_ch: 3, in_h: 6, in_w: 5, kernel: 3, layout: InputLayout::Chw },
        LayerSpec::Relu,
        LayerSpec::Conv2d { in_ch: 3, out_ch: 2, in_h: 4, in_w: 3, kernel: 3, layout: InputLayout::Hwc },
        LayerSpec::Relu,
        LayerSpec::ConcatSide { width: 2 },
        LayerSpec::Dense { inputs: 6, outputs: 7 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.3 },
        LayerSpec::Dense { inputs: 7, outputs: 2 },
        LayerSpec::Sigmoid,
    ];
    let net = build(vec![2, 6, 5], 2, &specs, 13);
    assert!(net.param_count() < 10_000);
    let x = random_tensor(vec![3, 2, 6, 5], 14);
    let side = random_tensor(vec![3, 2], 15);
    let target = vec![0.2, 0.9, 0.4, 0.1, 0.7, 0.5];
    for seed in [None, Some(21)] {
        let err = gradient_check(&net, &x, Some(&side), seed, mse_against(target.clone())).unwrap();
        assert!(err <= 1e-4, "mse dropout={seed:?}: {err}");
        let err = gradient_check(&net, &x, Some(&side), seed, huber_against(vec![3.0; 6])).unwrap();
        assert!(err <= 1e-4, "huber dropout={seed:?}: {err}");
    }
}

#[test]
fn gradient_check_default_trunk_shape() {
    let arch = ArchConfig { conv_channels: vec![2, 3], dense_units: 8, dropout: 0.2 };
    let mut r = rng(16);
    let net = critic_network([6, 7, 7], 3, &arch, &mut r).unwrap();
    let x = random_tensor(vec![2, 6, 7, 7], 17);
    let a = random_tensor(vec![2, 3], 18);
    let err = gradient_check(&net, &x, Some(&a), Some(5), half_square).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn loss_values() {
    let (v, g) = mse_loss(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|&x| x == 0.0));
    let (v, g) = huber_loss(&[1.0f64], &[1.0], 1.0).unwrap();
    assert_eq!((v, g[0]), (0.0, 0.0));
    assert_eq!(huber_loss(&[2.0f64], &[0.0], 1.0).unwrap().0, 1.5);
    assert_eq!(huber_loss(&[0.5f64], &[0.0], 1.0).unwrap().0, 0.125);
    assert_eq!(mse_loss(&[0.5f64], &[0.0]).unwrap().0, 0.25);
    assert!(mse_loss(&[1.0f64], &[1.0, 2.0]).is_err());
    assert!(huber_loss::<f64>(&[], &[], 1.0).is_err());
}

#[test]
fn loss_gradients_match_finite_differences() {
    let pred = vec![0.3, -1.7, 2.4, 0.9, -0.2];
    let target = vec![0.1, 0.5, -0.6, 0.9, 1.5];
    let (_, g) = mse_loss(&pred, &target).unwrap();
    let n = numeric_gradient(&pred, 1e-4, |p| mse_loss(p, &target).unwrap().0);
    for (a, b) in g.iter().zip(&n) {
        assert!((a - b).abs() < 1e-8);
    }
    let (_, g) = huber_loss(&pred, &target, 1.0).unwrap();
    let n = numeric_gradient(&pred, 1e-4, |p| huber_loss(p, &target, 1.0).unwrap().0);
    for (a, b) in g.iter().zip(&n) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn rmsprop_examples() {
    let mut p = vec![0.5f32, -0.25];
    let mut opt = RmsProp::<f32>::new(1e-3);
    opt.apply(&mut [&mut p], &[vec![0.0, 0.0]]).unwrap();
    assert_eq!(p, vec![0.5, -0.25]);

    let mut p = vec![0.0f32, 0.0];
    let mut opt = RmsProp::<f32>::new(1e-3);
    opt.apply(&mut [&mut p], &[vec![1.0, 1.0]]).unwrap();
    // by hand: acc = 0.1, step = -1e-3 / (sqrt(0.1) + 1e-7)
    let want = -1e-3 / (0.1f64.sqrt() + 1e-7);
    assert!((p[0] as f64 - want).abs() < 1e-9, "{} vs {want}", p[0]);
    assert_eq!(p[0], p[1]);

    let mut q = vec![0.0f32; 3];
    assert!(opt.apply(&mut [&mut q], &[vec![1.0; 2]]).is_err());
}

#[test]
fn weight_file_round_trip_is_bit_exact() {
    let mut r = rng(19);
    let net = critic_network([6, 9, 9], 3, &ArchConfig::default(), &mut r).unwrap();
    let mut bytes = Vec::new();
    net.save(&mut bytes).unwrap();
    assert_eq!(&bytes[..8], WEIGHT_FILE_MAGIC);
    let back = Network::load(bytes.as_slice()).unwrap();
    assert_eq!(back, net);
    let mut again = Vec::new();
    back.save(&mut again).unwrap();
    assert_eq!(again, bytes);

    bytes[0] = b'X';
    assert!(Network::load(bytes.as_slice()).is_err());
    let truncated = &again[..again.len() - 3];
    assert!(Network::load(truncated).is_err());
}

#[test]
fn array_file_round_trip() {
    let arrays = vec![vec![1.0f32, -2.5, f32::MIN_POSITIVE], vec![], vec![3.25]];
    let mut buf = Vec::new();
    write_arrays(&mut buf, &arrays).unwrap();
    assert_eq!(read_arrays(buf.as_slice()).unwrap(), arrays);
}

#[test]
fn side_input_gradient_without_parameters() {
    let arch = ArchConfig { conv_channels: vec![2], dense_units: 4, dropout: 0.0 };
    let net = critic_network([6, 5, 5], 3, &arch, &mut rng(20)).unwrap();
    let x = random_tensor(vec![2, 6, 5, 5], 21);
    let a = random_tensor(vec![2, 3], 22);
    let (_, cache) = net.forward(&x, Some(&a), false, 0).unwrap();
    let ones = vec![1.0f32; 2];
    let full = net
        .backward_flat(&cache, &ones, BackwardOptions { params: true, input: false })
        .unwrap();
    let light = net
        .backward_flat(&cache, &ones, BackwardOptions { params: false, input: false })
        .unwrap();
    assert!(light.params.is_empty());
    assert_eq!(full.side, light.side);
}

proptest! {
    #[test]
    fn rmsprop_commutes_with_permutation(
        grads in proptest::collection::vec(-5.0f32..5.0, 2..12),
        seed in any::<u64>(),
    ) {
        let n = grads.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = rng(seed);
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let start: Vec<f32> = (0..n).map(|i| i as f32 * 0.1).collect();
        let mut a = start.clone();
        let mut b: Vec<f32> = perm.iter().map(|&i| start[i]).collect();
        let gb: Vec<f32> = perm.iter().map(|&i| grads[i]).collect();
        let mut oa = RmsProp::<f32>::new(1e-3);
        let mut ob = RmsProp::<f32>::new(1e-3);
        for _ in 0..3 {
            oa.apply(&mut [&mut a], &[grads.clone()]).unwrap();
            ob.apply(&mut [&mut b], &[gb.clone()]).unwrap();
        }
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(b[k], a[i]);
        }
    }

    #[test]
    fn weight_round_trip_any_seed(seed in any::<u64>()) {
        let specs = [
            LayerSpec::Dense { inputs: 3, outputs: 4 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 4, outputs: 2 },
        ];
        let net = build(vec![3], 0, &specs, seed);
        let mut bytes = Vec::new();
        net.save(&mut bytes).unwrap();
        let back = Network::load(bytes.as_slice()).unwrap();
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }
}
