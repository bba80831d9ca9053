use dropcurve_core::dropout::{sample_mask, DropoutMask, RetainGroup, RetainGroupConfig};
use dropcurve_core::nn::{
    adam_step, check_gradients, AdamState, CnnSpec, DropoutPass, LayerSizeMode, LayerSpec, MlpSpec, Network,
    Padding,
};
use dropcurve_core::rng::{stream, Stream};
use dropcurve_core::{Error, Tensor};
use rand::Rng;

fn random_batch(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = stream(seed, Stream::Synthesis);
    let len: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn frozen_masks(net: &mut Network, x: &Tensor, theta: f64, seed: u64) -> Vec<DropoutMask> {
    let mut rng = stream(seed, Stream::Masks);
    net.forward(
        x,
        DropoutPass::Sample {
            thetas: RetainGroupConfig::uniform(theta),
            rng: &mut rng,
        },
    )
    .unwrap();
    net.last_masks()
}

#[test]
fn linear_network_gradients_at_noise_floor() {
    let specs = vec![LayerSpec::affine(3, 4), LayerSpec::softmax_xent()];
    let mut net = Network::new(&[3], specs, LayerSizeMode::N, &mut stream(0, Stream::Init)).unwrap();
    let x = random_batch(&[2, 3], 1);
    let report = check_gradients(&mut net, &x, &[1, 3], &[], 1e-5).unwrap();
    assert_eq!(report.checked, 16);
    assert!(report.max_rel_error < 1e-7, "{report:?}");
}

#[test]
fn step_shrinks_when_a_relu_input_sits_near_zero() {
    let specs = vec![
        LayerSpec::affine(1, 1),
        LayerSpec::relu(),
        LayerSpec::affine(1, 2),
        LayerSpec::softmax_xent(),
    ];
    let mut net = Network::new(&[1], specs, LayerSizeMode::N, &mut stream(0, Stream::Init)).unwrap();
    {
        let mut p = net.params_mut();
        p[0].data_mut()[0] = 1.0;
        // Pre-activation 3e-6: a 1e-5 bias step crosses zero, 1e-6 does not.
        p[1].data_mut()[0] = 3e-6;
        p[2].data_mut().copy_from_slice(&[2.0, -1.0]);
    }
    let x = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
    let report = check_gradients(&mut net, &x, &[1], &[], 1e-5).unwrap();
    assert_eq!(report.kinked, 0);
    assert!(report.shrunk >= 1, "{report:?}");
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn mlp_gradients_with_frozen_masks() {
    let spec = MlpSpec {
        input_shape: vec![1, 4, 4],
        hidden: vec![12, 10],
        classes: 5,
    };
    let mut net = Network::mlp(&spec, LayerSizeMode::N, &RetainGroupConfig::MLP, &mut stream(3, Stream::Init)).unwrap();
    let x = random_batch(&[4, 1, 4, 4], 2);
    let masks = frozen_masks(&mut net, &x, 0.7, 5);
    assert_eq!(masks.len(), 3);
    let report = check_gradients(&mut net, &x, &[0, 4, 2, 2], &masks, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn cnn1_gradients_on_two_samples() {
    let spec = CnnSpec {
        channels: vec![2, 3],
        kernel: 3,
        fc: vec![6],
        ..CnnSpec::cnn1(&[1, 10, 10], 4)
    };
    let mut net = Network::cnn(&spec, LayerSizeMode::N, &RetainGroupConfig::CNN, &mut stream(7, Stream::Init)).unwrap();
    let x = random_batch(&[2, 1, 10, 10], 8);
    let masks = frozen_masks(&mut net, &x, 0.8, 9);
    let report = check_gradients(&mut net, &x, &[1, 3], &masks, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn same_padding_and_odd_pooling_gradients() {
    let specs = vec![
        LayerSpec::conv(2, 3, 3, Padding::Same),
        LayerSpec::relu(),
        LayerSpec::maxpool(),
        LayerSpec::affine(3 * 3 * 3, 3),
        LayerSpec::softmax_xent(),
    ];
    let mut net = Network::new(&[2, 5, 5], specs, LayerSizeMode::N, &mut stream(11, Stream::Init)).unwrap();
    let x = random_batch(&[3, 2, 5, 5], 12);
    let report = check_gradients(&mut net, &x, &[0, 1, 2], &[], 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn single_affine_gradient_is_outer_product() {
    let specs = vec![LayerSpec::affine(3, 2), LayerSpec::softmax_xent()];
    let mut net = Network::new(&[3], specs, LayerSizeMode::N, &mut stream(0, Stream::Init)).unwrap();
    let x = Tensor::from_vec(&[1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    net.forward(&x, DropoutPass::Eval).unwrap();
    let dlogits = Tensor::from_vec(&[1, 2], vec![0.25, -0.75]).unwrap();
    let grads = net.backward(&dlogits).unwrap();
    let expected: Vec<f64> = [0.5, -1.0, 2.0]
        .iter()
        .flat_map(|xi| [xi * 0.25, xi * -0.75])
        .collect();
    assert_eq!(grads[0].data(), &expected[..]);
    assert_eq!(grads[1].data(), &[0.25, -0.75]);
}

#[test]
fn zero_dlogits_give_zero_gradients() {
    let spec = CnnSpec {
        channels: vec![2],
        kernel: 3,
        fc: vec![4],
        ..CnnSpec::cnn1(&[1, 8, 8], 3)
    };
    let mut net = Network::cnn(&spec, LayerSizeMode::N, &RetainGroupConfig::CNN, &mut stream(1, Stream::Init)).unwrap();
    let x = random_batch(&[2, 1, 8, 8], 3);
    net.forward(&x, DropoutPass::Eval).unwrap();
    let grads = net.backward(&Tensor::zeros(&[2, 3])).unwrap();
    assert_eq!(grads.len(), net.params().len());
    for (g, p) in grads.iter().zip(net.params()) {
        assert_eq!(g.shape(), p.shape());
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn backward_without_forward_is_a_state_error() {
    let specs = vec![LayerSpec::affine(2, 2), LayerSpec::softmax_xent()];
    let mut net = Network::new(&[2], specs, LayerSizeMode::N, &mut stream(0, Stream::Init)).unwrap();
    assert!(matches!(net.backward(&Tensor::zeros(&[1, 2])), Err(Error::State(_))));
    let x = Tensor::zeros(&[1, 2]);
    net.forward(&x, DropoutPass::Eval).unwrap();
    net.backward(&Tensor::zeros(&[1, 2])).unwrap();
    // The cache is consumed by the first backward.
    assert!(matches!(net.backward(&Tensor::zeros(&[1, 2])), Err(Error::State(_))));
}

#[test]
fn backward_uses_the_masks_of_its_forward() {
    let spec = MlpSpec {
        input_shape: vec![6],
        hidden: vec![8],
        classes: 3,
    };
    let mut net = Network::mlp(&spec, LayerSizeMode::N, &RetainGroupConfig::MLP, &mut stream(0, Stream::Init)).unwrap();
    let x = random_batch(&[4, 6], 1);
    let mut rng = stream(0, Stream::Masks);
    let thetas = RetainGroupConfig::uniform(0.5);
    let mut seen = Vec::new();
    for _ in 0..3 {
        net.forward(&x, DropoutPass::Sample { thetas, rng: &mut rng }).unwrap();
        let forward_serials: Vec<u64> = net.last_masks().iter().map(|m| m.serial).collect();
        net.backward(&Tensor::zeros(&[4, 3])).unwrap();
        assert_eq!(net.last_backward_serials(), &forward_serials[..]);
        seen.extend(forward_serials);
    }
    let mut unique = seen.clone();
    unique.dedup();
    assert_eq!(unique.len(), seen.len());
}

#[test]
fn frozen_mask_count_must_match() {
    let spec = MlpSpec {
        input_shape: vec![4],
        hidden: vec![5],
        classes: 2,
    };
    let mut net = Network::mlp(&spec, LayerSizeMode::N, &RetainGroupConfig::MLP, &mut stream(0, Stream::Init)).unwrap();
    let x = random_batch(&[2, 4], 0);
    let one = sample_mask(&[2, 4], 0.5, &mut stream(0, Stream::Masks)).unwrap();
    assert!(net.forward(&x, DropoutPass::Frozen(&[one])).is_err());
}

#[test]
fn forward_and_backward_leave_parameters_untouched() {
    let spec = MlpSpec {
        input_shape: vec![5],
        hidden: vec![7, 7],
        classes: 3,
    };
    let mut net = Network::mlp(&spec, LayerSizeMode::N, &RetainGroupConfig::MLP, &mut stream(2, Stream::Init)).unwrap();
    let before: Vec<Tensor> = net.params().into_iter().cloned().collect();
    let x = random_batch(&[3, 5], 4);
    let mut rng = stream(2, Stream::Masks);
    net.loss_and_gradients(
        &x,
        &[0, 1, 2],
        DropoutPass::Sample {
            thetas: RetainGroupConfig::MLP,
            rng: &mut rng,
        },
    )
    .unwrap();
    net.forward_eval(&x).unwrap();
    let after: Vec<Tensor> = net.params().into_iter().cloned().collect();
    assert_eq!(before, after);
}

#[test]
fn n_over_theta_widens_droppable_layers() {
    let spec = MlpSpec {
        input_shape: vec![4],
        hidden: vec![256, 10],
        classes: 3,
    };
    let floors = RetainGroupConfig::new(0.8, 0.75, 0.5, 0.3).unwrap();
    let net = Network::mlp(&spec, LayerSizeMode::NOverTheta, &floors, &mut stream(0, Stream::Init)).unwrap();
    let widths: Vec<usize> = net
        .params()
        .iter()
        .filter(|p| p.ndim() == 2)
        .map(|p| p.shape()[1])
        .collect();
    assert_eq!(widths, vec![854, 34, 3]);
    assert_eq!(
        net.dropout_groups(),
        vec![RetainGroup::Input, RetainGroup::Hidden, RetainGroup::Hidden]
    );
}

fn train_losses(seed: u64, steps: usize) -> (Vec<f64>, Vec<Tensor>) {
    let spec = MlpSpec {
        input_shape: vec![6],
        hidden: vec![16],
        classes: 3,
    };
    let mut net = Network::mlp(&spec, LayerSizeMode::N, &RetainGroupConfig::MLP, &mut stream(seed, Stream::Init)).unwrap();
    let mut state = AdamState::new(net.params());
    let mut masks = stream(seed, Stream::Masks);
    let x = random_batch(&[12, 6], seed);
    let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let mut losses = Vec::new();
    for _ in 0..steps {
        let (loss, _, grads) = net
            .loss_and_gradients(
                &x,
                &labels,
                DropoutPass::Sample {
                    thetas: RetainGroupConfig::MLP,
                    rng: &mut masks,
                },
            )
            .unwrap();
        adam_step(&mut net.params_mut(), &grads, &mut state, 1e-2).unwrap();
        losses.push(loss);
    }
    assert_eq!(state.step_count, steps as u64);
    (losses, net.params().into_iter().cloned().collect())
}

#[test]
fn training_is_bitwise_deterministic() {
    let (a, pa) = train_losses(21, 40);
    let (b, pb) = train_losses(21, 40);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let (c, _) = train_losses(22, 40);
    assert_ne!(a, c);
    assert!(a.last().unwrap() < &a[0]);
}
