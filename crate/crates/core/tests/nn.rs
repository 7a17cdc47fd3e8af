use carp_core::geometry::{GridSpec, RigidTransform, VoxelGrid};
use carp_core::nn::{
    bce_loss, default_architecture, evaluate, read_model, train, write_model, LayerSpec, Model,
    ModelKind, Tensor, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_net() -> Model {
    let layers = vec![
        LayerSpec::Conv3d { in_ch: 2, out_ch: 3, kernel: 3, stride: 2 },
        LayerSpec::Relu,
        LayerSpec::Conv3d { in_ch: 3, out_ch: 2, kernel: 2, stride: 1 },
        LayerSpec::Sigmoid,
        LayerSpec::Flatten,
        LayerSpec::Dense { inputs: 16, outputs: 5 },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 5, outputs: 1 },
        LayerSpec::Sigmoid,
    ];
    Model::new(ModelKind::Carp, [2, 7, 7, 7], layers, 3).unwrap()
}

fn random_input(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn loss(m: &Model, x: &Tensor, y: f64) -> f64 {
    bce_loss(m.forward(x).unwrap(), y)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut m = small_net();
    // Give biases non-zero values so every path is exercised.
    for t in m.params_mut() {
        for v in &mut t.data {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let xs: Vec<Tensor> = (0..3).map(|_| random_input(&mut rng, [2, 7, 7, 7])).collect();
    let ys = [1.0, 0.0, 1.0];
    let ex: Vec<(&Tensor, f64)> = xs.iter().zip(ys).collect();
    let (g, _) = m.gradient_sum(&ex).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for pi in 0..m.params().len() {
        let n = m.params()[pi].len();
        for k in (0..n).step_by(n.div_ceil(25)) {
            let orig = m.params()[pi].data[k];
            m.params_mut()[pi].data[k] = orig + h;
            let up: f64 = ex.iter().map(|(x, y)| loss(&m, x, *y)).sum();
            m.params_mut()[pi].data[k] = orig - h;
            let dn: f64 = ex.iter().map(|(x, y)| loss(&m, x, *y)).sum();
            m.params_mut()[pi].data[k] = orig;
            let fd = (up - dn) / (2.0 * h);
            let an = g.0[pi][k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "worst relative gradient error {worst}");
}

#[test]
fn duplicated_example_doubles_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = small_net();
    let x = random_input(&mut rng, [2, 7, 7, 7]);
    let (g1, l1) = m.gradient_sum(&[(&x, 1.0)]).unwrap();
    let (g2, l2) = m.gradient_sum(&[(&x, 1.0), (&x, 1.0)]).unwrap();
    assert_eq!(l2, 2.0 * l1);
    for (a, b) in g1.0.iter().zip(&g2.0) {
        for (u, v) in a.iter().zip(b) {
            assert_eq!(*v, 2.0 * u);
        }
    }
}

#[test]
fn identity_pointwise_conv() {
    let layers = vec![
        LayerSpec::Conv3d { in_ch: 3, out_ch: 3, kernel: 1, stride: 1 },
        LayerSpec::Flatten,
        LayerSpec::Dense { inputs: 3 * 8, outputs: 1 },
        LayerSpec::Sigmoid,
    ];
    let mut m = Model::new(ModelKind::Carp, [3, 2, 2, 2], layers, 0).unwrap();
    let w = &mut m.params_mut()[0].data;
    w.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..3 {
        w[c * 3 + c] = 1.0;
    }
    // With the conv as identity the net equals a bare dense layer over the
    // channels-last input.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_input(&mut rng, [3, 2, 2, 2]);
    let dense = m.params()[2].data.clone();
    let mut z = 0.0;
    for c in 0..3 {
        for i in 0..8 {
            z += x.data[c * 8 + i] * dense[i * 3 + c];
        }
    }
    let p = m.forward(&x).unwrap();
    assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
}

#[test]
fn weights_round_trip() {
    let m = small_net();
    let bytes = write_model(&m);
    let back = read_model(&bytes).unwrap();
    assert_eq!(back, m);
    assert!(read_model(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_model(&bad).is_err());
}

#[test]
fn input_shape_is_checked() {
    let m = small_net();
    assert!(m.forward(&Tensor::zeros(vec![1, 7, 7, 7])).is_err());
}

fn toy_grid(label: u8, rng: &mut ChaCha8Rng) -> VoxelGrid {
    let mut g = VoxelGrid::empty(GridSpec::new([12, 12, 12], 0.01), RigidTransform::identity());
    let (lo, hi) = if label == 1 { (0, 6) } else { (6, 12) };
    for _ in 0..20 {
        g.set(rng.random_range(lo..hi), rng.random_range(0..12), rng.random_range(0..12));
    }
    g
}

#[test]
fn learns_a_separable_toy_problem_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grids: Vec<(VoxelGrid, u8)> = (0..120)
        .map(|i| {
            let y = (i % 2) as u8;
            (toy_grid(y, &mut rng), y)
        })
        .collect();
    let data: Vec<(&VoxelGrid, u8)> = grids.iter().map(|(g, y)| (g, *y)).collect();
    let cfg = TrainConfig { epochs: 15, batch_size: 8, learning_rate: 0.01, ..Default::default() };
    let arch = default_architecture([12, 12, 12]);
    let mut a = Model::new(ModelKind::Gsp, [1, 12, 12, 12], arch.clone(), 1).unwrap();
    let hist = train(&mut a, &data, &cfg, 4).unwrap();
    assert_eq!(hist.len(), 15);
    assert!(hist.last().unwrap().train_loss < hist[0].train_loss);
    assert!(evaluate(&a, &data).unwrap().accuracy > 0.95);
    let mut b = Model::new(ModelKind::Gsp, [1, 12, 12, 12], arch, 1).unwrap();
    train(&mut b, &data, &cfg, 4).unwrap();
    assert_eq!(write_model(&a), write_model(&b));
}

#[test]
fn single_class_data_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grids: Vec<VoxelGrid> = (0..10).map(|_| toy_grid(1, &mut rng)).collect();
    let data: Vec<(&VoxelGrid, u8)> = grids.iter().map(|g| (g, 1)).collect();
    let mut m = Model::new(ModelKind::Gsp, [1, 12, 12, 12], default_architecture([12, 12, 12]), 1).unwrap();
    assert!(train(&mut m, &data, &TrainConfig::default(), 0).is_err());
}

fn three_layer() -> Model {
    let layers = vec![
        LayerSpec::Conv3d { in_ch: 1, out_ch: 2, kernel: 3, stride: 1 },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { inputs: 2 * 27, outputs: 4 },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 4, outputs: 1 },
        LayerSpec::Sigmoid,
    ];
    Model::new(ModelKind::Gsp, [1, 5, 5, 5], layers, 8).unwrap()
}

#[test]
fn every_gradient_entry_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut m = three_layer();
    for t in m.params_mut() {
        for v in &mut t.data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let x = random_input(&mut rng, [1, 5, 5, 5]);
    for y in [0.0, 1.0] {
        let (g, _) = m.gradient_sum(&[(&x, y)]).unwrap();
        let h = 1e-4;
        for pi in 0..m.params().len() {
            for k in 0..m.params()[pi].len() {
                let orig = m.params()[pi].data[k];
                m.params_mut()[pi].data[k] = orig + h;
                let up = loss(&m, &x, y);
                m.params_mut()[pi].data[k] = orig - h;
                let dn = loss(&m, &x, y);
                m.params_mut()[pi].data[k] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = g.0[pi][k];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {pi}[{k}]: fd {fd} analytic {an}");
            }
        }
    }
}

#[test]
fn bce_reference_values() {
    assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(bce_loss(0.5, 0.0), bce_loss(0.5, 1.0));
    assert!((bce_loss(1.0 - 1e-7, 1.0) - 1e-7).abs() < 1e-9);
    assert!(bce_loss(0.0, 1.0).is_finite());
}

#[test]
fn saturated_correct_predictions_have_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = small_net();
    let x = random_input(&mut rng, [2, 7, 7, 7]);
    let last = m.params().len() - 1;
    for (bias, y) in [(25.0, 1.0), (-25.0, 0.0)] {
        m.params_mut()[last].data[0] = bias;
        let p = m.forward(&x).unwrap();
        assert_eq!(p.round(), y);
        let (g, _) = m.gradient_sum(&[(&x, y)]).unwrap();
        assert!(g.norm() < 1e-5, "norm {}", g.norm());
    }
}

#[test]
fn gradient_sum_ignores_example_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = small_net();
    let xs: Vec<Tensor> = (0..6).map(|_| random_input(&mut rng, [2, 7, 7, 7])).collect();
    let ex: Vec<(&Tensor, f64)> = xs.iter().enumerate().map(|(i, x)| (x, (i % 2) as f64)).collect();
    let mut shuffled = ex.clone();
    shuffled.reverse();
    shuffled.swap(0, 3);
    let (a, la) = m.gradient_sum(&ex).unwrap();
    let (b, lb) = m.gradient_sum(&shuffled).unwrap();
    assert!((la - lb).abs() < 1e-9);
    for (u, v) in a.0.iter().zip(&b.0) {
        for (p, q) in u.iter().zip(v) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

#[test]
fn zeroed_output_layer_gives_sigmoid_of_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut m = small_net();
    let n = m.params().len();
    m.params_mut()[n - 2].data.iter_mut().for_each(|w| *w = 0.0);
    let x = random_input(&mut rng, [2, 7, 7, 7]);
    assert_eq!(m.forward(&x).unwrap(), 0.5);
    m.params_mut()[n - 1].data[0] = 0.3;
    assert!((m.forward(&x).unwrap() - 1.0 / (1.0 + (-0.3f64).exp())).abs() < 1e-15);

    let fresh = Model::new(ModelKind::Carp, [1, 40, 40, 40], default_architecture([40, 40, 40]), 5).unwrap();
    assert_eq!(fresh.forward(&Tensor::zeros(vec![1, 40, 40, 40])).unwrap(), 0.5);
    assert_eq!(fresh.forward(&Tensor::zeros(vec![1, 40, 40, 40])).unwrap(), 0.5);
}

#[test]
fn outputs_stay_strictly_inside_the_unit_interval() {
    let m = three_layer();
    for scale in [1e3, -1e3, 1e8, -1e8] {
        let x = Tensor::new(vec![1, 5, 5, 5], vec![scale; 125]).unwrap();
        let p = m.forward(&x).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
}

#[test]
fn round_trip_preserves_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = three_layer();
    let back = read_model(&write_model(&m)).unwrap();
    for _ in 0..5 {
        let x = random_input(&mut rng, [1, 5, 5, 5]);
        assert_eq!(m.forward(&x).unwrap().to_bits(), back.forward(&x).unwrap().to_bits());
    }
}

#[test]
fn constant_half_predictor_scores_the_negative_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut m = Model::new(ModelKind::Gsp, [1, 12, 12, 12], default_architecture([12, 12, 12]), 2).unwrap();
    let n = m.params().len();
    m.params_mut()[n - 2].data.iter_mut().for_each(|w| *w = 0.0);
    let grids: Vec<(VoxelGrid, u8)> = (0..40).map(|i| {
        let y = u8::from(i % 5 == 0);
        (toy_grid(y, &mut rng), y)
    }).collect();
    let data: Vec<(&VoxelGrid, u8)> = grids.iter().map(|(g, y)| (g, *y)).collect();
    let metrics = evaluate(&m, &data).unwrap();
    assert_eq!(metrics.accuracy, 32.0 / 40.0);
    assert_eq!((metrics.true_pos, metrics.false_pos), (0, 0));

    // Perfect self-consistency: a predictor that matches the labels scores 1.
    let relabeled: Vec<(&VoxelGrid, u8)> = grids.iter().map(|(g, _)| (g, 0)).collect();
    assert_eq!(evaluate(&m, &relabeled).unwrap().accuracy, 1.0);
}

/// Sparse noise grids labeled by whether one fixed voxel is occupied.
fn diagnostic_dataset(n: usize, seed: u64) -> Vec<(VoxelGrid, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let y = (i % 2) as u8;
            let mut g = VoxelGrid::empty(GridSpec::new([12, 12, 12], 0.01), RigidTransform::identity());
            for _ in 0..8 {
                let v = [rng.random_range(0..12), rng.random_range(0..12), rng.random_range(0..12)];
                if v != [6, 6, 6] {
                    g.set(v[0], v[1], v[2]);
                }
            }
            if y == 1 {
                g.set(6, 6, 6);
            }
            (g, y)
        })
        .collect()
}

#[test]
fn single_voxel_rule_is_learned_within_twenty_epochs() {
    let grids = diagnostic_dataset(400, 31);
    let data: Vec<(&VoxelGrid, u8)> = grids.iter().map(|(g, y)| (g, *y)).collect();
    let cfg = TrainConfig { epochs: 20, batch_size: 16, learning_rate: 0.01, ..Default::default() };
    let mut m = Model::new(ModelKind::Carp, [1, 12, 12, 12], default_architecture([12, 12, 12]), 3).unwrap();
    let hist = train(&mut m, &data, &cfg, 1).unwrap();
    assert!((hist[0].train_loss - std::f64::consts::LN_2).abs() < 0.1, "first epoch loss {}", hist[0].train_loss);
    assert!(hist.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
    let best = hist.iter().map(|h| h.val_accuracy).fold(0.0, f64::max);
    assert_eq!(best, 1.0, "{hist:?}");
}
