use inq_core::io::{gen_synthetic, SynthKind};
use inq_core::nn::{evaluate, train, Dataset, LayerSpec, Network, SgdConfig};
use inq_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_model_separates_blobs() {
    let data = gen_synthetic(SynthKind::Blobs, 4, 400, 1).unwrap();
    let mut net = Network::new(
        &[2],
        vec![LayerSpec::Dense {
            inputs: 2,
            outputs: 4,
        }],
        1,
    )
    .unwrap();
    let cfg = SgdConfig {
        learning_rate: 0.01,
        ..SgdConfig::default()
    };
    train(&mut net, &data, &cfg, 10, 1).unwrap();
    let acc = evaluate(&net, &data).unwrap();
    assert!(acc.top1 >= 0.99, "top-1 {}", acc.top1);
    assert!(acc.top5.is_none());
}

#[test]
fn random_labels_score_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 2000;
    let inputs = Tensor::new(
        vec![n, 8],
        (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..10)).collect();
    let data = Dataset::new(inputs, labels, 10).unwrap();
    let net = Network::new(
        &[8],
        vec![
            LayerSpec::Dense {
                inputs: 8,
                outputs: 16,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: 16,
                outputs: 10,
            },
        ],
        5,
    )
    .unwrap();
    let acc = evaluate(&net, &data).unwrap();
    assert!((acc.top1 - 0.1).abs() <= 0.05, "top-1 {}", acc.top1);
    let top5 = acc.top5.unwrap();
    assert!((top5 - 0.5).abs() <= 0.1, "top-5 {top5}");
}

#[test]
fn training_is_deterministic() {
    let data = gen_synthetic(SynthKind::Spirals, 3, 150, 2).unwrap();
    let layers = vec![
        LayerSpec::Dense {
            inputs: 2,
            outputs: 16,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: 16,
            outputs: 3,
        },
    ];
    let run = || {
        let mut net = Network::new(&[2], layers.clone(), 9).unwrap();
        let hist = train(&mut net, &data, &SgdConfig::default(), 3, 4).unwrap();
        (net, hist)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    for (pa, pb) in a.params().iter().zip(b.params()) {
        assert!(pa.weights.bit_eq(&pb.weights));
        assert!(pa.bias.bit_eq(&pb.bias));
    }
}
