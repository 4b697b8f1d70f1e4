use deepself_core::model::{infer_conv_output_size, plan_shapes, CellKind, Direction, LayerSpec, ModelSpec};
use deepself_core::train::{decode_checkpoint, encode_checkpoint, fine_tune, save_checkpoint, train, Metadata, TrainConfig};
use deepself_core::{Dataset32, Model, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn planned_shapes_match_forward(
        len in 6usize..40,
        channels in 1usize..4,
        kernel in 1usize..5,
        stride in 1usize..3,
        padding in 0usize..2,
        hidden in 1usize..6,
        classes in 2usize..5,
        recurrent in any::<bool>(),
    ) {
        let mut layers = vec![LayerSpec::conv(1, channels, kernel, stride, padding)];
        if recurrent {
            layers.push(LayerSpec::recurrent(CellKind::Gru, hidden, 1, Direction::Bi));
        } else {
            layers.push(LayerSpec::dense(hidden));
        }
        layers.push(LayerSpec::dense(classes));
        let spec = ModelSpec::new(vec![1, len], layers, classes);
        let expected_t = infer_conv_output_size(len, kernel, stride, padding);
        match Model::<f64>::init(spec.clone()) {
            Ok(model) => {
                let plan = plan_shapes(&spec).unwrap();
                prop_assert_eq!(plan.stages[0].output.clone(), vec![channels, expected_t.unwrap()]);
                let (logits, probs) = model.forward(&Tensor::full([3, 1, len], 0.25)).unwrap();
                prop_assert_eq!(logits.shape(), &[3, classes]);
                for row in probs.data().chunks(classes) {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            Err(_) => prop_assert!(expected_t.is_err()),
        }
    }

    #[test]
    fn checkpoint_round_trip_keeps_logits(seed in any::<u64>(), cell in 0usize..3) {
        let spec = ModelSpec::new(
            vec![2, 10],
            vec![
                LayerSpec::conv(1, 3, 3, 1, 1),
                LayerSpec::recurrent(CellKind::ALL[cell], 4, 1, Direction::Uni),
                LayerSpec::dense(2),
            ],
            2,
        )
        .with_seed(seed);
        let model = Model::<f32>::init(spec).unwrap();
        let bytes = encode_checkpoint(&model, &Metadata::new()).unwrap();
        let (back, _) = decode_checkpoint::<f32>(&bytes).unwrap();
        let x = Tensor::new([2, 2, 10], (0..40).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        prop_assert_eq!(model.forward(&x).unwrap().0, back.forward(&x).unwrap().0);
    }
}

fn two_class(n: usize, offset: f32) -> Dataset32 {
    let xs: Vec<Tensor<f32>> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { -1.0 } else { 1.0 };
            Tensor::new([3], vec![s, offset + 0.05 * (i % 7) as f32, -s]).unwrap()
        })
        .collect();
    Dataset32::new(&xs, (0..n).map(|i| i % 2).collect()).unwrap()
}

#[test]
fn fine_tune_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pre.ckpt");
    let spec = ModelSpec::new(vec![3], vec![LayerSpec::dense(6), LayerSpec::dense(2)], 2);
    let config = TrainConfig {
        learning_rate: 0.02,
        batch_size: 4,
        epochs: 5,
        ..TrainConfig::default()
    };
    let pre = train(Model::init(spec).unwrap(), &two_class(20, 0.0), &two_class(10, 0.0), &config).unwrap();
    save_checkpoint(&pre.model, &Metadata::new(), &path).unwrap();

    let tuned = fine_tune(&path, &two_class(20, 0.5), &two_class(10, 0.5), &config, 2, true).unwrap();
    for (i, (a, b)) in pre.model.params().iter().zip(tuned.model.params()).enumerate() {
        if !pre.model.is_head_param(i) {
            assert_eq!(a.value, b.value);
        }
    }

    let bad = Dataset32::new(&[Tensor::zeros([4])], vec![0]).unwrap();
    let err = fine_tune(&path, &bad, &bad, &config, 2, false).unwrap_err();
    assert!(err.to_string().contains("configuration"), "{err}");
}
