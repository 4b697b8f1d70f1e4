use deepself_core::gradcheck::check_gradients;
use deepself_core::model::recurrent::{bidirectional_sequence, run_sequence, CellVars};
use deepself_core::model::{CellKind, Direction, LayerSpec, ModelSpec};
use deepself_core::{Activation, Model, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `Σ out ⊙ R` with a fixed random `R`, so every output element matters.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let r = random(&shape, &mut ChaCha8Rng::seed_from_u64(seed));
    let r = tape.constant(r);
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

fn assert_close(name: &str, err: f64) {
    assert!(err <= TOL, "{name}: max relative error {err:e}");
}

#[test]
fn dense_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for act in Activation::ALL.into_iter().filter(|a| *a != Activation::Relu) {
        let inputs = [random(&[3, 5], &mut rng), random(&[5, 4], &mut rng), random(&[4], &mut rng)];
        let err = check_gradients(&inputs, H, FLOOR, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_bias(y, v[2])?;
            let y = t.activation(y, act)?;
            weighted_sum(t, y, 9)
        })
        .unwrap();
        assert_close(act.name(), err);
    }
}

#[test]
fn relu_away_from_kink() {
    let x = Tensor::new([2, 3], vec![0.5, -0.7, 1.2, -0.3, 0.9, -1.1]).unwrap();
    let err = check_gradients(&[x], H, FLOOR, |t, v| {
        let y = t.relu(v[0])?;
        weighted_sum(t, y, 2)
    })
    .unwrap();
    assert_close("relu", err);
}

fn conv_case(x: &[usize], w: &[usize], stride: &[usize], padding: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = [random(x, &mut rng), random(w, &mut rng), random(&[w[0]], &mut rng)];
    check_gradients(&inputs, H, FLOOR, |t, v| {
        let y = t.conv(v[0], v[1], v[2], stride, padding)?;
        let y = t.tanh(y)?;
        weighted_sum(t, y, seed + 100)
    })
    .unwrap()
}

#[test]
fn conv1d() {
    assert_close("conv1d", conv_case(&[2, 2, 8], &[3, 2, 3], &[2], &[1], 2));
    assert_close("conv1d unpadded", conv_case(&[1, 3, 7], &[2, 3, 4], &[1], &[0], 3));
}

#[test]
fn conv2d() {
    assert_close("conv2d", conv_case(&[2, 2, 6, 5], &[2, 2, 3, 2], &[2, 1], &[1, 0], 4));
}

#[test]
fn conv3d() {
    assert_close("conv3d", conv_case(&[1, 2, 4, 5, 4], &[2, 2, 2, 3, 2], &[1, 2, 1], &[0, 1, 1], 5));
}

fn recurrent_case(kind: CellKind, direction: Direction, seed: u64) -> f64 {
    let (b, steps, f, h) = (2, 4, 3, 3);
    let g = kind.gates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = vec![random(&[b, steps, f], &mut rng)];
    for _ in 0..direction.count() {
        inputs.push(random(&[f, g * h], &mut rng));
        inputs.push(random(&[h, g * h], &mut rng));
        inputs.push(random(&[g * h], &mut rng));
    }
    check_gradients(&inputs, H, FLOOR, |t, v| {
        let cell = |k: usize, t: &mut Tape<f64>| {
            CellVars {
                kind,
                inputs: f,
                hidden: h,
                w_x: v[1 + 3 * k],
                w_h: v[2 + 3 * k],
                bias: v[3 + 3 * k],
            }
            .prepare(t)
        };
        let out = match direction {
            Direction::Uni => {
                let c = cell(0, t)?;
                run_sequence(t, &c, v[0], false, true)?
            }
            Direction::Bi => {
                let fwd = cell(0, t)?;
                let bwd = cell(1, t)?;
                bidirectional_sequence(t, &fwd, &bwd, v[0])?
            }
        };
        let seq = weighted_sum(t, out.outputs.expect("collected"), seed)?;
        let last = weighted_sum(t, out.last, seed + 1)?;
        t.add(seq, last)
    })
    .unwrap()
}

#[test]
fn recurrent_cells() {
    for (i, kind) in CellKind::ALL.into_iter().enumerate() {
        for direction in [Direction::Uni, Direction::Bi] {
            let err = recurrent_case(kind, direction, 10 + i as u64);
            assert_close(&format!("{} {}", kind.name(), direction.name()), err);
        }
    }
}

#[test]
fn softmax_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let logits = random(&[4, 3], &mut rng).map(|v| 3.0 * v);
    let err = check_gradients(&[logits], H, FLOOR, |t, v| Ok(t.softmax_cross_entropy(v[0], &[0, 2, 1, 2])?.0)).unwrap();
    assert_close("softmax-ce", err);
}

#[test]
fn whole_models() {
    let specs = [
        ModelSpec::new(
            vec![2, 8],
            vec![
                LayerSpec::conv(1, 3, 3, 2, 1),
                LayerSpec::recurrent(CellKind::Gru, 3, 2, Direction::Bi),
                LayerSpec::dense(2),
            ],
            2,
        ),
        ModelSpec::new(
            vec![1, 5, 6],
            vec![
                LayerSpec::conv(2, 2, 2, 1, 0),
                LayerSpec::recurrent(CellKind::Lstm, 3, 1, Direction::Uni),
                LayerSpec::dense(3),
            ],
            3,
        ),
        ModelSpec::new(vec![6], vec![LayerSpec::dense(5), LayerSpec::dense(3)], 3),
    ];
    for (i, spec) in specs.into_iter().enumerate() {
        let spec = spec.with_activation(Activation::Tanh).with_seed(i as u64);
        let model = Model::<f64>::init(spec).unwrap();
        let mut batch_shape = vec![2];
        batch_shape.extend_from_slice(model.input_shape());
        let mut inputs = vec![random(&batch_shape, &mut ChaCha8Rng::seed_from_u64(40 + i as u64))];
        inputs.extend(model.params().iter().map(|p| p.value.clone()));
        let err = check_gradients(&inputs, H, FLOOR, |t, v| {
            let logits = model.forward_on_tape(t, &v[1..], v[0])?;
            Ok(t.softmax_cross_entropy(logits, &[1, 0])?.0)
        })
        .unwrap();
        assert_close(&format!("model {i}"), err);
    }
}
