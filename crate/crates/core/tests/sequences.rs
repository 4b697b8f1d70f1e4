use deepself_core::model::recurrent::{bidirectional_sequence, run_sequence, CellVars};
use deepself_core::model::{cnn_to_rnn_reshape, CellKind, Direction, LayerSpec, ModelSpec};
use deepself_core::{Model, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn cell(tape: &mut Tape<f64>, rng: &mut ChaCha8Rng, kind: CellKind, f: usize, h: usize) -> CellVars {
    let g = kind.gates();
    CellVars {
        kind,
        inputs: f,
        hidden: h,
        w_x: tape.constant(random(rng, &[f, g * h])),
        w_h: tape.constant(random(rng, &[h, g * h])),
        bias: tape.constant(random(rng, &[g * h])),
    }
}

/// `[B × T × F]` with the time axis reversed.
fn reverse_time(x: &Tensor<f64>) -> Tensor<f64> {
    let [b, t, f] = *x.shape() else { panic!() };
    let mut out = Vec::with_capacity(x.len());
    for i in 0..b {
        for s in (0..t).rev() {
            out.extend_from_slice(&x.data()[(i * t + s) * f..(i * t + s + 1) * f]);
        }
    }
    Tensor::new([b, t, f], out).unwrap()
}

#[test]
fn tied_bidirectional_reversal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in CellKind::ALL {
        let (b, t, f, h) = (2, 6, 3, 4);
        let x = random(&mut rng, &[b, t, f]);
        let mut tape = Tape::new();
        let c = cell(&mut tape, &mut rng, kind, f, h).prepare(&mut tape).unwrap();
        let seq = tape.constant(x.clone());
        let rev = tape.constant(reverse_time(&x));
        let original = bidirectional_sequence(&mut tape, &c, &c, seq).unwrap();
        let reversed = bidirectional_sequence(&mut tape, &c, &c, rev).unwrap();
        let orig_out = tape.value(original.outputs.unwrap()).clone();
        let rev_out = tape.value(reversed.outputs.unwrap()).clone();
        assert_eq!(orig_out.shape(), &[b, t, 2 * h]);
        for i in 0..b {
            for s in 0..t {
                let fwd_of_reversed = &rev_out.data()[(i * t + s) * 2 * h..][..h];
                let bwd_of_original = &orig_out.data()[(i * t + (t - 1 - s)) * 2 * h + h..][..h];
                for (a, e) in fwd_of_reversed.iter().zip(bwd_of_original) {
                    assert!((a - e).abs() < 1e-12, "{kind:?}");
                }
            }
        }
    }
}

#[test]
fn single_step_bidirectional() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let fwd = cell(&mut tape, &mut rng, CellKind::Gru, 2, 3).prepare(&mut tape).unwrap();
    let seq = tape.constant(random(&mut rng, &[1, 1, 2]));
    let out = bidirectional_sequence(&mut tape, &fwd, &fwd, seq).unwrap();
    let v = tape.value(out.last).data().to_vec();
    assert_eq!(v.len(), 6);
    assert_eq!(v[..3], v[3..]);
}

#[test]
fn unidirectional_is_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in CellKind::ALL {
        let (t, f, h) = (7, 2, 3);
        let x = random(&mut rng, &[1, t, f]);
        let mut tape = Tape::new();
        let c = cell(&mut tape, &mut rng, kind, f, h).prepare(&mut tape).unwrap();
        let seq = tape.constant(x.clone());
        let base = run_sequence(&mut tape, &c, seq, false, true).unwrap();
        let base = tape.value(base.outputs.unwrap()).clone();
        for step in 0..t {
            let mut data = x.data().to_vec();
            data[step * f] += 0.5;
            let seq = tape.constant(Tensor::new([1, t, f], data).unwrap());
            let out = run_sequence(&mut tape, &c, seq, false, true).unwrap();
            let out = tape.value(out.outputs.unwrap()).clone();
            assert_eq!(out.data()[..step * h], base.data()[..step * h], "{kind:?} step {step}");
            assert_ne!(out.data()[step * h..(step + 1) * h], base.data()[step * h..(step + 1) * h]);
        }
    }
}

#[test]
fn reshape_preserves_value_multiset() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for shape in [vec![2, 8, 4, 10], vec![3, 5, 7], vec![1, 1, 1, 6]] {
        let x = random(&mut rng, &shape);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = cnn_to_rnn_reshape(&mut tape, v).unwrap();
        let y = tape.value(y);
        let t = *shape.last().unwrap();
        assert_eq!(y.shape()[1], t);
        assert_eq!(y.shape()[2], shape[1..shape.len() - 1].iter().product::<usize>());
        let mut a = x.data().to_vec();
        let mut b = y.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }
    // C = F = 1: only the axes are relabelled
    let x = random(&mut rng, &[2, 1, 1, 5]);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let y = cnn_to_rnn_reshape(&mut tape, v).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
}

#[test]
fn forward_is_deterministic() {
    let spec = ModelSpec::new(
        vec![1, 4, 12],
        vec![
            LayerSpec::conv(2, 3, 3, 1, 1),
            LayerSpec::recurrent(CellKind::Lstm, 5, 2, Direction::Bi),
            LayerSpec::dense(3),
        ],
        3,
    );
    let model = Model::<f32>::init(spec).unwrap();
    let x = Tensor::new([7, 1, 4, 12], (0..336).map(|i| (i as f32 * 0.13).cos()).collect()).unwrap();
    let (a, pa) = model.forward(&x).unwrap();
    let (b, _) = model.forward(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), &[7, 3]);
    for row in pa.data().chunks(3) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
