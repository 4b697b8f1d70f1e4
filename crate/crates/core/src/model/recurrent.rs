//! Recurrent cells (Elman RNN, LSTM, GRU) and sequence drivers.
//!
//! Weights are packed per cell as `w_x [F × G·H]`, `w_h [H × G·H]` and
//! `bias [G·H]`, with gate blocks ordered
//!
//! * GRU: reset `r`, update `z`, candidate `n`
//! * LSTM: input `i`, forget `f`, cell `g`, output `o`
//!
//! GRU: `r = σ(W_r x + U_r h + b_r)`, `z = σ(W_z x + U_z h + b_z)`,
//! `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`, `h' = (1 − z) ⊙ n + z ⊙ h`.

use crate::error::{Result, TensorError};
use crate::model::spec::CellKind;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Tape handles for one cell's parameters.
#[derive(Clone, Copy, Debug)]
pub struct CellVars {
    pub kind: CellKind,
    pub inputs: usize,
    pub hidden: usize,
    pub w_x: Var,
    pub w_h: Var,
    pub bias: Var,
}

/// Hidden state, plus the cell state for LSTMs.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
}

/// A cell with its recurrent weights pre-split for stepping.
#[derive(Clone, Debug)]
pub struct PreparedCell {
    kind: CellKind,
    inputs: usize,
    hidden: usize,
    w_x: Var,
    bias: Var,
    /// GRU: `[U_r|U_z, U_n]`; others: `[U]`.
    recurrent: Vec<Var>,
}

impl CellVars {
    pub fn prepare<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<PreparedCell> {
        let g = self.kind.gates();
        let h = self.hidden;
        let expect = |v: Var, shape: &[usize], tape: &Tape<T>| -> Result<()> {
            if tape.value(v).shape() != shape {
                return Err(TensorError::Shape {
                    op: "recurrent cell",
                    lhs: shape.to_vec(),
                    rhs: tape.value(v).shape().to_vec(),
                });
            }
            Ok(())
        };
        expect(self.w_x, &[self.inputs, g * h], tape)?;
        expect(self.w_h, &[h, g * h], tape)?;
        expect(self.bias, &[g * h], tape)?;
        let recurrent = match self.kind {
            CellKind::Gru => vec![tape.narrow(self.w_h, 1, 0, 2 * h)?, tape.narrow(self.w_h, 1, 2 * h, h)?],
            CellKind::Rnn | CellKind::Lstm => vec![self.w_h],
        };
        Ok(PreparedCell {
            kind: self.kind,
            inputs: self.inputs,
            hidden: h,
            w_x: self.w_x,
            bias: self.bias,
            recurrent,
        })
    }
}

impl PreparedCell {
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn zero_state<T: Scalar>(&self, tape: &mut Tape<T>, batch: usize) -> CellState {
        let h = tape.constant(Tensor::zeros([batch, self.hidden]));
        let c = (self.kind == CellKind::Lstm).then(|| tape.constant(Tensor::zeros([batch, self.hidden])));
        CellState { h, c }
    }

    /// Input projection `x · W + b` for `x [N × F]`.
    pub fn project<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.w_x)?;
        tape.add_bias(xw, self.bias)
    }

    /// One step from raw features `x [B × F]`.
    pub fn step<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, state: CellState) -> Result<CellState> {
        let xp = self.project(tape, x)?;
        self.step_projected(tape, xp, state)
    }

    /// One step from an already projected input `[B × G·H]`.
    pub fn step_projected<T: Scalar>(&self, tape: &mut Tape<T>, xp: Var, state: CellState) -> Result<CellState> {
        let h = self.hidden;
        let prev = state.h;
        match self.kind {
            CellKind::Rnn => {
                let hu = tape.matmul(prev, self.recurrent[0])?;
                let pre = tape.add(xp, hu)?;
                Ok(CellState {
                    h: tape.tanh(pre)?,
                    c: None,
                })
            }
            CellKind::Gru => {
                let x_rz = tape.narrow(xp, 1, 0, 2 * h)?;
                let x_n = tape.narrow(xp, 1, 2 * h, h)?;
                let h_rz = tape.matmul(prev, self.recurrent[0])?;
                let pre_rz = tape.add(x_rz, h_rz)?;
                let rz = tape.sigmoid(pre_rz)?;
                let r = tape.narrow(rz, 1, 0, h)?;
                let z = tape.narrow(rz, 1, h, h)?;
                let rh = tape.mul(r, prev)?;
                let h_n = tape.matmul(rh, self.recurrent[1])?;
                let pre_n = tape.add(x_n, h_n)?;
                let n = tape.tanh(pre_n)?;
                // (1 − z)⊙n + z⊙h == n + z⊙(h − n)
                let diff = tape.sub(prev, n)?;
                let gated = tape.mul(z, diff)?;
                Ok(CellState {
                    h: tape.add(n, gated)?,
                    c: None,
                })
            }
            CellKind::Lstm => {
                let c_prev = state
                    .c
                    .ok_or_else(|| TensorError::Contract("LSTM step without cell state".into()))?;
                let hu = tape.matmul(prev, self.recurrent[0])?;
                let pre = tape.add(xp, hu)?;
                let gate = |k: usize, tape: &mut Tape<T>| tape.narrow(pre, 1, k * h, h);
                let (i, f, g, o) = (gate(0, tape)?, gate(1, tape)?, gate(2, tape)?, gate(3, tape)?);
                let i = tape.sigmoid(i)?;
                let f = tape.sigmoid(f)?;
                let g = tape.tanh(g)?;
                let o = tape.sigmoid(o)?;
                let keep = tape.mul(f, c_prev)?;
                let write = tape.mul(i, g)?;
                let c = tape.add(keep, write)?;
                let tc = tape.tanh(c)?;
                Ok(CellState {
                    h: tape.mul(o, tc)?,
                    c: Some(c),
                })
            }
        }
    }
}

/// Result of running one or two directions over a sequence.
#[derive(Clone, Copy, Debug)]
pub struct SequenceOutput {
    /// Per-step hidden states `[B × T × dirs·H]`, when collected.
    pub outputs: Option<Var>,
    /// Final state `[B × dirs·H]`: `h(T)` forward, `h(1)` backward.
    pub last: Var,
}

fn sequence_dims<T: Scalar>(tape: &Tape<T>, seq: Var) -> Result<(usize, usize, usize)> {
    match *tape.value(seq).shape() {
        [b, t, f] => Ok((b, t, f)),
        ref other => Err(TensorError::Contract(format!(
            "sequence input must be [B × T × F], got {other:?}"
        ))),
    }
}

/// Runs `cell` over `seq [B × T × F]`, from `t = T..1` when `reverse`.
/// Step outputs are placed at their own time index regardless of direction.
pub fn run_sequence<T: Scalar>(
    tape: &mut Tape<T>,
    cell: &PreparedCell,
    seq: Var,
    reverse: bool,
    collect: bool,
) -> Result<SequenceOutput> {
    let (b, t, f) = sequence_dims(tape, seq)?;
    if f != cell.inputs {
        return Err(TensorError::Shape {
            op: "recurrent sequence",
            lhs: vec![b, t, cell.inputs],
            rhs: vec![b, t, f],
        });
    }
    let gh = cell.kind.gates() * cell.hidden;
    let flat = tape.reshape(seq, &[b * t, f])?;
    let proj = cell.project(tape, flat)?;
    let proj = tape.reshape(proj, &[b, t, gh])?;
    let mut state = cell.zero_state(tape, b);
    let mut steps: Vec<Option<Var>> = vec![None; if collect { t } else { 0 }];
    let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..t).rev()) } else { Box::new(0..t) };
    for step in order {
        let xt = tape.narrow(proj, 1, step, 1)?;
        let xt = tape.reshape(xt, &[b, gh])?;
        state = cell.step_projected(tape, xt, state)?;
        if collect {
            steps[step] = Some(tape.reshape(state.h, &[b, 1, cell.hidden])?);
        }
    }
    let outputs = if collect {
        let steps: Vec<Var> = steps.into_iter().map(|s| s.expect("every step visited")).collect();
        Some(tape.concat(&steps, 1)?)
    } else {
        None
    };
    Ok(SequenceOutput {
        outputs,
        last: state.h,
    })
}

/// Forward pass over `t = 1..T` with `fwd`, backward pass over `t = T..1`
/// with `bwd`; per-step outputs are `[h_fwd(t) ; h_bwd(t)]`.
pub fn bidirectional_sequence<T: Scalar>(
    tape: &mut Tape<T>,
    fwd: &PreparedCell,
    bwd: &PreparedCell,
    seq: Var,
) -> Result<SequenceOutput> {
    bidirectional(tape, fwd, bwd, seq, true)
}

pub(crate) fn bidirectional<T: Scalar>(
    tape: &mut Tape<T>,
    fwd: &PreparedCell,
    bwd: &PreparedCell,
    seq: Var,
    collect: bool,
) -> Result<SequenceOutput> {
    let f = run_sequence(tape, fwd, seq, false, collect)?;
    let b = run_sequence(tape, bwd, seq, true, collect)?;
    let outputs = match (f.outputs, b.outputs) {
        (Some(fo), Some(bo)) => Some(tape.concat(&[fo, bo], 2)?),
        _ => None,
    };
    Ok(SequenceOutput {
        outputs,
        last: tape.concat(&[f.last, b.last], 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gru_cell(tape: &mut Tape<f64>, w_n: f64) -> PreparedCell {
        // scalar GRU: F = H = 1, gate order r, z, n
        let w_x = tape.param(Tensor::new([1, 3], vec![0.0, 0.0, w_n]).unwrap());
        let w_h = tape.param(Tensor::zeros([1, 3]));
        let bias = tape.param(Tensor::zeros([3]));
        CellVars {
            kind: CellKind::Gru,
            inputs: 1,
            hidden: 1,
            w_x,
            w_h,
            bias,
        }
        .prepare(tape)
        .unwrap()
    }

    fn scalar(tape: &mut Tape<f64>, v: f64) -> Var {
        tape.constant(Tensor::new([1, 1], vec![v]).unwrap())
    }

    #[test]
    fn zero_gru_keeps_zero_state() {
        let mut tape = Tape::new();
        let cell = gru_cell(&mut tape, 0.0);
        let x = scalar(&mut tape, 3.7);
        let h = scalar(&mut tape, 0.0);
        let out = cell.step(&mut tape, x, CellState { h, c: None }).unwrap();
        assert_eq!(tape.value(out.h).data(), &[0.0]);
    }

    #[test]
    fn zero_gru_halves_state() {
        let mut tape = Tape::new();
        let cell = gru_cell(&mut tape, 0.0);
        let x = scalar(&mut tape, -2.0);
        let h = scalar(&mut tape, 0.8);
        let out = cell.step(&mut tape, x, CellState { h, c: None }).unwrap();
        // z = 0.5, n = 0 → h' = 0.5·0 + 0.5·0.8
        assert!((tape.value(out.h).data()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gru_candidate_path() {
        let mut tape = Tape::new();
        let cell = gru_cell(&mut tape, 1.0);
        let x = scalar(&mut tape, 1.0);
        let h = scalar(&mut tape, 0.0);
        let out = cell.step(&mut tape, x, CellState { h, c: None }).unwrap();
        let expected = 0.5 * 1f64.tanh();
        assert!((tape.value(out.h).data()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.3808).abs() < 1e-4);
    }
}
