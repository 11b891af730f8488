//! Dense and LSTM building blocks over the tape.

use rand::Rng;

use crate::params::{ParamId, ParameterSet};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer: activation(W x + b).
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    /// Uniform fan-in initialization, zero bias.
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = ps.add_with(&format!("{name}.w"), out_dim, in_dim, |_, _| {
            rng.gen_range(-bound..bound)
        });
        let b = ps.add_zeros(&format!("{name}.b"), out_dim, 1);
        Dense {
            w,
            b,
            activation,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, ps: &ParameterSet, tape: &mut Tape, x: Var) -> Var {
        assert_eq!(tape.value(x).len(), self.in_dim, "dense input dim mismatch");
        let z = tape.matvec(ps, self.w, x);
        let z = tape.add_bias(ps, self.b, z);
        match self.activation {
            Activation::Relu => tape.relu(z),
            Activation::Identity => z,
        }
    }
}

/// One LSTM cell with fused gate matrices, gate order [input, forget,
/// candidate, output]. Small-uniform init, forget-gate bias +1.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 0.08;
        let wx = ps.add_with(&format!("{name}.wx"), 4 * hidden, in_dim, |_, _| {
            rng.gen_range(-bound..bound)
        });
        let wh = ps.add_with(&format!("{name}.wh"), 4 * hidden, hidden, |_, _| {
            rng.gen_range(-bound..bound)
        });
        let b = ps.add_with(&format!("{name}.b"), 4 * hidden, 1, |r, _| {
            if r >= hidden && r < 2 * hidden {
                1.0
            } else {
                0.0
            }
        });
        LstmCell {
            wx,
            wh,
            b,
            in_dim,
            hidden,
        }
    }

    /// Standard recurrence:
    ///   i,f = sigmoid, g = tanh, o = sigmoid over the fused preactivation,
    ///   c' = f*c + i*g, h' = o * tanh(c').
    pub fn step(&self, ps: &ParameterSet, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        assert_eq!(tape.value(x).len(), self.in_dim, "lstm input dim mismatch");
        assert_eq!(tape.value(h).len(), self.hidden, "lstm hidden dim mismatch");
        assert_eq!(tape.value(c).len(), self.hidden, "lstm cell dim mismatch");
        let zx = tape.matvec(ps, self.wx, x);
        let zh = tape.matvec(ps, self.wh, h);
        let z = tape.add(zx, zh);
        let z = tape.add_bias(ps, self.b, z);
        let hsz = self.hidden;
        let i_raw = tape.slice(z, 0, hsz);
        let f_raw = tape.slice(z, hsz, hsz);
        let g_raw = tape.slice(z, 2 * hsz, hsz);
        let o_raw = tape.slice(z, 3 * hsz, hsz);
        let i = tape.sigmoid(i_raw);
        let f = tape.sigmoid(f_raw);
        let g = tape.tanh(g_raw);
        let o = tape.sigmoid(o_raw);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let c_tanh = tape.tanh(c_next);
        let h_next = tape.mul(o, c_tanh);
        (h_next, c_next)
    }
}
