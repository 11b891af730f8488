//! Tape-recorded forward passes with reverse-mode gradients.
//!
//! Every operation evaluates eagerly on `f64` vectors and records itself.
//! [`Tape::backward`] walks the record in reverse, accumulating exact
//! vector-Jacobian products into per-node adjoints and, for `matvec`/`bias`
//! ops, into a [`Gradients`] aligned with the owning [`ParameterSet`].
//!
//! Aliased operands are fine: `mul(x, x)` differentiates to `2x` because
//! adjoints accumulate.

use crate::mat::outer_acc;
use crate::params::{Gradients, ParamId, ParameterSet};
use crate::NnError;

/// Handle to a recorded vector value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatVec { w: ParamId, x: usize },
    AddBias { b: ParamId, x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: f64 },
    Relu { x: usize },
    Sigmoid { x: usize },
    Tanh { x: usize },
    Softmax { x: usize },
    LogSoftmax { x: usize },
    Concat { parts: Vec<usize> },
    Slice { x: usize, start: usize },
    Dot { a: usize, b: usize },
    Sum { x: usize },
    Mean { x: usize },
    Pick { x: usize, index: usize },
}

/// Recorded computation graph. Create one per forward pass (or per training
/// window), run ops, then call [`Tape::backward`] on a scalar loss.
#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.values[v.0].len(), 1);
        self.values[v.0][0]
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.ops.push(op);
        self.values.push(value);
        Var(self.values.len() - 1)
    }

    /// Leaf constant. Gradients stop here.
    pub fn input(&mut self, value: &[f64]) -> Var {
        self.push(Op::Input, value.to_vec())
    }

    pub fn scalar(&mut self, c: f64) -> Var {
        self.push(Op::Input, vec![c])
    }

    /// W x
    pub fn matvec(&mut self, ps: &ParameterSet, w: ParamId, x: Var) -> Var {
        let wm = ps.get(w);
        let xv = &self.values[x.0];
        assert_eq!(wm.cols, xv.len(), "matvec shape mismatch");
        let mut y = vec![0.0; wm.rows];
        wm.matvec(xv, &mut y);
        self.push(Op::MatVec { w, x: x.0 }, y)
    }

    /// x + b where b is a parameter vector (rows x 1).
    pub fn add_bias(&mut self, ps: &ParameterSet, b: ParamId, x: Var) -> Var {
        let bm = ps.get(b);
        let xv = &self.values[x.0];
        assert_eq!(bm.len(), xv.len(), "bias shape mismatch");
        let y: Vec<f64> = xv.iter().zip(bm.data.iter()).map(|(x, b)| x + b).collect();
        self.push(Op::AddBias { b, x: x.0 }, y)
    }

    fn zip2(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let av = &self.values[a.0];
        let bv = &self.values[b.0];
        assert_eq!(av.len(), bv.len(), "elementwise shape mismatch");
        av.iter().zip(bv.iter()).map(|(x, y)| f(*x, *y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip2(a, b, |x, y| x + y);
        self.push(Op::Add { a: a.0, b: b.0 }, y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip2(a, b, |x, y| x - y);
        self.push(Op::Sub { a: a.0, b: b.0 }, y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip2(a, b, |x, y| x * y);
        self.push(Op::Mul { a: a.0, b: b.0 }, y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y: Vec<f64> = self.values[x.0].iter().map(|v| v * c).collect();
        self.push(Op::Scale { x: x.0, c }, y)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y: Vec<f64> = self.values[x.0].iter().map(|v| v.max(0.0)).collect();
        self.push(Op::Relu { x: x.0 }, y)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y: Vec<f64> = self.values[x.0]
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(Op::Sigmoid { x: x.0 }, y)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y: Vec<f64> = self.values[x.0].iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh { x: x.0 }, y)
    }

    /// Max-subtracted softmax; a valid PMF for any finite input.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = &self.values[x.0];
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let y: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        self.push(Op::Softmax { x: x.0 }, y)
    }

    /// log softmax(x), computed as x - max - log(sum exp(x - max)).
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xv = &self.values[x.0];
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = xv.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let y: Vec<f64> = xv.iter().map(|v| v - lse).collect();
        self.push(Op::LogSoftmax { x: x.0 }, y)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut y = Vec::new();
        for p in parts {
            y.extend_from_slice(&self.values[p.0]);
        }
        self.push(
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
            },
            y,
        )
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let y = self.values[x.0][start..start + len].to_vec();
        self.push(Op::Slice { x: x.0, start }, y)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip2(a, b, |x, y| x * y).iter().sum();
        self.push(Op::Dot { a: a.0, b: b.0 }, vec![y])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let y: f64 = self.values[x.0].iter().sum();
        self.push(Op::Sum { x: x.0 }, vec![y])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = &self.values[x.0];
        let y = xv.iter().sum::<f64>() / xv.len() as f64;
        self.push(Op::Mean { x: x.0 }, vec![y])
    }

    /// Selects one component as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Var {
        let y = self.values[x.0][index];
        self.push(Op::Pick { x: x.0, index }, vec![y])
    }

    /// ||a - b||^2 as a scalar node chain.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        self.dot(d, d)
    }

    /// Reverse pass from a scalar `loss`, accumulating parameter gradients
    /// into `grads` (which must be aligned with `ps`). Node adjoints are
    /// internal; call once per tape.
    pub fn backward(
        &self,
        ps: &ParameterSet,
        loss: Var,
        grads: &mut Gradients,
    ) -> Result<(), NnError> {
        let lv = &self.values[loss.0];
        assert_eq!(lv.len(), 1, "loss must be scalar");
        if !lv[0].is_finite() {
            return Err(NnError::NonFinite {
                context: "loss value",
            });
        }
        let mut adj: Vec<Vec<f64>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut adj[i]);
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            match &self.ops[i] {
                Op::Input => {}
                Op::MatVec { w, x } => {
                    let wm = ps.get(*w);
                    wm.matvec_transpose_acc(&g, &mut adj[*x]);
                    outer_acc(grads.get_mut(*w), &g, &self.values[*x]);
                }
                Op::AddBias { b, x } => {
                    acc(&mut adj[*x], &g);
                    let bg = grads.get_mut(*b);
                    for (dst, src) in bg.data.iter_mut().zip(g.iter()) {
                        *dst += src;
                    }
                }
                Op::Add { a, b } => {
                    acc(&mut adj[*a], &g);
                    acc(&mut adj[*b], &g);
                }
                Op::Sub { a, b } => {
                    acc(&mut adj[*a], &g);
                    for (dst, src) in adj[*b].iter_mut().zip(g.iter()) {
                        *dst -= src;
                    }
                }
                Op::Mul { a, b } => {
                    if a == b {
                        let av = &self.values[*a];
                        for ((dst, src), x) in adj[*a].iter_mut().zip(g.iter()).zip(av.iter()) {
                            *dst += 2.0 * src * x;
                        }
                    } else {
                        let (av, bv) = (&self.values[*a], &self.values[*b]);
                        for ((dst, src), y) in adj[*a].iter_mut().zip(g.iter()).zip(bv.iter()) {
                            *dst += src * y;
                        }
                        for ((dst, src), x) in adj[*b].iter_mut().zip(g.iter()).zip(av.iter()) {
                            *dst += src * x;
                        }
                    }
                }
                Op::Scale { x, c } => {
                    for (dst, src) in adj[*x].iter_mut().zip(g.iter()) {
                        *dst += c * src;
                    }
                }
                Op::Relu { x } => {
                    let yv = &self.values[i];
                    for ((dst, src), y) in adj[*x].iter_mut().zip(g.iter()).zip(yv.iter()) {
                        if *y > 0.0 {
                            *dst += src;
                        }
                    }
                }
                Op::Sigmoid { x } => {
                    let yv = &self.values[i];
                    for ((dst, src), y) in adj[*x].iter_mut().zip(g.iter()).zip(yv.iter()) {
                        *dst += src * y * (1.0 - y);
                    }
                }
                Op::Tanh { x } => {
                    let yv = &self.values[i];
                    for ((dst, src), y) in adj[*x].iter_mut().zip(g.iter()).zip(yv.iter()) {
                        *dst += src * (1.0 - y * y);
                    }
                }
                Op::Softmax { x } => {
                    let yv = &self.values[i];
                    let gy: f64 = g.iter().zip(yv.iter()).map(|(a, b)| a * b).sum();
                    for ((dst, src), y) in adj[*x].iter_mut().zip(g.iter()).zip(yv.iter()) {
                        *dst += y * (src - gy);
                    }
                }
                Op::LogSoftmax { x } => {
                    let yv = &self.values[i];
                    let gsum: f64 = g.iter().sum();
                    for ((dst, src), y) in adj[*x].iter_mut().zip(g.iter()).zip(yv.iter()) {
                        *dst += src - y.exp() * gsum;
                    }
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.values[*p].len();
                        for (dst, src) in adj[*p].iter_mut().zip(g[off..off + len].iter()) {
                            *dst += src;
                        }
                        off += len;
                    }
                }
                Op::Slice { x, start } => {
                    for (k, src) in g.iter().enumerate() {
                        adj[*x][start + k] += src;
                    }
                }
                Op::Dot { a, b } => {
                    let s = g[0];
                    if a == b {
                        let av = &self.values[*a];
                        for (dst, x) in adj[*a].iter_mut().zip(av.iter()) {
                            *dst += 2.0 * s * x;
                        }
                    } else {
                        let (av, bv) = (&self.values[*a], &self.values[*b]);
                        for (dst, y) in adj[*a].iter_mut().zip(bv.iter()) {
                            *dst += s * y;
                        }
                        for (dst, x) in adj[*b].iter_mut().zip(av.iter()) {
                            *dst += s * x;
                        }
                    }
                }
                Op::Sum { x } => {
                    let s = g[0];
                    for dst in adj[*x].iter_mut() {
                        *dst += s;
                    }
                }
                Op::Mean { x } => {
                    let s = g[0] / self.values[*x].len() as f64;
                    for dst in adj[*x].iter_mut() {
                        *dst += s;
                    }
                }
                Op::Pick { x, index } => {
                    adj[*x][*index] += g[0];
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn acc(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}
