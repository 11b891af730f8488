//! Finite-difference verification of every layer type the stack uses.
//!
//! For small random instances (dims <= 8) the analytic gradient from the
//! tape must match a central finite difference (h = 1e-5) with relative
//! error below 1e-4.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use qnet_nn::gradcheck::max_relative_error;
use qnet_nn::{Activation, Dense, LstmCell, ParameterSet, Tape};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

#[test]
fn dense_relu_gradient_matches_finite_difference() {
    let mut rng = Pcg64Mcg::seed_from_u64(11);
    for trial in 0..20 {
        let in_dim = rng.gen_range(1..=8);
        let out_dim = rng.gen_range(1..=8);
        let mut ps = ParameterSet::new();
        let layer = Dense::new(&mut ps, "d", in_dim, out_dim, Activation::Relu, &mut rng);
        let x = rand_vec(&mut rng, in_dim);
        let target = rand_vec(&mut rng, out_dim);

        let loss_fn = |ps: &ParameterSet| {
            let mut t = Tape::new();
            let xi = t.input(&x);
            let y = layer.forward(ps, &mut t, xi);
            let tv = t.input(&target);
            let l = t.squared_error(y, tv);
            t.scalar_value(l)
        };
        let mut t = Tape::new();
        let xi = t.input(&x);
        let y = layer.forward(&ps, &mut t, xi);
        let tv = t.input(&target);
        let l = t.squared_error(y, tv);
        let mut grads = ps.zero_grads();
        t.backward(&ps, l, &mut grads).unwrap();

        let err = max_relative_error(&mut ps, &grads, loss_fn, H);
        assert!(err < TOL, "trial {trial}: relative error {err}");
    }
}

#[test]
fn lstm_gradient_matches_finite_difference() {
    let mut rng = Pcg64Mcg::seed_from_u64(13);
    for trial in 0..20 {
        let in_dim = rng.gen_range(1..=6);
        let hidden = rng.gen_range(1..=6);
        let mut ps = ParameterSet::new();
        let cell = LstmCell::new(&mut ps, "l", in_dim, hidden, &mut rng);
        // Two chained steps so gradients flow through the recurrence.
        let x0 = rand_vec(&mut rng, in_dim);
        let x1 = rand_vec(&mut rng, in_dim);
        let target = rand_vec(&mut rng, hidden);

        let loss_fn = |ps: &ParameterSet| {
            let mut t = Tape::new();
            let h = t.input(&vec![0.0; hidden]);
            let c = t.input(&vec![0.0; hidden]);
            let xa = t.input(&x0);
            let (h, c) = cell.step(ps, &mut t, xa, h, c);
            let xb = t.input(&x1);
            let (h, _c) = cell.step(ps, &mut t, xb, h, c);
            let tv = t.input(&target);
            let l = t.squared_error(h, tv);
            t.scalar_value(l)
        };
        let mut t = Tape::new();
        let h = t.input(&vec![0.0; hidden]);
        let c = t.input(&vec![0.0; hidden]);
        let xa = t.input(&x0);
        let (h2, c2) = cell.step(&ps, &mut t, xa, h, c);
        let xb = t.input(&x1);
        let (h3, _c3) = cell.step(&ps, &mut t, xb, h2, c2);
        let tv = t.input(&target);
        let l = t.squared_error(h3, tv);
        let mut grads = ps.zero_grads();
        t.backward(&ps, l, &mut grads).unwrap();

        let err = max_relative_error(&mut ps, &grads, loss_fn, H);
        assert!(err < TOL, "trial {trial}: relative error {err}");
    }
}

#[test]
fn softmax_stack_gradient_matches_finite_difference() {
    // Softmax + log-softmax composition as used by the actor loss.
    let mut rng = Pcg64Mcg::seed_from_u64(17);
    for trial in 0..20 {
        let dim = rng.gen_range(2..=8);
        let mut ps = ParameterSet::new();
        let layer = Dense::new(&mut ps, "d", dim, 2, Activation::Identity, &mut rng);
        let x = rand_vec(&mut rng, dim);
        let q = rand_vec(&mut rng, 2);
        let alpha = 0.3;

        let loss_fn = |ps: &ParameterSet| {
            let mut t = Tape::new();
            let xi = t.input(&x);
            let z = layer.forward(ps, &mut t, xi);
            let p = t.softmax(z);
            let logp = t.log_softmax(z);
            let scaled = t.scale(logp, alpha);
            let qv = t.input(&q);
            let inner = t.sub(scaled, qv);
            let l = t.dot(p, inner);
            t.scalar_value(l)
        };
        let mut t = Tape::new();
        let xi = t.input(&x);
        let z = layer.forward(&ps, &mut t, xi);
        let p = t.softmax(z);
        let logp = t.log_softmax(z);
        let scaled = t.scale(logp, alpha);
        let qv = t.input(&q);
        let inner = t.sub(scaled, qv);
        let l = t.dot(p, inner);
        let mut grads = ps.zero_grads();
        t.backward(&ps, l, &mut grads).unwrap();

        let err = max_relative_error(&mut ps, &grads, loss_fn, H);
        assert!(err < TOL, "trial {trial}: relative error {err}");
    }
}

#[test]
fn elementwise_ops_gradient_matches_finite_difference() {
    // mul/add/sub/scale/slice/concat/mean composition.
    let mut rng = Pcg64Mcg::seed_from_u64(19);
    for trial in 0..20 {
        let dim = rng.gen_range(2..=8);
        let mut ps = ParameterSet::new();
        let layer = Dense::new(&mut ps, "d", dim, 4, Activation::Identity, &mut rng);
        let x = rand_vec(&mut rng, dim);

        let build = |ps: &ParameterSet, t: &mut Tape| {
            let xi = t.input(&x);
            let y = layer.forward(ps, t, xi);
            let a = t.slice(y, 0, 2);
            let b = t.slice(y, 2, 2);
            let prod = t.mul(a, b);
            let sq = t.mul(prod, prod);
            let joined = t.concat(&[prod, sq]);
            let scaled = t.scale(joined, 0.7);
            let th = t.tanh(scaled);
            t.mean(th)
        };
        let loss_fn = |ps: &ParameterSet| {
            let mut t = Tape::new();
            let l = build(ps, &mut t);
            t.scalar_value(l)
        };
        let mut t = Tape::new();
        let l = build(&ps, &mut t);
        let mut grads = ps.zero_grads();
        t.backward(&ps, l, &mut grads).unwrap();

        let err = max_relative_error(&mut ps, &grads, loss_fn, H);
        assert!(err < TOL, "trial {trial}: relative error {err}");
    }
}
