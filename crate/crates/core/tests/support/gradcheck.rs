//! Central-difference gradient checks in f64, shared by the gradient tests
//! and the acceptance suite.

#![allow(dead_code)]

use protolens::autodiff::{Tape, Tensor, Var};
use protolens::corpus::{EncodedExample, Language};
use protolens::model::{ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-6)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Largest relative error over every input element of a scalar-valued graph.
pub fn check_graph(inputs: &[Tensor<f64>], f: &dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars);
    let mut grads = tape.backward(out).expect("scalar output");
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.take_or_zeros(*v, &inputs[i]);
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
    }
    worst
}

/// Weighted sum of every element so that all of them reach the output.
fn reduce(tape: &mut Tape<'_, f64>, v: Var) -> Var {
    let shape = tape.value(v).shape().to_vec();
    let w = tape.leaf(Tensor::from_fn(shape[1], 1, |r, _| 0.3 + 0.17 * r as f64));
    let col = tape.matmul(v, w).unwrap();
    let ones = tape.leaf(Tensor::from_fn(1, shape[0], |_, c| 1.0 - 0.11 * c as f64));
    tape.matmul(ones, col).unwrap()
}

/// Worst relative error for each tape operation on random small shapes.
pub fn op_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = |rng: &mut ChaCha8Rng| rng.random_range(1..5usize);
    let (m, k, n) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
    let mut out = Vec::new();

    let ins = [random_tensor(&mut rng, m, k), random_tensor(&mut rng, k, n)];
    out.push(("matmul", check_graph(&ins, &|t, v| {
        let x = t.matmul(v[0], v[1]).unwrap();
        reduce(t, x)
    })));

    let ins = [random_tensor(&mut rng, m, n), random_tensor(&mut rng, m, n)];
    out.push(("add", check_graph(&ins, &|t, v| {
        let x = t.add(v[0], v[1]).unwrap();
        reduce(t, x)
    })));
    out.push(("sub", check_graph(&ins, &|t, v| {
        let x = t.sub(v[0], v[1]).unwrap();
        reduce(t, x)
    })));
    out.push(("mul", check_graph(&ins, &|t, v| {
        let x = t.mul(v[0], v[1]).unwrap();
        reduce(t, x)
    })));
    out.push(("scale", check_graph(&ins[..1], &|t, v| {
        let x = t.scale(v[0], -2.5);
        reduce(t, x)
    })));
    out.push(("sigmoid", check_graph(&ins[..1], &|t, v| {
        let x = t.sigmoid(v[0]);
        reduce(t, x)
    })));
    out.push(("tanh", check_graph(&ins[..1], &|t, v| {
        let x = t.tanh(v[0]);
        reduce(t, x)
    })));
    out.push(("transpose", check_graph(&ins[..1], &|t, v| {
        let x = t.transpose(v[0]).unwrap();
        let sq = t.mul(x, x).unwrap();
        reduce(t, sq)
    })));

    let ins = [random_tensor(&mut rng, m, n), random_tensor(&mut rng, 1, n)];
    out.push(("add_row", check_graph(&ins, &|t, v| {
        let x = t.add_row(v[0], v[1]).unwrap();
        let y = t.tanh(x);
        reduce(t, y)
    })));

    let ins = [random_tensor(&mut rng, m, k), random_tensor(&mut rng, m, n), random_tensor(&mut rng, 2, k + n)];
    out.push(("concat", check_graph(&ins, &|t, v| {
        let cols = t.concat(&[v[0], v[1]], 1).unwrap();
        let rows = t.concat(&[cols, v[2]], 0).unwrap();
        let sq = t.mul(rows, rows).unwrap();
        reduce(t, sq)
    })));
    out.push(("slice", check_graph(&ins[2..], &|t, v| {
        let r = t.slice(v[0], 0, 1, 1).unwrap();
        let c = t.slice(r, 1, 1, k + n - 1).unwrap();
        let sq = t.mul(c, c).unwrap();
        reduce(t, sq)
    })));

    let ins = [random_tensor(&mut rng, m + 1, n + 1)];
    out.push(("softmax", check_graph(&ins, &|t, v| {
        let a = t.softmax(v[0], 1).unwrap();
        let b = t.softmax(v[0], 0).unwrap();
        let s = t.add(a, b).unwrap();
        reduce(t, s)
    })));

    let ins = [random_tensor(&mut rng, 5, n)];
    let ids: Vec<usize> = (0..m + 2).map(|_| rng.random_range(0..5)).collect();
    out.push(("gather", check_graph(&ins, &|t, v| {
        let g = t.gather(v[0], &ids).unwrap();
        let y = t.tanh(g);
        reduce(t, y)
    })));

    let ins = [random_tensor(&mut rng, m, n + 1)];
    let targets: Vec<usize> = (0..m).map(|_| rng.random_range(0..n + 1)).collect();
    out.push(("cross_entropy", check_graph(&ins, &|t, v| t.cross_entropy(v[0], &targets).unwrap())));

    let ins = [random_tensor(&mut rng, m, n), random_tensor(&mut rng, m, n)];
    out.push(("sum", check_graph(&ins, &|t, v| {
        let s = t.sum(&[v[0], v[1], v[0]]).unwrap();
        reduce(t, s)
    })));
    out
}

pub fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        embed_dim: 3,
        hidden_dim: 4,
        mlp_hidden: 3,
        lang_embed_dim: 2,
        max_decode_len: 5,
        seed,
    }
}

/// A short random input with one decoding step (a single target symbol).
pub fn tiny_example(rng: &mut ChaCha8Rng, vocab: usize) -> EncodedExample {
    let len = rng.random_range(2..5);
    EncodedExample {
        input_ids: (0..len).map(|_| rng.random_range(3..vocab)).collect(),
        input_langs: (0..len)
            .map(|_| Language::from_index(rng.random_range(0..5)).unwrap())
            .collect(),
        target_ids: vec![rng.random_range(2..vocab)],
    }
}

/// Worst relative error between the model's analytic gradients and central
/// differences over every parameter element.
pub fn model_check(params: &ModelParams<f64>, ex: &EncodedExample) -> f64 {
    let (_, analytic) = params.loss_and_grads(ex).unwrap();
    let loss = |p: &ModelParams<f64>| p.loss_and_grads(ex).unwrap().0;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for (i, g) in analytic.iter().enumerate() {
        for j in 0..g.numel() {
            let orig = p.tensors()[i].data()[j];
            p.tensors_mut()[i].data_mut()[j] = orig + STEP;
            let up = loss(&p);
            p.tensors_mut()[i].data_mut()[j] = orig - STEP;
            let down = loss(&p);
            p.tensors_mut()[i].data_mut()[j] = orig;
            worst = worst.max(relative_error(g.data()[j], (up - down) / (2.0 * STEP)));
        }
    }
    worst
}
