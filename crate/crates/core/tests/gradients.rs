//! Every graph op against central finite differences on random tensors up
//! to 8×8.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specqa::numerics::{grad_check, Graph, ParamId, ParamStore, Tensor2D, Var};

const SEEDS: u64 = 100;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2D {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor2D::from_vec(rows, cols, data).unwrap()
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=8)
}

/// Loss `sum(op(params) ⊙ W)` with a fixed random `W`, so every output entry
/// carries a distinct weight.
fn weighted_loss<'a, F>(store: &'a ParamStore, ids: &[ParamId], seed: u64, op: &F) -> (Graph<'a>, Var)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let mut g = Graph::new(store);
    let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
    let out = op(&mut g, &vars);
    let (r, c) = g.value(out).shape();
    let w = random(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), r, c);
    let w = g.constant(w);
    let prod = g.hadamard(out, w).unwrap();
    let loss = g.sum_all(prod);
    (g, loss)
}

fn op_error<F>(seed: u64, inputs: Vec<Tensor2D>, op: F) -> f64
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.insert(format!("x{i}"), t).unwrap())
        .collect();
    let grads = {
        let (g, loss) = weighted_loss(&store, &ids, seed, &op);
        g.backward(loss).unwrap()
    };
    store.accumulate(&grads).unwrap();
    grad_check(&mut store, 1e-5, |s| {
        let (g, loss) = weighted_loss(s, &ids, seed, &op);
        g.value(loss).item()
    })
    .unwrap()
}

fn across_seeds(name: &str, case: impl Fn(u64, &mut ChaCha8Rng) -> f64) {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = case(seed, &mut rng);
        assert!(e < TOL, "{name} seed {seed}: relative error {e:.3e}");
        worst = worst.max(e);
    }
    eprintln!("{name}: worst {worst:.2e}");
}

#[test]
fn matmul() {
    across_seeds("matmul", |seed, rng| {
        let (m, k, n) = (dim(rng), dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, k), random(rng, k, n)], |g, v| g.matmul(v[0], v[1]).unwrap())
    });
}

#[test]
fn add() {
    across_seeds("add", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n), random(rng, m, n)], |g, v| g.add(v[0], v[1]).unwrap())
    });
}

#[test]
fn hadamard() {
    across_seeds("hadamard", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n), random(rng, m, n)], |g, v| g.hadamard(v[0], v[1]).unwrap())
    });
}

#[test]
fn sigmoid() {
    across_seeds("sigmoid", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n)], |g, v| g.sigmoid(v[0]))
    });
}

#[test]
fn tanh() {
    across_seeds("tanh", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n)], |g, v| g.tanh(v[0]))
    });
}

#[test]
fn concat_cols() {
    across_seeds("concat_cols", |seed, rng| {
        let (m, a, b) = (dim(rng), dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, a), random(rng, m, b)], |g, v| g.concat_cols(v[0], v[1]).unwrap())
    });
}

#[test]
fn stack_rows() {
    across_seeds("stack_rows", |seed, rng| {
        let n = dim(rng);
        let parts = rng.random_range(1..=4);
        let inputs = (0..parts).map(|_| random(rng, 1, n)).collect();
        op_error(seed, inputs, |g, v| g.stack_rows(v).unwrap())
    });
}

#[test]
fn transpose() {
    across_seeds("transpose", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n)], |g, v| g.transpose(v[0]))
    });
}

#[test]
fn select_row() {
    across_seeds("select_row", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        let r = rng.random_range(0..m);
        op_error(seed, vec![random(rng, m, n)], move |g, v| g.select_row(v[0], r).unwrap())
    });
}

#[test]
fn max_over_rows() {
    across_seeds("max_over_rows", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n)], |g, v| g.max_over_rows(v[0]).unwrap())
    });
}

#[test]
fn gather_rows() {
    across_seeds("gather_rows", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        // Repeated indices accumulate into the same table row.
        let idx: Vec<usize> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(0..m)).collect();
        op_error(seed, vec![random(rng, m, n)], move |g, v| g.gather_rows(v[0], &idx).unwrap())
    });
}

#[test]
fn sum_all() {
    across_seeds("sum_all", |seed, rng| {
        let (m, n) = (dim(rng), dim(rng));
        op_error(seed, vec![random(rng, m, n)], |g, v| g.sum_all(v[0]))
    });
}

#[test]
fn bce_with_logits() {
    across_seeds("bce_with_logits", |seed, rng| {
        let n = dim(rng);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        let inputs = (0..n).map(|_| random(rng, 1, 1)).collect();
        op_error(seed, inputs, move |g, v| g.bce_with_logits(v, &labels).unwrap())
    });
}

#[test]
fn composite_cell_like_expression() {
    across_seeds("composite", |seed, rng| {
        let (d, h) = (dim(rng), dim(rng));
        let inputs = vec![random(rng, d, h), random(rng, 1, d), random(rng, 1, h)];
        op_error(seed, inputs, |g, v| {
            let xw = g.matmul(v[1], v[0]).unwrap();
            let pre = g.add(xw, v[2]).unwrap();
            let s = g.sigmoid(pre);
            let t = g.tanh(pre);
            g.hadamard(s, t).unwrap()
        })
    });
}
