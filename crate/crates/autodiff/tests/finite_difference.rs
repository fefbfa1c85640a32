use kpgen_autodiff::gradcheck::{numeric_param_grad, relative_error};
use kpgen_autodiff::nn::GruCell;
use kpgen_autodiff::{clip_global_norm, Graph, ParamId, ParamStore, Result, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
// Below this magnitude the central difference is dominated by rounding.
const FLOOR: f64 = 1e-7;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Reduces any output to a scalar through a fixed random projection so every
/// output element contributes a distinct weight.
fn project(g: &mut Graph<'_>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let w = g.constant(random(&mut rng, &shape, -1.0, 1.0));
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

fn check<F>(params: &mut ParamStore, build: F) -> std::result::Result<(), String>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let grads: Vec<Option<Tensor>> = {
        let mut g = Graph::new(params);
        let loss = build(&mut g).map_err(|e| e.to_string())?;
        let grads = g.backward(loss).map_err(|e| e.to_string())?;
        params.ids().map(|id| grads.param(id).cloned()).collect()
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let numeric = numeric_param_grad(params, id, STEP, |p| {
            let mut g = Graph::new(p);
            let loss = build(&mut g)?;
            Ok(g.value(loss).item())
        })
        .map_err(|e| e.to_string())?;
        let analytic = grads[id.index()].clone().unwrap_or_else(|| Tensor::zeros(params.get(id).shape()));
        for (k, (a, n)) in analytic.data().iter().zip(&numeric).enumerate() {
            let err = relative_error(*a, *n, FLOOR);
            if err > TOL {
                return Err(format!("{}[{k}]: analytic {a} numeric {n} rel {err}", params.name(id)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softmax,
    Recip,
    Transpose,
    MeanRows,
    Sum,
    Mean,
    Scale,
    Clamp,
}

const UNARY: [Unary; 12] = [
    Unary::Sigmoid,
    Unary::Tanh,
    Unary::Exp,
    Unary::Log,
    Unary::Softmax,
    Unary::Recip,
    Unary::Transpose,
    Unary::MeanRows,
    Unary::Sum,
    Unary::Mean,
    Unary::Scale,
    Unary::Clamp,
];

fn apply_unary(g: &mut Graph<'_>, op: Unary, x: Var) -> Result<Var> {
    match op {
        Unary::Sigmoid => g.sigmoid(x),
        Unary::Tanh => g.tanh(x),
        Unary::Exp => g.exp(x),
        Unary::Log => g.log(x),
        Unary::Softmax => g.softmax(x),
        Unary::Recip => g.recip(x),
        Unary::Transpose => g.transpose(x),
        Unary::MeanRows => g.mean_rows(x),
        Unary::Sum => g.sum(x),
        Unary::Mean => g.mean(x),
        Unary::Scale => g.scale(x, -1.7),
        Unary::Clamp => g.clamp(x, 0.0, 10.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unary_ops_match_finite_differences(seed in any::<u64>(), rows in 1usize..=8, cols in 1usize..=8, which in 0usize..12) {
        let op = UNARY[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // log, recip and clamp are checked on inputs away from their kinks
        let value = random(&mut rng, &[rows, cols], 0.2, 2.0);
        let value = match op {
            Unary::Log | Unary::Recip | Unary::Clamp => value,
            _ => random(&mut rng, &[rows, cols], -2.0, 2.0),
        };
        let mut params = ParamStore::new();
        let x = params.insert("x", value).unwrap();
        let res = check(&mut params, |g| {
            let xv = g.param(x);
            let y = apply_unary(g, op, xv)?;
            project(g, y, seed)
        });
        prop_assert!(res.is_ok(), "{:?}: {:?}", op, res);
    }

    #[test]
    fn binary_and_structural_ops_match_finite_differences(seed in any::<u64>(), m in 1usize..=8, k in 1usize..=8, n in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let a = params.insert("a", random(&mut rng, &[m, k], -1.0, 1.0)).unwrap();
        let b = params.insert("b", random(&mut rng, &[k, n], -1.0, 1.0)).unwrap();
        let c = params.insert("c", random(&mut rng, &[m, k], -1.0, 1.0)).unwrap();
        let v = params.insert("v", random(&mut rng, &[k], -1.0, 1.0)).unwrap();
        let u = params.insert("u", random(&mut rng, &[k], -1.0, 1.0)).unwrap();
        let s = params.insert("s", random(&mut rng, &[1], 0.5, 1.5)).unwrap();
        let ids: Vec<usize> = (0..m + 2).map(|_| rng.gen_range(0..m)).collect();
        let scatter: Vec<usize> = (0..k).map(|_| rng.gen_range(0..3)).collect();
        let res = check(&mut params, |g| {
            let (a, b, c, v, u, s) = (g.param(a), g.param(b), g.param(c), g.param(v), g.param(u), g.param(s));
            let mut terms = Vec::new();
            let ab = g.matmul(a, b)?;
            terms.push(project(g, ab, seed)?);
            let av = g.matmul(a, v)?;
            terms.push(project(g, av, seed + 1)?);
            let vb = g.matmul(v, b)?;
            terms.push(project(g, vb, seed + 2)?);
            let sum = g.add(a, c)?;
            let diff = g.sub(sum, c)?;
            let prod = g.mul(diff, c)?;
            terms.push(project(g, prod, seed + 3)?);
            let ar = g.add_row(a, v)?;
            terms.push(project(g, ar, seed + 4)?);
            let ms = g.mul_scalar(v, s)?;
            terms.push(project(g, ms, seed + 5)?);
            let cat = g.concat(&[v, u, v])?;
            terms.push(project(g, cat, seed + 6)?);
            let mcat = g.concat(&[a, c])?;
            terms.push(project(g, mcat, seed + 7)?);
            let st = g.stack(&[u, v, u])?;
            terms.push(project(g, st, seed + 8)?);
            let sl = g.slice(cat, k / 2, k)?;
            terms.push(project(g, sl, seed + 9)?);
            let r = g.row(a, m - 1)?;
            terms.push(project(g, r, seed + 10)?);
            let emb = g.embedding(a, &ids)?;
            terms.push(project(g, emb, seed + 11)?);
            let d = g.dot(u, v)?;
            terms.push(project(g, d, seed + 12)?);
            let p = g.pick(v, k - 1)?;
            terms.push(p);
            let sc = g.scatter_add(u, &scatter, 3)?;
            terms.push(project(g, sc, seed + 13)?);
            let om = g.one_minus(u)?;
            terms.push(project(g, om, seed + 14)?);
            let mut total = terms[0];
            for t in &terms[1..] {
                total = g.add(total, *t)?;
            }
            Ok(total)
        });
        prop_assert!(res.is_ok(), "{:?}", res);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), rows in 1usize..=8, cols in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(random(&mut rng, &[rows, cols], -30.0, 30.0));
        let y = g.softmax(x).unwrap();
        let s = g.sigmoid(x).unwrap();
        let t = g.tanh(x).unwrap();
        for r in 0..rows {
            let total: f64 = g.value(y).row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
        prop_assert!(g.value(s).data().iter().all(|v| *v >= 0.0 && *v <= 1.0));
        prop_assert!(g.value(t).data().iter().all(|v| *v >= -1.0 && *v <= 1.0));
    }

    #[test]
    fn clipping_never_increases_norm(values in prop::collection::vec(-100.0f64..100.0, 1..20), max_norm in 0.01f64..10.0) {
        let split = values.len() / 2;
        let mut grads = vec![Tensor::vector(values[..split.max(1)].to_vec())];
        if split > 0 && split < values.len() {
            grads.push(Tensor::vector(values[split..].to_vec()));
        }
        let before = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
        clip_global_norm(&mut grads, max_norm);
        let after = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
        prop_assert!(after <= before + 1e-12);
        prop_assert!(after <= max_norm + 1e-12);
    }
}

#[test]
fn three_layer_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = ParamStore::new();
    let w1 = params.insert("w1", random(&mut rng, &[6, 4], -0.5, 0.5)).unwrap();
    let w2 = params.insert("w2", random(&mut rng, &[5, 6], -0.5, 0.5)).unwrap();
    let w3 = params.insert("w3", random(&mut rng, &[3, 5], -0.5, 0.5)).unwrap();
    let x = params.insert("x", random(&mut rng, &[4], -1.0, 1.0)).unwrap();
    check(&mut params, |g| {
        let (w1, w2, w3, x) = (g.param(w1), g.param(w2), g.param(w3), g.param(x));
        let h = g.matmul(w1, x)?;
        let h = g.tanh(h)?;
        let h = g.matmul(w2, h)?;
        let h = g.sigmoid(h)?;
        let h = g.matmul(w3, h)?;
        let p = g.softmax(h)?;
        let lp = g.log(p)?;
        let pick = g.pick(lp, 1)?;
        g.scale(pick, -1.0)
    })
    .unwrap();
}

#[test]
fn gru_cell_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = ParamStore::new();
    let cell = GruCell::new(&mut params, "gru", 3, 4, 0.5, &mut rng).unwrap();
    let x = params.insert("x", random(&mut rng, &[3], -1.0, 1.0)).unwrap();
    let h = params.insert("h", random(&mut rng, &[4], -1.0, 1.0)).unwrap();
    check(&mut params, |g| {
        let (xv, hv) = (g.param(x), g.param(h));
        let h1 = cell.step(g, xv, hv)?;
        let h2 = cell.step(g, xv, h1)?;
        project(g, h2, 3)
    })
    .unwrap();
}
