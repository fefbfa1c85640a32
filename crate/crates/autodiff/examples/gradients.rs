//! Reverse-mode gradients of a small GRU loss, checked against finite differences.

use kpgen_autodiff::gradcheck::{numeric_param_grad, relative_error};
use kpgen_autodiff::nn::GruCell;
use kpgen_autodiff::{Graph, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Squared norm of the final state after feeding `inputs`.
fn loss(g: &mut Graph<'_>, cell: &GruCell, inputs: &[Vec<f64>]) -> kpgen_autodiff::Result<Var> {
    let mut h = cell.zero_state(g);
    for x in inputs {
        let x = g.input(Tensor::vector(x.clone()));
        h = cell.step(g, x, h)?;
    }
    let sq = g.mul(h, h)?;
    g.sum(sq)
}

fn main() -> kpgen_autodiff::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 4, 0.5, &mut rng)?;
    let inputs = [vec![0.5, -1.0, 0.2], vec![0.1, 0.3, -0.7]];
    let (value, grads) = {
        let mut g = Graph::new(&store);
        let l = loss(&mut g, &cell, &inputs)?;
        (g.value(l).item(), g.backward(l)?)
    };
    println!("loss {value:.6}");
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic = grads.param(id).map(|t| t.data().to_vec()).unwrap_or_default();
        let name = store.name(id).to_string();
        let numeric = numeric_param_grad(&mut store, id, 1e-5, |s| {
            let mut g = Graph::new(s);
            let l = loss(&mut g, &cell, &inputs)?;
            Ok(g.value(l).item())
        })?;
        let worst = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n, 1e-7)).fold(0.0, f64::max);
        println!("{name:<10} max relative error {worst:.2e}");
    }
    Ok(())
}
