use kpgen_autodiff::{Graph, Tensor, Var};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-12;

/// Weighted binary cross-entropy over importance scores, averaged over
/// positions; positives are weighted by `w`.
pub fn extraction_loss(g: &mut Graph<'_>, beta: Var, beta_star: &[f64], w: f64) -> Result<Var> {
    let n = g.value(beta).len();
    if n != beta_star.len() {
        return Err(Error::InvalidInput(format!(
            "extraction loss: {n} scores but {} labels",
            beta_star.len()
        )));
    }
    let beta = g.clamp(beta, CLAMP, 1.0 - CLAMP)?;
    let log_p = g.log(beta)?;
    let one_minus = g.one_minus(beta)?;
    let log_q = g.log(one_minus)?;
    let pos = g.constant(Tensor::vector(beta_star.iter().map(|b| w * b).collect()));
    let neg = g.constant(Tensor::vector(beta_star.iter().map(|b| 1.0 - b).collect()));
    let a = g.mul(pos, log_p)?;
    let b = g.mul(neg, log_q)?;
    let total = g.add(a, b)?;
    let total = g.sum(total)?;
    Ok(g.scale(total, -1.0 / n as f64)?)
}

/// Negative log-likelihood of `targets` under per-step distributions.
/// Positions with `None` targets are skipped.
pub fn generation_loss(g: &mut Graph<'_>, steps: &[Var], targets: &[Option<usize>]) -> Result<Option<Var>> {
    if steps.len() != targets.len() {
        return Err(Error::InvalidInput("generation loss: one distribution per target required".into()));
    }
    let mut terms = Vec::new();
    for (&p, t) in steps.iter().zip(targets) {
        if let Some(t) = *t {
            let pt = g.pick(p, t)?;
            let pt = g.clamp(pt, CLAMP, 1.0)?;
            terms.push(g.log(pt)?);
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let all = g.concat(&terms)?;
    let s = g.sum(all)?;
    Ok(Some(g.scale(s, -1.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use kpgen_autodiff::ParamStore;

    fn l_e(beta: &[f64], star: &[f64]) -> f64 {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let b = g.constant(Tensor::vector(beta.to_vec()));
        let l = extraction_loss(&mut g, b, star, 9.0).unwrap();
        g.value(l).item()
    }

    #[test]
    fn extraction_examples() {
        assert!((l_e(&[0.5; 4], &[0.0; 4]) - 0.5f64.ln().abs()).abs() < 1e-12);
        assert!(l_e(&[1e-12, 1.0 - 1e-12], &[0.0, 1.0]) < 1e-9);
        assert!(l_e(&[0.0, 1.0], &[0.0, 1.0]) < 1e-9);
        assert!((l_e(&[0.5], &[1.0]) - 9.0 * 2f64.ln()).abs() < 1e-12);
        assert!((9.0 * 2f64.ln() - 6.238).abs() < 1e-3);
    }

    fn l_g(probs: &[Vec<f64>], targets: &[Option<usize>]) -> Option<f64> {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let steps: Vec<Var> = probs.iter().map(|p| g.constant(Tensor::vector(p.clone()))).collect();
        generation_loss(&mut g, &steps, targets).unwrap().map(|l| g.value(l).item())
    }

    #[test]
    fn generation_examples() {
        assert_eq!(l_g(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[Some(1), Some(0)]), Some(0.0));
        let two = l_g(&[vec![0.5, 0.5], vec![0.5, 0.5]], &[Some(0), Some(1)]).unwrap();
        assert!((two - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((two - 1.3863).abs() < 1e-4);
        let zero = l_g(&[vec![0.0, 1.0]], &[Some(0)]).unwrap();
        assert!((zero - (-CLAMP.ln())).abs() < 1e-9);
        assert_eq!(l_g(&[vec![1.0]], &[None]), None);
    }
}
