use kpgen::corpus::{TokenizedDoc, Vocabulary};
use kpgen::scorer::{build_examples, sample_negatives, train_scorer, ScorerConfig, ScorerDoc, ScorerNet};
use kpgen::stem::{key_of, phrase_key};
use kpgen_autodiff::gradcheck::{numeric_param_grad, relative_error};
use kpgen_autodiff::{Graph, ParamStore};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn small() -> ScorerConfig {
    ScorerConfig {
        embedding_dim: 3,
        hidden_dim: 4,
        attend_dim: 3,
        mlp_dim: 3,
        init_scale: 0.5,
        ..Default::default()
    }
}

#[test]
fn forward_pass_matches_finite_differences() {
    let mut store = ParamStore::new();
    let net = ScorerNet::init(&mut store, &small(), 9, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let doc = [5, 6, 7, 5, 8];
    let cands: [(&[usize], f64); 3] = [(&[6, 7], 1.0), (&[8], 0.0), (&[5, 1, 6], 0.0)];
    let loss = |store: &ParamStore, grads: bool| {
        let mut g = Graph::new(store);
        let side = net.doc_side(&mut g, &doc).unwrap();
        let mut terms = Vec::new();
        for (c, y) in cands {
            let l = net.logit(&mut g, side, c).unwrap();
            let p = g.sigmoid(l).unwrap();
            let t = if y > 0.5 { p } else { g.one_minus(p).unwrap() };
            terms.push(g.log(t).unwrap());
        }
        let all = g.concat(&terms).unwrap();
        let total = g.sum(all).unwrap();
        let value = -g.value(total).item();
        (value, grads.then(|| g.backward(total).unwrap()))
    };
    let grads = loss(&store, true).1.unwrap();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic: Vec<f64> = grads.param(id).unwrap().data().iter().map(|x| -x).collect();
        let numeric = numeric_param_grad(&mut store, id, 1e-5, |s| Ok(loss(s, false).0)).unwrap();
        for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let e = relative_error(*a, *n, 1e-7);
            assert!(e <= 1e-4, "{}[{k}]: {a} vs {n} ({e:.2e})", store.name(id));
        }
    }
}

fn corpus() -> Vec<TokenizedDoc> {
    let texts = [
        ("d1", "graph search algorithms for route planning in road networks", vec!["graph search", "route planning"]),
        ("d2", "convolutional networks for image segmentation and object detection", vec!["image segmentation", "object detection"]),
        ("d3", "topic models of news articles with latent dirichlet allocation", vec!["topic models", "latent dirichlet allocation"]),
        ("d4", "query expansion improves ad hoc retrieval on web collections", vec!["query expansion", "ad hoc retrieval"]),
        ("d5", "wireless sensor networks with energy aware routing protocols", vec!["sensor networks", "routing protocols"]),
    ];
    texts
        .iter()
        .map(|(id, t, k)| TokenizedDoc::new(*id, words(t), k.iter().map(|p| words(p)).collect()))
        .collect()
}

#[test]
fn overfits_a_handful_of_documents() {
    let docs = corpus();
    let vocab = Vocabulary::build(&docs, 1000).unwrap();
    let cfg = ScorerConfig {
        embedding_dim: 16,
        hidden_dim: 16,
        attend_dim: 16,
        mlp_dim: 16,
        lr: 0.01,
        max_epochs: 60,
        patience: 60,
        batch_docs: 1,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train: Vec<ScorerDoc> = docs.iter().map(|d| build_examples(d, &[], &cfg, &mut rng)).collect();
    let out = train_scorer(&cfg, &vocab, &train, &train, 3).unwrap();
    assert_eq!(out.best_accuracy, 1.0, "{:?}", out.log.last());
    for d in &train {
        let cands: Vec<Vec<String>> = d.examples.iter().map(|e| e.0.clone()).collect();
        let probs = out.scorer.score_many(&d.tokens, &cands).unwrap();
        for (p, (c, y)) in probs.iter().zip(&d.examples) {
            assert!((*p >= 0.5) == (*y >= 0.5), "{} scored {p}", c.join(" "));
        }
    }
}

#[test]
fn scores_are_probabilities() {
    let mut store = ParamStore::new();
    let cfg = ScorerConfig {
        init_scale: 3.0,
        ..small()
    };
    let net = ScorerNet::init(&mut store, &cfg, 9, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mut g = Graph::new(&store);
    let side = net.doc_side(&mut g, &[5, 6, 7, 8, 2, 3]).unwrap();
    for c in [&[5usize][..], &[1, 1, 1, 1], &[8, 7]] {
        let l = net.logit(&mut g, side, c).unwrap();
        let p = g.sigmoid(l).unwrap();
        let p = g.value(p).item();
        assert!(p > 0.0 && p < 1.0 && p.is_finite());
    }
}

proptest! {
    #[test]
    fn negatives_never_match_gold(
        tokens in prop::collection::vec(prop::sample::select(vec!["net", "nets", "model", "models", "graph", ",", "search", "searching", "of"]), 1..25),
        gold_idx in prop::collection::vec((0usize..25, 1usize..4), 1..4),
        retrieved in prop::collection::vec(prop::sample::select(vec!["net", "graph search", "models", "graph searching", "search of"]), 0..6),
        n_neg in 1usize..12,
        seed in 0u64..1000,
    ) {
        let tokens: Vec<String> = tokens.into_iter().map(str::to_string).collect();
        let gold: Vec<Vec<String>> = gold_idx
            .iter()
            .filter_map(|&(s, l)| {
                let s = s % tokens.len();
                let e = (s + l).min(tokens.len());
                Some(tokens[s..e].to_vec())
            })
            .collect();
        let doc = TokenizedDoc::new("p", tokens.clone(), gold.clone());
        let retrieved: Vec<String> = retrieved.into_iter().map(str::to_string).collect();
        let negs = sample_negatives(&doc, &retrieved, n_neg, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        let gold_keys: Vec<String> = gold.iter().map(|g| phrase_key(g)).collect();
        prop_assert!(negs.len() <= n_neg);
        let mut seen = std::collections::HashSet::new();
        for n in &negs {
            let k = key_of(&n.join(" "));
            prop_assert!(!gold_keys.contains(&k), "negative {:?} matches gold", n);
            prop_assert!(seen.insert(k), "duplicate negative {:?}", n);
        }
    }
}
