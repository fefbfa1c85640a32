//! Merging retrieved, extracted and generated candidates into one ranking.

use kpgen::candidates::{CandidateSet, SourcedCandidate};
use kpgen::eval::Profile;
use kpgen::merger::{averages, merge, select_final};
use kpgen::scorer::ConstantScorer;

fn list(items: &[(&str, f64)]) -> Vec<SourcedCandidate> {
    items
        .iter()
        .map(|(p, s)| SourcedCandidate {
            phrase: p.to_string(),
            score: *s,
            present: true,
        })
        .collect()
}

fn main() -> kpgen::Result<()> {
    let set = CandidateSet {
        rk: list(&[("neural networks", 0.42), ("information retrieval", 0.30)]),
        ek: list(&[("keyphrase generation", 0.91), ("neural network", 0.83), ("beam", 0.75)]),
        gk: list(&[("keyphrase generation", 0.35), ("copy mechanism", 0.12), ("attention", 0.05)]),
    };
    let u = averages(&set);
    println!("averages: retrieved {:.3}  extracted {:.3}  generated {:.3}", u.rs, u.es, u.gs);
    let merged = merge(&set, &[], &ConstantScorer(1.0))?;
    for p in &merged {
        println!("{:.4}  {:<24} {:?}", p.score, p.phrase, p.sources);
    }
    let kept: Vec<String> = select_final(&merged, Profile::Other).iter().map(|p| p.phrase.clone()).collect();
    println!("final: {kept:?}");
    Ok(())
}
