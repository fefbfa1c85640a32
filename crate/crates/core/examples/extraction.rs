//! Turning per-token importance scores into extracted keyphrases.

use kpgen::candidates::{collect_extracted, DEFAULT_EPSILON};
use kpgen::corpus::tokenize;

fn main() {
    let tokens = tokenize("Adaptive beam search , for keyphrase generation models");
    let beta = [0.92, 0.81, 0.75, 0.99, 0.10, 0.88, 0.95, 0.30];
    for (t, b) in tokens.iter().zip(beta) {
        println!("{b:.2}  {t}");
    }
    for c in collect_extracted(&tokens, &beta, DEFAULT_EPSILON, true) {
        println!("ek {:.3}  {}", c.score, c.phrase);
    }
}
