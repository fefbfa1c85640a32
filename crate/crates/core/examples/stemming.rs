//! Porter stems and the match keys used for deduplication and evaluation.

use kpgen::stem::{key_of, stem};

fn main() {
    for w in ["generation", "generating", "networks", "relational", "conditional", "hopeful"] {
        println!("{w:>12} -> {}", stem(w));
    }
    for p in ["Neural Networks", "neural network", "networked neurons"] {
        println!("{p:>18} -> {}", key_of(p));
    }
}
