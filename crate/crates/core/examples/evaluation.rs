//! Ranking metrics on a single document.

use kpgen::eval::{f1_at_k, map_at_k, recall_at_k, split_present_absent};

fn main() {
    let source: Vec<String> = "we study neural keyphrase generation with a copy mechanism"
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let gold = ["keyphrase generation", "copy mechanisms", "sequence to sequence"];
    let preds = ["neural keyphrase generation", "copy mechanism", "keyphrase generation", "attention", "sequence to sequence"];
    println!("F1@5   {:.4}", f1_at_k(&preds, &gold, 5));
    println!("F1@10  {:.4}", f1_at_k(&preds, &gold, 10));
    println!("R@10   {:.4}", recall_at_k(&preds, &gold, 10));
    println!("MAP@10 {:.4}", map_at_k(&preds, &gold, 10));
    let present = split_present_absent(&preds, &gold, &source, true);
    println!("present gold {:?}, absent gold {:?}", present.0.gold, present.1.gold);
}
