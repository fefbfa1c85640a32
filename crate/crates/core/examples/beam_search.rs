//! Beam search over a hand-written bigram model.

use kpgen::model::beam::{beam_search, BeamConfig, StepModel};

const WORDS: [&str; 5] = ["<eos>", "neural", "keyphrase", "generation", "<bos>"];

struct Bigram;

impl StepModel for Bigram {
    type State = ();

    fn start(&self) -> kpgen::Result<()> {
        Ok(())
    }

    fn step(&self, _: &(), prev: usize) -> kpgen::Result<(Vec<f64>, ())> {
        let p = match prev {
            4 => vec![0.0, 0.5, 0.4, 0.1, 0.0],
            1 => vec![0.3, 0.05, 0.6, 0.05, 0.0],
            2 => vec![0.2, 0.1, 0.1, 0.6, 0.0],
            _ => vec![0.8, 0.1, 0.05, 0.05, 0.0],
        };
        Ok((p, ()))
    }
}

fn main() -> kpgen::Result<()> {
    for normalize in [false, true] {
        let cfg = BeamConfig {
            depth: 4,
            size: 3,
            length_normalize: normalize,
            start: 4,
            eos: 0,
            blocked: vec![4],
        };
        println!("length_normalize = {normalize}");
        for h in beam_search(&Bigram, &cfg)?.iter().take(5) {
            let words: Vec<&str> = h.tokens.iter().map(|&t| WORDS[t]).collect();
            println!("  {:>8.4}  {}", h.score, words.join(" "));
        }
    }
    Ok(())
}
