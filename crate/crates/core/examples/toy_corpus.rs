//! Writes the seeded synthetic corpus as JSONL splits.
//!
//! ```text
//! cargo run -p kpgen --example toy_corpus -- [out_dir] [seed] [n_train n_valid n_test]
//! ```
//! Without arguments this regenerates the bundled files under `data/toy`.

use std::path::PathBuf;

use kpgen::corpus::save_dataset;
use kpgen::toy;

fn main() -> kpgen::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args
        .first()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy"));
    let seed = args.get(1).map_or(toy::BUNDLED_SEED, |s| s.parse().expect("seed"));
    let sizes: Vec<usize> = args.iter().skip(2).map(|s| s.parse().expect("split size")).collect();
    let (train, valid, test) = match sizes[..] {
        [a, b, c] => toy::generate(seed, a, b, c),
        _ => toy::generate(seed, 50, 10, 20),
    };
    for (name, docs) in [("train", &train), ("valid", &valid), ("test", &test)] {
        let path = dir.join(format!("{name}.jsonl"));
        save_dataset(&path, docs)?;
        println!("{} documents -> {}", docs.len(), path.display());
    }
    Ok(())
}
