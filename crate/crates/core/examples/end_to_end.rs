//! Runs every pipeline stage on the bundled toy corpus in a scratch directory.
//!
//! Usage: `cargo run --example end_to_end -- [work_dir]`

use std::path::{Path, PathBuf};

use kpgen::model::Mode;
use kpgen::pipeline::{Overrides, Pipeline, PipelineConfig, Split};

fn main() -> kpgen::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy/config.toml");
    let mut cfg = PipelineConfig::load(&config, &Overrides::default())?;
    if let Some(dir) = std::env::args().nth(1) {
        cfg.work_dir = PathBuf::from(dir);
    }
    let p = Pipeline::new(cfg.clone(), false)?;
    p.preprocess()?;
    p.build_index()?;
    p.train()?;
    p.train_scorer()?;
    for mode in [Mode::KgKeKr, Mode::KgKeKrM] {
        let mut c = cfg.clone();
        c.mode = mode;
        let p = Pipeline::new(c, false)?;
        p.predict(Split::Test)?;
        let r = p.evaluate(Split::Test)?;
        println!("{mode:<11} F1@5 {:.4}  F1@10 {:.4}  MAP@10 {:.4}", r.f1_at_5, r.f1_at_10, r.map_at_10);
    }
    Ok(())
}
