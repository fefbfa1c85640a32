//! Trains the candidate scorer and scores a few phrases for an unseen document.

use kpgen::corpus::{Document, TokenizedDoc, Vocabulary};
use kpgen::retriever::{collect_retrieved_candidates, RetrievalIndex, Stopwords};
use kpgen::scorer::{build_examples, train_scorer, ScorerConfig, ScorerDoc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kpgen::Result<()> {
    let (train, valid, test) = kpgen::toy::bundled();
    let index = RetrievalIndex::build(&train, &Stopwords::default())?;
    let tokenized: Vec<TokenizedDoc> = train.iter().map(Document::tokenized).collect();
    let vocab = Vocabulary::build(&tokenized, 50_000)?;
    let cfg = ScorerConfig {
        embedding_dim: 32,
        hidden_dim: 64,
        attend_dim: 32,
        mlp_dim: 32,
        lr: 0.005,
        max_epochs: 15,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut examples = |docs: &[Document]| -> kpgen::Result<Vec<ScorerDoc>> {
        docs.iter()
            .map(|d| {
                let r = index.retrieve(&d.id, &d.tokens(), 3)?;
                let phrases: Vec<String> = collect_retrieved_candidates(&r).into_iter().map(|c| c.phrase).collect();
                Ok(build_examples(&d.tokenized(), &phrases, &cfg, &mut rng))
            })
            .collect()
    };
    let (tr, va) = (examples(&train)?, examples(&valid)?);
    let out = train_scorer(&cfg, &vocab, &tr, &va, 1)?;
    for row in &out.log {
        println!("epoch {:>2}  loss {:.4}  valid accuracy {:.3}", row.epoch, row.train_loss, row.valid_accuracy);
    }
    let doc = &test[0];
    let mut phrases: Vec<Vec<String>> = doc.keyphrases.iter().map(|k| k.split(' ').map(str::to_string).collect()).collect();
    phrases.push(doc.tokens()[..2].to_vec());
    for (p, s) in phrases.iter().zip(out.scorer.score_many(&doc.tokens(), &phrases)?) {
        println!("{s:.3}  {}", p.join(" "));
    }
    Ok(())
}
