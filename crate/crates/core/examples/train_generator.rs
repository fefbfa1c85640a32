//! Trains a small KG-KE-KR network on the toy corpus and decodes one test document.

use kpgen::corpus::{split_tuples, Document, LabelMatch, Source, TokenizedDoc, TrainingTuple, Vocabulary};
use kpgen::model::infer::{beam_config, encode, generate};
use kpgen::model::train::train;
use kpgen::model::{Mode, ModelConfig};
use kpgen::retriever::{concat_retrieved, RetrievalIndex, Stopwords};

fn main() -> kpgen::Result<()> {
    let (train_docs, valid_docs, test_docs) = kpgen::toy::bundled();
    let index = RetrievalIndex::build(&train_docs, &Stopwords::default())?;
    let tokenized: Vec<TokenizedDoc> = train_docs.iter().map(Document::tokenized).collect();
    let vocab = Vocabulary::build(&tokenized, 50_000)?;
    let retrieved = |d: &Document| -> kpgen::Result<Vec<String>> { Ok(concat_retrieved(&index.retrieve(&d.id, &d.tokens(), 3)?)) };
    let tuples = |docs: &[Document]| -> kpgen::Result<Vec<Vec<TrainingTuple>>> {
        docs.iter()
            .map(|d| Ok(split_tuples(&d.tokenized(), &retrieved(d)?, &vocab, 400, LabelMatch::Exact)))
            .collect()
    };
    let config = ModelConfig {
        embedding_dim: 32,
        hidden_dim: 64,
        dropout: 0.0,
        batch_size: 16,
        lr: 0.005,
        max_epochs: 40,
        eval_every: 0,
        ..Default::default()
    };
    let out = train(&config, Mode::KgKeKr, vocab.len(), &tuples(&train_docs)?, &tuples(&valid_docs)?, 1, 1)?;
    for row in out.log.iter().step_by(5) {
        println!("step {:>4}  loss {:.3}  valid ppl {:.3}", row.step, row.train_loss, row.valid_ppl);
    }

    let doc = &test_docs[0];
    let src = Source::new(doc.id.clone(), &doc.tokens(), &retrieved(doc)?, &vocab, 400);
    let encoded = encode(&out.store, &out.model, &src)?;
    println!("{}: gold {:?}", doc.id, doc.keyphrases);
    for c in generate(&out.store, &out.model, &encoded, &src, &vocab, &beam_config(6, 10, true))?.iter().take(8) {
        println!("  {:.3}  {}", c.score, c.phrase);
    }
    Ok(())
}
