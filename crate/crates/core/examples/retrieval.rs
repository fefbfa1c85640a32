//! Nearest training documents by Jaccard overlap of their term sets.

use kpgen::retriever::{collect_retrieved_candidates, concat_retrieved, RetrievalIndex, Stopwords};

fn main() -> kpgen::Result<()> {
    let (train, _, test) = kpgen::toy::bundled();
    let index = RetrievalIndex::build(&train, &Stopwords::default())?;
    let query = &test[0];
    println!("query {}: {}", query.id, query.title);
    let result = index.retrieve(&query.id, &query.tokens(), 3)?;
    for n in &result.neighbors {
        println!("  {:.3}  {}  {:?}", n.score, n.doc_id, n.keyphrases);
    }
    println!("retrieved sequence: {}", concat_retrieved(&result).join(" "));
    for c in collect_retrieved_candidates(&result) {
        println!("  rk {:.3}  {}", c.score, c.phrase);
    }
    Ok(())
}
