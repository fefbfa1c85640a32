//! A seeded synthetic corpus of short abstracts with known keyphrases.
//!
//! Five topics each own a pool of ten three-word keyphrases, one topic-level keyphrase
//! that never occurs in the text, and a set of filler words. A document
//! mentions four pool phrases (one of them also in the title) and lists
//! those four plus the absent topic phrase as its gold keyphrases.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;

/// Seed of the bundled corpus under `data/toy`.
pub const BUNDLED_SEED: u64 = 2019;

struct Topic {
    phrases: [&'static str; 10],
    absent: &'static str,
    filler: [&'static str; 20],
}

const TOPICS: [Topic; 5] = [
    Topic {
        phrases: [
            "genetic algorithm design",
            "parameter control scheme",
            "mutation rate adaptation",
            "fitness landscape analysis",
            "crossover operator choice",
            "population diversity measure",
            "selection pressure tuning",
            "covariance matrix adaptation",
            "island model migration",
            "tree based programming",
        ],
        absent: "evolutionary computation",
        filler: [
            "offspring", "generations", "individuals", "chromosome", "elitism", "tournament",
            "encoding", "convergence", "premature", "benchmark", "runs", "schedule",
            "genotype", "phenotype", "recombination", "niching", "archive", "survivors",
            "budget", "restarts",
        ],
    },
    Topic {
        phrases: [
            "neural network pruning",
            "gradient descent momentum",
            "dropout regularization effect",
            "convolutional layer stacking",
            "recurrent unit gating",
            "attention mechanism variants",
            "batch normalization statistics",
            "weight decay schedule",
            "word embedding alignment",
            "sequence labeling model",
        ],
        absent: "deep learning",
        filler: [
            "training", "epochs", "neurons", "activations", "backpropagation", "loss",
            "overfitting", "minibatch", "optimizer", "inputs", "outputs", "architecture",
            "kernels", "logits", "tensors", "initialization", "checkpoints", "accelerators",
            "hyperparameters", "warmup",
        ],
    },
    Topic {
        phrases: [
            "query expansion terms",
            "inverted index construction",
            "relevance feedback loop",
            "document ranking function",
            "probabilistic retrieval framework",
            "term weighting scheme",
            "search engine logs",
            "click model estimation",
            "language model smoothing",
            "posting list compression",
        ],
        absent: "information retrieval",
        filler: [
            "queries", "documents", "users", "collection", "precision", "recall",
            "corpus", "judgments", "topics", "scoring", "assessors", "sessions",
            "snippets", "crawling", "pages", "vocabulary", "stemming", "tokens",
            "effectiveness", "efficiency",
        ],
    },
    Topic {
        phrases: [
            "wireless sensor deployment",
            "routing protocol overhead",
            "packet loss recovery",
            "energy consumption profile",
            "dynamic network topology",
            "mobile node localization",
            "channel allocation policy",
            "congestion control window",
            "link quality estimation",
            "data aggregation tree",
        ],
        absent: "ad hoc networks",
        filler: [
            "nodes", "packets", "throughput", "latency", "bandwidth", "transmission",
            "simulation", "radio", "hops", "traffic", "battery", "gateways",
            "interference", "beacons", "collisions", "duty", "cycles", "receivers",
            "senders", "fairness",
        ],
    },
    Topic {
        phrases: [
            "image segmentation pipeline",
            "edge detection filter",
            "feature extraction stage",
            "object recognition accuracy",
            "motion estimation error",
            "texture analysis method",
            "stereo matching cost",
            "color histogram comparison",
            "shape descriptor invariance",
            "optical flow field",
        ],
        absent: "computer vision",
        filler: [
            "pixels", "images", "frames", "camera", "regions", "contours",
            "illumination", "scenes", "resolution", "video", "boundaries", "occlusion",
            "keypoints", "patches", "lighting", "viewpoints", "noise", "blur",
            "calibration", "sensors",
        ],
    },
];

const TITLES: [&str; 4] = ["a study of {p} for {f} {f}", "{p} with {f} {f}", "on {p} and {f}", "improving {f} using {p}"];

const PHRASE_SENTENCES: [&str; 5] = [
    "we propose a {f} method based on {p} .",
    "the {p} is combined with {f} {f} .",
    "experiments show that {p} improves {f} .",
    "our analysis of {p} considers {f} and {f} .",
    "results on {f} confirm the role of {p} .",
];

const FILLER_SENTENCES: [&str; 2] = ["the {f} depends on {f} {f} .", "we also report {f} for {f} ."];

fn fill(template: &str, phrase: &str, filler: &[&str], rng: &mut ChaCha8Rng) -> String {
    template
        .split(' ')
        .map(|w| match w {
            "{p}" => phrase.to_string(),
            "{f}" => filler.choose(rng).unwrap().to_string(),
            w => w.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn document(id: String, topic: &Topic, rng: &mut ChaCha8Rng) -> Document {
    let mut chosen: Vec<&str> = topic.phrases.choose_multiple(rng, 4).copied().collect();
    chosen.shuffle(rng);
    let title = fill(TITLES.choose(rng).unwrap(), chosen[0], &topic.filler, rng);
    let mut sentences: Vec<String> = chosen
        .iter()
        .map(|p| fill(PHRASE_SENTENCES.choose(rng).unwrap(), p, &topic.filler, rng))
        .collect();
    let at = rng.gen_range(0..=sentences.len());
    sentences.insert(at, fill(FILLER_SENTENCES.choose(rng).unwrap(), "", &topic.filler, rng));
    let mut keyphrases: Vec<String> = chosen.iter().map(|s| s.to_string()).collect();
    keyphrases.push(topic.absent.to_string());
    Document {
        id,
        title,
        abstract_text: sentences.join(" "),
        keyphrases,
    }
}

/// Train, validation and test splits; documents cycle through the topics.
pub fn generate(seed: u64, n_train: usize, n_valid: usize, n_test: usize) -> (Vec<Document>, Vec<Document>, Vec<Document>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = |name: &str, n: usize| -> Vec<Document> {
        (0..n)
            .map(|i| document(format!("{name}-{i:03}"), &TOPICS[i % TOPICS.len()], &mut rng))
            .collect()
    };
    let train = split("train", n_train);
    let valid = split("valid", n_valid);
    let test = split("test", n_test);
    (train, valid, test)
}

/// The bundled sizes: 50 training, 10 validation and 20 test documents.
pub fn bundled() -> (Vec<Document>, Vec<Document>, Vec<Document>) {
    generate(BUNDLED_SEED, 50, 10, 20)
}
