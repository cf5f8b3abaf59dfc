//! Synthetic corpora for fixtures, tests and smoke runs.

use ndarray::Array2;
use rand::Rng;

use crate::corpus::{EncodedCorpus, TokenId};
use crate::error::Result;
use crate::sr::TransitionMatrix;

/// Dense random row-stochastic matrix with entries bounded away from zero,
/// so the chain is ergodic.
pub fn random_stochastic<R: Rng + ?Sized>(states: usize, rng: &mut R) -> TransitionMatrix {
    let mut t = Array2::from_shape_fn((states, states), |_| 0.05 + rng.random::<f64>());
    for mut row in t.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    TransitionMatrix::new(t).expect("normalized rows")
}

/// Samples one trajectory of `tokens` states and cuts it into windows.
pub fn markov_corpus<R: Rng + ?Sized>(
    chain: &TransitionMatrix,
    tokens: usize,
    window_len: usize,
    rng: &mut R,
) -> Result<EncodedCorpus> {
    let start = rng.random_range(0..chain.states());
    let path = chain.sample_path(start, tokens, rng);
    let windows = path
        .chunks_exact(window_len)
        .map(|c| c.iter().map(|&s| s as TokenId).collect())
        .collect();
    EncodedCorpus::from_windows(windows)
}

const DETS: &[&str] = &["the", "a", "this", "every", "some"];
const PRONS: &[&str] = &["it", "they", "she", "we", "he"];
const ADPS: &[&str] = &["in", "on", "with", "near", "of", "under"];
const ADVS: &[&str] = &["often", "slowly", "never", "again"];
const CCONJS: &[&str] = &["and", "but"];
const NOUNS: &[&str] = &[
    "dog", "house", "river", "garden", "teacher", "city", "window", "letter", "forest", "child",
    "market", "song", "road", "boat", "table", "stone", "winter", "friend", "paper", "mountain",
    "cat", "light", "walk", "door", "bird", "village", "farmer", "storm", "bridge", "lamp",
];
const VERBS: &[&str] = &[
    "sees", "builds", "finds", "carries", "paints", "opens", "follows", "hears", "keeps", "moves",
    "leaves", "writes", "walk", "holds", "watches", "breaks", "brings", "cleans", "visits", "loses",
];
const ADJS: &[&str] = &[
    "old", "green", "small", "quiet", "bright", "heavy", "cold", "tall", "light", "narrow", "warm",
    "strange", "empty", "soft", "wild",
];

/// Zipf-like pick: word `i` has weight `1 / (i + 1)`.
fn zipf<'a, R: Rng + ?Sized>(words: &[&'a str], rng: &mut R) -> &'a str {
    let total: f64 = (1..=words.len()).map(|i| 1.0 / i as f64).sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in words.iter().enumerate() {
        r -= 1.0 / (i + 1) as f64;
        if r < 0.0 {
            return w;
        }
    }
    words[words.len() - 1]
}

fn push<R: Rng + ?Sized>(out: &mut Vec<(String, String)>, words: &[&str], tag: &str, rng: &mut R) {
    out.push((zipf(words, rng).to_string(), tag.to_string()));
}

fn noun_phrase<R: Rng + ?Sized>(out: &mut Vec<(String, String)>, rng: &mut R, depth: usize) {
    if rng.random::<f64>() < 0.2 {
        push(out, PRONS, "PRON", rng);
        return;
    }
    push(out, DETS, "DET", rng);
    let adjs = match rng.random::<f64>() {
        u if u < 0.5 => 0,
        u if u < 0.85 => 1,
        _ => 2,
    };
    for _ in 0..adjs {
        push(out, ADJS, "ADJ", rng);
    }
    push(out, NOUNS, "NOUN", rng);
    if depth == 0 && rng.random::<f64>() < 0.2 {
        push(out, ADPS, "ADP", rng);
        noun_phrase(out, rng, depth + 1);
    }
}

fn clause<R: Rng + ?Sized>(out: &mut Vec<(String, String)>, rng: &mut R) {
    noun_phrase(out, rng, 0);
    if rng.random::<f64>() < 0.15 {
        push(out, ADVS, "ADV", rng);
    }
    push(out, VERBS, "VERB", rng);
    if rng.random::<f64>() < 0.7 {
        noun_phrase(out, rng, 0);
    }
    if rng.random::<f64>() < 0.3 {
        push(out, ADPS, "ADP", rng);
        noun_phrase(out, rng, 0);
    }
}

/// Tagged documents from a small probabilistic English-like grammar with
/// Zipfian word choice. A few word forms carry two tags ("light", "walk").
pub fn toy_tagged_corpus<R: Rng + ?Sized>(
    tokens: usize,
    doc_len: usize,
    rng: &mut R,
) -> Vec<Vec<(String, String)>> {
    let mut docs = Vec::new();
    let mut produced = 0;
    while produced < tokens {
        let mut doc = Vec::new();
        while doc.len() < doc_len && produced + doc.len() < tokens {
            clause(&mut doc, rng);
            if rng.random::<f64>() < 0.2 {
                push(&mut doc, CCONJS, "CCONJ", rng);
                clause(&mut doc, rng);
            }
            doc.push((".".to_string(), "PUNCT".to_string()));
        }
        produced += doc.len();
        docs.push(doc);
    }
    docs
}

/// Token file text: one line per document, documents separated by blank lines.
pub fn token_text(docs: &[Vec<(String, String)>]) -> String {
    docs.iter()
        .map(|d| d.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n\n")
        + "\n"
}

pub fn tagged_text(docs: &[Vec<(String, String)>]) -> String {
    let mut out = String::new();
    for (t, tag) in docs.iter().flatten() {
        out.push_str(t);
        out.push('\t');
        out.push_str(tag);
        out.push('\n');
    }
    out
}
