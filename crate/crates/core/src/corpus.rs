//! Bundled synthetic two-class bag-of-words corpus.
//!
//! 600 training and 200 test documents over a 2000-token vocabulary with
//! class-dependent token distributions: a Zipf-like background shared by
//! both classes plus one boosted token band per class. Documents are short
//! term-frequency vectors, a desk-scale stand-in for a two-class text corpus.

use crate::dataset::Dataset;
use crate::numkit::SparseVector;
use crate::stream::{CounterStream, UniformSource};

pub const VOCABULARY: usize = 2000;
pub const TRAIN_DOCS: usize = 600;
pub const TEST_DOCS: usize = 200;

const DOMAIN_CORPUS: u64 = 7;
const BAND_WIDTH: usize = 250;
const BAND_BOOST: f64 = 4.0;
const HEAD_OFFSET: f64 = 200.0;
const LEN_MIN: usize = 15;
const LEN_MAX: usize = 50;

/// Cumulative token distribution for one class.
fn class_cdf(class: usize) -> Vec<f64> {
    let band = (class * BAND_WIDTH)..((class + 1) * BAND_WIDTH);
    let mut weights: Vec<f64> = (0..VOCABULARY)
        .map(|i| {
            let base = 1.0 / (i as f64 + HEAD_OFFSET);
            if band.contains(&i) {
                base * BAND_BOOST
            } else {
                base
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for w in &mut weights {
        acc += *w / total;
        *w = acc;
    }
    weights
}

fn sample_token(cdf: &[f64], u: f64) -> usize {
    match cdf.binary_search_by(|probe| probe.partial_cmp(&u).expect("finite cdf")) {
        Ok(pos) | Err(pos) => pos.min(cdf.len() - 1),
    }
}

fn make_doc(cdf: &[f64], stream: &mut CounterStream) -> SparseVector {
    let span = (LEN_MAX - LEN_MIN + 1) as f64;
    let length = LEN_MIN + ((stream.next_uniform() * span) as usize).min(LEN_MAX - LEN_MIN);
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..length {
        let token = sample_token(cdf, stream.next_uniform());
        *counts.entry(token as u32).or_insert(0.0) += 1.0;
    }
    let (indices, values): (Vec<u32>, Vec<f64>) = counts.into_iter().unzip();
    SparseVector::new(VOCABULARY, indices, values).expect("well-formed document")
}

fn make_split(seed: u64, split: u64, docs: usize) -> Dataset {
    let cdfs = [class_cdf(0), class_cdf(1)];
    let half = docs / 2;
    let mut instances = Vec::with_capacity(docs);
    let mut labels = Vec::with_capacity(docs);
    for (class, cdf) in cdfs.iter().enumerate() {
        for doc in 0..half {
            let mut stream =
                CounterStream::new(seed, &[DOMAIN_CORPUS, split, class as u64, doc as u64]);
            instances.push(make_doc(cdf, &mut stream));
            labels.push(class as i32);
        }
    }
    Dataset {
        instances,
        labels,
        dim: VOCABULARY,
    }
}

/// Generates the bundled corpus: (train, test), deterministic in the seed.
pub fn generate_corpus(seed: u64) -> (Dataset, Dataset) {
    (
        make_split(seed, 0, TRAIN_DOCS),
        make_split(seed, 1, TEST_DOCS),
    )
}
