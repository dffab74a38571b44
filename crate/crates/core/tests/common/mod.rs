//! Random generators shared by the property and acceptance suites.
#![allow(dead_code)]

use clinspan::preprocess::{MapBuilder, OffsetMap};
use rand::seq::IndexedRandom;
use rand::Rng;

/// A random canonical map whose original side has `orig_len` chars.
pub fn random_map<R: Rng>(rng: &mut R, orig_len: usize) -> OffsetMap {
    let mut b = MapBuilder::new();
    let mut left = orig_len;
    let mut guard = 0;
    while left > 0 || (guard < 2 && rng.random_bool(0.3)) {
        guard += 1;
        let n = rng.random_range(1..=4).min(left.max(1));
        match rng.random_range(0..4) {
            0 if left > 0 => {
                b.copy(n);
                left -= n;
            }
            1 if left > 0 => {
                b.replace(n, rng.random_range(1..=4));
                left -= n;
            }
            2 if left > 0 => {
                b.delete(n);
                left -= n;
            }
            _ => b.insert(rng.random_range(1..=3)),
        }
    }
    b.finish()
}

const ALPHABET: &[&str] = &[
    "a",
    "e",
    "o",
    "n",
    "r",
    "T",
    "p",
    "M",
    "N",
    "0",
    "1",
    "2",
    "á",
    "é",
    "ó",
    "ñ",
    "-",
    ".",
    ",",
    " ",
    " ",
    " ",
    "\t",
    "\n",
    "\n",
    "•",
    "–",
    "e\u{301}",
    "\u{301}",
    "ductal",
    "carci-\nnoma",
    "estadiopT1",
    "pT1N0M0",
    "Mama",
    "  ",
    "\r\n",
    "\u{a0}",
];

/// Random report-like text mixing the constructs the passes rewrite.
pub fn random_text<R: Rng>(rng: &mut R, max_pieces: usize) -> String {
    let n = rng.random_range(0..=max_pieces);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}
