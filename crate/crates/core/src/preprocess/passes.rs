//! The individual normalization passes. Each pass rewrites a text and
//! records its edits in an [`OffsetMap`].

use std::sync::OnceLock;

use regex::Regex;
use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use super::offset_map::{MapBuilder, OffsetMap};

/// Output text plus the map from the pass input to it.
struct Writer {
    out: String,
    map: MapBuilder,
}

impl Writer {
    fn new(capacity: usize) -> Self {
        Writer {
            out: String::with_capacity(capacity),
            map: MapBuilder::new(),
        }
    }

    fn copy(&mut self, chars: &[char]) {
        self.out.extend(chars);
        self.map.copy(chars.len());
    }

    fn replace(&mut self, orig_len: usize, with: &str) {
        self.out.push_str(with);
        self.map.replace(orig_len, with.chars().count());
    }

    fn delete(&mut self, n: usize) {
        self.map.delete(n);
    }

    fn insert(&mut self, s: &str) {
        self.out.push_str(s);
        self.map.insert(s.chars().count());
    }

    fn finish(self) -> (String, OffsetMap) {
        (self.out, self.map.finish())
    }
}

/// A composition-stable starter: nothing before it can combine with it.
fn is_nfc_boundary(c: char) -> bool {
    canonical_combining_class(c) == 0 && is_nfc_quick(std::iter::once(c)) == IsNormalized::Yes
}

/// Unicode canonical composition, applied per composition segment so each
/// rewritten segment is mapped atomically.
pub(super) fn nfc(chars: &[char]) -> (String, OffsetMap) {
    let mut w = Writer::new(chars.len());
    let mut start = 0;
    while start < chars.len() {
        let mut end = start + 1;
        while end < chars.len() && !is_nfc_boundary(chars[end]) {
            end += 1;
        }
        let chunk = &chars[start..end];
        let composed: String = chunk.iter().copied().nfc().collect();
        if composed.chars().eq(chunk.iter().copied()) {
            w.copy(chunk);
        } else {
            w.replace(chunk.len(), &composed);
        }
        start = end;
    }
    w.finish()
}

/// Runs of spaces and tabs become a single space.
pub(super) fn collapse_spaces(chars: &[char]) -> (String, OffsetMap) {
    let mut w = Writer::new(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == ' ' || c == '\t' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                j += 1;
            }
            if c == ' ' {
                w.copy(&chars[i..i + 1]);
            } else {
                w.replace(1, " ");
            }
            w.delete(j - i - 1);
            i = j;
        } else {
            w.copy(&chars[i..i + 1]);
            i += 1;
        }
    }
    w.finish()
}

/// `letter` `-` `\n` `lowercase letter`: the hyphen and the line break go.
pub(super) fn join_hyphenation(chars: &[char]) -> (String, OffsetMap) {
    let mut w = Writer::new(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let glued = chars[i] == '-'
            && i > 0
            && chars[i - 1].is_alphabetic()
            && chars.get(i + 1) == Some(&'\n')
            && chars.get(i + 2).is_some_and(|c| c.is_lowercase());
        if glued {
            w.delete(2);
            i += 2;
        } else {
            w.copy(&chars[i..i + 1]);
            i += 1;
        }
    }
    w.finish()
}

/// A whitespace run holding one line break becomes a space; a run holding
/// two or more (a blank line) becomes exactly one paragraph break.
pub(super) fn join_lines(chars: &[char]) -> (String, OffsetMap) {
    let mut w = Writer::new(chars.len());
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_whitespace() {
            w.copy(&chars[i..i + 1]);
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        let run = &chars[i..j];
        let breaks = run.iter().filter(|&&c| c == '\n').count();
        let target = match breaks {
            0 => None,
            1 => Some(" "),
            _ => Some("\n\n"),
        };
        match target {
            Some(t) if !t.chars().eq(run.iter().copied()) => w.replace(run.len(), t),
            _ => w.copy(run),
        }
        i = j;
    }
    w.finish()
}

const BULLETS: [char; 2] = ['•', '–'];

/// A bullet glyph at the start of the text or after whitespace becomes
/// `-`, followed by a space unless whitespace already follows.
pub(super) fn normalize_bullets(chars: &[char]) -> (String, OffsetMap) {
    let mut w = Writer::new(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        // Judged on the output so a space inserted for the previous glyph counts.
        let leading = w.out.chars().next_back().is_none_or(char::is_whitespace);
        if BULLETS.contains(&c) && leading {
            w.replace(1, "-");
            if chars.get(i + 1).is_some_and(|n| !n.is_whitespace()) {
                w.insert(" ");
            }
        } else {
            w.copy(&chars[i..i + 1]);
        }
    }
    w.finish()
}

fn tnm_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^[ycpra]{0,2}T(?:[0-4][a-d]?|is|x|X)(?:N(?:[0-3][a-c]?|x|X))?(?:M(?:[01][a-c]?|x|X))?$",
        )
        .expect("valid TNM pattern")
    })
}

/// Minimum number of letters a word needs before a glued staging code is
/// split off; shorter prefixes are too likely to be part of an acronym.
const MIN_STAGING_PREFIX: usize = 3;

/// True when the whole string is a TNM staging code such as `pT1N0M0`.
pub fn is_tnm_code(s: &str) -> bool {
    tnm_pattern().is_match(s)
}

/// Split a TNM staging code glued to the end of a word
/// (`estadiopT1` → `estadio pT1`); standalone codes are left alone.
pub(super) fn split_staging(chars: &[char]) -> (String, OffsetMap) {
    let mut w = Writer::new(chars.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            w.copy(&chars[i..i + 1]);
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && chars[j].is_alphanumeric() {
            j += 1;
        }
        let word = &chars[i..j];
        match staging_cut(word) {
            Some(cut) => {
                w.copy(&word[..cut]);
                w.insert(" ");
                w.copy(&word[cut..]);
            }
            None => w.copy(word),
        }
        i = j;
    }
    w.finish()
}

fn staging_cut(word: &[char]) -> Option<usize> {
    let whole: String = word.iter().collect();
    if is_tnm_code(&whole) || !word.contains(&'T') {
        return None;
    }
    (MIN_STAGING_PREFIX..word.len()).find(|&cut| {
        word[..cut].iter().all(|c| c.is_alphabetic())
            && is_tnm_code(&word[cut..].iter().collect::<String>())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(f: fn(&[char]) -> (String, OffsetMap), s: &str) -> (String, OffsetMap) {
        let chars: Vec<char> = s.chars().collect();
        let (out, map) = f(&chars);
        map.check().unwrap();
        assert_eq!(map.orig_len(), chars.len());
        assert_eq!(map.clean_len(), out.chars().count());
        (out, map)
    }

    #[test]
    fn nfc_composes_and_maps_atomically() {
        let (out, map) = run(nfc, "evolucio\u{301}n");
        assert_eq!(out, "evolución");
        assert_eq!(map.segments().len(), 3);
        let (out, map) = run(nfc, "abc");
        assert_eq!(out, "abc");
        assert!(map.is_identity());
    }

    #[test]
    fn spaces_and_tabs() {
        let (out, map) = run(collapse_spaces, "Mama  derecha");
        assert_eq!(out, "Mama derecha");
        assert_eq!(map.segments().len(), 3);
        let (out, _) = run(collapse_spaces, "a\t \tb");
        assert_eq!(out, "a b");
    }

    #[test]
    fn hyphenated_line_break() {
        assert_eq!(run(join_hyphenation, "carci-\nnoma").0, "carcinoma");
        assert_eq!(run(join_hyphenation, "HER-\n2").0, "HER-\n2");
        assert_eq!(run(join_hyphenation, "-\nitem").0, "-\nitem");
    }

    #[test]
    fn line_breaks() {
        assert_eq!(run(join_lines, "Mama\nderecha").0, "Mama derecha");
        assert_eq!(run(join_lines, "a \n b").0, "a b");
        assert_eq!(run(join_lines, "a\n \n\nb").0, "a\n\nb");
        assert!(run(join_lines, "a\n\nb").1.is_identity());
    }

    #[test]
    fn bullets() {
        assert_eq!(run(normalize_bullets, "•Mama").0, "- Mama");
        assert_eq!(run(normalize_bullets, "x\n– TAC").0, "x\n- TAC");
        assert_eq!(run(normalize_bullets, "3–5").0, "3–5");
    }

    #[test]
    fn staging() {
        assert!(is_tnm_code("pT1N0M0"));
        assert!(is_tnm_code("ypT2"));
        assert!(!is_tnm_code("estadio"));
        assert_eq!(run(split_staging, "estadiopT1").0, "estadio pT1");
        assert_eq!(run(split_staging, "pT1N0M0.").0, "pT1N0M0.");
        assert_eq!(run(split_staging, "KIT1").0, "KIT1");
        assert_eq!(run(split_staging, "Tumor").0, "Tumor");
    }
}
