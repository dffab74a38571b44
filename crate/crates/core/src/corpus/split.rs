use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Category, Corpus, CorpusError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An exact non-negative rational, parsed from `0.25`, `1/4` or `1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den);
        Fraction {
            num: num / g,
            den: den / g,
        }
    }

    pub fn zero() -> Self {
        Fraction { num: 0, den: 1 }
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// `floor(self * n)`.
    pub fn floor_of(&self, n: usize) -> usize {
        ((self.num as u128 * n as u128) / self.den as u128) as usize
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("invalid fraction `{s}`");
        if let Some((n, d)) = s.split_once('/') {
            let num: u64 = n.trim().parse().map_err(|_| bad())?;
            let den: u64 = d.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(Fraction::new(num, den));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 18
        {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_v: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        Ok(Fraction::new(num, den))
    }
}

fn sums_to_one(parts: &[Fraction]) -> bool {
    // Cross-multiplied over u128; denominators here come from short decimals.
    let mut num: u128 = 0;
    let mut den: u128 = 1;
    for p in parts {
        num = num * p.den as u128 + p.num as u128 * den;
        den *= p.den as u128;
        let g = {
            let (mut a, mut b) = (num, den);
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a.max(1)
        };
        num /= g;
        den /= g;
    }
    num == den
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Fraction,
    pub validation: Fraction,
    pub test: Fraction,
    pub seed: u64,
    pub stratify_by_category: bool,
}

impl SplitSpec {
    pub fn new(train: Fraction, validation: Fraction, test: Fraction, seed: u64) -> Self {
        SplitSpec {
            train,
            validation,
            test,
            seed,
            stratify_by_category: true,
        }
    }

    fn fractions(&self) -> [Fraction; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        if !sums_to_one(&self.fractions()) {
            return Err(CorpusError::InvalidSplit(format!(
                "fractions {} + {} + {} do not sum to 1",
                self.train, self.validation, self.test
            )));
        }
        Ok(())
    }

    /// Per-split sizes for a stratum of `n` documents: floors first, then one
    /// extra document each to train, validation, test (skipping zero
    /// fractions) until all `n` are placed.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let fractions = self.fractions();
        let mut sizes = fractions.map(|f| f.floor_of(n));
        let mut remainder = n - sizes.iter().sum::<usize>();
        for (size, f) in sizes.iter_mut().zip(fractions) {
            if remainder == 0 {
                break;
            }
            if !f.is_zero() {
                *size += 1;
                remainder -= 1;
            }
        }
        debug_assert_eq!(remainder, 0);
        sizes
    }
}

/// Document ids per split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn ids(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    fn ids_mut(&mut self, name: SplitName) -> &mut Vec<String> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Validation => &mut self.validation,
            SplitName::Test => &mut self.test,
        }
    }
}

/// The three disjoint outputs of [`split`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitCorpora {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
}

impl SplitCorpora {
    pub fn get(&self, name: SplitName) -> &Corpus {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn assignment(&self) -> SplitAssignment {
        let ids = |c: &Corpus| c.documents.iter().map(|d| d.id().to_string()).collect();
        SplitAssignment {
            train: ids(&self.train),
            validation: ids(&self.validation),
            test: ids(&self.test),
        }
    }
}

fn stratum_key(category: Option<Category>) -> u64 {
    match category {
        None => 0,
        Some(c) => 1 + c as u64,
    }
}

/// Randomly partition the corpus into train/validation/test.
///
/// Documents are grouped by category (or kept as one group when
/// stratification is off), ordered by id, shuffled with a ChaCha8 stream
/// derived from the seed and the group, and cut according to
/// [`SplitSpec::sizes`]. Each output keeps the input document order.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitCorpora, CorpusError> {
    spec.check()?;
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut strata: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    for doc in &corpus.documents {
        let key = if spec.stratify_by_category {
            stratum_key(doc.document.category)
        } else {
            0
        };
        strata.entry(key).or_default().push(doc.id());
    }

    let mut owner: HashMap<&str, SplitName> = HashMap::new();
    for (key, mut ids) in strata {
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(key);
        ids.shuffle(&mut rng);
        let sizes = spec.sizes(ids.len());
        let mut rest = ids.as_slice();
        for name in SplitName::ALL {
            let (take, tail) = rest.split_at(sizes[name.index()]);
            for id in take {
                owner.insert(id, name);
            }
            rest = tail;
        }
    }

    let mut parts: [Vec<_>; 3] = Default::default();
    for doc in &corpus.documents {
        parts[owner[doc.id()].index()].push(doc.clone());
    }
    let [train, validation, test] = parts.map(Corpus::new);
    Ok(SplitCorpora {
        train,
        validation,
        test,
    })
}

impl SplitAssignment {
    /// Build an assignment from `(id, split)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, SplitName)>) -> Self {
        let mut a = SplitAssignment::default();
        for (id, name) in pairs {
            a.ids_mut(name).push(id.to_string());
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotatedDocument, Document};

    fn corpus(n: usize, category: Option<Category>) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| AnnotatedDocument {
                    document: Document {
                        id: format!("doc{i:04}"),
                        category,
                        text: "informe".into(),
                    },
                    spans: vec![],
                })
                .collect(),
        )
    }

    fn spec(t: &str, v: &str, s: &str, seed: u64) -> SplitSpec {
        SplitSpec::new(
            t.parse().unwrap(),
            v.parse().unwrap(),
            s.parse().unwrap(),
            seed,
        )
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("0.25".parse::<Fraction>().unwrap(), Fraction::new(1, 4));
        assert_eq!("1/4".parse::<Fraction>().unwrap(), Fraction::new(1, 4));
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::new(1, 1));
        assert_eq!(".5".parse::<Fraction>().unwrap(), Fraction::new(1, 2));
        assert!("-0.5".parse::<Fraction>().is_err());
        assert!("abc".parse::<Fraction>().is_err());
        assert!("1/0".parse::<Fraction>().is_err());
    }

    #[test]
    fn two_hundred_documents_split_in_half_and_quarters() {
        let out = split(
            &corpus(200, Some(Category::BreastPathology)),
            &spec("0.5", "0.25", "0.25", 3),
        )
        .unwrap();
        assert_eq!(
            (out.train.len(), out.validation.len(), out.test.len()),
            (100, 50, 50)
        );
    }

    #[test]
    fn single_document_goes_to_train() {
        let out = split(&corpus(1, None), &spec("1", "0", "0", 0)).unwrap();
        assert_eq!(
            (out.train.len(), out.validation.len(), out.test.len()),
            (1, 0, 0)
        );
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let c = corpus(10, None);
        let a = split(&c, &spec("0.5", "0.25", "0.25", 11)).unwrap();
        let b = split(&c, &spec("0.5", "0.25", "0.25", 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn remainder_order() {
        let s = spec("0.5", "0.25", "0.25", 0);
        assert_eq!(s.sizes(7), [4, 2, 1]);
        assert_eq!(s.sizes(6), [4, 1, 1]);
        assert_eq!(s.sizes(5), [3, 1, 1]);
        let s = spec("0", "0.5", "0.5", 0);
        assert_eq!(s.sizes(3), [0, 2, 1]);
    }

    #[test]
    fn rejects_bad_fractions_and_empty_corpus() {
        assert!(matches!(
            split(&corpus(4, None), &spec("0.5", "0.5", "0.25", 0)),
            Err(CorpusError::InvalidSplit(_))
        ));
        assert!(matches!(
            split(&Corpus::default(), &spec("1", "0", "0", 0)),
            Err(CorpusError::EmptyCorpus)
        ));
    }
}
