//! The closed clinical entity label set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Clinical entity label.
///
/// Declaration order is the order used for every per-label table and chart
/// in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Evolution of the disease.
    Evol,
    /// Risk factors.
    Factr,
    /// Personal history (lung reports only).
    Antperson,
    /// Genetic mutations (lung reports only).
    Mutac,
    /// Method of diagnosis.
    Met,
    /// Pathology.
    Pat,
    /// Symptomatology.
    Sint,
    /// Treatment.
    Tto,
}

impl Label {
    pub const ALL: [Label; 8] = [
        Label::Evol,
        Label::Factr,
        Label::Antperson,
        Label::Mutac,
        Label::Met,
        Label::Pat,
        Label::Sint,
        Label::Tto,
    ];

    /// Labels sorted by name; the IOB2 tag index is derived from this order.
    pub const ALPHABETICAL: [Label; 8] = [
        Label::Antperson,
        Label::Evol,
        Label::Factr,
        Label::Met,
        Label::Mutac,
        Label::Pat,
        Label::Sint,
        Label::Tto,
    ];

    /// Tie-break order for dictionary matches on identical spans, most
    /// frequent corpus label first.
    pub const PRIORITY: [Label; 8] = [
        Label::Met,
        Label::Pat,
        Label::Tto,
        Label::Sint,
        Label::Factr,
        Label::Mutac,
        Label::Antperson,
        Label::Evol,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Evol => "EVOL",
            Label::Factr => "FACTR",
            Label::Antperson => "ANTPERSON",
            Label::Mutac => "MUTAC",
            Label::Met => "MET",
            Label::Pat => "PAT",
            Label::Sint => "SINT",
            Label::Tto => "TTO",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Label::Evol => "evolution",
            Label::Factr => "risk factors",
            Label::Antperson => "personal history",
            Label::Mutac => "genetic mutations",
            Label::Met => "method of diagnosis",
            Label::Pat => "pathology",
            Label::Sint => "symptomatology",
            Label::Tto => "treatment",
        }
    }

    /// ANTPERSON and MUTAC are only annotated on lung cancer reports.
    pub fn is_lung_specific(self) -> bool {
        matches!(self, Label::Antperson | Label::Mutac)
    }

    /// Position in [`Label::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Position in [`Label::ALPHABETICAL`].
    pub fn alphabetical_index(self) -> usize {
        Label::ALPHABETICAL
            .iter()
            .position(|l| *l == self)
            .expect("every label is listed")
    }

    /// Rank in [`Label::PRIORITY`]; lower wins.
    pub fn priority_rank(self) -> usize {
        Label::PRIORITY
            .iter()
            .position(|l| *l == self)
            .expect("every label is listed")
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
