//! Measured rounds set against a computed bound.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    TauRoute,
    TauMcf,
    /// `min_Δ (n/ST + Δ)`.
    Disjointness,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::TauRoute => "tau-route",
            BoundKind::TauMcf => "tau-mcf",
            BoundKind::Disjointness => "disjointness",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub instance: String,
    pub k: usize,
    pub n: usize,
    pub bound_kind: BoundKind,
    #[serde(with = "ratio_text")]
    pub bound: Ratio<u64>,
    pub rounds: usize,
    /// `rounds / bound`.
    #[serde(with = "ratio_text")]
    pub ratio: Ratio<u64>,
    pub seed: u64,
}

/// Column order of [`BoundReport::csv_row`].
pub const CSV_HEADER: [&str; 8] = [
    "instance",
    "k",
    "n",
    "bound_kind",
    "bound",
    "rounds",
    "ratio",
    "seed",
];

impl BoundReport {
    pub fn new(
        instance: impl Into<String>,
        k: usize,
        n: usize,
        bound_kind: BoundKind,
        bound: Ratio<u64>,
        rounds: usize,
        seed: u64,
    ) -> Self {
        let ratio = if *bound.numer() == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::from_integer(rounds as u64) / bound
        };
        BoundReport {
            instance: instance.into(),
            k,
            n,
            bound_kind,
            bound,
            rounds,
            ratio,
            seed,
        }
    }

    pub fn csv_row(&self) -> [String; 8] {
        [
            self.instance.clone(),
            self.k.to_string(),
            self.n.to_string(),
            self.bound_kind.as_str().to_string(),
            self.bound.to_string(),
            self.rounds.to_string(),
            self.ratio.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Exact ratios as `"p/q"` strings (plain integers when `q == 1`).
mod ratio_text {
    use num_rational::Ratio;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}
