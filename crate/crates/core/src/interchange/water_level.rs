use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Image- or person-level water level.
///
/// The declaration order is the severity order, so `Ord` compares severity:
/// `N < A < B < C < D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WaterLevelClass {
    /// No evidence for a water level.
    N,
    /// Ankle.
    A,
    /// Knee.
    B,
    /// Hip.
    C,
    /// Chest.
    D,
}

impl WaterLevelClass {
    pub const ALL: [WaterLevelClass; 5] = [Self::N, Self::A, Self::B, Self::C, Self::D];
    pub const COUNT: usize = 5;

    /// Stable ordinal used as the class index of the water-level model.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::N => "N",
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::N => "no evidence",
            Self::A => "ankle",
            Self::B => "knee",
            Self::C => "hip",
            Self::D => "chest",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.as_str().to_string()).collect()
    }
}

impl fmt::Display for WaterLevelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown water level class {0:?} (expected one of N, A, B, C, D)")]
pub struct UnknownClass(pub String);

impl FromStr for WaterLevelClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "N" | "n" => Ok(Self::N),
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            "C" | "c" => Ok(Self::C),
            "D" | "d" => Ok(Self::D),
            other => Err(UnknownClass(other.to_string())),
        }
    }
}
