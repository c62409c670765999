//! Class labels shared by the classifiers, the generator and the reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Player role; the class index is the declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pitcher,
    Batter,
    Catcher,
    Fielder,
}

/// Throwing hand. `Right` is class 0 and wins ties (the majority class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

/// Pitching position. `Stretch` is class 0 and wins ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PitchPosition {
    Stretch,
    Windup,
}

/// A closed set of classes with a fixed index order.
pub trait ClassLabel: Copy + Eq + fmt::Debug + 'static {
    const ALL: &'static [Self];

    fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("listed in ALL")
    }

    fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn name(self) -> &'static str;
}

impl ClassLabel for Role {
    const ALL: &'static [Self] = &[Role::Pitcher, Role::Batter, Role::Catcher, Role::Fielder];
    fn name(self) -> &'static str {
        match self {
            Role::Pitcher => "pitcher",
            Role::Batter => "batter",
            Role::Catcher => "catcher",
            Role::Fielder => "fielder",
        }
    }
}

impl ClassLabel for Handedness {
    const ALL: &'static [Self] = &[Handedness::Right, Handedness::Left];
    fn name(self) -> &'static str {
        match self {
            Handedness::Right => "right",
            Handedness::Left => "left",
        }
    }
}

impl ClassLabel for PitchPosition {
    const ALL: &'static [Self] = &[PitchPosition::Stretch, PitchPosition::Windup];
    fn name(self) -> &'static str {
        match self {
            PitchPosition::Stretch => "stretch",
            PitchPosition::Windup => "windup",
        }
    }
}

impl Handedness {
    pub fn flipped(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
        }
    }
}

macro_rules! display_fromstr {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$t as ClassLabel>::ALL
                    .iter()
                    .copied()
                    .find(|c| c.name() == s)
                    .ok_or_else(|| format!("unknown {} {s:?}", stringify!($t)))
            }
        }
    };
}

display_fromstr!(Role);
display_fromstr!(Handedness);
display_fromstr!(PitchPosition);
