//! The 20-class human-parsing label set and coarse groupings of it.

use serde::Deserialize;

use crate::{Error, Result};

pub const NUM_LABELS: usize = 20;

/// Fine labels, in class-index order.
pub const LABEL_NAMES: [&str; NUM_LABELS] = [
    "Background",
    "Hat",
    "Hair",
    "Glove",
    "Sunglasses",
    "UpperClothes",
    "Dress",
    "Coat",
    "Socks",
    "Pants",
    "Jumpsuits",
    "Scarf",
    "Skirt",
    "Face",
    "LeftArm",
    "RightArm",
    "LeftLeg",
    "RightLeg",
    "LeftShoe",
    "RightShoe",
];

/// Class indices of [`LABEL_NAMES`].
pub mod label {
    pub const BACKGROUND: u8 = 0;
    pub const HAT: u8 = 1;
    pub const HAIR: u8 = 2;
    pub const GLOVE: u8 = 3;
    pub const SUNGLASSES: u8 = 4;
    pub const UPPER_CLOTHES: u8 = 5;
    pub const DRESS: u8 = 6;
    pub const COAT: u8 = 7;
    pub const SOCKS: u8 = 8;
    pub const PANTS: u8 = 9;
    pub const JUMPSUITS: u8 = 10;
    pub const SCARF: u8 = 11;
    pub const SKIRT: u8 = 12;
    pub const FACE: u8 = 13;
    pub const LEFT_ARM: u8 = 14;
    pub const RIGHT_ARM: u8 = 15;
    pub const LEFT_LEG: u8 = 16;
    pub const RIGHT_LEG: u8 = 17;
    pub const LEFT_SHOE: u8 = 18;
    pub const RIGHT_SHOE: u8 = 19;
}

/// The five labels forming the minimal-clothing target.
pub const MC_LABELS: [u8; 5] = [
    label::LEFT_ARM,
    label::RIGHT_ARM,
    label::LEFT_SHOE,
    label::RIGHT_SHOE,
    label::FACE,
];

// Spellings found in published label tables.
const ALIASES: [(&str, &str); 3] = [("Skirts", "Skirt"), ("Upperclothes", "UpperClothes"), ("Scraf", "Scarf")];

/// Ordered class names with Background first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet {
            names: LABEL_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() != NUM_LABELS {
            return Err(Error::dim("label set", NUM_LABELS, names.len()));
        }
        if names[0] != "Background" {
            return Err(Error::invalid("label set", format!("index 0 must be Background, got {}", names[0])));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid("label set", format!("duplicate label {n}")));
            }
        }
        Ok(LabelSet { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Class index of `name`, accepting known alternative spellings.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let canonical = ALIASES
            .iter()
            .find(|(alias, _)| *alias == name)
            .map_or(name, |(_, c)| c);
        self.names.iter().position(|n| n == canonical)
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::invalid("label name", format!("unknown label {name:?}")))
    }
}

/// A partition of the fine labels into `C` coarse classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoarseScheme {
    pub names: Vec<String>,
    /// Coarse class of every fine label.
    pub assignment: Vec<usize>,
}

#[derive(Deserialize)]
struct ShippedSchemes {
    #[serde(rename = "dsr-c")]
    dsr_c: Vec<(String, Vec<String>)>,
    mc: Vec<(String, Vec<String>)>,
}

fn shipped() -> ShippedSchemes {
    serde_json::from_str(include_str!("../../data/coarse_schemes.json")).expect("shipped coarse schemes parse")
}

impl CoarseScheme {
    /// Builds a scheme from named groups of fine labels; every fine label
    /// must appear in exactly one group.
    pub fn from_groups(labels: &LabelSet, groups: &[(String, Vec<String>)]) -> Result<Self> {
        let mut assignment = vec![usize::MAX; labels.len()];
        for (c, (_, members)) in groups.iter().enumerate() {
            for m in members {
                let i = labels.require(m)?;
                if assignment[i] != usize::MAX {
                    return Err(Error::invalid("coarse scheme", format!("label {m} is assigned twice")));
                }
                assignment[i] = c;
            }
        }
        if let Some(i) = assignment.iter().position(|&a| a == usize::MAX) {
            return Err(Error::invalid(
                "coarse scheme",
                format!("label {} is not assigned", labels.names()[i]),
            ));
        }
        Ok(CoarseScheme {
            names: groups.iter().map(|(n, _)| n.clone()).collect(),
            assignment,
        })
    }

    /// Background / LowerClothes / UpperClothes / MinimalClothing.
    pub fn dsr_c() -> Self {
        Self::from_groups(&LabelSet::default(), &shipped().dsr_c).expect("shipped DSR-C scheme is a partition")
    }

    /// Everything else / the five minimal-clothing labels.
    pub fn mc() -> Self {
        Self::from_groups(&LabelSet::default(), &shipped().mc).expect("shipped MC scheme is a partition")
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    /// Coarse class of a fine label.
    pub fn map(&self, fine: u8) -> u8 {
        self.assignment[fine as usize] as u8
    }
}

/// Coarse class indices of [`CoarseScheme::dsr_c`].
pub mod coarse {
    pub const BACKGROUND: u8 = 0;
    pub const LOWER_CLOTHES: u8 = 1;
    pub const UPPER_CLOTHES: u8 = 2;
    pub const MINIMAL_CLOTHING: u8 = 3;
}
