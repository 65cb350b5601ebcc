//! Textual references to plan parts and their joints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::skeleton::{RegionKey, RegionLabel};

/// `<asset>/<label>/<instance>`, e.g. `a1/head/0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionRef {
    pub asset: String,
    pub key: RegionKey,
}

impl fmt::Display for RegionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.asset, self.key)
    }
}

impl FromStr for RegionRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [asset, label, instance] if !asset.is_empty() => Ok(RegionRef {
                asset: asset.to_string(),
                key: RegionKey::new(label.parse()?, parse_index(instance, s)?),
            }),
            _ => Err(format!("expected <asset>/<region>/<instance>, got {s:?}")),
        }
    }
}

/// A joint inside a plan part, by local index.
///
/// The short form `<label>/joint/<k>` names the only declared part with
/// that label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum JointRef {
    Full { part: RegionRef, joint: usize },
    Short { label: RegionLabel, joint: usize },
}

impl fmt::Display for JointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JointRef::Full { part, joint } => write!(f, "{part}/joint/{joint}"),
            JointRef::Short { label, joint } => write!(f, "{label}/joint/{joint}"),
        }
    }
}

impl FromStr for JointRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [label, "joint", k] => Ok(JointRef::Short { label: label.parse()?, joint: parse_index(k, s)? }),
            [asset, label, instance, "joint", k] => {
                Ok(JointRef::Full { part: format!("{asset}/{label}/{instance}").parse()?, joint: parse_index(k, s)? })
            }
            _ => Err(format!("expected [<asset>/]<region>[/<instance>]/joint/<k>, got {s:?}")),
        }
    }
}

fn parse_index<T: FromStr>(text: &str, whole: &str) -> Result<T, String> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad index {text:?} in {whole:?}"));
    }
    text.parse().map_err(|_| format!("index {text:?} out of range in {whole:?}"))
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(RegionRef);
string_serde!(JointRef);
