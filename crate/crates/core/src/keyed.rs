//! Serializes id-keyed maps as plain lists sorted by id.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub trait Keyed {
    type Key: Ord + Copy;
    fn key(&self) -> Self::Key;
}

pub fn serialize<S, K, V>(map: &BTreeMap<K, V>, serializer: S) -> Result<S::Ok, S::Error>
where
    S: Serializer,
    V: Serialize,
{
    serializer.collect_seq(map.values())
}

pub fn deserialize<'de, D, K, V>(deserializer: D) -> Result<BTreeMap<K, V>, D::Error>
where
    D: Deserializer<'de>,
    K: Ord + Copy,
    V: Keyed<Key = K> + Deserialize<'de>,
{
    let items = Vec::<V>::deserialize(deserializer)?;
    let mut map = BTreeMap::new();
    for item in items {
        if map.insert(item.key(), item).is_some() {
            return Err(D::Error::custom("duplicate id"));
        }
    }
    Ok(map)
}
