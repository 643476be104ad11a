//! Outward/inward descriptor pairs for link types.
//!
//! Links are stored once, in the outward direction, under the outward text.
//! The bundled table covers the labels observed in the Ambari, Flex and Hive
//! trackers; extra pairs can be appended from a file with one
//! `outward<TAB>inward` pair per line.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../data/link_types.tsv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkTypeRegistry {
    outward_to_inward: BTreeMap<String, String>,
    inward_to_outward: BTreeMap<String, String>,
}

impl Default for LinkTypeRegistry {
    fn default() -> Self {
        Self::parse(BUNDLED).expect("bundled link type table is well-formed")
    }
}

impl LinkTypeRegistry {
    pub fn empty() -> Self {
        LinkTypeRegistry {
            outward_to_inward: BTreeMap::new(),
            inward_to_outward: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reg = Self::empty();
        reg.extend_from_str(text)?;
        Ok(reg)
    }

    pub fn extend_from_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.extend_from_str(&text)
    }

    pub fn extend_from_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(outward), Some(inward), None) => {
                    self.insert(outward.trim(), inward.trim());
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "link type line {}: expected `outward<TAB>inward`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, outward: &str, inward: &str) {
        self.outward_to_inward
            .insert(outward.to_string(), inward.to_string());
        self.inward_to_outward
            .insert(inward.to_string(), outward.to_string());
    }

    pub fn len(&self) -> usize {
        self.outward_to_inward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outward_to_inward.is_empty()
    }

    pub fn is_outward(&self, label: &str) -> bool {
        self.outward_to_inward.contains_key(label)
    }

    /// True when `label` is only ever used as an inward descriptor.
    pub fn is_inward_only(&self, label: &str) -> bool {
        self.inward_to_outward.contains_key(label) && !self.is_outward(label)
    }

    /// Maps either form of a descriptor to its outward text.
    pub fn canonical<'a>(&'a self, label: &'a str) -> &'a str {
        if self.is_outward(label) {
            label
        } else {
            self.inward_to_outward
                .get(label)
                .map(String::as_str)
                .unwrap_or(label)
        }
    }

    pub fn outward_labels(&self) -> impl Iterator<Item = &str> {
        self.outward_to_inward.keys().map(String::as_str)
    }
}
