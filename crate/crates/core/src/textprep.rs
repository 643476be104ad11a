//! Text normalization for issue summaries, descriptions and free-text corpora.
//!
//! Pipeline: non-alphanumeric characters become spaces, the text is split on
//! whitespace, camel-cased tokens are split, everything is lowercased,
//! stopwords are removed and known words are mapped to their lemma.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Issue;
use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const BUNDLED_LEMMAS: &str = include_str!("../data/lemmas_en.tsv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
}

impl Default for NormalizationConfig {
    /// Bundled English stopword list and lemma table.
    fn default() -> Self {
        NormalizationConfig {
            stopwords: parse_stopwords(BUNDLED_STOPWORDS),
            lemmas: parse_lemmas(BUNDLED_LEMMAS).expect("bundled lemma table is well-formed"),
        }
    }
}

fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn parse_lemmas(text: &str) -> Result<HashMap<String, String>> {
    let mut table = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, lemma) = line.split_once('\t').ok_or_else(|| {
            Error::invalid(format!("lemma line {}: expected `token<TAB>lemma`", n + 1))
        })?;
        table.insert(token.trim().to_lowercase(), lemma.trim().to_lowercase());
    }
    Ok(table)
}

impl NormalizationConfig {
    pub fn new(stopwords: impl IntoIterator<Item = String>, lemmas: impl IntoIterator<Item = (String, String)>) -> Self {
        NormalizationConfig {
            stopwords: stopwords.into_iter().map(|s| s.to_lowercase()).collect(),
            lemmas: lemmas
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
                .collect(),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new())
    }

    pub fn from_files(stopwords: Option<&Path>, lemmas: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let bundled = Self::default();
        Ok(NormalizationConfig {
            stopwords: match stopwords {
                Some(p) => parse_stopwords(&read(p)?),
                None => bundled.stopwords,
            },
            lemmas: match lemmas {
                Some(p) => parse_lemmas(&read(p)?)?,
                None => bundled.lemmas,
            },
        })
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.lemmas.get(token).map(String::as_str).unwrap_or(token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedIssue {
    pub id: String,
    pub summary_tokens: Vec<String>,
    pub description_tokens: Vec<String>,
}

impl TokenizedIssue {
    /// Summary tokens followed by description tokens.
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.summary_tokens
            .iter()
            .chain(&self.description_tokens)
            .map(String::as_str)
    }
}

/// Splits at lowercase-to-uppercase boundaries and before the last capital
/// of an uppercase run that is followed by a lowercase letter. Digits do
/// not start a new part. Parts are lowercased.
pub fn split_camel_case(token: &str) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = chars[i - 1];
        let cur = chars[i];
        let lower_to_upper = (prev.is_lowercase() || prev.is_numeric()) && cur.is_uppercase();
        let run_end = prev.is_uppercase()
            && cur.is_uppercase()
            && chars.get(i + 1).is_some_and(|c| c.is_lowercase());
        if lower_to_upper || run_end {
            parts.push(chars[start..i].iter().collect::<String>());
            start = i;
        }
    }
    if start < chars.len() {
        parts.push(chars[start..].iter().collect::<String>());
    }
    parts.into_iter().map(|p| p.to_lowercase()).collect()
}

pub fn normalize_text(text: &str, config: &NormalizationConfig) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let mut out = Vec::new();
    for raw in cleaned.split_whitespace() {
        for part in split_camel_case(raw) {
            // Lowercasing can emit combining marks, and a few capitals have no
            // lowercase form; neither survives.
            let part: String = part
                .chars()
                .filter(|c| c.is_alphanumeric() && !c.is_uppercase())
                .collect();
            if part.is_empty() || config.is_stopword(&part) {
                continue;
            }
            let lemma = config.lemma(&part);
            if !config.is_stopword(lemma) {
                out.push(lemma.to_string());
            }
        }
    }
    out
}

pub fn preprocess_issue(issue: &Issue, config: &NormalizationConfig) -> TokenizedIssue {
    TokenizedIssue {
        id: issue.id.clone(),
        summary_tokens: normalize_text(&issue.summary, config),
        description_tokens: normalize_text(&issue.description, config),
    }
}

/// One token list per non-empty line of a plain-text corpus.
pub fn corpus_sentences(text: &str, config: &NormalizationConfig) -> Vec<Vec<String>> {
    text.lines()
        .map(|line| normalize_text(line, config))
        .filter(|s| !s.is_empty())
        .collect()
}
