//! Link feature encoding: text of both endpoints (TF-IDF or bag of
//! embedding vectors), optionally followed by issue metadata.

pub mod embedding;
pub mod metadata;
pub mod tfidf;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use embedding::{
    cosine, encode_issue_embedding, finetune_embeddings, train_embeddings, EmbeddingModel,
    EmbeddingParams, FinetuneParams,
};
pub use metadata::{encode_metadata, fit_metadata_registry, MetadataRegistry};
pub use tfidf::{encode_issue_tfidf, fit_tfidf, TfidfModel};

use crate::dataset::{Issue, IssueLink, ProjectDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::textprep::{preprocess_issue, NormalizationConfig, TokenizedIssue};

/// Small two-topic corpus used to sanity-check the embedding trainer.
pub const TOY_CORPUS: &str = include_str!("../../data/toy_corpus.txt");

/// Which text representation a link uses. `Wiki`, `Stack` and `Proj` are
/// embedding encoders that differ only in the corpus the vectors came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextEncoderKind {
    Tfidf,
    Wiki,
    Stack,
    Proj,
    None,
}

impl TextEncoderKind {
    pub fn is_embedding(self) -> bool {
        matches!(self, Self::Wiki | Self::Stack | Self::Proj)
    }
}

impl fmt::Display for TextEncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tfidf => "tfidf",
            Self::Wiki => "wiki",
            Self::Stack => "stack",
            Self::Proj => "proj",
            Self::None => "none",
        })
    }
}

impl FromStr for TextEncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf" => Ok(Self::Tfidf),
            "wiki" => Ok(Self::Wiki),
            "stack" => Ok(Self::Stack),
            "proj" | "embedding" => Ok(Self::Proj),
            "none" => Ok(Self::None),
            other => Err(Error::invalid(format!("unknown text encoder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFeatureConfig {
    pub text_encoder: TextEncoderKind,
    pub include_metadata: bool,
}

impl LinkFeatureConfig {
    pub fn new(text_encoder: TextEncoderKind, include_metadata: bool) -> Result<Self> {
        let cfg = LinkFeatureConfig {
            text_encoder,
            include_metadata,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text_encoder == TextEncoderKind::None && !self.include_metadata {
            return Err(Error::invalid(
                "text encoder `none` requires metadata features",
            ));
        }
        Ok(())
    }
}

/// Issues of one dataset with their normalized tokens, addressable by id.
#[derive(Debug, Clone)]
pub struct IssueTable<'a> {
    dataset: &'a ProjectDataset,
    lookup: HashMap<&'a str, usize>,
    tokens: Vec<TokenizedIssue>,
}

impl<'a> IssueTable<'a> {
    pub fn new(dataset: &'a ProjectDataset, normalization: &NormalizationConfig) -> Self {
        IssueTable {
            dataset,
            lookup: dataset.issue_index(),
            tokens: dataset
                .issues
                .iter()
                .map(|i| preprocess_issue(i, normalization))
                .collect(),
        }
    }

    pub fn dataset(&self) -> &'a ProjectDataset {
        self.dataset
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("issue {id} not in dataset")))
    }

    pub fn issue(&self, id: &str) -> Result<&'a Issue> {
        Ok(&self.dataset.issues[self.position(id)?])
    }

    pub fn tokens(&self, id: &str) -> Result<&TokenizedIssue> {
        Ok(&self.tokens[self.position(id)?])
    }

    /// Tokenized endpoints of `links`, each once, in dataset order.
    pub fn endpoints_of(&self, links: &[IssueLink]) -> Result<Vec<TokenizedIssue>> {
        let mut positions = BTreeSet::new();
        for l in links {
            positions.insert(self.position(&l.source)?);
            positions.insert(self.position(&l.target)?);
        }
        Ok(positions.into_iter().map(|p| self.tokens[p].clone()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"), rename_all = "lowercase")]
pub enum TextEncoding<T: Scalar> {
    Tfidf(TfidfModel),
    Embedding(EmbeddingModel<T>),
    None,
}

impl<T: Scalar> TextEncoding<T> {
    pub fn issue_width(&self) -> usize {
        match self {
            TextEncoding::Tfidf(m) => 2 * m.vocabulary_size(),
            TextEncoding::Embedding(m) => m.dims(),
            TextEncoding::None => 0,
        }
    }

    pub fn encode_issue(&self, issue: &TokenizedIssue) -> Vec<T> {
        match self {
            TextEncoding::Tfidf(m) => m.encode_issue(issue),
            TextEncoding::Embedding(m) => m.encode_issue(issue),
            TextEncoding::None => Vec::new(),
        }
    }

    /// Issue ids whose text informed this encoder.
    pub fn provenance(&self) -> Option<&BTreeSet<String>> {
        match self {
            TextEncoding::Tfidf(m) => Some(m.fitted_on()),
            TextEncoding::Embedding(m) => Some(m.fitted_on()),
            TextEncoding::None => None,
        }
    }
}

/// Text encoder and metadata registry fitted for one training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct FittedEncoders<T: Scalar> {
    pub config: LinkFeatureConfig,
    pub text: TextEncoding<T>,
    pub metadata: Option<MetadataRegistry>,
}

/// Inputs for the embedding encoders: pre-trained vectors plus the
/// fine-tuning schedule applied to the training issues.
#[derive(Debug, Clone)]
pub struct EmbeddingSource<'m, T: Scalar> {
    pub base: &'m EmbeddingModel<T>,
    pub finetune: FinetuneParams,
}

impl<T: Scalar> FittedEncoders<T> {
    /// Fits every encoder required by `config` on the endpoints of
    /// `train_links` only.
    pub fn fit(
        config: LinkFeatureConfig,
        train_links: &[IssueLink],
        table: &IssueTable<'_>,
        embeddings: Option<&EmbeddingSource<'_, T>>,
    ) -> Result<Self> {
        config.validate()?;
        if train_links.is_empty() {
            return Err(Error::invalid("cannot fit encoders without training links"));
        }
        let text = match config.text_encoder {
            TextEncoderKind::Tfidf => TextEncoding::Tfidf(TfidfModel::fit(&table.endpoints_of(train_links)?)?),
            kind if kind.is_embedding() => {
                let source = embeddings.ok_or_else(|| {
                    Error::invalid(format!("text encoder {kind} needs an embedding file"))
                })?;
                let issues = table.endpoints_of(train_links)?;
                TextEncoding::Embedding(finetune_embeddings(source.base, &issues, &source.finetune))
            }
            _ => TextEncoding::None,
        };
        let metadata = if config.include_metadata {
            Some(MetadataRegistry::fit(train_links, table.dataset())?)
        } else {
            None
        };
        Ok(FittedEncoders {
            config,
            text,
            metadata,
        })
    }

    pub fn width(&self) -> usize {
        2 * self.text.issue_width() + self.metadata.as_ref().map_or(0, MetadataRegistry::width)
    }

    /// `text(a) ++ text(b) ++ metadata(a, b)`.
    pub fn encode_pair(&self, a: (&Issue, &TokenizedIssue), b: (&Issue, &TokenizedIssue)) -> Vec<T> {
        let mut out = Vec::with_capacity(self.width());
        out.extend(self.text.encode_issue(a.1));
        out.extend(self.text.encode_issue(b.1));
        if let Some(reg) = &self.metadata {
            out.extend(reg.encode::<T>(a.0, b.0));
        }
        out
    }

    pub fn encode_link(&self, link: &IssueLink, table: &IssueTable<'_>) -> Result<Vec<T>> {
        let a = (table.issue(&link.source)?, table.tokens(&link.source)?);
        let b = (table.issue(&link.target)?, table.tokens(&link.target)?);
        Ok(self.encode_pair(a, b))
    }

    pub fn encode_links(&self, links: &[IssueLink], table: &IssueTable<'_>) -> Result<Matrix<T>> {
        let mut m = Matrix::zeros(0, self.width());
        for link in links {
            m.push_row(&self.encode_link(link, table)?)?;
        }
        Ok(m)
    }
}

pub fn encode_link<T: Scalar>(
    encoders: &FittedEncoders<T>,
    link: &IssueLink,
    table: &IssueTable<'_>,
) -> Result<Vec<T>> {
    encoders.encode_link(link, table)
}
