use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textprep::TokenizedIssue;

/// Vocabulary and document frequencies of a fitted TF-IDF encoder.
///
/// Each issue contributes two documents (summary and description). Term
/// weights are raw counts times the smoothed idf `ln((1+n)/(1+df)) + 1`, and
/// every document vector is L2-normalized on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    vocabulary: BTreeMap<String, usize>,
    doc_frequency: Vec<usize>,
    n_documents: usize,
    /// Issues whose text was seen while fitting.
    fitted_on: BTreeSet<String>,
}

impl TfidfModel {
    pub fn fit(corpus: &[TokenizedIssue]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("TF-IDF corpus is empty"));
        }
        let docs = corpus
            .iter()
            .flat_map(|i| [i.summary_tokens.as_slice(), i.description_tokens.as_slice()]);
        let mut model = Self::fit_documents(docs)?;
        model.fitted_on = corpus.iter().map(|i| i.id.clone()).collect();
        Ok(model)
    }

    /// Fits on arbitrary token documents.
    pub fn fit_documents<'a>(docs: impl IntoIterator<Item = &'a [String]>) -> Result<Self> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_documents = 0;
        for doc in docs {
            n_documents += 1;
            let unique: BTreeSet<&String> = doc.iter().collect();
            for token in unique {
                *df.entry(token.clone()).or_insert(0) += 1;
            }
        }
        if n_documents == 0 {
            return Err(Error::invalid("TF-IDF corpus is empty"));
        }
        let mut vocabulary = BTreeMap::new();
        let mut doc_frequency = Vec::with_capacity(df.len());
        for (i, (token, count)) in df.into_iter().enumerate() {
            vocabulary.insert(token, i);
            doc_frequency.push(count);
        }
        Ok(TfidfModel {
            vocabulary,
            doc_frequency,
            n_documents,
            fitted_on: BTreeSet::new(),
        })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    pub fn doc_frequency(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.doc_frequency[i])
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.keys().map(String::as_str)
    }

    pub fn fitted_on(&self) -> &BTreeSet<String> {
        &self.fitted_on
    }

    pub fn idf(&self, index: usize) -> f64 {
        let n = self.n_documents as f64;
        ((1.0 + n) / (1.0 + self.doc_frequency[index] as f64)).ln() + 1.0
    }

    /// Writes the normalized TF-IDF vector of `tokens` into `out` (length N).
    /// Unknown tokens are ignored.
    pub fn transform_into<T: Scalar>(&self, tokens: &[String], out: &mut [T]) {
        debug_assert_eq!(out.len(), self.vocabulary_size());
        let mut tf: HashMap<usize, usize> = HashMap::new();
        for t in tokens {
            if let Some(i) = self.index_of(t) {
                *tf.entry(i).or_insert(0) += 1;
            }
        }
        let mut weights: Vec<(usize, f64)> = tf
            .into_iter()
            .map(|(i, c)| (i, c as f64 * self.idf(i)))
            .collect();
        weights.sort_unstable_by_key(|w| w.0);
        let norm = weights.iter().map(|w| w.1 * w.1).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        for (i, w) in weights {
            out[i] = T::of(w / norm);
        }
    }

    pub fn transform_document<T: Scalar>(&self, tokens: &[String]) -> Vec<T> {
        let mut out = vec![T::zero(); self.vocabulary_size()];
        self.transform_into(tokens, &mut out);
        out
    }

    /// Summary vector followed by description vector (length 2N).
    pub fn encode_issue<T: Scalar>(&self, issue: &TokenizedIssue) -> Vec<T> {
        let n = self.vocabulary_size();
        let mut out = vec![T::zero(); 2 * n];
        self.transform_into(&issue.summary_tokens, &mut out[..n]);
        self.transform_into(&issue.description_tokens, &mut out[n..]);
        out
    }
}

pub fn fit_tfidf(corpus: &[TokenizedIssue]) -> Result<TfidfModel> {
    TfidfModel::fit(corpus)
}

pub fn encode_issue_tfidf<T: Scalar>(model: &TfidfModel, issue: &TokenizedIssue) -> Vec<T> {
    model.encode_issue(issue)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn tissue(id: &str, summary: &str, description: &str) -> TokenizedIssue {
        TokenizedIssue {
            id: id.into(),
            summary_tokens: toks(summary),
            description_tokens: toks(description),
        }
    }

    #[test]
    fn two_issues_make_four_documents() {
        let m = TfidfModel::fit(&[tissue("1", "a", "b"), tissue("2", "c", "")]).unwrap();
        assert_eq!(m.n_documents(), 4);
        assert_eq!(m.fitted_on().len(), 2);
    }

    #[test]
    fn document_frequencies() {
        let d1 = toks("a b");
        let d2 = toks("a c");
        let m = TfidfModel::fit_documents([d1.as_slice(), d2.as_slice()]).unwrap();
        assert_eq!(m.vocabulary_size(), 3);
        assert_eq!(m.doc_frequency("a"), Some(2));
        assert_eq!(m.doc_frequency("b"), Some(1));
        assert_eq!(m.doc_frequency("c"), Some(1));
    }

    #[test]
    fn worked_example() {
        let d1 = toks("a b");
        let d2 = toks("a c");
        let m = TfidfModel::fit_documents([d1.as_slice(), d2.as_slice()]).unwrap();
        assert!((m.idf(m.index_of("a").unwrap()) - 1.0).abs() < 1e-12);
        assert!((m.idf(m.index_of("b").unwrap()) - 1.405_465).abs() < 1e-6);
        let v: Vec<f64> = m.transform_document(&d1);
        assert!((v[0] - 0.5797).abs() < 1e-4);
        assert!((v[1] - 0.8148).abs() < 1e-4);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn empty_and_single_token_halves() {
        let corpus = [tissue("1", "x y", "z"), tissue("2", "y", "")];
        let m = TfidfModel::fit(&corpus).unwrap();
        let n = m.vocabulary_size();
        let v: Vec<f64> = m.encode_issue(&tissue("3", "", "z"));
        assert!(v[..n].iter().all(|&x| x == 0.0));
        assert!((v[n..].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let w: Vec<f64> = m.encode_issue(&tissue("4", "x unknown", ""));
        assert_eq!(w[m.index_of("x").unwrap()], 1.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(TfidfModel::fit(&[]).is_err());
    }

    #[test]
    fn description_only_issue_contributes_empty_document() {
        let m = TfidfModel::fit(&[tissue("1", "a", "")]).unwrap();
        assert_eq!(m.n_documents(), 2);
        assert_eq!(m.doc_frequency("a"), Some(1));
    }
}
