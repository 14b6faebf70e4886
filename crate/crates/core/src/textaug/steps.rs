//! Pseudo-step knowledge base and TF-IDF step assignment.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::client::{AugmenterClient, Behavior};
use crate::error::{Error, Result};

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Title → ordered pseudo-steps, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepKnowledgeBase {
    entries: IndexMap<String, Vec<String>>,
}

impl StepKnowledgeBase {
    pub fn insert(&mut self, title: String, steps: Vec<String>) -> Result<()> {
        if steps.is_empty() {
            return Err(Error::InvalidConfig(format!("no steps for {title:?}")));
        }
        self.entries.insert(title, steps);
        Ok(())
    }

    pub fn get(&self, title: &str) -> Option<&[String]> {
        self.entries.get(title).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(t, s)| (t.as_str(), s.as_slice()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let kb: Self = serde_json::from_str(text)?;
        if let Some((t, _)) = kb.entries.iter().find(|(_, s)| s.is_empty()) {
            return Err(Error::InvalidConfig(format!("no steps for {t:?}")));
        }
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Splits a numbered or bulleted list into items.
fn parse_step_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            let l = l.trim();
            let l = l.trim_start_matches(|c: char| c.is_ascii_digit());
            let l = l.strip_prefix('.').or_else(|| l.strip_prefix(')')).unwrap_or(l);
            l.trim_start_matches(['-', '*']).trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn build_step_kb<S: AsRef<str>>(titles: &[S], client: &AugmenterClient) -> Result<StepKnowledgeBase> {
    client.require(Behavior::Recipe)?;
    let mut kb = StepKnowledgeBase::default();
    for title in titles {
        let title = title.as_ref();
        let reply = client.complete(title).map_err(|e| match e {
            Error::ClientFailure { context, message } => Error::ClientFailure {
                context: format!("title {title:?}: {context}"),
                message,
            },
            other => other,
        })?;
        let steps = parse_step_list(&reply);
        if steps.is_empty() {
            return Err(Error::ClientFailure {
                context: format!("title {title:?}"),
                message: "recipe reply contained no steps".into(),
            });
        }
        kb.insert(title.to_string(), steps)?;
    }
    Ok(kb)
}

/// TF-IDF model fitted on a document collection. Term frequency is the raw
/// count; idf is `ln((1 + n) / (1 + df)) + 1`.
struct TfIdf {
    idf: HashMap<String, f64>,
}

impl TfIdf {
    fn fit(docs: &[Vec<String>]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let mut seen: Vec<&String> = d.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df
            .into_iter()
            .map(|(t, c)| (t, ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0))
            .collect();
        Self { idf }
    }

    /// Sparse vector; out-of-vocabulary terms are dropped.
    fn vector(&self, tokens: &[String]) -> HashMap<&str, f64> {
        let mut v: HashMap<&str, f64> = HashMap::new();
        for t in tokens {
            if let Some((k, w)) = self.idf.get_key_value(t) {
                *v.entry(k.as_str()).or_insert(0.0) += w;
            }
        }
        v
    }
}

fn cosine(a: &HashMap<&str, f64>, b: &HashMap<&str, f64>) -> f64 {
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut keys: Vec<&&str> = a.keys().collect();
    keys.sort();
    let d: f64 = keys
        .into_iter()
        .filter_map(|k| b.get(*k).map(|y| a[*k] * y))
        .sum();
    d / (na * nb)
}

/// Index of the most TF-IDF-cosine-similar step per narration; lowest index
/// wins ties.
pub fn assign_pseudo_steps<S: AsRef<str>, T: AsRef<str>>(narrations: &[S], steps: &[T]) -> Result<Vec<usize>> {
    if steps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let docs: Vec<Vec<String>> = steps.iter().map(|s| tokenize(s.as_ref())).collect();
    let model = TfIdf::fit(&docs);
    let step_vecs: Vec<_> = docs.iter().map(|d| model.vector(d)).collect();
    Ok(narrations
        .iter()
        .map(|n| {
            let v = model.vector(&tokenize(n.as_ref()));
            let mut best = (0, f64::NEG_INFINITY);
            for (j, s) in step_vecs.iter().enumerate() {
                let c = cosine(&v, s);
                if c > best.1 {
                    best = (j, c);
                }
            }
            best.0
        })
        .collect())
}
