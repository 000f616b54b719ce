//! Labelled corpora: JSON-lines loading, the train/tune/test protocol and a
//! generator of planted-vulnerability methods.

mod planted;

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use pdgvd_autodiff::seeded;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{import_pdg_json, parse_source, FrontendError, Pdg};
use crate::metrics::FixGroundTruth;
pub use crate::model::Decision as Label;

pub use planted::{generate_planted_corpus, TEMPLATES};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    SchemaError { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("need {needed} non-vulnerable entries, have {available}")]
    InsufficientNegatives { needed: usize, available: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source lines touched by a fix. `changed` lines were deleted or modified;
/// `added` lines are statements of the vulnerable method that depend on a
/// line the fix introduced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixLines {
    pub changed: BTreeSet<usize>,
    pub added: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub pdg: Option<serde_json::Value>,
    pub label: Label,
    #[serde(default)]
    pub fix: Option<FixLines>,
}

impl CorpusEntry {
    pub fn is_vulnerable(&self) -> bool {
        self.label == Label::V
    }

    /// Vulnerable entries need fix lines to score an interpretation.
    pub fn is_interpretable(&self) -> bool {
        self.is_vulnerable() && self.fix.as_ref().is_some_and(|f| !f.changed.is_empty() || !f.added.is_empty())
    }

    /// The entry's PDG: the imported `pdg`, or the first method of `source`.
    pub fn graph(&self) -> Result<Pdg, FrontendError> {
        match (&self.pdg, &self.source) {
            (Some(doc), _) => import_pdg_json(doc),
            (None, Some(src)) => parse_source(src)?
                .into_iter()
                .next()
                .ok_or_else(|| FrontendError::EmptyMethod(self.id.clone())),
            (None, None) => Err(FrontendError::SchemaError {
                path: "source".into(),
                message: "entry has neither source nor pdg".into(),
            }),
        }
    }

    /// Fix lines mapped to statement indices of `g`.
    pub fn ground_truth(&self, g: &Pdg) -> Option<FixGroundTruth> {
        let fix = self.fix.as_ref()?;
        let at = |lines: &BTreeSet<usize>| -> BTreeSet<usize> {
            g.nodes.iter().filter(|s| lines.contains(&s.line)).map(|s| s.index).collect()
        };
        Some(FixGroundTruth {
            method: self.id.clone(),
            deleted_or_modified: at(&fix.changed),
            added_dependents: at(&fix.added),
        })
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: CorpusEntry = serde_json::from_str(line).map_err(|err| CorpusError::SchemaError {
            line: i + 1,
            message: err.to_string(),
        })?;
        if e.source.is_none() && e.pdg.is_none() {
            return Err(CorpusError::SchemaError {
                line: i + 1,
                message: "entry has neither source nor pdg".into(),
            });
        }
        if !seen.insert(e.id.clone()) {
            return Err(CorpusError::DuplicateId(e.id));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusEntry>, CorpusError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

/// One JSON object per line.
pub fn write_corpus(entries: &[CorpusEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
        .collect()
}

/// Builds every entry's graph, keeping the failures with their ids.
pub fn build_graphs(entries: &[CorpusEntry]) -> (Vec<(CorpusEntry, Pdg)>, Vec<(String, FrontendError)>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for e in entries {
        match e.graph() {
            Ok(g) => ok.push((e.clone(), g)),
            Err(err) => failed.push((e.id.clone(), err)),
        }
    }
    (ok, failed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub tune: f64,
    pub test: f64,
    pub seed: u64,
    /// Non-vulnerable entries per vulnerable one in tuning and test data.
    pub real_ratio: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            tune: 0.1,
            test: 0.1,
            seed: 0,
            real_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub tune: Vec<T>,
    pub test: Vec<T>,
}

/// Vulnerable items are shuffled and cut by the fractions; training gets as
/// many non-vulnerable items as vulnerable ones, tuning and test get
/// `floor(real_ratio * |V|)` each, all drawn without reuse from the
/// shuffled non-vulnerable pool. Each split lists V items first.
pub fn split<T: Clone>(items: &[T], is_vulnerable: impl Fn(&T) -> bool, spec: &SplitSpec) -> Result<Splits<T>, CorpusError> {
    let f = [spec.train, spec.tune, spec.test];
    if f.iter().any(|&x| !(x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidSplit(format!("fractions {f:?} must be positive and sum to 1")));
    }
    if !(spec.real_ratio >= 0.0) {
        return Err(CorpusError::InvalidSplit("real_ratio must be non-negative".into()));
    }
    let mut rng = seeded(spec.seed);
    let mut vul: Vec<&T> = items.iter().filter(|x| is_vulnerable(x)).collect();
    let mut non: Vec<&T> = items.iter().filter(|x| !is_vulnerable(x)).collect();
    vul.shuffle(&mut rng);
    non.shuffle(&mut rng);
    let n = vul.len();
    let n_train = (spec.train * n as f64).round() as usize;
    let n_tune = ((spec.tune * n as f64).round() as usize).min(n - n_train);
    let (v_train, rest) = vul.split_at(n_train);
    let (v_tune, v_test) = rest.split_at(n_tune);
    let want = |v: usize| (spec.real_ratio * v as f64 + 1e-9).floor() as usize;
    let counts = [v_train.len(), want(v_tune.len()), want(v_test.len())];
    let needed: usize = counts.iter().sum();
    if needed > non.len() {
        return Err(CorpusError::InsufficientNegatives {
            needed,
            available: non.len(),
        });
    }
    let mut pool = non.into_iter();
    let mut take = |v: &[&T], c: usize| -> Vec<T> {
        v.iter().map(|x| (*x).clone()).chain(pool.by_ref().take(c).cloned()).collect()
    };
    Ok(Splits {
        train: take(v_train, counts[0]),
        tune: take(v_tune, counts[1]),
        test: take(v_test, counts[2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_flags() {
        let text = r#"{"id":"a","source":"void f(){ return; }","pdg":null,"label":"NV","fix":null}
{"id":"b","source":"void g(int x){ x = 1; }","label":"V"}
"#;
        let c = parse_corpus(text).unwrap();
        assert_eq!(c.len(), 2);
        assert!(!c[1].is_interpretable());
        assert_eq!(c[1].graph().unwrap().method, "g");
    }

    #[test]
    fn malformed_line_is_named() {
        let text = "{\"id\":\"a\",\"source\":\"void f(){}\",\"label\":\"NV\"}\n{oops\n";
        match parse_corpus(text) {
            Err(CorpusError::SchemaError { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let dup = "{\"id\":\"a\",\"source\":\"x\",\"label\":\"NV\"}\n{\"id\":\"a\",\"source\":\"y\",\"label\":\"V\"}\n";
        assert!(matches!(parse_corpus(dup), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn parse_failures_are_per_entry() {
        let text = "{\"id\":\"a\",\"source\":\"void f(){ return; }\",\"label\":\"NV\"}\n{\"id\":\"b\",\"source\":\"void g({\",\"label\":\"V\"}\n";
        let (ok, bad) = build_graphs(&parse_corpus(text).unwrap());
        assert_eq!(ok.len(), 1);
        assert_eq!(bad[0].0, "b");
    }

    #[test]
    fn paper_ratio_split() {
        let items: Vec<(usize, bool)> = (0..210).map(|i| (i, i < 10)).collect();
        let spec = SplitSpec { real_ratio: 9.9, seed: 3, ..Default::default() };
        let s = split(&items, |x| x.1, &spec).unwrap();
        let count = |v: &[(usize, bool)]| (v.iter().filter(|x| x.1).count(), v.iter().filter(|x| !x.1).count());
        assert_eq!(count(&s.train), (8, 8));
        assert_eq!(count(&s.tune), (1, 9));
        assert_eq!(count(&s.test), (1, 9));
        let mut ids: Vec<usize> = s.train.iter().chain(&s.tune).chain(&s.test).map(|x| x.0).collect();
        let total = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), total);
        assert_eq!(s, split(&items, |x| x.1, &spec).unwrap());
    }

    #[test]
    fn zero_ratio_and_shortage() {
        let items: Vec<(usize, bool)> = (0..30).map(|i| (i, i < 10)).collect();
        let s = split(&items, |x| x.1, &SplitSpec { real_ratio: 0.0, ..Default::default() }).unwrap();
        assert!(s.test.iter().all(|x| x.1));
        let short = split(&items, |x| x.1, &SplitSpec { real_ratio: 20.0, ..Default::default() });
        assert!(matches!(short, Err(CorpusError::InsufficientNegatives { .. })));
    }
}
