//! Corpus-level steps shared by the command line and the end-to-end tests:
//! train with the split protocol, rank methods, explain detections and
//! score the lot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split, CorpusEntry, CorpusError, SplitSpec, Splits};
use crate::explainer::{explain, ExplainerConfig, ExplanationReport, InterpretationSubgraph};
use crate::frontend::Pdg;
use crate::metrics::{self, EvalReport, FixGroundTruth, MetricsError};
use crate::model::{self, fit_threshold, rank_methods, Decision, DetectionModel, EpochLog, Example, ModelConfig, RankedDetection, TrainConfig};

pub type Method = (CorpusEntry, Pdg);

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub fn split_methods(methods: &[Method], spec: &SplitSpec) -> Result<Splits<Method>> {
    Ok(split(methods, |m| m.0.is_vulnerable(), spec)?)
}

pub fn examples(model: &DetectionModel, methods: &[Method]) -> Vec<Example> {
    methods
        .par_iter()
        .map(|(e, g)| Example {
            id: e.id.clone(),
            input: model.prepare(g),
            vulnerable: e.is_vulnerable(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: Vec<EpochLog>,
    pub threshold: f64,
    pub tuning_f1: f64,
}

/// Vocabularies from the training split, training with early stopping on
/// the tuning split, then the F1-optimal threshold on the tuning split.
pub fn train_model(splits: &Splits<Method>, config: ModelConfig, train_cfg: &TrainConfig) -> Result<(DetectionModel, TrainingSummary)> {
    let mut model = DetectionModel::for_corpus(config, splits.train.iter().map(|m| &m.1), train_cfg.seed)?;
    let train = examples(&model, &splits.train);
    let tune = examples(&model, &splits.tune);
    let epochs = model::train(&mut model, &train, &tune, train_cfg)?;
    let scored: Vec<(f64, bool)> = score_examples(&model, &tune)?.into_iter().zip(tune.iter().map(|e| e.vulnerable)).collect();
    let (threshold, tuning_f1) = fit_threshold(&scored)?;
    model.threshold = threshold;
    Ok((model, TrainingSummary { epochs, threshold, tuning_f1 }))
}

fn score_examples(model: &DetectionModel, xs: &[Example]) -> Result<Vec<f64>> {
    Ok(xs.par_iter().map(|e| model.score_input(&e.input)).collect::<Result<_, _>>()?)
}

/// Scores every method and ranks them, most suspicious first.
pub fn detect(model: &DetectionModel, methods: &[Method]) -> Result<Vec<RankedDetection>> {
    let scores: Vec<(String, f64)> = methods
        .par_iter()
        .map(|(e, g)| Ok((e.id.clone(), model.classify(g)?.0)))
        .collect::<Result<_>>()?;
    Ok(rank_methods(&scores, model.threshold))
}

/// Explanations of the listed methods, in the given order.
pub fn explain_methods(model: &DetectionModel, methods: &[&Method], cfg: &ExplainerConfig) -> Result<Vec<ExplanationReport>> {
    Ok(methods
        .par_iter()
        .map(|(e, g)| explain(model, g, &e.id, cfg).map(|r| r.0))
        .collect::<Result<_, _>>()?)
}

/// The methods a detection report marks vulnerable, in rank order.
pub fn detected<'a>(detections: &[RankedDetection], methods: &'a [Method]) -> Result<Vec<&'a Method>> {
    detections
        .iter()
        .filter(|d| d.decision == Decision::V)
        .map(|d| methods.iter().find(|m| m.0.id == d.method).ok_or_else(|| PipelineError::UnknownMethod(d.method.clone())))
        .collect()
}

/// Ranking metrics over `detections`, plus interpretation metrics over the
/// explanations of correctly detected vulnerable methods that carry fix
/// lines.
pub fn evaluate(detections: &[RankedDetection], explanations: &[ExplanationReport], methods: &[Method], num_nodes: usize) -> Result<EvalReport> {
    let find = |id: &str| methods.iter().find(|m| m.0.id == id).ok_or_else(|| PipelineError::UnknownMethod(id.to_string()));
    let mut ranked = Vec::with_capacity(detections.len());
    for d in detections {
        let (e, _) = find(&d.method)?;
        ranked.push((d.score, d.decision == Decision::V, e.is_vulnerable()));
    }
    let (subgraphs, truths) = interpretation_inputs(detections, explanations, methods)?;
    Ok(metrics::evaluate(&ranked, &subgraphs, &truths, num_nodes)?)
}

/// Explanations paired with fix ground truth, kept only for methods that
/// are vulnerable, detected as such and interpretable.
pub fn interpretation_inputs(
    detections: &[RankedDetection],
    explanations: &[ExplanationReport],
    methods: &[Method],
) -> Result<(Vec<InterpretationSubgraph>, Vec<FixGroundTruth>)> {
    let mut subgraphs = Vec::new();
    let mut truths = Vec::new();
    for x in explanations {
        let Some((e, g)) = methods.iter().find(|m| m.0.id == x.method) else {
            return Err(PipelineError::UnknownMethod(x.method.clone()));
        };
        let detected = detections.iter().any(|d| d.method == x.method && d.decision == Decision::V);
        if !detected || !e.is_interpretable() {
            continue;
        }
        if let Some(t) = e.ground_truth(g) {
            subgraphs.push(x.subgraph());
            truths.push(t);
        }
    }
    Ok((subgraphs, truths))
}
