//! Bag-of-subtokens logistic regression, a sanity floor for the planted
//! corpus: if this cannot separate V from NV, the corpus is broken.

use std::collections::BTreeMap;

use pdgvd::features::{method_features, FeatureConfig};
use pdgvd::frontend::Pdg;

pub struct Baseline {
    index: BTreeMap<String, usize>,
    w: Vec<f64>,
    b: f64,
}

fn bag(g: &Pdg, index: &BTreeMap<String, usize>) -> Vec<usize> {
    let mut ids: Vec<usize> = method_features(g, &FeatureConfig::default())
        .iter()
        .flat_map(|f| f.subtokens.iter())
        .filter_map(|t| index.get(t).copied())
        .collect();
    ids.sort_unstable();
    ids
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Baseline {
    /// Plain full-batch gradient descent on the mean log loss.
    pub fn fit(train: &[(&Pdg, bool)], epochs: usize, lr: f64) -> Self {
        let mut index = BTreeMap::new();
        for (g, _) in train {
            for f in method_features(g, &FeatureConfig::default()) {
                for t in f.subtokens {
                    let n = index.len();
                    index.entry(t).or_insert(n);
                }
            }
        }
        let xs: Vec<(Vec<usize>, f64)> = train.iter().map(|(g, y)| (bag(g, &index), f64::from(u8::from(*y)))).collect();
        let mut m = Baseline { w: vec![0.0; index.len()], b: 0.0, index };
        let n = xs.len() as f64;
        for _ in 0..epochs {
            let mut gw = vec![0.0; m.w.len()];
            let mut gb = 0.0;
            for (x, y) in &xs {
                let err = sigmoid(m.logit(x)) - y;
                x.iter().for_each(|&i| gw[i] += err);
                gb += err;
            }
            m.w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * g / n);
            m.b -= lr * gb / n;
        }
        m
    }

    fn logit(&self, x: &[usize]) -> f64 {
        self.b + x.iter().map(|&i| self.w[i]).sum::<f64>()
    }

    pub fn score(&self, g: &Pdg) -> f64 {
        sigmoid(self.logit(&bag(g, &self.index)))
    }
}
