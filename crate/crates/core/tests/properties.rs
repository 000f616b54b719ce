mod common;

use std::collections::BTreeSet;

use common::baseline::Baseline;
use common::programs::random_method;
use pdgvd::autodiff::{seeded, ParamStore, Tape, Tensor};
use pdgvd::corpus::{build_graphs, generate_planted_corpus, split, SplitSpec};
use pdgvd::encoders::{attention_weights, init_attention};
use pdgvd::explainer::{Explainer, ExplainerConfig};
use pdgvd::features::{build_vocabulary, method_features, split_identifier, vectorize, FeatureConfig};
use pdgvd::frontend::{parse_source, Pdg};
use pdgvd::metrics::{auc, map_at_k, ndcg_at_k};
use pdgvd::model::{
    balance, forward, gcn_forward, nll, normalize, normalized_adjacency, pyramid_bins, pyramid_pool, DetectionModel, EdgeGates, ModelConfig,
    PYRAMID_LEVELS,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_graph(seed: u64) -> Pdg {
    parse_source(&random_method(&mut seeded(seed))).unwrap().remove(0)
}

fn matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

// features

proptest! {
    #[test]
    fn split_identifier_is_idempotent(name in "[A-Za-z_][A-Za-z0-9_]{0,24}") {
        for t in split_identifier(&name) {
            prop_assert!(t.chars().count() > 1, "{t:?} from {name:?}");
            prop_assert_eq!(split_identifier(&t), vec![t.clone()]);
        }
    }

    #[test]
    fn vectorize_mask_counts_kept_tokens(
        seq in prop::collection::vec("[a-d]{2}", 0..20),
        max_len in 1usize..12,
    ) {
        let vocab = build_vocabulary([&seq], 1);
        let (ids, mask) = vectorize(&seq, &vocab, max_len);
        prop_assert_eq!(ids.len(), max_len);
        prop_assert_eq!(mask.iter().map(|&m| m as usize).sum::<usize>(), seq.len().min(max_len));
    }

    #[test]
    fn contexts_are_pdg_neighbours(seed in any::<u64>()) {
        let g = random_graph(seed);
        for f in method_features(&g, &FeatureConfig::default()) {
            let adjacent: BTreeSet<usize> = g
                .edges
                .iter()
                .filter_map(|e| match (e.src == f.stmt, e.dst == f.stmt) {
                    (true, _) => Some(e.dst),
                    (_, true) => Some(e.src),
                    _ => None,
                })
                .collect();
            for j in f.data_ctx.iter().chain(&f.ctrl_ctx) {
                prop_assert!(adjacent.contains(j), "statement {} context {j}", f.stmt);
            }
        }
    }
}

// encoders

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_sum_to_one(
        seed in any::<u64>(),
        rows in 1usize..5,
        count in 1usize..5,
        width in 1usize..6,
        hidden in 1usize..4,
    ) {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        init_attention(&mut store, "att", width, hidden, &mut rng).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let features: Vec<_> = (0..count).map(|_| tape.constant(matrix(&mut rng, rows, width))).collect();
        let w = attention_weights(&mut tape, &p, "att", &features).unwrap();
        let w = tape.value(w);
        prop_assert_eq!((w.rows(), w.cols()), (rows, count));
        for r in 0..rows {
            let s: f64 = (0..count).map(|c| w.get(r, c)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "row {r} sums to {s}");
        }
    }
}

#[test]
fn every_parameter_gets_a_gradient() {
    // planted methods have multi-token variable names to feed every GRU
    let (methods, _) = build_graphs(&generate_planted_corpus(20, 2));
    let mut graphs: Vec<Pdg> = methods.into_iter().map(|m| m.1).collect();
    // and a predicate controlling two statements, for the control GRU
    let src = "int f(int len) {\nif (len > 8) {\nlog_debug(len);\nlen = 8;\n}\nreturn len;\n}";
    graphs.extend(parse_source(src).unwrap());
    let model = DetectionModel::for_corpus(ModelConfig::default(), &graphs, 3).unwrap();
    let mut store = model.params.clone();
    store.zero_grad();
    for (i, g) in graphs.iter().enumerate() {
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape, true);
        let probs = forward(&mut tape, &p, &model.prepare(g), &EdgeGates::Full).unwrap();
        let loss = nll(&mut tape, probs, i % 2 == 0).unwrap();
        tape.backward(loss).unwrap().accumulate_into(&mut store);
    }
    for p in model.params.params() {
        let g = store.grad(&p.name).unwrap();
        assert!(g.iter().any(|&x| x != 0.0), "{} has no gradient", p.name);
    }
}

// fagcn

proptest! {
    #[test]
    fn adjacency_is_symmetric_and_nonnegative(seed in any::<u64>()) {
        let g = random_graph(seed);
        let a = normalized_adjacency(&g);
        let n = g.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(a.get(i, j) >= 0.0);
                prop_assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pooled_width_is_seven_times_depth(n in 1usize..200, d in 1usize..5) {
        let mut tape = Tape::new();
        let h = tape.constant(matrix(&mut seeded(n as u64), n, d));
        let pooled = pyramid_pool(&mut tape, h).unwrap();
        prop_assert_eq!(tape.shape(pooled), vec![1, 7 * d]);
        prop_assert_eq!(PYRAMID_LEVELS.iter().sum::<usize>(), 7);
    }

    #[test]
    fn pooling_ignores_order_within_finest_bins(seed in any::<u64>(), n in 4usize..40) {
        let mut rng = seeded(seed);
        let (d, h) = (3, 4);
        let mut store = ParamStore::new();
        store.insert_glorot("gcn.W1", d, h, &mut rng).unwrap();
        store.insert_glorot("gcn.W2", h, h, &mut rng).unwrap();
        let mut a = Tensor::eye(n);
        for i in 0..n {
            for j in 0..i {
                if rng.gen_bool(0.2) {
                    a.data_mut()[i * n + j] = 1.0;
                    a.data_mut()[j * n + i] = 1.0;
                }
            }
        }
        let f = matrix(&mut rng, n, d);
        // a permutation that only moves rows inside their level-4 bin
        let mut perm: Vec<usize> = (0..n).collect();
        for (s, e) in pyramid_bins(n).into_iter().skip(3) {
            perm[s..e].shuffle(&mut rng);
        }
        let mut pa = Tensor::zeros(&[n, n]);
        let mut pf = Tensor::zeros(&[n, d]);
        for i in 0..n {
            for j in 0..n {
                pa.data_mut()[i * n + j] = a.get(perm[i], perm[j]);
            }
            for c in 0..d {
                pf.data_mut()[i * d + c] = f.get(perm[i], c);
            }
        }
        let run = |a: Tensor, f: Tensor| {
            let mut tape = Tape::new();
            let p = store.bind(&mut tape, false);
            let a = tape.constant(a);
            let adj = normalize(&mut tape, a).unwrap();
            let f = tape.constant(f);
            let hs = gcn_forward(&mut tape, &p, adj, f).unwrap();
            let out = pyramid_pool(&mut tape, hs).unwrap();
            tape.value(out).data().to_vec()
        };
        let (x, y) = (run(a, f), run(pa, pf));
        for (u, v) in x.iter().zip(&y) {
            prop_assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }
}

#[test]
fn edgeless_graph_gives_identity() {
    let g = parse_source("void f() {\nstart();\nwork();\nstop();\n}").unwrap().remove(0);
    assert!(g.edges.is_empty(), "{:?}", g.edges);
    assert_eq!(normalized_adjacency(&g), Tensor::eye(g.len()));
}

// explainer

fn explainer_model(graphs: &[Pdg]) -> DetectionModel {
    DetectionModel::for_corpus(ModelConfig::default(), graphs, 5).unwrap()
}

#[test]
fn masks_are_open_probabilities_and_loss_drops() {
    let graphs: Vec<Pdg> = (100..120).map(random_graph).filter(|g| !g.edges.is_empty()).collect();
    let model = explainer_model(&graphs);
    let cfg = ExplainerConfig { iterations: 100, ..ExplainerConfig::default() };
    let mut improved = 0;
    for g in &graphs {
        let ex = Explainer::new(&model, g).unwrap();
        let target = model.classify(g).unwrap().1;
        let (mask, losses) = ex.learn_edge_mask(target, &cfg).unwrap();
        assert!(mask.values().iter().all(|&v| v > 0.0 && v < 1.0));
        if losses.last() <= losses.first() {
            improved += 1;
        }
    }
    assert!(improved * 10 >= graphs.len() * 9, "{improved} of {}", graphs.len());
}

#[test]
fn symmetric_edges_get_equal_masks() {
    // Statements 0/1 and 2/3 are swapped by an automorphism that keeps
    // each statement in its finest pooling bin; one-letter names carry no
    // sub-tokens, so the pairs have identical features.
    let src = "void f() {\nint a = 1;\nint b = 1;\ng(a);\ng(b);\nh();\nh();\nh();\nh();\n}";
    let g = parse_source(src).unwrap().remove(0);
    assert_eq!(g.len(), 8);
    let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
    assert_eq!(pairs, vec![(0, 2), (1, 3)]);
    let model = explainer_model(std::slice::from_ref(&g));
    let ex = Explainer::new(&model, &g).unwrap();
    for target in [pdgvd::model::Decision::V, pdgvd::model::Decision::NV] {
        let (mask, _) = ex.learn_edge_mask(target, &ExplainerConfig::default()).unwrap();
        let v = mask.values();
        assert!((v[0] - v[1]).abs() < 1e-6, "{v:?}");
    }
}

// metrics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn ranking_metrics_are_bounded(rel in prop::collection::vec(any::<bool>(), 1..30), k in 1usize..30) {
        let k = k.min(rel.len());
        for m in [map_at_k(&rel, k).unwrap(), ndcg_at_k(&rel, k).unwrap()] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m), "{m}");
        }
    }

    #[test]
    fn promoting_an_item_never_lowers_precision_mass(rel in prop::collection::vec(any::<bool>(), 1..30), at in any::<prop::sample::Index>()) {
        let k = rel.len();
        let mass = |r: &[bool]| map_at_k(r, k).unwrap() * r.iter().filter(|&&x| x).count() as f64;
        let i = at.index(k);
        let mut flipped = rel.clone();
        flipped[i] = true;
        prop_assert!(mass(&flipped) + 1e-12 >= mass(&rel));
    }

    #[test]
    fn relevant_first_ranking_has_unit_ndcg(hits in 1usize..15, misses in 0usize..15) {
        let rel: Vec<bool> = (0..hits + misses).map(|i| i < hits).collect();
        for k in 1..=rel.len() {
            prop_assert!((ndcg_at_k(&rel, k).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_ignores_monotone_rescaling(
        pos in prop::collection::vec(-3.0f64..3.0, 1..20),
        neg in prop::collection::vec(-3.0f64..3.0, 1..20),
    ) {
        let f = |xs: &[f64]| xs.iter().map(|&x| (2.0 * x).exp() + x).collect::<Vec<_>>();
        prop_assert_eq!(auc(&pos, &neg).unwrap(), auc(&f(&pos), &f(&neg)).unwrap());
    }
}

// corpus

#[test]
fn splits_partition_the_vulnerable_methods() {
    let entries = generate_planted_corpus(300, 9);
    for seed in 0..5 {
        let s = split(&entries, |e| e.is_vulnerable(), &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
        let ids: Vec<&str> = [&s.train, &s.tune, &s.test].iter().flat_map(|p| p.iter().map(|e| e.id.as_str())).collect();
        let unique: BTreeSet<&str> = ids.iter().copied().collect();
        assert_eq!(unique.len(), ids.len(), "an id appears in two splits");
        let v_split: BTreeSet<&str> = ids.iter().copied().filter(|id| entries.iter().any(|e| e.id == *id && e.is_vulnerable())).collect();
        let v_all: BTreeSet<&str> = entries.iter().filter(|e| e.is_vulnerable()).map(|e| e.id.as_str()).collect();
        assert_eq!(v_split, v_all);
        let v_train = s.train.iter().filter(|e| e.is_vulnerable()).count();
        assert_eq!(2 * v_train, s.train.len(), "training split is balanced");
    }
}

#[test]
fn balance_keeps_every_minority_item() {
    let items: Vec<(usize, bool)> = (0..50).map(|i| (i, i % 5 == 0)).collect();
    let b = balance(&items, |x| x.1, 1);
    assert_eq!(b.iter().filter(|x| x.1).count(), 10);
    assert_eq!(b.len(), 20);
}

#[test]
fn subtoken_baseline_separates_planted_corpus() {
    let (methods, failed) = build_graphs(&generate_planted_corpus(500, 1));
    assert!(failed.is_empty());
    let s = split(&methods, |m| m.0.is_vulnerable(), &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
    let train: Vec<(&Pdg, bool)> = s.train.iter().map(|(e, g)| (g, e.is_vulnerable())).collect();
    let model = Baseline::fit(&train, 300, 1.0);
    let (pos, neg): (Vec<_>, Vec<_>) = s.test.iter().partition(|m| m.0.is_vulnerable());
    let score = |ms: Vec<&(pdgvd::corpus::CorpusEntry, Pdg)>| ms.iter().map(|m| model.score(&m.1)).collect::<Vec<_>>();
    let a = auc(&score(pos), &score(neg)).unwrap();
    assert!(a >= 0.8, "baseline AUC {a}");
}

