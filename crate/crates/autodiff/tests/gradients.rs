use pdgvd_autodiff::gradcheck::{check_registered_ops, registered_ops, relative_error, REL_TOL};
use pdgvd_autodiff::{seeded, ParamStore, Tape, Tensor, Var};
use rand::Rng;

#[test]
fn every_registered_op_matches_finite_differences() {
    for report in check_registered_ops(20).unwrap() {
        assert!(
            report.passed,
            "{} worst relative error {:e}",
            report.name, report.worst_rel_err
        );
    }
}

#[test]
fn three_layer_mlp_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = seeded(100 + seed);
        let mut draw = |r: usize, c: usize| {
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let inputs = vec![draw(4, 5), draw(5, 6), draw(1, 6), draw(6, 3), draw(3, 2)];
        let mlp = |t: &mut Tape, v: &[Var]| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add(h, v[2])?;
            let h = t.tanh(h);
            let h = t.matmul(h, v[3])?;
            let h = t.sigmoid(h);
            let h = t.matmul(h, v[4])?;
            t.softmax(h, 1)
        };
        let err = relative_error(&inputs, &mlp, &mut seeded(seed)).unwrap();
        assert!(err < REL_TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn two_op_compositions_match_finite_differences() {
    // Unary, same-shape ops so any pair composes.
    let unary: Vec<(&str, fn(&mut Tape, Var) -> Var)> = vec![
        ("sigmoid", |t, x| t.sigmoid(x)),
        ("tanh", |t, x| t.tanh(x)),
        ("exp", |t, x| t.exp(x)),
        ("neg", |t, x| t.neg(x)),
        ("softmax", |t, x| t.softmax(x, 1).unwrap()),
        ("square", |t, x| t.mul(x, x).unwrap()),
        ("scale", |t, x| t.scale(x, 0.3)),
    ];
    let mut rng = seeded(4242);
    for case in 0..50 {
        let f = unary[rng.gen_range(0..unary.len())].1;
        let g = unary[rng.gen_range(0..unary.len())].1;
        let x = Tensor::matrix(2, 3, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let composed = move |t: &mut Tape, v: &[Var]| {
            let inner = g(t, v[0]);
            Ok(f(t, inner))
        };
        let err = relative_error(&[x], &composed, &mut rng).unwrap();
        assert!(err < REL_TOL, "composition {case}: {err:e}");
    }
}

#[test]
fn registry_covers_the_core_op_set() {
    let names: Vec<&str> = registered_ops().iter().map(|c| c.name).collect();
    for op in [
        "matmul", "add", "mul", "concat_rows", "slice_rows", "sum", "mean", "sigmoid", "tanh",
        "relu", "softmax_rows", "log", "neg", "transpose",
    ] {
        assert!(names.contains(&op), "{op} not registered");
    }
}

#[test]
fn identical_inputs_give_bit_identical_losses() {
    let run = || {
        let mut rng = seeded(7);
        let mut store = ParamStore::new();
        store.insert_glorot("w", 4, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, true);
        let x = tape.constant(Tensor::matrix(2, 4, vec![0.5, -1.0, 2.0, 0.1, 0.3, 0.3, -0.7, 1.1]).unwrap());
        let h = tape.matmul(x, p.get("w").unwrap()).unwrap();
        let h = tape.tanh(h);
        let loss = tape.mean(h);
        tape.value(loss).data()[0].to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn unused_parameters_receive_zero_gradients() {
    let mut store = ParamStore::new();
    store.insert("used", Tensor::vector(vec![1.0, 2.0])).unwrap();
    store.insert("unused", Tensor::vector(vec![3.0])).unwrap();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape, true);
    let used = p.get("used").unwrap();
    let loss = tape.sum(used);
    tape.backward(loss).unwrap().accumulate_into(&mut store);
    assert_eq!(store.grad("used").unwrap(), &[1.0, 1.0]);
    assert_eq!(store.grad("unused").unwrap(), &[0.0]);
    store.sgd_step(0.5).unwrap();
    assert_eq!(store.get("used").unwrap().data(), &[0.5, 1.5]);
    assert_eq!(store.get("unused").unwrap().data(), &[3.0]);
}
