//! Reverse-mode gradients against central differences: every primitive on
//! its own, then whole models through the value-level loss functions.

mod common;

use common::*;
use otta_lab::losses::{loss_com, loss_comm, loss_em, loss_pl, logit_gradient, LossKind};
use otta_lab::model::{init_model, Model, ModelSpec, ParamId, ParamSelector, Stats};
use otta_lab::numerics::{finite_diff_grad, relative_error, scaled_step, Axis, Graph, PrimitiveKind, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Push entries within `gap` of `kink` away from it.
fn avoid(mut t: Tensor, kink: f64, gap: f64) -> Tensor {
    for v in t.data_mut() {
        if (*v - kink).abs() < gap {
            *v = kink + if *v >= kink { gap } else { -gap };
        }
    }
    t
}

/// `sum(op(inputs) * weights)` and its gradient with respect to every input.
fn weighted(kind: PrimitiveKind, inputs: &[Tensor], scalar: f64, weights: &Tensor) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = g.apply(kind, &vars, scalar).unwrap();
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w).unwrap();
    let s = g.sum(prod, Axis::All).unwrap();
    let value = g.value(s).data()[0];
    let grads = g.backward(s).unwrap();
    (value, vars.iter().map(|&v| grads.get(v)).collect())
}

fn output_shape(kind: PrimitiveKind, inputs: &[Tensor], scalar: f64) -> (usize, usize) {
    let mut g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = g.apply(kind, &vars, scalar).unwrap();
    (g.value(out).rows(), g.value(out).cols())
}

fn check_primitive(kind: PrimitiveKind, make: impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, f64)) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(seed * 31 + kind as u64);
        let (inputs, scalar) = make(&mut r);
        let (m, n) = output_shape(kind, &inputs, scalar);
        let weights = normal(&mut r, m, n, 1.0);
        let (_, grads) = weighted(kind, &inputs, scalar, &weights);
        for (k, grad) in grads.iter().enumerate() {
            let step = scaled_step(&inputs[k], 1e-5);
            let fd = finite_diff_grad(
                |t| {
                    let mut probe = inputs.clone();
                    probe[k] = t.clone();
                    Ok(weighted(kind, &probe, scalar, &weights).0)
                },
                &inputs[k],
                step,
            )
            .unwrap();
            let err = relative_error(grad, &fd, 1e-12);
            assert!(err <= TOL, "{kind:?} seed {seed} input {k}: relative error {err:.3e}");
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn unary_primitives_match_finite_differences() {
    let n = |r: &mut ChaCha8Rng| normal(r, 3, 4, 1.0);
    check_primitive(PrimitiveKind::Transpose, |r| (vec![n(r)], 0.0));
    check_primitive(PrimitiveKind::Scale, |r| (vec![n(r)], -1.7));
    check_primitive(PrimitiveKind::Shift, |r| (vec![n(r)], 0.3));
    check_primitive(PrimitiveKind::Exp, |r| (vec![n(r)], 0.0));
    check_primitive(PrimitiveKind::Log, |r| (vec![uniform(r, 3, 4, 0.2, 3.0)], 0.0));
    check_primitive(PrimitiveKind::Sqrt, |r| (vec![uniform(r, 3, 4, 0.2, 3.0)], 0.0));
    check_primitive(PrimitiveKind::ClampMin, |r| (vec![avoid(n(r), 0.1, 0.05)], 0.1));
    check_primitive(PrimitiveKind::Arccos, |r| (vec![uniform(r, 3, 4, -0.9, 0.9)], 0.0));
    check_primitive(PrimitiveKind::Relu, |r| (vec![avoid(n(r), 0.0, 0.05)], 0.0));
}

#[test]
fn reductions_match_finite_differences() {
    let n = |r: &mut ChaCha8Rng| normal(r, 3, 4, 1.0);
    check_primitive(PrimitiveKind::Sum, |r| (vec![n(r)], 0.0));
    check_primitive(PrimitiveKind::Mean, |r| (vec![n(r)], 0.0));
    check_primitive(PrimitiveKind::MaxWithIndex, |r| (vec![n(r)], 0.0));
    check_primitive(PrimitiveKind::L2Norm, |r| (vec![n(r)], 0.0));
    check_primitive(PrimitiveKind::Softmax, |r| (vec![normal(r, 3, 4, 2.0)], 0.0));
}

#[test]
fn binary_primitives_match_finite_differences() {
    check_primitive(PrimitiveKind::MatMul, |r| (vec![normal(r, 3, 4, 1.0), normal(r, 4, 2, 1.0)], 0.0));
    for (rows, cols) in [(3, 4), (1, 4), (3, 1), (1, 1)] {
        for kind in [PrimitiveKind::Add, PrimitiveKind::Sub, PrimitiveKind::Mul] {
            check_primitive(kind, |r| (vec![normal(r, 3, 4, 1.0), normal(r, rows, cols, 1.0)], 0.0));
        }
        check_primitive(PrimitiveKind::Div, |r| {
            let mut d = uniform(r, rows, cols, 0.5, 2.0);
            for v in d.data_mut() {
                if r.random_bool(0.5) {
                    *v = -*v;
                }
            }
            (vec![normal(r, 3, 4, 1.0), d], 0.0)
        });
    }
}

#[test]
fn softmax_composed_gradients_sum_to_zero_per_row() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let logits = normal(&mut r, 6, 5, 3.0);
        for kind in [LossKind::Em, LossKind::Pl] {
            let g = logit_gradient(kind, &logits).unwrap();
            for i in 0..g.rows() {
                let s: f64 = g.row_slice(i).iter().sum();
                assert!(s.abs() <= 1e-10, "{kind} seed {seed} row {i}: {s:e}");
            }
        }
    }
}

#[test]
fn differentiation_is_deterministic() {
    let mut r = rng(9);
    let z = normal(&mut r, 8, 16, 1.0);
    let w = normal(&mut r, 5, 16, 1.0);
    let run = || {
        let mut g = Graph::new();
        let (zv, wv) = (g.param(z.clone()), g.param(w.clone()));
        let rec = LossKind::Comm.record(&mut g, zv, zv, wv).unwrap();
        let grads = g.backward(rec.value).unwrap();
        let bits = |t: Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        (bits(grads.get(zv)), bits(grads.get(wv)))
    };
    assert_eq!(run(), run());
}

fn value_route(model: &Model, x: &Tensor, stats: Stats, kind: LossKind) -> f64 {
    let (features, logits) = model.forward(x, stats).unwrap();
    let v = match kind {
        LossKind::Em => loss_em(&logits),
        LossKind::Pl => loss_pl(&logits),
        LossKind::Com => loss_com(&features, &model.head().omega),
        LossKind::Comm => loss_comm(&features, &model.head().omega),
    };
    v.unwrap().value
}

fn graph_route(model: &Model, x: &Tensor, stats: Stats, kind: LossKind) -> Vec<(ParamId, Tensor)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let pass = model.forward_graph(&mut g, xv, stats, ParamSelector::All).unwrap();
    let omega = pass.var_of(ParamId::HeadOmega).unwrap();
    let rec = kind.record(&mut g, pass.features, pass.logits, omega).unwrap();
    let grads = g.backward(rec.value).unwrap();
    pass.bound.iter().map(|&(id, v)| (id, grads.get(v))).collect()
}

/// Inputs with no all-zero feature row under either statistics mode; a dead
/// row ties every logit and has no cosine.
fn live_inputs(model: &Model, seed: u64) -> Tensor {
    let mut r = rng(seed);
    loop {
        let x = normal(&mut r, 12, 6, 1.0);
        let live = [Stats::Batch, Stats::Running].iter().all(|&s| {
            let f = model.forward(&x, s).unwrap().0;
            (0..f.rows()).all(|i| f.row_slice(i).iter().any(|&v| v > 1e-3))
        });
        if live {
            return x;
        }
    }
}

#[test]
fn model_parameter_gradients_match_finite_differences() {
    for seed in [3u64, 4, 5] {
        let model = init_model(&ModelSpec { widths: vec![6, 9, 8], classes: 4, bias: true, seed }).unwrap();
        let x = live_inputs(&model, 100 + seed);
        for stats in [Stats::Batch, Stats::Running] {
            for kind in LossKind::ALL {
                let analytic = graph_route(&model, &x, stats, kind);
                assert_eq!(analytic.len(), model.select_params(ParamSelector::All).len());
                for (id, grad) in analytic {
                    let base = model.param(id).unwrap().clone();
                    let fd = finite_diff_grad(
                        |t| {
                            let mut probe = model.clone();
                            *probe.param_mut(id).unwrap() = t.clone();
                            Ok(value_route(&probe, &x, stats, kind))
                        },
                        &base,
                        scaled_step(&base, 1e-5),
                    )
                    .unwrap();
                    if stats == Stats::Batch && matches!(id, ParamId::DenseBias(_)) {
                        // batch normalization removes any per-channel shift
                        assert!(grad.max_abs() <= 1e-12 && fd.max_abs() <= 1e-8, "{kind} {id:?} should be flat");
                        continue;
                    }
                    let err = relative_error(&grad, &fd, 1e-10);
                    assert!(err <= TOL, "seed {seed} {stats:?} {kind} {id:?}: relative error {err:.3e}\n{:?}\n{:?}", grad.data(), fd.data());
                }
            }
        }
    }
}
