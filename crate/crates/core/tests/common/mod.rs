//! Test support: random inputs and plain-loop reference implementations of
//! the losses that share no code with the graph.

#![allow(dead_code)]

use std::io::Write;

use otta_lab::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.to_rows()
}

pub fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn ref_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn ref_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>()
}

pub fn ref_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn ref_cos_matrix(z: &Tensor, w: &Tensor) -> Vec<Vec<f64>> {
    rows(z).iter().map(|zi| rows(w).iter().map(|wc| ref_cos(zi, wc)).collect()).collect()
}

pub fn ref_em(logits: &Tensor) -> f64 {
    let r = rows(logits);
    r.iter().map(|x| ref_entropy(&ref_softmax(x))).sum::<f64>() / r.len() as f64
}

/// Cross-entropy against labels fixed at the unperturbed argmax.
pub fn ref_pl_fixed(logits: &Tensor, labels: &[usize]) -> f64 {
    let r = rows(logits);
    r.iter().zip(labels).map(|(x, &y)| -ref_softmax(x)[y].ln()).sum::<f64>() / r.len() as f64
}

pub fn ref_com(z: &Tensor, w: &Tensor) -> f64 {
    let c = ref_cos_matrix(z, w);
    c.iter().map(|row| row[first_argmax(row)].clamp(-1.0, 1.0).acos()).sum::<f64>() / c.len() as f64
}

pub fn ref_comm(z: &Tensor, w: &Tensor) -> f64 {
    let c = ref_cos_matrix(z, w);
    c.iter()
        .map(|row| {
            let hat = first_argmax(row);
            let clamped: Vec<f64> = row.iter().map(|&v| v.max(1e-6)).collect();
            -(clamped[hat] / clamped.iter().sum::<f64>()).ln()
        })
        .sum::<f64>()
        / c.len() as f64
}

/// Print one result line straight to the process stderr so it shows up even
/// when the harness captures test output.
pub fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[acceptance] criterion {criterion} ({title}): {verdict} | {detail}");
}
