//! Toy-geometry traces, correctness histograms, batch-size sweeps, and their
//! CSV/SVG renderings.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt_dataset, AdaptConfig, AdaptLoss};
use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::losses::{cosine_matrix, entropy, softmax_probs, LossKind};
use crate::model::{Model, Stats};
use crate::numerics::{argmax, Graph, Tensor};

pub const TRACE_HEADER: [&str; 9] = ["step", "p0", "p1", "p2", "entropy", "cos0", "cos1", "cos2", "pred_class"];
pub const SWEEP_HEADER: [&str; 4] = ["loss", "batch_size", "seed", "final_err"];
pub const HISTOGRAM_HEADER: [&str; 5] = ["quantity", "bin_lo", "bin_hi", "count_correct", "count_incorrect"];

/// Initial points with `|z|` below this are rejected: the cosine has no
/// direction at the simplex centre.
pub const SIMPLEX_EXCLUSION_RADIUS: f64 = 1e-3;

/// Class weight directions at 90, 210 and 330 degrees.
pub fn simplex_weights() -> Tensor {
    let rows: Vec<Vec<f64>> = [90.0f64, 210.0, 330.0]
        .iter()
        .map(|deg| {
            let (s, c) = deg.to_radians().sin_cos();
            vec![c, s]
        })
        .collect();
    Tensor::from_rows(&rows).expect("three finite rows")
}

/// The least-squares `z` with `W z = log p - mean(log p)`.
pub fn simplex_init_z(p: [f64; 3]) -> Result<[f64; 2]> {
    if p.iter().any(|&v| !(v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("init", format!("{p:?} must be strictly positive and sum to 1")));
    }
    let logs = p.map(f64::ln);
    let mean = logs.iter().sum::<f64>() / 3.0;
    let centered = logs.map(|l| l - mean);
    let w = simplex_weights();
    // (W^T W)^-1 = (2/3) I for this W
    let mut z = [0.0; 2];
    for (k, zk) in z.iter_mut().enumerate() {
        *zk = (2.0 / 3.0) * (0..3).map(|c| w.get(c, k) * centered[c]).sum::<f64>();
    }
    Ok(z)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    /// Optimize the feature point `z` with logits `W z`.
    #[default]
    Feature,
    /// Optimize the logits directly (EM and PL only).
    Logit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub p: [f64; 3],
    pub entropy: f64,
    pub cosines: [f64; 3],
    pub pred_class: usize,
    /// Negative loss gradient expressed as a logit change.
    pub logit_descent: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexTrace {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub steps: Vec<TraceStep>,
}

fn arr3(s: &[f64]) -> [f64; 3] {
    [s[0], s[1], s[2]]
}

/// Gradient descent from `init_p` on the three-class toy problem, recording
/// the state before every update and after the last one.
pub fn simplex_trace(
    loss: LossKind,
    init_p: [f64; 3],
    lr: f64,
    steps: usize,
    parametrization: Parametrization,
) -> Result<SimplexTrace> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::invalid("learning rate", format!("{lr} must be finite and >= 0")));
    }
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if parametrization == Parametrization::Logit && loss.is_cosine() {
        return Err(Error::invalid("parametrization", format!("{loss} needs the feature parametrization")));
    }
    let z0 = simplex_init_z(init_p)?;
    let norm = z0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < SIMPLEX_EXCLUSION_RADIUS {
        return Err(Error::invalid(
            "init",
            format!("{init_p:?} is too close to uniform (|z| = {norm:.3e} < {SIMPLEX_EXCLUSION_RADIUS:e})"),
        ));
    }
    let w = simplex_weights();
    let mut z = Tensor::row(z0.to_vec())?;
    let mut logits = Tensor::row(init_p.map(f64::ln).to_vec())?;
    {
        let mean = logits.data().iter().sum::<f64>() / 3.0;
        logits.data_mut().iter_mut().for_each(|v| *v -= mean);
    }
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut g = Graph::new();
        let omega = g.constant(w.clone());
        let (var, x, feat) = match parametrization {
            Parametrization::Feature => {
                let zv = g.param(z.clone());
                let wt = g.transpose(omega)?;
                let x = g.matmul(zv, wt)?;
                (zv, x, zv)
            }
            Parametrization::Logit => {
                let xv = g.param(logits.clone());
                let zt = project_to_plane(logits.data());
                let zc = g.constant(zt);
                (xv, xv, zc)
            }
        };
        let rec = loss.record(&mut g, feat, x, omega)?;
        let grad = g.backward(rec.value)?.get(var);
        let xv = g.value(x).clone();
        let p = softmax_probs(&xv)?;
        let cos = cosine_matrix(g.value(feat), &w)?;
        let logit_descent = match parametrization {
            // W applied to -grad_z
            Parametrization::Feature => {
                let mut d = [0.0; 3];
                for (c, dc) in d.iter_mut().enumerate() {
                    *dc = -(w.get(c, 0) * grad.data()[0] + w.get(c, 1) * grad.data()[1]);
                }
                d
            }
            Parametrization::Logit => arr3(&grad.data().iter().map(|v| -v).collect::<Vec<_>>()),
        };
        out.push(TraceStep {
            step,
            p: arr3(p.data()),
            entropy: entropy(&p)?[0],
            cosines: arr3(cos.row(0)),
            pred_class: argmax(cos.row(0)),
            logit_descent,
        });
        if step == steps {
            break;
        }
        let target = match parametrization {
            Parametrization::Feature => &mut z,
            Parametrization::Logit => &mut logits,
        };
        for (v, gv) in target.data_mut().iter_mut().zip(grad.data()) {
            *v -= lr * gv;
        }
        if !target.all_finite() {
            return Err(Error::NonFinite(format!("simplex iterate at step {}", step + 1)));
        }
    }
    Ok(SimplexTrace { loss, learning_rate: lr, steps: out })
}

fn project_to_plane(logits: &[f64]) -> Tensor {
    let w = simplex_weights();
    let mean = logits.iter().sum::<f64>() / 3.0;
    let z: Vec<f64> =
        (0..2).map(|k| (2.0 / 3.0) * (0..3).map(|c| w.get(c, k) * (logits[c] - mean)).sum::<f64>()).collect();
    Tensor::from_parts(vec![1, 2], z)
}

pub fn trace_csv(trace: &SimplexTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(TRACE_HEADER).map_err(e)?;
    for s in &trace.steps {
        let mut rec = vec![s.step.to_string()];
        rec.extend(s.p.iter().map(|&v| sig9(v)));
        rec.push(sig9(s.entropy));
        rec.extend(s.cosines.iter().map(|&v| sig9(v)));
        rec.push(s.pred_class.to_string());
        w.write_record(&rec).map_err(e)?;
    }
    w.into_inner().map_err(|err| Error::Io(err.into_error()))
}

/// Ternary coordinates in the unit frame: class 0 at the top vertex
/// `(0.5, sqrt(3)/2)`, class 1 bottom-left `(0, 0)`, class 2 bottom-right `(1, 0)`.
pub fn barycentric(p: [f64; 3]) -> (f64, f64) {
    (0.5 * p[0] + p[2], p[0] * 3f64.sqrt() / 2.0)
}

const SVG_SIZE: f64 = 400.0;
const SVG_MARGIN: f64 = 40.0;

fn svg_xy(p: [f64; 3]) -> (f64, f64) {
    let (x, y) = barycentric(p);
    let side = SVG_SIZE - 2.0 * SVG_MARGIN;
    (SVG_MARGIN + side * x, SVG_SIZE - SVG_MARGIN - side * y)
}

pub fn trace_svg(trace: &SimplexTrace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}">"#);
    let v: Vec<(f64, f64)> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].into_iter().map(svg_xy).collect();
    let _ = writeln!(
        s,
        r#"<polygon points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="none" stroke="black"/>"#,
        v[0].0, v[0].1, v[1].0, v[1].1, v[2].0, v[2].1
    );
    for (i, (x, y)) in v.iter().enumerate() {
        let dy = if i == 0 { -8.0 } else { 18.0 };
        let _ = writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle" font-size="12">class {i}</text>"#, y + dy);
    }
    let pts: Vec<(f64, f64)> = trace.steps.iter().map(|st| svg_xy(st.p)).collect();
    if pts.len() > 1 {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#, path.join(" "));
    }
    if let Some((x, y)) = pts.first() {
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="crimson"/>"#);
    }
    let _ = writeln!(
        s,
        r#"<text x="{SVG_MARGIN}" y="20" font-size="12">{} lr={}</text>"#,
        trace.loss,
        sig9(trace.learning_rate)
    );
    s.push_str("</svg>\n");
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Entropy,
    CosinePred,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Entropy => "entropy",
            Quantity::CosinePred => "cosine_pred",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramPair {
    pub quantity: Quantity,
    /// `bins + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    pub count_correct: Vec<usize>,
    pub count_incorrect: Vec<usize>,
}

impl HistogramPair {
    /// Bin `values` over `[lo, hi]`; out-of-range values are clamped onto the
    /// end bins and the top edge belongs to the last bin.
    pub fn build(quantity: Quantity, lo: f64, hi: f64, bins: usize, values: &[f64], correct: &[bool]) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::invalid("histogram", format!("{bins} bins over [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        let mut count_correct = vec![0; bins];
        let mut count_incorrect = vec![0; bins];
        for (&v, &ok) in values.iter().zip(correct) {
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            if ok {
                count_correct[b] += 1;
            } else {
                count_incorrect[b] += 1;
            }
        }
        Ok(HistogramPair { quantity, edges, count_correct, count_incorrect })
    }

    pub fn total(&self) -> usize {
        self.count_correct.iter().chain(&self.count_incorrect).sum()
    }
}

/// Per-sample frozen-model scores.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleScores {
    pub entropy: Vec<f64>,
    pub cos_pred: Vec<f64>,
    pub correct: Vec<bool>,
    pub n_classes: usize,
}

impl SampleScores {
    /// Mean predicted-class cosine of (correct, incorrect) samples; `None` for an empty group.
    pub fn mean_cos_by_correctness(&self) -> (Option<f64>, Option<f64>) {
        let group = |want: bool| {
            let v: Vec<f64> =
                self.cos_pred.iter().zip(&self.correct).filter(|(_, &c)| c == want).map(|(&x, _)| x).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        (group(true), group(false))
    }
}

pub fn score_samples(model: &Model, data: &LabeledData, stats: Stats) -> Result<SampleScores> {
    let x = data.x()?;
    let (features, logits) = model.forward(&x, stats)?;
    let p = softmax_probs(&logits)?;
    let cos = cosine_matrix(&features, &model.head().omega)?;
    let correct = (0..logits.rows()).map(|i| argmax(logits.row_slice(i)) == data.labels()[i]).collect();
    Ok(SampleScores { entropy: entropy(&p)?, cos_pred: cos.max_per_row(), correct, n_classes: model.classes() })
}

/// Entropy and predicted-class cosine histograms split by correctness.
pub fn correctness_histograms(
    model: &Model,
    data: &LabeledData,
    bins: usize,
    stats: Stats,
) -> Result<(HistogramPair, HistogramPair)> {
    let s = score_samples(model, data, stats)?;
    let log_c = (s.n_classes as f64).ln().max(f64::MIN_POSITIVE);
    Ok((
        HistogramPair::build(Quantity::Entropy, 0.0, log_c, bins, &s.entropy, &s.correct)?,
        HistogramPair::build(Quantity::CosinePred, -1.0, 1.0, bins, &s.cos_pred, &s.correct)?,
    ))
}

pub fn histogram_csv(hists: &[HistogramPair]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(HISTOGRAM_HEADER).map_err(e)?;
    for h in hists {
        for b in 0..h.count_correct.len() {
            w.write_record([
                h.quantity.name().to_string(),
                sig9(h.edges[b]),
                sig9(h.edges[b + 1]),
                h.count_correct[b].to_string(),
                h.count_incorrect[b].to_string(),
            ])
            .map_err(e)?;
        }
    }
    w.into_inner().map_err(|err| Error::Io(err.into_error()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub loss: AdaptLoss,
    pub batch_size: usize,
    pub seed: u64,
    /// `None` when the cell failed or scored no samples.
    pub final_err: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failed(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }

    /// Mean final error over seeds for one cell, ignoring failed runs.
    pub fn mean_error(&self, loss: AdaptLoss, batch_size: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.loss == loss && r.batch_size == batch_size)
            .filter_map(|r| r.final_err)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = |e: csv::Error| Error::Malformed(e.to_string());
        w.write_record(SWEEP_HEADER).map_err(e)?;
        for r in &self.rows {
            w.write_record([
                r.loss.name().to_string(),
                r.batch_size.to_string(),
                r.seed.to_string(),
                sig9(r.final_err.unwrap_or(f64::NAN)),
            ])
            .map_err(e)?;
        }
        w.into_inner().map_err(|err| Error::Io(err.into_error()))
    }
}

/// One adaptation run per (loss, batch size, seed), in parallel, each on its
/// own copy of `model`. `data_for_seed` supplies the (corrupted) stream data
/// and `base` everything except loss, batch size and seed. Rows are sorted by
/// (loss name, batch size, seed); failed cells are kept with their message.
pub fn batch_sweep<F>(
    model: &Model,
    data_for_seed: F,
    batch_sizes: &[usize],
    losses: &[AdaptLoss],
    seeds: &[u64],
    base: &AdaptConfig,
) -> SweepTable
where
    F: Fn(u64) -> Result<LabeledData> + Sync,
{
    let cells: Vec<(AdaptLoss, usize, u64)> = losses
        .iter()
        .flat_map(|&l| batch_sizes.iter().flat_map(move |&b| seeds.iter().map(move |&s| (l, b, s))))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .into_par_iter()
        .map(|(loss, batch_size, seed)| {
            let cfg = AdaptConfig { loss, batch_size, seed, ..*base };
            let run = data_for_seed(seed).and_then(|data| adapt_dataset(&mut model.clone(), &data, &cfg));
            match run {
                Ok(r) => SweepRow { loss, batch_size, seed, final_err: r.cumulative_top1_error, failure: None },
                Err(e) => SweepRow { loss, batch_size, seed, final_err: None, failure: Some(error_chain(&e)) },
            }
        })
        .collect();
    rows.sort_by(|a, b| (a.loss.name(), a.batch_size, a.seed).cmp(&(b.loss.name(), b.batch_size, b.seed)));
    SweepTable { rows }
}

fn error_chain(e: &Error) -> String {
    let mut out = e.to_string();
    let mut cur: Option<&dyn std::error::Error> = std::error::Error::source(e);
    while let Some(s) = cur {
        out.push_str(": ");
        out.push_str(&s.to_string());
        cur = s.source();
    }
    out
}

const PALETTE: [&str; 5] = ["crimson", "steelblue", "darkgreen", "darkorange", "purple"];

/// Line chart of mean final error against batch size (log2 axis), one line per loss.
pub fn sweep_svg(table: &SweepTable) -> String {
    let (w, h, m) = (480.0, 320.0, 50.0);
    let mut sizes: Vec<usize> = table.rows.iter().map(|r| r.batch_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut losses: Vec<AdaptLoss> = Vec::new();
    for r in &table.rows {
        if !losses.contains(&r.loss) {
            losses.push(r.loss);
        }
    }
    let lx: Vec<f64> = sizes.iter().map(|&b| (b as f64).log2()).collect();
    let (xmin, xmax) = (lx.first().copied().unwrap_or(0.0), lx.last().copied().unwrap_or(1.0));
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |v: f64| m + (w - 2.0 * m) * (v - xmin) / xspan;
    let py = |e: f64| h - m - (h - 2.0 * m) * e;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    for (&b, &x) in sizes.iter().zip(&lx) {
        let _ = writeln!(s, r#"<text x="{:.3}" y="{}" text-anchor="middle" font-size="11">{b}</text>"#, px(x), h - m + 16.0);
    }
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.3}" text-anchor="end" font-size="11">{t}</text>"#, m - 6.0, py(t) + 4.0);
    }
    for (i, &loss) in losses.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = sizes
            .iter()
            .zip(&lx)
            .filter_map(|(&b, &x)| table.mean_error(loss, b).map(|e| format!("{:.3},{:.3}", px(x), py(e))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, pts.join(" "));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}" font-size="12">{loss}</text>"#, w - m + 4.0, m + 14.0 * i as f64);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}
