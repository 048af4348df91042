//! How often each recorded neuron fires, per-layer distributions of those
//! rates, and the random-annihilation control for layer 1.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chess::PositionRecord;
use crate::error::{Error, Result};
use crate::nn::ModelTensor;
use crate::object::{record_activations, SnapshotDataset};

/// Median with the midpoint convention for even counts. `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Right-continuous empirical CDF as `(value, fraction <= value)` steps,
/// one per distinct value.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => steps.push((x, frac)),
        }
    }
    steps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    pub dataset_id: String,
    pub boards: usize,
    /// `proportions[layer][neuron]`
    pub proportions: Vec<Vec<f64>>,
    pub layer_sorted: Vec<Vec<f64>>,
    pub overall_sorted: Vec<f64>,
    pub layer_medians: Vec<f64>,
    pub overall_median: f64,
    pub annihilated: Vec<usize>,
}

impl ProportionReport {
    /// Builds the report from per-neuron firing counts over `boards` boards.
    pub fn from_counts(dataset_id: &str, counts: &[Vec<u64>], boards: usize) -> Result<Self> {
        if boards == 0 {
            return Err(Error::EmptyDataset);
        }
        let proportions: Vec<Vec<f64>> = counts
            .iter()
            .map(|layer| layer.iter().map(|&c| c as f64 / boards as f64).collect())
            .collect();
        let sorted = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s
        };
        let layer_sorted: Vec<Vec<f64>> = proportions.iter().map(|p| sorted(p)).collect();
        let overall_sorted = sorted(&proportions.concat());
        Ok(ProportionReport {
            dataset_id: dataset_id.to_string(),
            boards,
            layer_medians: proportions.iter().map(|p| median(p)).collect(),
            overall_median: median(&overall_sorted),
            annihilated: proportions
                .iter()
                .map(|p| p.iter().filter(|&&x| x == 0.0).count())
                .collect(),
            proportions,
            layer_sorted,
            overall_sorted,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.proportions.iter().map(Vec::len).collect()
    }

    pub fn annihilated_fraction(&self, layer: usize) -> f64 {
        self.annihilated[layer] as f64 / self.proportions[layer].len() as f64
    }
}

/// Counts of strictly positive activations per neuron over rows of a
/// layer-major activation matrix.
pub fn firing_counts(values: &[f64], widths: &[usize]) -> Vec<Vec<u64>> {
    let total: usize = widths.iter().sum();
    let mut flat = vec![0u64; total];
    for row in values.chunks_exact(total) {
        for (c, &v) in flat.iter_mut().zip(row) {
            if v > 0.0 {
                *c += 1;
            }
        }
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &w in widths {
        out.push(flat[off..off + w].to_vec());
        off += w;
    }
    out
}

/// Per-neuron firing proportions of `model` over `records`.
pub fn neuron_label_proportions(
    model: &ModelTensor,
    records: &[PositionRecord],
    dataset_id: &str,
) -> Result<ProportionReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let widths = model.recorded_widths();
    let values = record_activations(model, records)?;
    ProportionReport::from_counts(dataset_id, &firing_counts(&values, &widths), records.len())
}

/// Same as [`neuron_label_proportions`] for an existing full-geometry snapshot.
pub fn proportions_from_snapshot(ds: &SnapshotDataset, dataset_id: &str) -> Result<ProportionReport> {
    if !ds.is_full_geometry() {
        return Err(Error::Unsupported(
            "proportions need the full activation geometry".into(),
        ));
    }
    ProportionReport::from_counts(dataset_id, &firing_counts(&ds.values, &ds.widths), ds.len())
}

/// Zeroes randomly chosen live neurons of `layer1` until the annihilated
/// fraction reaches `target_fraction` (to the nearest neuron) and returns the
/// median of the result.
pub fn annihilation_control(layer1: &[f64], target_fraction: f64, seed: u64) -> Result<f64> {
    Ok(median(&annihilate(layer1, target_fraction, seed)?))
}

/// The annihilated distribution itself.
pub fn annihilate(layer1: &[f64], target_fraction: f64, seed: u64) -> Result<Vec<f64>> {
    let n = layer1.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let current = layer1.iter().filter(|&&p| p == 0.0).count();
    let current_fraction = current as f64 / n as f64;
    if target_fraction < current_fraction || target_fraction > 1.0 {
        return Err(Error::TargetBelowCurrent {
            target: target_fraction,
            current: current_fraction,
        });
    }
    let target = ((target_fraction * n as f64).round() as usize).clamp(current, n);
    let mut live: Vec<usize> = (0..n).filter(|&i| layer1[i] != 0.0).collect();
    live.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = layer1.to_vec();
    for &i in live.iter().take(target - current) {
        out[i] = 0.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnihilationSummary {
    /// Deeper layer whose annihilated fraction is matched.
    pub matched_layer: usize,
    pub target_fraction: f64,
    pub achieved_fraction: f64,
    pub original_median: f64,
    pub single_draw_median: f64,
    pub mean_median: f64,
    pub std_median: f64,
    pub min_median: f64,
    pub max_median: f64,
    pub repetitions: usize,
    pub base_seed: u64,
}

/// Matches layer 1's annihilated fraction to each deeper layer, repeating the
/// draw with seeds `base_seed..base_seed + repetitions`.
pub fn annihilation_study(
    report: &ProportionReport,
    base_seed: u64,
    repetitions: usize,
) -> Result<Vec<AnnihilationSummary>> {
    let layer1 = &report.proportions[0];
    let mut out = Vec::new();
    for layer in 1..report.proportions.len() {
        let target = report.annihilated_fraction(layer);
        if target < report.annihilated_fraction(0) {
            log::warn!(
                "layer {} has fewer annihilated neurons than layer 1; control skipped",
                layer + 1
            );
            continue;
        }
        let medians = (0..repetitions as u64)
            .map(|r| annihilation_control(layer1, target, base_seed + r))
            .collect::<Result<Vec<_>>>()?;
        let drawn = annihilate(layer1, target, base_seed)?;
        let achieved = drawn.iter().filter(|&&p| p == 0.0).count() as f64 / drawn.len() as f64;
        let mean = medians.iter().sum::<f64>() / medians.len().max(1) as f64;
        let var = medians.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / medians.len().max(1) as f64;
        out.push(AnnihilationSummary {
            matched_layer: layer,
            target_fraction: target,
            achieved_fraction: achieved,
            original_median: report.layer_medians[0],
            single_draw_median: median(&drawn),
            mean_median: mean,
            std_median: var.sqrt(),
            min_median: medians.iter().copied().fold(f64::INFINITY, f64::min),
            max_median: medians.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            repetitions,
            base_seed,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCurve {
    pub name: String,
    pub steps: Vec<(f64, f64)>,
}

/// Overall curve first, then one per layer.
pub fn layer_cdfs(report: &ProportionReport) -> Vec<CdfCurve> {
    let mut curves = vec![CdfCurve {
        name: "all".into(),
        steps: ecdf(&report.overall_sorted),
    }];
    for (l, p) in report.proportions.iter().enumerate() {
        curves.push(CdfCurve {
            name: format!("layer {}", l + 1),
            steps: ecdf(p),
        });
    }
    curves
}

pub fn write_cdf_csv<W: Write>(curves: &[CdfCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve", "proportion", "cumulative_fraction"])?;
    for c in curves {
        for (x, y) in &c.steps {
            w.write_record([c.name.clone(), x.to_string(), y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

/// Step plots of the curves with a dashed vertical line at `median`.
pub fn cdf_svg(curves: &[CdfCurve], median: f64) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let px = |x: f64| pad + x * (w - 2.0 * pad);
    let py = |y: f64| h - pad - y * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<path d="M{} {} H{} M{} {} V{}" stroke="black" fill="none"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        px(0.0),
        py(0.0),
        py(1.0)
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#,
            px(t),
            py(0.0) + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#,
            px(0.0) - 4.0,
            py(t) + 4.0
        );
    }
    for (i, c) in curves.iter().enumerate() {
        let mut d = format!("M{} {}", px(0.0), py(0.0));
        for &(x, f) in &c.steps {
            let _ = write!(d, " H{} V{}", px(x), py(f));
        }
        let _ = write!(d, " H{}", px(1.0));
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<path class="cdf" d="{d}" stroke="{color}" fill="none" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            px(0.02),
            pad + 14.0 * i as f64,
            c.name
        );
    }
    if median.is_finite() {
        let _ = writeln!(
            s,
            r#"<line class="median" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black" stroke-dasharray="4 3"/>"#,
            py(0.0),
            py(1.0),
            x = px(median)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Per-neuron table `(layer, neuron, proportion_train, proportion_test)`.
pub fn write_proportion_csv<W: Write>(train: &ProportionReport, test: Option<&ProportionReport>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "neuron", "proportion_train", "proportion_test"])?;
    for (l, layer) in train.proportions.iter().enumerate() {
        for (n, p) in layer.iter().enumerate() {
            let t = test.map_or(String::new(), |r| r.proportions[l][n].to_string());
            w.write_record([l.to_string(), n.to_string(), p.to_string(), t])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn ecdf_steps() {
        assert_eq!(ecdf(&[0.5]), vec![(0.5, 1.0)]);
        assert_eq!(ecdf(&[0.2; 5]), vec![(0.2, 1.0)]);
        let c = ecdf(&[0.3, 0.1, 0.3, 0.9]);
        assert_eq!(c, vec![(0.1, 0.25), (0.3, 0.75), (0.9, 1.0)]);
    }

    #[test]
    fn annihilation_edges() {
        let p: Vec<f64> = (0..128).map(|i| if i < 10 { 0.0 } else { i as f64 / 128.0 }).collect();
        let current = 10.0 / 128.0;
        assert_eq!(annihilation_control(&p, current, 1).unwrap(), median(&p));
        assert_eq!(annihilation_control(&p, 1.0, 1).unwrap(), 0.0);
        assert!(matches!(
            annihilation_control(&p, 0.01, 1),
            Err(Error::TargetBelowCurrent { .. })
        ));
        let a = annihilation_control(&p, 0.3, 42).unwrap();
        assert_eq!(a.to_bits(), annihilation_control(&p, 0.3, 42).unwrap().to_bits());
        let drawn = annihilate(&p, 0.3, 42).unwrap();
        let frac = drawn.iter().filter(|&&x| x == 0.0).count() as f64 / 128.0;
        assert!((frac - 0.3).abs() <= 1.0 / 128.0);
    }

    #[test]
    fn report_from_counts() {
        let r = ProportionReport::from_counts("d", &[vec![0, 2, 4], vec![1, 1, 0]], 4).unwrap();
        assert_eq!(r.proportions, vec![vec![0.0, 0.5, 1.0], vec![0.25, 0.25, 0.0]]);
        assert_eq!(r.annihilated, vec![1, 1]);
        assert_eq!(r.layer_medians, vec![0.5, 0.25]);
        assert_eq!(r.overall_median, 0.25);
        assert!(ProportionReport::from_counts("d", &[vec![0]], 0).is_err());
    }

    #[test]
    fn cdf_plot_has_curves_and_median() {
        let r = ProportionReport::from_counts("d", &[vec![0, 2, 4], vec![1, 1, 0], vec![3, 3, 3]], 4).unwrap();
        let curves = layer_cdfs(&r);
        assert_eq!(curves.len(), 4);
        for c in &curves {
            assert!(c.steps.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
            assert_eq!(c.steps.last().unwrap().1, 1.0);
        }
        let svg = cdf_svg(&curves, r.overall_median);
        assert_eq!(svg.matches(r#"class="cdf""#).count(), 4);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
    }
}
