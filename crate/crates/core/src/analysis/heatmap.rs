use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chess::PropertyKind;
use crate::error::{Error, Result};
use crate::nn::{Layer, ModelTensor};

/// Signed weights of a linear observer laid out on the activation geometry.
/// Row 0 is the hidden layer nearest the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub grid: Vec<Vec<f64>>,
    pub property: PropertyKind,
    pub config_hash: String,
}

impl HeatMap {
    pub fn flatten(&self) -> Vec<f64> {
        self.grid.concat()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.grid.iter().map(Vec::len).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.grid.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let width = self.grid.iter().map(Vec::len).max().unwrap_or(0);
        let mut header = vec!["layer".to_string()];
        header.extend((0..width).map(|n| format!("n{n}")));
        w.write_record(&header)?;
        for (l, row) in self.grid.iter().enumerate() {
            let mut rec = vec![l.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the grid written by [`HeatMap::write_csv`].
    pub fn read_csv_grid<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
        let mut r = csv::Reader::from_reader(input);
        let mut grid = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("bad weight {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            grid.push(row);
        }
        Ok(grid)
    }
}

/// Reshapes a linear observer's weights (bias dropped) into the geometry.
pub fn heatmap_from_linear(
    model: &ModelTensor,
    widths: &[usize],
    property: PropertyKind,
    config_hash: &str,
) -> Result<HeatMap> {
    let [Layer::Dense(d)] = model.layers.as_slice() else {
        return Err(Error::Unsupported(
            "heat maps need a single-layer linear observer".into(),
        ));
    };
    let total: usize = widths.iter().sum();
    if d.weights.shape() != [1, total] {
        return Err(Error::ShapeMismatch {
            expected: vec![1, total],
            actual: d.weights.shape().to_vec(),
        });
    }
    let w = d.weights.values();
    let mut grid = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &n in widths {
        grid.push(w[off..off + n].to_vec());
        off += n;
    }
    Ok(HeatMap {
        grid,
        property,
        config_hash: config_hash.to_string(),
    })
}

const NEG: (f64, f64, f64) = (33.0, 102.0, 172.0);
const MID: (f64, f64, f64) = (247.0, 247.0, 247.0);
const POS: (f64, f64, f64) = (178.0, 24.0, 43.0);

/// Diverging colour: blue at `-max`, near-white at 0, red at `+max`.
pub fn cell_color(value: f64, max_abs: f64) -> String {
    let t = if max_abs > 0.0 {
        (value / max_abs).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let end = if t < 0.0 { NEG } else { POS };
    let a = t.abs();
    let mix = |m: f64, e: f64| (m + (e - m) * a).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(MID.0, end.0),
        mix(MID.1, end.1),
        mix(MID.2, end.2)
    )
}

pub const CELL_W: usize = 6;
pub const CELL_H: usize = 40;

pub fn heatmap_svg(map: &HeatMap) -> String {
    let max = map.max_abs();
    let layers = map.grid.len();
    let width = map.grid.iter().map(Vec::len).max().unwrap_or(0);
    let (left, top) = (70, 30);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        left + width * CELL_W + 20,
        top + layers * CELL_H + 30
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="18">{} linear observer weights (max |w| = {max:.4})</text>"#,
        map.property
    );
    for (l, row) in map.grid.iter().enumerate() {
        let y = top + (layers - 1 - l) * CELL_H;
        let _ = writeln!(s, r#"<text x="4" y="{}">layer {}</text>"#, y + CELL_H / 2 + 4, l + 1);
        for (n, &v) in row.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect class="cell" data-layer="{l}" data-neuron="{n}" x="{}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}"/>"#,
                left + n * CELL_W,
                cell_color(v, max)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the SVG and the raw CSV grid.
pub fn render_heatmap(map: &HeatMap, svg_path: &Path, csv_path: &Path) -> Result<()> {
    std::fs::write(svg_path, heatmap_svg(map))?;
    map.write_csv(std::fs::File::create(csv_path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Tensor};

    fn linear(weights: Vec<f64>) -> ModelTensor {
        let n = weights.len();
        let layer = Layer::Dense(Dense {
            weights: Tensor::new(vec![1, n], weights).unwrap(),
            bias: Tensor::from_vec(vec![0.7]),
            activation: crate::nn::Activation::Sigmoid,
        });
        ModelTensor::new(vec![n], vec![layer], vec![]).unwrap()
    }

    #[test]
    fn reshape_is_layer_major_and_lossless() {
        let w: Vec<f64> = (0..384).map(f64::from).collect();
        let map = heatmap_from_linear(&linear(w.clone()), &[128; 3], PropertyKind::WhiteInCheck, "h").unwrap();
        assert_eq!(map.grid[1][0], 128.0);
        assert_eq!(map.flatten(), w);
    }

    #[test]
    fn zero_weights_give_midpoint_cells() {
        let map = heatmap_from_linear(&linear(vec![0.0; 384]), &[128; 3], PropertyKind::WhiteInCheck, "h").unwrap();
        assert!(map.flatten().iter().all(|&v| v == 0.0));
        let svg = heatmap_svg(&map);
        assert_eq!(svg.matches(r##"fill="#f7f7f7""##).count(), 384);
    }

    #[test]
    fn single_outlier_is_the_only_extreme_cell() {
        let mut w = vec![0.01; 384];
        w[200] = 5.0;
        let map = heatmap_from_linear(&linear(w), &[128; 3], PropertyKind::WhiteInCheck, "h").unwrap();
        let svg = heatmap_svg(&map);
        assert_eq!(svg.matches(r##"fill="#b2182b""##).count(), 1);
        assert_eq!(cell_color(-5.0, 5.0), "#2166ac");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let w: Vec<f64> = (0..384).map(|i| (i as f64 * 0.731).sin() / 3.0).collect();
        let map = heatmap_from_linear(&linear(w), &[128; 3], PropertyKind::MaterialAdvantage, "h").unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        assert_eq!(HeatMap::read_csv_grid(buf.as_slice()).unwrap(), map.grid);
    }

    #[test]
    fn rejects_nonlinear_observer() {
        let m = crate::nn::ModelBuilder::new(vec![384])
            .dense(4, crate::nn::Activation::Relu)
            .dense(1, crate::nn::Activation::Sigmoid)
            .build(0)
            .unwrap();
        assert!(heatmap_from_linear(&m, &[128; 3], PropertyKind::WhiteInCheck, "h").is_err());
    }
}
