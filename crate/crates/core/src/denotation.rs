//! Silhouettes, restriction, and the and-gate and observer-based tests of
//! whether a silhouette denotes a property.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::HeatMap;
use crate::chess::PropertyKind;
use crate::error::{Error, Result};
use crate::nn::{ActivationSnapshot, Confusion, TrainConfig};
use crate::object::{full_geometry, Position, SnapshotDataset};
use crate::observer::{train_observer, ObserverKind};

/// A nonempty set of neuron positions, kept sorted by `(layer, neuron)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Position>", into = "Vec<Position>")]
pub struct Silhouette {
    positions: Vec<Position>,
}

impl Silhouette {
    /// Sorts the positions; rejects empty sets and duplicates.
    pub fn new(mut positions: Vec<Position>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidSilhouette("silhouette is empty".into()));
        }
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSilhouette("duplicate position".into()));
        }
        Ok(Silhouette { positions })
    }

    pub fn full(widths: &[usize]) -> Result<Self> {
        Self::new(full_geometry(widths))
    }

    pub fn singleton(layer: usize, neuron: usize) -> Self {
        Silhouette {
            positions: vec![Position::new(layer, neuron)],
        }
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_subset(&self, other: &Silhouette) -> bool {
        self.positions.iter().all(|p| other.positions.binary_search(p).is_ok())
    }

    /// Errors if any position lies outside the geometry.
    pub fn check(&self, widths: &[usize]) -> Result<()> {
        for p in &self.positions {
            if p.layer >= widths.len() || p.neuron >= widths[p.layer] {
                return Err(Error::PositionOutOfRange {
                    layer: p.layer,
                    neuron: p.neuron,
                    layers: widths.len(),
                    width: widths.get(p.layer).copied().unwrap_or(0),
                });
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<Position>> for Silhouette {
    type Error = Error;

    fn try_from(v: Vec<Position>) -> Result<Self> {
        Silhouette::new(v)
    }
}

impl From<Silhouette> for Vec<Position> {
    fn from(s: Silhouette) -> Self {
        s.positions
    }
}

/// `L{layer}N{neuron}` items joined by `+`, 0-based.
impl fmt::Display for Silhouette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.positions.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "L{}N{}", p.layer, p.neuron)?;
        }
        Ok(())
    }
}

impl FromStr for Silhouette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSilhouette(format!("cannot parse {s:?}; expected items like L1N42+L2N7"));
        let positions = s
            .split('+')
            .map(|item| {
                let item = item.trim().to_ascii_uppercase();
                let rest = item.strip_prefix('L').ok_or_else(bad)?;
                let (l, n) = rest.split_once('N').ok_or_else(bad)?;
                Ok(Position::new(
                    l.parse().map_err(|_| bad())?,
                    n.parse().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Silhouette::new(positions)
    }
}

/// Keeps only the silhouette's columns, in silhouette order.
pub fn restrict(ds: &SnapshotDataset, silhouette: &Silhouette) -> Result<SnapshotDataset> {
    silhouette.check(&ds.widths)?;
    let idx = silhouette
        .positions
        .iter()
        .map(|p| {
            ds.columns.binary_search(p).map_err(|_| {
                Error::InvalidSilhouette(format!("position L{}N{} was restricted away", p.layer, p.neuron))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(ds.len() * idx.len());
    for i in 0..ds.len() {
        let row = ds.row(i);
        values.extend(idx.iter().map(|&j| row[j]));
    }
    Ok(SnapshotDataset {
        property: ds.property,
        checkpoint_hash: ds.checkpoint_hash.clone(),
        widths: ds.widths.clone(),
        columns: silhouette.positions.clone(),
        values,
        labels: ds.labels.clone(),
        board_ids: ds.board_ids.clone(),
    })
}

/// 1 iff every selected activation is strictly above `threshold`.
pub fn and_gate_predict(snapshot: &ActivationSnapshot, silhouette: &Silhouette, threshold: f64) -> Result<bool> {
    let widths: Vec<usize> = snapshot.layers.iter().map(Vec::len).collect();
    silhouette.check(&widths)?;
    Ok(silhouette
        .positions
        .iter()
        .all(|p| snapshot.layers[p.layer][p.neuron] > threshold))
}

/// And-gate predictions for every row of a snapshot dataset.
pub fn and_gate_predict_dataset(ds: &SnapshotDataset, silhouette: &Silhouette, threshold: f64) -> Result<Vec<bool>> {
    let r = restrict(ds, silhouette)?;
    let w = r.feature_len();
    Ok(r.values
        .chunks_exact(w)
        .map(|row| row.iter().all(|&v| v > threshold))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    AndGate,
    Linear,
    Mlp,
    Conv,
}

impl Family {
    fn observer(self) -> Option<ObserverKind> {
        match self {
            Family::AndGate => None,
            Family::Linear => Some(ObserverKind::Linear),
            Family::Mlp => Some(ObserverKind::Mlp),
            Family::Conv => Some(ObserverKind::Conv),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::AndGate => "andgate",
            Family::Linear => "linear",
            Family::Mlp => "mlp",
            Family::Conv => "conv",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Family::AndGate, Family::Linear, Family::Mlp, Family::Conv]
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("and-gate") && *f == Family::AndGate))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    F1,
    Accuracy,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Measure::F1),
            "accuracy" => Ok(Measure::Accuracy),
            _ => Err(Error::InvalidConfig(format!("unknown measure {s:?}"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::F1 => "f1",
            Measure::Accuracy => "accuracy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenotationResult {
    pub silhouette: Silhouette,
    pub property: PropertyKind,
    pub family: Family,
    pub measure: Measure,
    pub performance: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub verdict: bool,
    pub test_size: usize,
}

/// The verdict rule: performance at least `t`.
pub fn verdict(performance: f64, t: f64) -> bool {
    performance >= t
}

/// Tests whether `silhouette` denotes the dataset's property with threshold
/// `t`. Observer families are fitted on `train`; every family is scored on
/// `test`.
pub fn assess_denotation(
    silhouette: &Silhouette,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    family: Family,
    t: f64,
    measure: Measure,
    config: &TrainConfig,
) -> Result<DenotationResult> {
    let test_r = restrict(test, silhouette)?;
    let (f1, accuracy) = match family.observer() {
        None => {
            let predicted = and_gate_predict_dataset(test, silhouette, 0.0)?;
            let c = Confusion::from_predictions(&predicted, &test.labels);
            (c.f1(), c.accuracy())
        }
        Some(kind) => {
            if kind == ObserverKind::Conv && !test_r.is_full_geometry() {
                return Err(Error::Unsupported(
                    "conv observers need the full geometry; restriction breaks the image".into(),
                ));
            }
            let train_r = restrict(train, silhouette)?;
            let (_, report) = train_observer(kind, &train_r, &test_r, config)?;
            (report.test.f1.unwrap_or(0.0), report.test.accuracy)
        }
    };
    let performance = match measure {
        Measure::F1 => f1,
        Measure::Accuracy => accuracy,
    };
    Ok(DenotationResult {
        silhouette: silhouette.clone(),
        property: test.property,
        family,
        measure,
        performance,
        f1,
        accuracy,
        threshold: t,
        verdict: verdict(performance, t),
        test_size: test.len(),
    })
}

/// The `k` positions with the largest absolute weight; ties go to the
/// earlier `(layer, neuron)`.
pub fn top_weight_silhouette(map: &HeatMap, k: usize) -> Result<Silhouette> {
    let mut all: Vec<(Position, f64)> = map
        .grid
        .iter()
        .enumerate()
        .flat_map(|(l, row)| {
            row.iter()
                .enumerate()
                .map(move |(n, &w)| (Position::new(l, n), w.abs()))
        })
        .collect();
    if k == 0 || k > all.len() {
        return Err(Error::InvalidSilhouette(format!(
            "k must lie in 1..={}, got {k}",
            all.len()
        )));
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Silhouette::new(all.into_iter().take(k).map(|(p, _)| p).collect())
}

/// Assesses the top-`k` pair and each of its singletons (plus the full
/// geometry) with the linear family.
pub fn top_weight_study(
    map: &HeatMap,
    k: usize,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    t: f64,
    measure: Measure,
    config: &TrainConfig,
) -> Result<Vec<DenotationResult>> {
    let top = top_weight_silhouette(map, k)?;
    let mut silhouettes = vec![Silhouette::full(&train.widths)?, top.clone()];
    if top.len() > 1 {
        silhouettes.extend(top.positions().iter().map(|p| Silhouette::singleton(p.layer, p.neuron)));
    }
    silhouettes
        .iter()
        .map(|s| assess_denotation(s, train, test, Family::Linear, t, measure, config))
        .collect()
}

pub fn write_denotation_csv<W: Write>(results: &[DenotationResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "silhouette",
        "family",
        "property",
        "measure",
        "performance",
        "t",
        "verdict",
    ])?;
    for r in results {
        w.write_record([
            r.silhouette.to_string(),
            r.family.to_string(),
            r.property.to_string(),
            r.measure.to_string(),
            r.performance.to_string(),
            r.threshold.to_string(),
            u8::from(r.verdict).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: usize) -> SnapshotDataset {
        let widths = vec![2, 3];
        let values: Vec<f64> = (0..rows * 5).map(|i| ((i * 7) % 5) as f64 - 1.0).collect();
        SnapshotDataset {
            property: PropertyKind::WhiteInCheck,
            checkpoint_hash: "h".into(),
            columns: full_geometry(&widths),
            widths,
            values,
            labels: (0..rows).map(|i| i % 3 == 0).collect(),
            board_ids: (0..rows as u64).collect(),
        }
    }

    fn snap(layers: Vec<Vec<f64>>) -> ActivationSnapshot {
        ActivationSnapshot { layers }
    }

    #[test]
    fn silhouette_validation() {
        assert!(Silhouette::new(vec![]).is_err());
        assert!(Silhouette::new(vec![Position::new(0, 1), Position::new(0, 1)]).is_err());
        let s: Silhouette = "L2N5+L0N3".parse().unwrap();
        assert_eq!(s.positions()[0], Position::new(0, 3));
        assert_eq!(s.to_string(), "L0N3+L2N5");
        assert!(matches!(s.check(&[4, 4]), Err(Error::PositionOutOfRange { .. })));
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Silhouette>(&json).unwrap(), s);
        assert!(serde_json::from_str::<Silhouette>("[]").is_err());
    }

    #[test]
    fn restriction_cases() {
        let ds = toy(6);
        let full = restrict(&ds, &Silhouette::full(&ds.widths).unwrap()).unwrap();
        assert_eq!(full, ds);
        let one = restrict(&ds, &Silhouette::singleton(1, 2)).unwrap();
        assert_eq!(one.feature_len(), 1);
        assert_eq!(one.values[0], ds.row(0)[4]);
        let outer: Silhouette = "L0N1+L1N0+L1N2".parse().unwrap();
        let inner: Silhouette = "L1N0+L1N2".parse().unwrap();
        assert_eq!(
            restrict(&restrict(&ds, &outer).unwrap(), &inner).unwrap(),
            restrict(&ds, &inner).unwrap()
        );
        assert!(restrict(&restrict(&ds, &inner).unwrap(), &outer).is_err());
        assert!(restrict(&ds, &Silhouette::singleton(2, 0)).is_err());
    }

    #[test]
    fn and_gate_examples() {
        let s: Silhouette = "L0N0+L1N1".parse().unwrap();
        assert!(!and_gate_predict(&snap(vec![vec![0.0; 2], vec![0.0; 2]]), &s, 0.0).unwrap());
        assert!(and_gate_predict(&snap(vec![vec![0.5, 0.0], vec![0.0, 1.2]]), &s, 0.0).unwrap());
        assert!(!and_gate_predict(&snap(vec![vec![0.5, 9.0], vec![9.0, 0.0]]), &s, 0.0).unwrap());
    }

    #[test]
    fn zero_threshold_accuracy_always_denotes() {
        let ds = toy(9);
        let r = assess_denotation(
            &Silhouette::singleton(0, 0),
            &ds,
            &ds,
            Family::AndGate,
            0.0,
            Measure::Accuracy,
            &TrainConfig::default(),
        )
        .unwrap();
        assert!(r.verdict);
    }

    #[test]
    fn conv_needs_full_geometry() {
        let ds = toy(9);
        let r = assess_denotation(
            &Silhouette::singleton(0, 0),
            &ds,
            &ds,
            Family::Conv,
            0.5,
            Measure::F1,
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn top_weights_by_magnitude() {
        let mut row = vec![0.0; 128];
        row[0] = 3.0;
        row[1] = -5.0;
        row[2] = 1.0;
        let map = HeatMap {
            grid: vec![row, vec![0.0; 128], vec![0.0; 128]],
            property: PropertyKind::MaterialAdvantage,
            config_hash: String::new(),
        };
        let s = top_weight_silhouette(&map, 2).unwrap();
        assert_eq!(s.positions(), &[Position::new(0, 0), Position::new(0, 1)]);
        assert_eq!(top_weight_silhouette(&map, 1).unwrap(), Silhouette::singleton(0, 1));
        assert_eq!(
            top_weight_silhouette(&map, 384).unwrap(),
            Silhouette::full(&[128; 3]).unwrap()
        );
        assert!(top_weight_silhouette(&map, 385).is_err());
        // ties resolve to the lexicographically first positions
        let tied = top_weight_silhouette(&map, 4).unwrap();
        assert_eq!(tied.positions()[3], Position::new(0, 3));
    }
}
