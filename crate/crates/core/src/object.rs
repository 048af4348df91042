//! The chess object model and activation-snapshot datasets built from it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chess::encode::BOARD_TENSOR_LEN;
use crate::chess::{PositionRecord, PropertyKind};
use crate::error::{Error, Result};
use crate::nn::{
    evaluate, fit, Activation, Dataset, EpochRecord, FitOutcome, ModelBuilder, ModelTensor, Targets, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub input_size: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        ObjectSpec {
            input_size: BOARD_TENSOR_LEN,
            hidden: vec![128, 128, 128],
            outputs: 64,
        }
    }
}

/// ReLU hidden layers, each followed by a recording point, and a softmax head.
pub fn build_object_model(spec: &ObjectSpec, seed: u64) -> Result<ModelTensor> {
    let mut b = ModelBuilder::new(vec![spec.input_size]);
    for &h in &spec.hidden {
        b = b.dense(h, Activation::Relu).record();
    }
    b.dense(spec.outputs, Activation::Softmax).build(seed)
}

/// Inputs and from-square classes for the records that carry a move.
pub fn object_dataset(records: &[PositionRecord]) -> Result<Dataset> {
    let with_move: Vec<&PositionRecord> = records.iter().filter(|r| r.from_square.is_some()).collect();
    let mut inputs = vec![0.0; with_move.len() * BOARD_TENSOR_LEN];
    for (r, row) in with_move.iter().zip(inputs.chunks_exact_mut(BOARD_TENSOR_LEN)) {
        r.tensor.write_f64(row);
    }
    let classes = with_move.iter().map(|r| r.from_square.unwrap() as usize).collect();
    Dataset::new(inputs, BOARD_TENSOR_LEN, Targets::Classes(classes))
}

/// Seeded split of record indices by game. Returns `(train, test)`, each in
/// the original record order.
pub fn split_by_game(records: &[PositionRecord], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut games: Vec<u32> = records.iter().map(|r| r.game_id).collect();
    games.sort_unstable();
    games.dedup();
    games.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((games.len() as f64 * test_fraction).round() as usize).min(games.len());
    let mut test_games = games[..n_test].to_vec();
    test_games.sort_unstable();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in records.iter().enumerate() {
        if test_games.binary_search(&r.game_id).is_ok() {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub uniform_baseline: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Fits the object model and reports top-1 accuracy on the fitted rows
/// (validation rows excluded) and on the test set.
pub fn train_object(
    model: ModelTensor,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<(FitOutcome, ObjectReport)> {
    let outcome = fit(model, train, config)?;
    let train_accuracy = evaluate(&outcome.model, &train.subset(&outcome.train_indices))?.accuracy;
    let test_accuracy = if test.is_empty() {
        0.0
    } else {
        evaluate(&outcome.model, test)?.accuracy
    };
    let report = ObjectReport {
        train_accuracy,
        test_accuracy,
        uniform_baseline: 1.0 / outcome.model.output_len() as f64,
        train_size: train.len(),
        test_size: test.len(),
        stopped_epoch: outcome.stopped_epoch,
        best_epoch: outcome.best_epoch,
        history: outcome.history.clone(),
    };
    Ok((outcome, report))
}

/// A neuron position in the recorded activation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub layer: usize,
    pub neuron: usize,
}

impl Position {
    pub fn new(layer: usize, neuron: usize) -> Self {
        Position { layer, neuron }
    }
}

/// All positions of a geometry in layer-major order.
pub fn full_geometry(widths: &[usize]) -> Vec<Position> {
    widths
        .iter()
        .enumerate()
        .flat_map(|(l, &w)| (0..w).map(move |n| Position::new(l, n)))
        .collect()
}

/// Activation rows labelled with one property. `columns` names the
/// geometry position of each feature; a fresh snapshot holds every position
/// in layer-major order, a restricted one a sorted subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub property: PropertyKind,
    pub checkpoint_hash: String,
    pub widths: Vec<usize>,
    pub columns: Vec<Position>,
    pub values: Vec<f64>,
    pub labels: Vec<bool>,
    pub board_ids: Vec<u64>,
}

/// `game_id` in the high half, ply in the low half.
pub fn board_id(record: &PositionRecord) -> u64 {
    (u64::from(record.game_id) << 32) | u64::from(record.ply)
}

/// Recorded activations for each record, `records.len() x sum(widths)`.
pub fn record_activations(model: &ModelTensor, records: &[PositionRecord]) -> Result<Vec<f64>> {
    if model.input_len() != BOARD_TENSOR_LEN {
        return Err(Error::ShapeMismatch {
            expected: vec![BOARD_TENSOR_LEN],
            actual: model.input_shape.clone(),
        });
    }
    const CHUNK: usize = 512;
    let total: usize = model.recorded_widths().iter().sum();
    let mut out = Vec::with_capacity(records.len() * total);
    let mut x = Vec::new();
    for chunk in records.chunks(CHUNK) {
        x.clear();
        x.resize(chunk.len() * BOARD_TENSOR_LEN, 0.0);
        for (r, row) in chunk.iter().zip(x.chunks_exact_mut(BOARD_TENSOR_LEN)) {
            r.tensor.write_f64(row);
        }
        out.extend(model.forward_recorded(&x, chunk.len())?.1);
    }
    Ok(out)
}

/// Snapshots every board and labels it with `property`.
pub fn snapshot_dataset(
    model: &ModelTensor,
    checkpoint_hash: &str,
    records: &[PositionRecord],
    property: PropertyKind,
) -> Result<SnapshotDataset> {
    let values = record_activations(model, records)?;
    Ok(SnapshotDataset::from_activations(
        model,
        checkpoint_hash,
        records,
        values,
        property,
    ))
}

/// One snapshot pass shared by all three properties.
pub fn snapshot_all(
    model: &ModelTensor,
    checkpoint_hash: &str,
    records: &[PositionRecord],
) -> Result<Vec<SnapshotDataset>> {
    let values = record_activations(model, records)?;
    Ok(PropertyKind::ALL
        .iter()
        .map(|&p| SnapshotDataset::from_activations(model, checkpoint_hash, records, values.clone(), p))
        .collect())
}

impl SnapshotDataset {
    fn from_activations(
        model: &ModelTensor,
        checkpoint_hash: &str,
        records: &[PositionRecord],
        values: Vec<f64>,
        property: PropertyKind,
    ) -> Self {
        let widths = model.recorded_widths();
        SnapshotDataset {
            property,
            checkpoint_hash: checkpoint_hash.to_string(),
            columns: full_geometry(&widths),
            widths,
            values,
            labels: records.iter().map(|r| r.label(property)).collect(),
            board_ids: records.iter().map(board_id).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.feature_len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn is_full_geometry(&self) -> bool {
        self.columns == full_geometry(&self.widths)
    }

    /// Mean of the labels.
    pub fn label_proportion(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(self.labels.iter().filter(|&&l| l).count() as f64 / self.len() as f64)
    }

    pub fn subset(&self, idx: &[usize]) -> SnapshotDataset {
        let mut values = Vec::with_capacity(idx.len() * self.feature_len());
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        SnapshotDataset {
            property: self.property,
            checkpoint_hash: self.checkpoint_hash.clone(),
            widths: self.widths.clone(),
            columns: self.columns.clone(),
            values,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            board_ids: idx.iter().map(|&i| self.board_ids[i]).collect(),
        }
    }

    /// Splits off the last `tail_fraction` of rows: `(head, tail)`.
    pub fn split_tail(&self, tail_fraction: f64) -> (SnapshotDataset, SnapshotDataset) {
        let n_tail = ((self.len() as f64 * tail_fraction).round() as usize).min(self.len());
        let cut = self.len() - n_tail;
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Binary-target dataset for observer training.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let targets = self.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        Dataset::new(self.values.clone(), self.feature_len(), Targets::Binary(targets))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        writeln!(
            w,
            "# format=neurodenote-snapshot version=1 property={} checkpoint={} widths={}",
            self.property,
            self.checkpoint_hash,
            widths.join(",")
        )?;
        let mut csv = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self
            .columns
            .iter()
            .map(|p| format!("l{}n{}", p.layer, p.neuron))
            .collect();
        header.push("label".into());
        header.push("board_id".into());
        csv.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            rec.push(u8::from(self.labels[i]).to_string());
            rec.push(self.board_ids[i].to_string());
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first)?;
        let meta = parse_meta(first.trim(), "neurodenote-snapshot")?;
        let property: PropertyKind = meta_field(&meta, "property")?.parse()?;
        let checkpoint_hash = meta_field(&meta, "checkpoint")?.to_string();
        let widths = meta_field(&meta, "widths")?
            .split(',')
            .map(|s| s.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = csv::Reader::from_reader(r);
        let header = csv.headers()?.clone();
        let n_features = header
            .len()
            .checked_sub(2)
            .ok_or_else(|| Error::Format("short header".into()))?;
        let columns = header
            .iter()
            .take(n_features)
            .map(parse_column)
            .collect::<Result<Vec<_>>>()?;
        let mut ds = SnapshotDataset {
            property,
            checkpoint_hash,
            widths,
            columns,
            values: Vec::new(),
            labels: Vec::new(),
            board_ids: Vec::new(),
        };
        for rec in csv.records() {
            let rec = rec?;
            for v in rec.iter().take(n_features) {
                ds.values
                    .push(v.parse().map_err(|_| Error::Format(format!("bad activation {v:?}")))?);
            }
            ds.labels.push(&rec[n_features] == "1");
            ds.board_ids.push(
                rec[n_features + 1]
                    .parse()
                    .map_err(|_| Error::Format("bad board_id".into()))?,
            );
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(SNAP_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&[self.property.index() as u8])?;
        w.write_all(&(self.checkpoint_hash.len() as u32).to_le_bytes())?;
        w.write_all(self.checkpoint_hash.as_bytes())?;
        w.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for &wd in &self.widths {
            w.write_all(&(wd as u32).to_le_bytes())?;
        }
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        for p in &self.columns {
            w.write_all(&(p.layer as u32).to_le_bytes())?;
            w.write_all(&(p.neuron as u32).to_le_bytes())?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for v in self.row(i) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[u8::from(self.labels[i])])?;
            w.write_all(&self.board_ids[i].to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAP_MAGIC || read_u32(&mut r)? != 1 {
            return Err(Error::Format("not a snapshot cache".into()));
        }
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        let property = *PropertyKind::ALL
            .get(b[0] as usize)
            .ok_or_else(|| Error::Format("bad property".into()))?;
        let mut hash = vec![0u8; read_u32(&mut r)? as usize];
        r.read_exact(&mut hash)?;
        let checkpoint_hash = String::from_utf8(hash).map_err(|e| Error::Format(e.to_string()))?;
        let widths = (0..read_u32(&mut r)?)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_cols = read_u32(&mut r)? as usize;
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let layer = read_u32(&mut r)? as usize;
            columns.push(Position::new(layer, read_u32(&mut r)? as usize));
        }
        let mut n = [0u8; 8];
        r.read_exact(&mut n)?;
        let n = u64::from_le_bytes(n) as usize;
        let mut ds = SnapshotDataset {
            property,
            checkpoint_hash,
            widths,
            columns,
            values: Vec::with_capacity(n * n_cols),
            labels: Vec::with_capacity(n),
            board_ids: Vec::with_capacity(n),
        };
        let mut f = [0u8; 8];
        for _ in 0..n {
            for _ in 0..n_cols {
                r.read_exact(&mut f)?;
                ds.values.push(f64::from_le_bytes(f));
            }
            r.read_exact(&mut b)?;
            ds.labels.push(b[0] != 0);
            r.read_exact(&mut f)?;
            ds.board_ids.push(u64::from_le_bytes(f));
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        if is_csv(path) {
            self.write_csv(f)
        } else {
            self.write_binary(f)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        if is_csv(path) {
            Self::read_csv(f)
        } else {
            Self::read_binary(f)
        }
    }

    fn validate(&self) -> Result<()> {
        let geometry = full_geometry(&self.widths);
        if self.columns.iter().any(|p| geometry.binary_search(p).is_err())
            || self.columns.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Format("columns do not fit the recorded geometry".into()));
        }
        if self.values.len() != self.len() * self.feature_len() || self.board_ids.len() != self.len() {
            return Err(Error::Format("row count mismatch".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite activation".into()));
        }
        Ok(())
    }
}

const SNAP_MAGIC: &[u8; 8] = b"NDSNAP\0\0";

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn parse_meta(line: &str, format: &str) -> Result<Vec<(String, String)>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing metadata line".into()))?;
    let pairs: Vec<(String, String)> = body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    if meta_field(&pairs, "format")? != format || meta_field(&pairs, "version")? != "1" {
        return Err(Error::Format(format!("expected {format} version 1")));
    }
    Ok(pairs)
}

fn meta_field<'a>(meta: &'a [(String, String)], key: &str) -> Result<&'a str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Format(format!("missing metadata field {key}")))
}

fn parse_column(name: &str) -> Result<Position> {
    let bad = || Error::Format(format!("bad column name {name:?}"));
    let rest = name.strip_prefix('l').ok_or_else(bad)?;
    let (l, n) = rest.split_once('n').ok_or_else(bad)?;
    Ok(Position::new(
        l.parse().map_err(|_| bad())?,
        n.parse().map_err(|_| bad())?,
    ))
}
