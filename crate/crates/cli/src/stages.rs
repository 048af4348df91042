//! Pipeline stages. Each stage reads what it needs from the output
//! directory (or takes it from the previous stage), writes its artifacts and
//! records them in the manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use neurodenote::analysis::{
    annihilation_study, cdf_svg, heatmap_from_linear, layer_cdfs, neuron_label_proportions, render_heatmap,
    write_cdf_csv, write_proportion_csv, AnnihilationSummary,
};
use neurodenote::chess::cache::PositionCache;
use neurodenote::chess::pgn::parse_pgn;
use neurodenote::chess::positions::{records_from_fen_list, records_from_games};
use neurodenote::chess::synth::generate_games;
use neurodenote::denotation::{assess_denotation, top_weight_study, write_denotation_csv};
use neurodenote::nn::{model_hash, write_history_csv, Checkpoint, Metrics};
use neurodenote::object::{build_object_model, object_dataset, snapshot_all, split_by_game, ObjectReport};
use neurodenote::observer::{train_observer, write_results_csv};
use neurodenote::{
    DenotationResult, HeatMap, ModelTensor, ObserverKind, ObserverReport, PositionRecord, PropertyKind,
    ProportionReport, Silhouette, SnapshotDataset,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SilhouetteSpec};
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, MANIFEST_FILE};

pub const POSITIONS: &str = "positions.ndpos";
pub const INGEST_SUMMARY: &str = "ingest/summary.json";
pub const OBJECT_MODEL: &str = "object/model.json";
pub const OBJECT_REPORT: &str = "object/report.json";
pub const OBJECT_HISTORY: &str = "object/history.csv";
pub const OBSERVER_TABLE: &str = "observers/results.csv";
pub const DENOTATION_LEDGER: &str = "denotation/ledger.csv";
pub const PROPORTION_REPORT: &str = "proportions/report.json";
pub const PROPORTION_NEURONS: &str = "proportions/neurons.csv";
pub const PROPORTION_CDF_CSV: &str = "proportions/cdf.csv";
pub const PROPORTION_CDF_SVG: &str = "proportions/cdf.svg";
pub const METRICS: &str = "metrics.json";

pub fn snapshot_path(property: PropertyKind, part: &str) -> String {
    format!("snapshots/{property}.{part}.ndsnap")
}

pub fn observer_report_path(kind: ObserverKind, property: PropertyKind) -> String {
    format!("observers/{kind}_{property}.json")
}

pub fn observer_model_path(kind: ObserverKind, property: PropertyKind) -> String {
    format!("observers/{kind}_{property}.model.json")
}

pub fn heatmap_path(property: PropertyKind, ext: &str) -> String {
    format!("heatmaps/{property}.{ext}")
}

pub fn denotation_path(property: PropertyKind) -> String {
    format!("denotation/{property}.json")
}

/// An open output directory with its manifest.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Run {
    /// Opens `cfg.output_dir`, continuing its manifest when the config hash
    /// matches and starting a fresh one otherwise.
    pub fn open(cfg: ExperimentConfig) -> CliResult<Self> {
        let root = cfg.output_dir.clone();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        let hash = cfg.hash();
        let seeds = serde_json::to_value(cfg.seeds).expect("seeds serialize");
        let path = root.join(MANIFEST_FILE);
        let manifest = match Manifest::load(&path) {
            Ok(m) if m.config_hash == hash => m,
            _ => Manifest::new(hash, seeds),
        };
        Ok(Run { cfg, root, manifest })
    }

    pub fn save_manifest(&self) -> CliResult<()> {
        self.manifest.save(&self.root.join(MANIFEST_FILE))
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Runs `write` on the artifact's full path and records the result.
    fn emit(
        &mut self,
        rel: &str,
        kind: &str,
        stage: &str,
        write: impl FnOnce(&Path) -> neurodenote::Result<()>,
    ) -> CliResult<()> {
        let full = self.path(rel);
        if let Some(dir) = full.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        write(&full).map_err(|e| CliError::io(&full, e))?;
        self.manifest.record(&self.root, rel, kind, stage)
    }

    fn emit_json<T: Serialize>(&mut self, rel: &str, kind: &str, stage: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
        self.emit(rel, kind, stage, |p| Ok(fs::write(p, text)?))
    }

    fn emit_csv(
        &mut self,
        rel: &str,
        kind: &str,
        stage: &str,
        write: impl FnOnce(BufWriter<File>) -> neurodenote::Result<()>,
    ) -> CliResult<()> {
        self.emit(rel, kind, stage, |p| write(BufWriter::new(File::create(p)?)))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> CliResult<T> {
        let p = self.path(rel);
        let text =
            fs::read_to_string(&p).map_err(|e| CliError::io(&p, format!("{e}; run the producing stage first")))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(&p, e))
    }

    pub fn load_records(&self) -> CliResult<Vec<PositionRecord>> {
        let p = self.path(POSITIONS);
        Ok(PositionCache::load(&p)
            .map_err(|e| CliError::io(&p, format!("{e}; run `ingest` first")))?
            .records)
    }

    pub fn load_object_model(&self) -> CliResult<ModelTensor> {
        let p = self.path(OBJECT_MODEL);
        Ok(Checkpoint::load(&p)
            .map_err(|e| CliError::io(&p, format!("{e}; run `train-object` first")))?
            .model)
    }

    pub fn load_snapshots(&self, property: PropertyKind) -> CliResult<(SnapshotDataset, SnapshotDataset)> {
        let load = |part| {
            let p = self.path(&snapshot_path(property, part));
            SnapshotDataset::load(&p).map_err(|e| CliError::io(&p, format!("{e}; run `snapshot` first")))
        };
        Ok((load("train")?, load("test")?))
    }

    pub fn load_observer_report(&self, kind: ObserverKind, property: PropertyKind) -> CliResult<ObserverReport> {
        self.read_json(&observer_report_path(kind, property))
    }

    /// Heat map rebuilt from the saved linear observer.
    pub fn load_heatmap(&self, property: PropertyKind) -> CliResult<HeatMap> {
        let p = self.path(&observer_model_path(ObserverKind::Linear, property));
        let model = Checkpoint::load(&p)
            .map_err(|e| CliError::io(&p, format!("{e}; run `train-observer` first")))?
            .model;
        let report = self.load_observer_report(ObserverKind::Linear, property)?;
        let (train, _) = self.load_snapshots(property)?;
        Ok(heatmap_from_linear(
            &model,
            &train.widths,
            property,
            &report.config_hash,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub source_hash: String,
    pub games: usize,
    pub positions: usize,
    /// Games dropped by the PGN reader or cut short by an illegal move.
    pub skipped_games: usize,
    pub fen_errors: Vec<String>,
    pub label_proportions: BTreeMap<String, f64>,
}

fn expand_pgn_inputs(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgn")))
                .collect();
            if found.is_empty() {
                return Err(CliError::Data(format!(
                    "{}: directory holds no .pgn files",
                    p.display()
                )));
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn source_hash(cfg: &ExperimentConfig, pgn_files: &[PathBuf]) -> CliResult<[u8; 32]> {
    let mut h = Sha256::new();
    let key = serde_json::json!({
        "labels": cfg.labels,
        "limits": cfg.limits,
        "synth": cfg.inputs.synth,
    });
    h.update(key.to_string().as_bytes());
    let files = pgn_files
        .iter()
        .map(|p| ("pgn", p))
        .chain(cfg.inputs.fen.iter().map(|p| ("fen", p)));
    for (tag, p) in files.chain(cfg.inputs.cache.iter().map(|p| ("cache", p))) {
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        h.update(tag.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().into())
}

fn label_proportions(records: &[PositionRecord]) -> BTreeMap<String, f64> {
    PropertyKind::ALL
        .iter()
        .map(|&p| {
            let pos = records.iter().filter(|r| r.label(p)).count();
            (p.name().to_string(), pos as f64 / records.len().max(1) as f64)
        })
        .collect()
}

/// Builds (or reuses) the position cache. Returns the records and whether
/// the cache was reused.
pub fn ingest(run: &mut Run) -> CliResult<(Vec<PositionRecord>, IngestSummary, bool)> {
    const STAGE: &str = "ingest";
    let cfg = run.cfg.clone();
    if cfg.inputs.is_empty() {
        return Err(CliError::Data(
            "no inputs configured (inputs.pgn, inputs.fen, inputs.cache or inputs.synth)".into(),
        ));
    }
    let pgn_files = expand_pgn_inputs(&cfg.inputs.pgn)?;
    let hash = source_hash(&cfg, &pgn_files)?;

    if let Ok(cache) = PositionCache::load(&run.path(POSITIONS)) {
        if cache.source_hash == hash {
            if let Ok(summary) = run.read_json::<IngestSummary>(INGEST_SUMMARY) {
                log::info!("input unchanged; reusing {}", run.path(POSITIONS).display());
                run.manifest.record(&run.root, POSITIONS, "positions", STAGE)?;
                run.manifest
                    .record(&run.root, INGEST_SUMMARY, "ingest_summary", STAGE)?;
                return Ok((cache.records, summary, true));
            }
        }
    }

    let max_pos = cfg.limits.max_positions;
    let mut records = Vec::new();
    let mut skipped = 0;
    let mut games = Vec::new();
    if let Some(p) = &cfg.inputs.cache {
        records = PositionCache::load(p).map_err(|e| CliError::io(p, e))?.records;
    }
    for p in &pgn_files {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let parsed = parse_pgn(&text);
        for w in &parsed.warnings {
            log::warn!("{} game {}: {}", p.display(), w.game_index, w.message);
        }
        skipped += parsed.skipped;
        games.extend(parsed.games);
    }
    if let Some(s) = &cfg.inputs.synth {
        games.extend(generate_games(s).into_iter().map(|(g, _)| g));
    }
    if let Some(cap) = cfg.limits.max_games {
        games.truncate(cap);
    }
    let first_game = records.iter().map(|r| r.game_id + 1).max().unwrap_or(0);
    let remaining = max_pos.map(|m| m.saturating_sub(records.len()));
    let (mut from_games, stats) = records_from_games(&games, &cfg.labels, remaining)?;
    from_games.iter_mut().for_each(|r| r.game_id += first_game);
    records.extend(from_games);
    skipped += stats.truncated_games;

    let mut fen_errors = Vec::new();
    for p in &cfg.inputs.fen {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let next = records.iter().map(|r| r.game_id + 1).max().unwrap_or(0);
        let (recs, errs) = records_from_fen_list(&text, &cfg.labels, next);
        fen_errors.extend(errs.into_iter().map(|e| format!("{}: {e}", p.display())));
        records.extend(recs);
    }
    if let Some(m) = max_pos {
        records.truncate(m);
    }
    if records.is_empty() {
        let mut paths: Vec<String> = pgn_files
            .iter()
            .chain(&cfg.inputs.fen)
            .map(|p| p.display().to_string())
            .collect();
        if cfg.inputs.synth.is_some() {
            paths.push("<synthetic games>".into());
        }
        return Err(CliError::Data(format!(
            "no readable positions in: {}",
            paths.join(", ")
        )));
    }
    let mut game_ids: Vec<u32> = records.iter().map(|r| r.game_id).collect();
    game_ids.sort_unstable();
    game_ids.dedup();
    let summary = IngestSummary {
        source_hash: hex::encode(hash),
        games: game_ids.len(),
        positions: records.len(),
        skipped_games: skipped,
        fen_errors,
        label_proportions: label_proportions(&records),
    };
    let cache = PositionCache {
        source_hash: hash,
        records,
    };
    run.emit(POSITIONS, "positions", STAGE, |p| cache.save(p))?;
    run.emit_json(INGEST_SUMMARY, "ingest_summary", STAGE, &summary)?;
    Ok((cache.records, summary, false))
}

/// Object-model split of record indices, `(train, test)`.
pub fn object_split(cfg: &ExperimentConfig, records: &[PositionRecord]) -> (Vec<usize>, Vec<usize>) {
    split_by_game(records, cfg.object.test_fraction, cfg.seeds.split)
}

fn pick(records: &[PositionRecord], idx: &[usize]) -> Vec<PositionRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

pub fn train_object_stage(run: &mut Run, records: &[PositionRecord]) -> CliResult<(ModelTensor, ObjectReport)> {
    const STAGE: &str = "train-object";
    let cfg = run.cfg.clone();
    let (train_idx, test_idx) = object_split(&cfg, records);
    let train = object_dataset(&pick(records, &train_idx))?;
    let test = object_dataset(&pick(records, &test_idx))?;
    let model = build_object_model(&cfg.object.spec, cfg.seeds.object_init)?;
    let (outcome, report) = neurodenote::object::train_object(model, &train, &test, &cfg.object.train)
        .map_err(|e| CliError::stage(STAGE, e))?;
    log::info!(
        "object model: train top-1 {:.4}, test top-1 {:.4} ({} / {} positions)",
        report.train_accuracy,
        report.test_accuracy,
        report.train_size,
        report.test_size
    );
    let mut ck = Checkpoint::new(outcome.model);
    ck.metadata.insert("task".into(), "object".into());
    ck.metadata.insert("config_hash".into(), cfg.hash().into());
    ck.metadata.insert("init_seed".into(), cfg.seeds.object_init.into());
    run.emit(OBJECT_MODEL, "object_model", STAGE, |p| ck.save(p))?;
    run.emit_json(OBJECT_REPORT, "object_report", STAGE, &report)?;
    run.emit_csv(OBJECT_HISTORY, "object_history", STAGE, |w| {
        write_history_csv(&report.history, w)
    })?;
    Ok((ck.model, report))
}

/// Observer snapshots per configured property: the first `pool_cap` object
/// test boards, split into a head (observer training) and a tail (test).
pub fn snapshot_stage(
    run: &mut Run,
    records: &[PositionRecord],
    model: &ModelTensor,
) -> CliResult<BTreeMap<PropertyKind, (SnapshotDataset, SnapshotDataset)>> {
    const STAGE: &str = "snapshot";
    let cfg = run.cfg.clone();
    let (_, mut test_idx) = object_split(&cfg, records);
    if let Some(cap) = cfg.observer.pool_cap {
        test_idx.truncate(cap);
    }
    let pool = pick(records, &test_idx);
    let hash = model_hash(model);
    let mut out = BTreeMap::new();
    for ds in snapshot_all(model, &hash, &pool)? {
        if !cfg.observer.properties.contains(&ds.property) {
            continue;
        }
        let (train, test) = ds.split_tail(cfg.observer.test_tail_fraction);
        if train.is_empty() || test.is_empty() {
            return Err(CliError::stage(
                STAGE,
                format!("observer pool of {} boards is too small", pool.len()),
            ));
        }
        run.emit(&snapshot_path(ds.property, "train"), "snapshot", STAGE, |p| {
            train.save(p)
        })?;
        run.emit(&snapshot_path(ds.property, "test"), "snapshot", STAGE, |p| test.save(p))?;
        out.insert(ds.property, (train, test));
    }
    Ok(out)
}

/// Trains the requested observers, saving linear ones for heat maps.
pub fn observer_stage(
    run: &mut Run,
    snapshots: &BTreeMap<PropertyKind, (SnapshotDataset, SnapshotDataset)>,
    kinds: &[ObserverKind],
) -> CliResult<Vec<ObserverReport>> {
    const STAGE: &str = "train-observer";
    let cfg = run.cfg.clone();
    let mut reports = Vec::new();
    for (&property, (train, test)) in snapshots {
        for &kind in kinds {
            let started = Instant::now();
            let (model, report) = train_observer(kind, train, test, &cfg.observer.train_config(kind))
                .map_err(|e| CliError::stage(STAGE, e))?;
            log::info!(
                "{kind}/{property}: test acc {:.4}, test F1 {:.4} in {:.1?}",
                report.test.accuracy,
                report.test.f1.unwrap_or(0.0),
                started.elapsed()
            );
            run.emit_json(&observer_report_path(kind, property), "observer_report", STAGE, &report)?;
            if kind == ObserverKind::Linear {
                let ck = Checkpoint::new(model);
                run.emit(&observer_model_path(kind, property), "observer_model", STAGE, |p| {
                    ck.save(p)
                })?;
            }
            reports.push(report);
        }
    }
    write_observer_table(run)?;
    Ok(reports)
}

/// Rewrites the results table from every observer report on record.
fn write_observer_table(run: &mut Run) -> CliResult<()> {
    let mut all = Vec::new();
    for property in PropertyKind::ALL {
        for kind in ObserverKind::ALL {
            if run.manifest.find(&observer_report_path(kind, property)).is_some() {
                all.push(run.load_observer_report(kind, property)?);
            }
        }
    }
    run.emit_csv(OBSERVER_TABLE, "observer_table", "train-observer", |w| {
        write_results_csv(&all, w)
    })
}

pub fn heatmap_stage(run: &mut Run, properties: &[PropertyKind]) -> CliResult<Vec<HeatMap>> {
    const STAGE: &str = "heatmap";
    let mut maps = Vec::new();
    for &property in properties {
        let map = run.load_heatmap(property)?;
        let (svg, csv) = (heatmap_path(property, "svg"), heatmap_path(property, "csv"));
        let dir = run.path("heatmaps");
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        render_heatmap(&map, &run.path(&svg), &run.path(&csv)).map_err(|e| CliError::stage(STAGE, e))?;
        run.manifest.record(&run.root, &svg, "heatmap_svg", STAGE)?;
        run.manifest.record(&run.root, &csv, "heatmap_csv", STAGE)?;
        maps.push(map);
    }
    Ok(maps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenotationStudy {
    pub property: PropertyKind,
    pub top_k: usize,
    /// Full geometry first, then the top-k set and its singletons.
    pub results: Vec<DenotationResult>,
    pub custom: Vec<DenotationResult>,
}

fn parse_silhouette(text: &str, widths: &[usize]) -> CliResult<Silhouette> {
    let s = if text == "full" {
        Silhouette::full(widths)?
    } else {
        text.parse::<Silhouette>()?
    };
    s.check(widths)?;
    Ok(s)
}

/// Top-|weight| study per property plus the configured silhouettes.
pub fn silhouette_stage(run: &mut Run, properties: &[PropertyKind]) -> CliResult<Vec<DenotationStudy>> {
    const STAGE: &str = "silhouette";
    let cfg = run.cfg.clone();
    let d = &cfg.denotation;
    let train_cfg = cfg.observer.train_config(ObserverKind::Linear);
    let mut studies = Vec::new();
    for &property in properties {
        let map = run.load_heatmap(property)?;
        let (train, test) = run.load_snapshots(property)?;
        let results = top_weight_study(&map, d.top_k, &train, &test, d.threshold, d.measure, &train_cfg)
            .map_err(|e| CliError::stage(STAGE, e))?;
        let custom = assess_custom(&d.silhouettes, property, &train, &test, d.measure, &cfg)?;
        let study = DenotationStudy {
            property,
            top_k: d.top_k,
            results,
            custom,
        };
        run.emit_json(&denotation_path(property), "denotation", STAGE, &study)?;
        studies.push(study);
    }
    let all: Vec<DenotationResult> = studies
        .iter()
        .flat_map(|s| s.results.iter().chain(&s.custom).cloned())
        .collect();
    run.emit_csv(DENOTATION_LEDGER, "denotation_ledger", STAGE, |w| {
        write_denotation_csv(&all, w)
    })?;
    Ok(studies)
}

fn assess_custom(
    specs: &[SilhouetteSpec],
    property: PropertyKind,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    measure: neurodenote::Measure,
    cfg: &ExperimentConfig,
) -> CliResult<Vec<DenotationResult>> {
    let mut out = Vec::new();
    for spec in specs.iter().filter(|s| s.property == property) {
        let s = parse_silhouette(&spec.silhouette, &train.widths)?;
        let kind = match spec.family {
            neurodenote::Family::Mlp => ObserverKind::Mlp,
            neurodenote::Family::Conv => ObserverKind::Conv,
            _ => ObserverKind::Linear,
        };
        let r = assess_denotation(
            &s,
            train,
            test,
            spec.family,
            spec.threshold,
            measure,
            &cfg.observer.train_config(kind),
        )
        .map_err(|e| CliError::stage("silhouette", e))?;
        out.push(r);
    }
    Ok(out)
}

/// One ad-hoc assessment; nothing is written.
pub fn assess_one(run: &Run, property: PropertyKind, spec: &SilhouetteSpec) -> CliResult<DenotationResult> {
    let (train, test) = run.load_snapshots(property)?;
    let mut specs = vec![spec.clone()];
    specs[0].property = property;
    Ok(assess_custom(&specs, property, &train, &test, run.cfg.denotation.measure, &run.cfg)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionStudy {
    pub train: ProportionReport,
    pub test: ProportionReport,
    /// Largest per-neuron |train - test| proportion gap.
    pub train_test_max_gap: f64,
    /// Share of neurons whose train and test proportions agree within 0.005.
    pub within_0_005: f64,
    pub annihilation: Vec<AnnihilationSummary>,
}

pub fn proportion_stage(run: &mut Run, records: &[PositionRecord], model: &ModelTensor) -> CliResult<ProportionStudy> {
    const STAGE: &str = "proportions";
    let cfg = run.cfg.clone();
    let (train_idx, test_idx) = object_split(&cfg, records);
    let train = neuron_label_proportions(model, &pick(records, &train_idx), "object-train")?;
    let test = neuron_label_proportions(model, &pick(records, &test_idx), "object-test")?;
    let gaps: Vec<f64> = train
        .proportions
        .concat()
        .iter()
        .zip(test.proportions.concat())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let annihilation = annihilation_study(&train, cfg.seeds.annihilation, cfg.analysis.annihilation_repetitions)
        .map_err(|e| CliError::stage(STAGE, e))?;
    let study = ProportionStudy {
        train_test_max_gap: gaps.iter().copied().fold(0.0, f64::max),
        within_0_005: gaps.iter().filter(|&&g| g <= 0.005).count() as f64 / gaps.len().max(1) as f64,
        train,
        test,
        annihilation,
    };
    let curves = layer_cdfs(&study.train);
    run.emit_json(PROPORTION_REPORT, "proportion_report", STAGE, &study)?;
    run.emit_csv(PROPORTION_NEURONS, "proportion_table", STAGE, |w| {
        write_proportion_csv(&study.train, Some(&study.test), w)
    })?;
    run.emit_csv(PROPORTION_CDF_CSV, "cdf_table", STAGE, |w| write_cdf_csv(&curves, w))?;
    let svg = cdf_svg(&curves, study.train.overall_median);
    run.emit(PROPORTION_CDF_SVG, "cdf_plot", STAGE, |p| Ok(fs::write(p, svg)?))?;
    Ok(study)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverRow {
    pub kind: ObserverKind,
    pub property: PropertyKind,
    pub train: Metrics,
    pub test: Metrics,
    pub majority_test: Metrics,
    pub all_positive_test: Metrics,
    pub test_label_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenotationRow {
    pub property: PropertyKind,
    pub silhouette: String,
    pub family: String,
    pub f1: f64,
    pub accuracy: f64,
    pub verdict: bool,
}

/// The headline numbers of a run, gathered from its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config_hash: String,
    pub ingest: Option<IngestSummary>,
    pub object: Option<ObjectMetrics>,
    pub observers: Vec<ObserverRow>,
    pub denotation: Vec<DenotationRow>,
    pub proportions: Option<ProportionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub train_top1: f64,
    pub test_top1: f64,
    pub uniform_baseline: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionMetrics {
    pub overall_median: f64,
    pub layer_medians: Vec<f64>,
    pub annihilated: Vec<usize>,
    pub train_test_max_gap: f64,
    pub annihilation_mean_medians: Vec<f64>,
}

pub fn collect_metrics(run: &Run) -> CliResult<RunMetrics> {
    let has = |rel: &str| run.manifest.find(rel).is_some();
    let ingest = if has(INGEST_SUMMARY) {
        Some(run.read_json(INGEST_SUMMARY)?)
    } else {
        None
    };
    let object = if has(OBJECT_REPORT) {
        let r: ObjectReport = run.read_json(OBJECT_REPORT)?;
        Some(ObjectMetrics {
            train_top1: r.train_accuracy,
            test_top1: r.test_accuracy,
            uniform_baseline: r.uniform_baseline,
            train_size: r.train_size,
            test_size: r.test_size,
            best_epoch: r.best_epoch,
        })
    } else {
        None
    };
    let mut observers = Vec::new();
    let mut denotation = Vec::new();
    for property in PropertyKind::ALL {
        for kind in ObserverKind::ALL {
            if has(&observer_report_path(kind, property)) {
                let r = run.load_observer_report(kind, property)?;
                observers.push(ObserverRow {
                    kind,
                    property,
                    train: r.train,
                    test: r.test,
                    majority_test: r.baselines.majority.test,
                    all_positive_test: r.baselines.all_positive.test,
                    test_label_proportion: r.test_label_proportion,
                });
            }
        }
        if has(&denotation_path(property)) {
            let s: DenotationStudy = run.read_json(&denotation_path(property))?;
            denotation.extend(s.results.iter().chain(&s.custom).map(|r| DenotationRow {
                property,
                silhouette: if r.silhouette.len() == 384 {
                    "full".into()
                } else {
                    r.silhouette.to_string()
                },
                family: r.family.to_string(),
                f1: r.f1,
                accuracy: r.accuracy,
                verdict: r.verdict,
            }));
        }
    }
    let proportions = if has(PROPORTION_REPORT) {
        let s: ProportionStudy = run.read_json(PROPORTION_REPORT)?;
        Some(ProportionMetrics {
            overall_median: s.train.overall_median,
            layer_medians: s.train.layer_medians.clone(),
            annihilated: s.train.annihilated.clone(),
            train_test_max_gap: s.train_test_max_gap,
            annihilation_mean_medians: s.annihilation.iter().map(|a| a.mean_median).collect(),
        })
    } else {
        None
    };
    Ok(RunMetrics {
        config_hash: run.manifest.config_hash.clone(),
        ingest,
        object,
        observers,
        denotation,
        proportions,
    })
}

pub fn write_metrics(run: &mut Run) -> CliResult<RunMetrics> {
    let m = collect_metrics(run)?;
    run.emit_json(METRICS, "metrics", "pipeline", &m)?;
    Ok(m)
}

/// Runs `f` as stage `name`, marking the manifest on failure.
fn staged<T>(run: &mut Run, name: &str, f: impl FnOnce(&mut Run) -> CliResult<T>) -> CliResult<T> {
    let started = Instant::now();
    log::info!("stage {name}: start");
    match f(run) {
        Ok(v) => {
            run.save_manifest()?;
            log::info!("stage {name}: done in {:.1?}", started.elapsed());
            Ok(v)
        }
        Err(e) => {
            run.manifest.failed_stage = Some(name.to_string());
            run.save_manifest()?;
            Err(match e {
                CliError::Usage(_) => e,
                CliError::Data(m) if name == "ingest" => CliError::Data(format!("stage `ingest`: {m}")),
                CliError::Data(m) => CliError::stage(name, m),
                stage @ CliError::Stage { .. } => stage,
            })
        }
    }
}

/// Every stage in order; returns the run's metrics.
pub fn pipeline(run: &mut Run) -> CliResult<RunMetrics> {
    run.manifest.failed_stage = None;
    let (records, _, _) = staged(run, "ingest", ingest)?;
    let (model, _) = staged(run, "train-object", |r| train_object_stage(r, &records))?;
    let snapshots = staged(run, "snapshot", |r| snapshot_stage(r, &records, &model))?;
    let kinds = run.cfg.observer.kinds.clone();
    staged(run, "train-observer", |r| observer_stage(r, &snapshots, &kinds))?;
    drop(snapshots);
    if kinds.contains(&ObserverKind::Linear) {
        let props = run.cfg.observer.properties.clone();
        staged(run, "heatmap", |r| heatmap_stage(r, &props))?;
        staged(run, "silhouette", |r| silhouette_stage(r, &props))?;
    } else {
        log::warn!("no linear observers configured; heat maps and silhouette studies skipped");
    }
    staged(run, "proportions", |r| proportion_stage(r, &records, &model))?;
    staged(run, "metrics", write_metrics)
}
