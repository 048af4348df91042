//! Human-readable summary of a manifest.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::manifest::{Integrity, Manifest};
use crate::stages::{collect_metrics, Run};
use crate::ExperimentConfig;

#[derive(Debug)]
pub struct Rendered {
    pub text: String,
    pub missing: Vec<String>,
    pub tampered: Vec<String>,
}

impl Rendered {
    pub fn exit_code(&self) -> i32 {
        if self.missing.is_empty() && self.tampered.is_empty() {
            0
        } else {
            2
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

/// Renders the report for the manifest at `path`; artifacts are resolved
/// relative to its directory.
pub fn render(path: &Path) -> CliResult<Rendered> {
    let manifest = Manifest::load(path)?;
    if manifest.entries.is_empty() {
        return Err(CliError::Data(format!("no artifacts in {}", path.display())));
    }
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut missing = Vec::new();
    let mut tampered = Vec::new();
    for issue in manifest.verify(&root) {
        match issue {
            Integrity::Missing(p) => missing.push(p),
            Integrity::HashMismatch(p) => tampered.push(p),
            Integrity::Ok => {}
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "config {}", manifest.config_hash);
    if let Some(stage) = &manifest.failed_stage {
        let _ = writeln!(out, "INCOMPLETE: stage `{stage}` failed");
    }
    let mut readable = manifest.clone();
    readable.entries.retain(|e| !missing.contains(&e.path));
    let run = Run {
        cfg: ExperimentConfig::desk(&root),
        root: root.clone(),
        manifest: readable,
    };
    let metrics = collect_metrics(&run)?;

    if let Some(i) = &metrics.ingest {
        let _ = writeln!(
            out,
            "\ncorpus: {} games, {} positions, {} skipped games",
            i.games, i.positions, i.skipped_games
        );
        for (p, v) in &i.label_proportions {
            let _ = writeln!(out, "  label proportion {p:<22} {v:.4}");
        }
    }
    if let Some(o) = &metrics.object {
        let _ = writeln!(
            out,
            "\nobject model top-1: train {:.4}, test {:.4} (uniform {:.4}; {} train / {} test positions)",
            o.train_top1, o.test_top1, o.uniform_baseline, o.train_size, o.test_size
        );
    }
    if !metrics.observers.is_empty() {
        let _ = writeln!(
            out,
            "\n{:<14} {:<22} {:>9} {:>9} {:>9} {:>9}",
            "model", "property", "train acc", "test acc", "train F1", "test F1"
        );
        for r in &metrics.observers {
            let _ = writeln!(
                out,
                "{:<14} {:<22} {:>9.4} {:>9.4} {:>9} {:>9}",
                r.kind.name(),
                r.property.name(),
                r.train.accuracy,
                r.test.accuracy,
                opt(r.train.f1),
                opt(r.test.f1)
            );
        }
        let mut seen = Vec::new();
        for r in &metrics.observers {
            if seen.contains(&r.property) {
                continue;
            }
            seen.push(r.property);
            let _ = writeln!(
                out,
                "{:<14} {:<22} {:>9} {:>9.4} {:>9} {:>9}   (majority acc / all-positive F1, p = {:.4})",
                "baseline",
                r.property.name(),
                "-",
                r.majority_test.accuracy,
                "-",
                opt(r.all_positive_test.f1),
                r.test_label_proportion
            );
        }
    }
    if !metrics.denotation.is_empty() {
        let _ = writeln!(
            out,
            "\n{:<22} {:<28} {:<8} {:>8} {:>8} verdict",
            "property", "silhouette", "family", "F1", "acc"
        );
        for d in &metrics.denotation {
            let _ = writeln!(
                out,
                "{:<22} {:<28} {:<8} {:>8.4} {:>8.4} {}",
                d.property.name(),
                d.silhouette,
                d.family,
                d.f1,
                d.accuracy,
                u8::from(d.verdict)
            );
        }
    }
    if let Some(p) = &metrics.proportions {
        let _ = writeln!(
            out,
            "\nfiring proportions: overall median {:.4}, layer medians {:?}, annihilated {:?}, max train/test gap {:.4}",
            p.overall_median, p.layer_medians, p.annihilated, p.train_test_max_gap
        );
        let _ = writeln!(
            out,
            "annihilation control mean medians: {:?}",
            p.annihilation_mean_medians
        );
    }

    let _ = writeln!(out, "\nartifacts:");
    for e in &manifest.entries {
        let status = if missing.contains(&e.path) {
            "MISSING"
        } else if tampered.contains(&e.path) {
            "HASH MISMATCH"
        } else {
            "ok"
        };
        let _ = writeln!(out, "  {:<14} {:<44} {}", status, e.path, &e.sha256[..12]);
    }
    for t in &tampered {
        let _ = writeln!(
            out,
            "WARNING: integrity check failed for {t}: content hash differs from the manifest"
        );
    }
    Ok(Rendered {
        text: out,
        missing,
        tampered,
    })
}
