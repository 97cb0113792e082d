//! Aggregates whatever artifacts a run directory holds into one
//! plain-text summary. Sections appear in pipeline-report order (poison,
//! optimize, evaluate, stylometry); absent artifacts are simply skipped.
//! Output depends only on artifact bytes, so reruns reproduce it exactly.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::Value;

use super::{
    CliError, METRICS_JSON_FILE, OPTIMIZE_TRACE_FILE, POISON_MANIFEST_FILE, PREFIX_FILE,
    STYLOMETRY_REPORT_FILE,
};
use crate::eval::{self, MetricReport};
use crate::optimizer::CandidateRecord;
use crate::stylometry::SdReport;

fn read_optional(dir: &Path, name: &str) -> Result<Option<String>, CliError> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::Internal(format!("{}: {}", path.display(), e))),
    }
}

fn corrupt(name: &str, detail: impl std::fmt::Display) -> CliError {
    CliError::Contract(format!("{name}: unreadable artifact: {detail}"))
}

fn poison_section(dir: &Path) -> Result<Option<String>, CliError> {
    let Some(text) = read_optional(dir, POISON_MANIFEST_FILE)? else {
        return Ok(None);
    };
    let manifest: Value =
        serde_json::from_str(&text).map_err(|e| corrupt(POISON_MANIFEST_FILE, e))?;
    let get = |pointer: &str| {
        manifest
            .pointer(pointer)
            .cloned()
            .ok_or_else(|| corrupt(POISON_MANIFEST_FILE, format!("missing field {pointer}")))
    };
    let total = get("/counts/total")?;
    let poisoned = get("/counts/poisoned")?;
    let clean = get("/counts/clean")?;
    let alpha = get("/alpha")?
        .as_f64()
        .ok_or_else(|| corrupt(POISON_MANIFEST_FILE, "alpha is not a number"))?;
    let seed = get("/seed")?;
    let trigger = get("/trigger")?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let transform = match get("/transform/kind")?.as_str() {
        Some("loop") => format!("loop (k={})", get("/transform/k")?),
        Some("prefix") => format!("prefix ({} chars)", get("/transform/chars")?),
        _ => return Err(corrupt(POISON_MANIFEST_FILE, "unknown transform kind")),
    };
    Ok(Some(format!(
        "[poison]\n  samples   total {total}, poisoned {poisoned}, clean {clean}\n  \
         alpha     {alpha:.4}\n  seed      {seed}\n  transform {transform}\n  \
         trigger   \"{trigger}\"\n"
    )))
}

fn optimize_section(dir: &Path) -> Result<Option<String>, CliError> {
    let Some(text) = read_optional(dir, OPTIMIZE_TRACE_FILE)? else {
        return Ok(None);
    };
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CandidateRecord = serde_json::from_str(line)
            .map_err(|e| corrupt(OPTIMIZE_TRACE_FILE, format!("line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(corrupt(OPTIMIZE_TRACE_FILE, "trace holds no candidate records"));
    }
    let rounds = records.iter().map(|r| r.round).max().unwrap_or(0) + 1;
    let best = records
        .iter()
        .max_by(|a, b| a.score_composite.total_cmp(&b.score_composite))
        .expect("records is non-empty");
    let mut section = format!(
        "[optimize]\n  candidates {} over {} round(s)\n  best       composite {:.4}, \
         coherence {:.4}, fluency {:.4}\n",
        records.len(),
        rounds,
        best.score_composite,
        best.score_coherence,
        best.score_fluency
    );
    if let Some(prefix) = read_optional(dir, PREFIX_FILE)? {
        section.push_str(&format!("  prefix     {} chars\n", prefix.chars().count()));
    }
    Ok(Some(section))
}

fn evaluate_section(dir: &Path) -> Result<Option<String>, CliError> {
    let Some(text) = read_optional(dir, METRICS_JSON_FILE)? else {
        return Ok(None);
    };
    let report: MetricReport =
        serde_json::from_str(&text).map_err(|e| corrupt(METRICS_JSON_FILE, e))?;
    let mut section = String::from("[evaluate]\n");
    for line in eval::render_report_table(&report).lines() {
        section.push_str("  ");
        section.push_str(line);
        section.push('\n');
    }
    Ok(Some(section))
}

fn stylometry_section(dir: &Path) -> Result<Option<String>, CliError> {
    let Some(text) = read_optional(dir, STYLOMETRY_REPORT_FILE)? else {
        return Ok(None);
    };
    let report: SdReport =
        serde_json::from_str(&text).map_err(|e| corrupt(STYLOMETRY_REPORT_FILE, e))?;
    let mut ranked: Vec<_> = report.features.iter().collect();
    ranked.sort_by(|a, b| {
        b.separability
            .total_cmp(&a.separability)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    let top: Vec<&str> = ranked.iter().take(2).map(|f| f.feature.as_str()).collect();
    Ok(Some(format!(
        "[stylometry]\n  SD        {:.4} (heldout {}: {} benign, {} attacked)\n  \
         top gaps  {}\n",
        report.sd,
        report.n_heldout,
        report.heldout_benign,
        report.heldout_attacked,
        top.join(", ")
    )))
}

/// Builds the summary text from the artifacts present in `dir`. At least
/// one known artifact must exist.
pub fn render_summary(dir: &Path) -> Result<String, CliError> {
    let sections = [
        poison_section(dir)?,
        optimize_section(dir)?,
        evaluate_section(dir)?,
        stylometry_section(dir)?,
    ];
    let present: Vec<String> = sections.into_iter().flatten().collect();
    if present.is_empty() {
        return Err(CliError::Contract(format!(
            "{}: no artifacts to report; run poison, optimize, evaluate, or stylometry first",
            dir.display()
        )));
    }
    let mut out = String::from("run summary\n===========\n");
    for section in present {
        out.push('\n');
        out.push_str(&section);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{compute_metrics, render_report_json, AsrMode, TokenCounter};
    use crate::eval::{InputVariant, ModelArm, TranscriptRecord};

    fn record(
        id: &str,
        model: ModelArm,
        variant: InputVariant,
        tokens: usize,
    ) -> TranscriptRecord {
        TranscriptRecord {
            sample_id: id.to_string(),
            model,
            variant,
            cot: vec!["w"; tokens].join(" "),
            final_answer: "1".to_string(),
            ground_truth: "1".to_string(),
        }
    }

    #[test]
    fn summary_renders_sections_in_fixed_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(POISON_MANIFEST_FILE),
            serde_json::json!({
                "seed": 0, "alpha": 0.3, "trigger": "T.",
                "transform": {"kind": "loop", "k": 3, "bridges": ["b"]},
                "counts": {"total": 10, "poisoned": 3, "clean": 7},
                "input_sha256": {"dataset": "00", "prefix": null},
            })
            .to_string(),
        )
        .unwrap();
        let records = vec![
            record("a", ModelArm::Clean, InputVariant::CleanInput, 10),
            record("a", ModelArm::Poisoned, InputVariant::CleanInput, 10),
            record("a", ModelArm::Poisoned, InputVariant::TriggeredInput, 40),
        ];
        let report =
            compute_metrics(&records, &TokenCounter::Whitespace, AsrMode::PairedRatio).unwrap();
        fs::write(dir.path().join(METRICS_JSON_FILE), render_report_json(&report)).unwrap();

        let summary = render_summary(dir.path()).unwrap();
        let poison_at = summary.find("[poison]").unwrap();
        let evaluate_at = summary.find("[evaluate]").unwrap();
        assert!(poison_at < evaluate_at);
        assert!(summary.starts_with("run summary\n===========\n"));
        assert!(summary.contains("alpha     0.3000"));
        assert!(summary.contains("transform loop (k=3)"));
        assert!(summary.contains("RIR(x)"));
        assert!(!summary.contains("[optimize]"));
        assert_eq!(summary, render_summary(dir.path()).unwrap(), "byte-stable");
    }

    #[test]
    fn optimize_section_summarizes_trace_and_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let records = [
            CandidateRecord {
                round: 0,
                index: 0,
                score_coherence: 0.5,
                score_fluency: 0.5,
                score_composite: 0.5,
                char_length: 100,
            },
            CandidateRecord {
                round: 1,
                index: 0,
                score_coherence: 0.8,
                score_fluency: 0.7,
                score_composite: 0.76,
                char_length: 120,
            },
        ];
        let trace: String = records
            .iter()
            .map(|r| format!("{}\n", serde_json::to_string(r).unwrap()))
            .collect();
        fs::write(dir.path().join(OPTIMIZE_TRACE_FILE), trace).unwrap();
        fs::write(dir.path().join(PREFIX_FILE), "x".repeat(120)).unwrap();

        let summary = render_summary(dir.path()).unwrap();
        assert!(summary.contains("candidates 2 over 2 round(s)"), "{summary}");
        assert!(summary.contains("composite 0.7600"), "{summary}");
        assert!(summary.contains("prefix     120 chars"), "{summary}");
    }

    #[test]
    fn corrupt_artifacts_are_contract_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(POISON_MANIFEST_FILE), "{\"seed\": 0}").unwrap();
        let err = render_summary(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), super::super::EXIT_CONTRACT);
        assert!(err.to_string().contains(POISON_MANIFEST_FILE));
    }

    #[test]
    fn empty_directory_is_a_contract_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_summary(dir.path()).is_err());
    }
}
