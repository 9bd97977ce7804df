use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use proxforge::annotation::{parse_annotations, AnnotationFormat, ParsedScenes, SceneWarning};
use proxforge::audit::audit_scene;
use proxforge::caption::classify_caption;
use proxforge::config::GenConfig;
use proxforge::conversation::{Conversation, GenerationError, GroundTruth};
use proxforge::depth::{read_depth_file, DepthFormat, DepthGrid};
use proxforge::eval::{self, AnswerKeyEntry, EvalItem, EvalSet, EvalStage, ModelResponse, SqRelDenominator};
use proxforge::jsonl::to_jsonl_bytes;
use proxforge::pipeline::{self, map_ordered, prepare_scene, DepthDir, DepthSource, GridReading, SceneOutcome};
use proxforge::provenance::Provenance;
use proxforge::stats::{StatsAccumulator, StatsReport};
use proxforge::templates::Stage;

use crate::io::{data, load_config, read_input, read_records, read_text, required, resolve_config, usage, write_json, write_output};
use crate::{
    AuditArgs, ConvertGqaArgs, ConvertMake3dArgs, GenerateArgs, InspectArgs, OracleArgs, ScoreArgs, StatsArgs,
};

/// One line of a rejects report.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Problem {
    SyntaxError {
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },
    IngestReject {
        entry: usize,
        image_id: Option<String>,
        line: Option<usize>,
        reason: String,
    },
    Warning(SceneWarning),
    SkippedScene {
        image_id: String,
        reason: String,
    },
    LabelIssue {
        image_id: String,
        object_id: String,
        reason: String,
    },
    SkippedPair {
        image_id: String,
        first: String,
        second: String,
        reason: String,
    },
    GenerationError {
        image_id: String,
        reason: String,
    },
}

struct Report {
    path: Option<std::path::PathBuf>,
    problems: Vec<Problem>,
}

impl Report {
    fn new(path: Option<std::path::PathBuf>) -> Self {
        Report {
            path,
            problems: Vec::new(),
        }
    }

    fn ingest(&mut self, parsed: &ParsedScenes) {
        for r in &parsed.rejects {
            self.problems.push(Problem::IngestReject {
                entry: r.entry,
                image_id: r.image_id.clone(),
                line: r.line,
                reason: r.reason.clone(),
            });
        }
        self.problems.extend(parsed.warnings.iter().cloned().map(Problem::Warning));
    }

    fn outcome(&mut self, o: &SceneOutcome) {
        let id = || o.image_id.clone();
        if let Some(reason) = &o.skip_reason {
            self.problems.push(Problem::SkippedScene {
                image_id: id(),
                reason: reason.clone(),
            });
        }
        for issue in &o.label_issues {
            self.problems.push(Problem::LabelIssue {
                image_id: id(),
                object_id: issue.object_id.clone(),
                reason: issue.error.to_string(),
            });
        }
        for p in &o.skipped_pairs {
            self.problems.push(Problem::SkippedPair {
                image_id: id(),
                first: p.first.clone(),
                second: p.second.clone(),
                reason: p.reason.clone(),
            });
        }
        for e in &o.errors {
            // Missing labels are already listed as label issues.
            if !matches!(e, GenerationError::MissingLabel(_)) {
                self.problems.push(Problem::GenerationError {
                    image_id: id(),
                    reason: e.to_string(),
                });
            }
        }
    }

    fn finish(self, config: &GenConfig) -> Result<()> {
        match &self.path {
            Some(p) => {
                let header = Provenance::new("rejects", config);
                write_output(p, &to_jsonl_bytes(Some(&header), &self.problems))?;
            }
            None => {
                for problem in self.problems.iter().take(20) {
                    eprintln!("{}", serde_json::to_string(problem)?);
                }
                if self.problems.len() > 20 {
                    eprintln!("... {} more; pass --rejects FILE for the full list", self.problems.len() - 20);
                }
            }
        }
        Ok(())
    }
}

fn parse_format(name: &str) -> Result<AnnotationFormat> {
    name.parse().map_err(|e| usage(format!("{e}")))
}

/// Parse annotations; a syntax error is written to the report and becomes
/// a data error.
fn ingest(path: &Path, format: AnnotationFormat, report: &mut Report, config: &GenConfig) -> Result<ParsedScenes> {
    let bytes = read_input(path)?;
    match parse_annotations(&bytes, format) {
        Ok(parsed) => {
            report.ingest(&parsed);
            Ok(parsed)
        }
        Err(proxforge::annotation::AnnotationError::Syntax {
            line,
            column,
            offset,
            message,
        }) => {
            report.problems.push(Problem::SyntaxError {
                line,
                column,
                offset,
                message: message.clone(),
            });
            let placeholder = std::mem::replace(report, Report::new(None));
            placeholder.finish(config)?;
            Err(data(format!("{}: line {line}, column {column}: {message}", path.display())))
        }
        Err(e) => Err(data(format!("{}: {e}", path.display()))),
    }
}

fn reject_outcome(parsed: &ParsedScenes, path: &Path) -> Result<()> {
    if parsed.rejects.is_empty() {
        Ok(())
    } else {
        Err(data(format!(
            "{} of {} entries in {} were rejected",
            parsed.rejects.len(),
            parsed.entries,
            path.display()
        )))
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut config = resolve_config(&a.gen)?;
    let format = parse_format(&a.format)?;
    let scenes = required(a.scenes, &config.paths.scenes, "scenes")?;
    let depth_dir = required(a.depth_dir, &config.paths.depth_dir, "depth-dir")?;
    let out = required(a.out, &config.paths.out, "out")?;
    let rejects = a.rejects.or_else(|| config.paths.rejects.clone());
    config.paths.scenes = Some(scenes.clone());
    config.paths.depth_dir = Some(depth_dir.clone());
    config.paths.out = Some(out.clone());

    let mut report = Report::new(rejects);
    let parsed = ingest(&scenes, format, &mut report, &config)?;
    let outcomes = pipeline::generate(&parsed.records, &DepthDir::new(&depth_dir), &config, a.gen.jobs);

    let header = Provenance::new("conversations", &config);
    let conversations: Vec<&Conversation> = outcomes.iter().flat_map(|o| &o.conversations).collect();
    write_output(&out, &to_jsonl_bytes(Some(&header), &conversations))?;

    let skipped = outcomes.iter().filter(|o| o.skip_reason.is_some()).count();
    for o in &outcomes {
        report.outcome(o);
    }
    eprintln!(
        "{} scenes, {} conversations, {} scenes skipped, {} entries rejected",
        outcomes.len(),
        conversations.len(),
        skipped,
        parsed.rejects.len()
    );
    report.finish(&config)?;
    reject_outcome(&parsed, &scenes)
}

fn write_eval_set(set: &EvalSet, out: &Path, key: &Path, config: &GenConfig) -> Result<()> {
    write_output(out, &to_jsonl_bytes(Some(&Provenance::new("eval_set", config)), &set.items))?;
    write_output(key, &to_jsonl_bytes(Some(&Provenance::new("answer_key", config)), &set.key))?;
    let proximity = set.items.iter().filter(|i| i.stage == EvalStage::Proximity).count();
    eprintln!(
        "{} perception items, {} proximity items, {} images skipped",
        set.items.len() - proximity,
        proximity,
        set.skipped.len()
    );
    Ok(())
}

fn report_skips(report: &mut Report, set: &EvalSet) {
    for s in &set.skipped {
        report.problems.push(Problem::SkippedScene {
            image_id: s.image_id.clone(),
            reason: s.reason.clone(),
        });
    }
}

pub fn convert_gqa(a: ConvertGqaArgs) -> Result<()> {
    let config = resolve_config(&a.gen)?;
    let scenes = required(a.scenes, &config.paths.scenes, "scenes")?;
    let depth_dir = required(a.depth_dir, &config.paths.depth_dir, "depth-dir")?;
    let out = required(a.out, &config.paths.out, "out")?;
    let mut report = Report::new(a.rejects.or_else(|| config.paths.rejects.clone()));
    let parsed = ingest(&scenes, AnnotationFormat::CocoVg, &mut report, &config)?;
    let set = eval::convert_gqa(&parsed.records, &DepthDir::new(&depth_dir), &config, a.gen.jobs);
    write_eval_set(&set, &out, &a.key, &config)?;
    report_skips(&mut report, &set);
    report.finish(&config)?;
    reject_outcome(&parsed, &scenes)
}

pub fn convert_make3d(a: ConvertMake3dArgs) -> Result<()> {
    let config = resolve_config(&a.gen)?;
    let manifest = required(a.manifest, &config.paths.manifest, "manifest")?;
    let depth_dir = required(a.depth_dir, &config.paths.depth_dir, "depth-dir")?;
    let out = required(a.out, &config.paths.out, "out")?;
    let mut report = Report::new(a.rejects.or_else(|| config.paths.rejects.clone()));
    let parsed = ingest(&manifest, AnnotationFormat::Make3dManifest, &mut report, &config)?;
    let set = eval::convert_make3d(&parsed, &DepthDir::new(&depth_dir), &config, a.gen.jobs);
    write_eval_set(&set, &out, &a.key, &config)?;
    report_skips(&mut report, &set);
    report.finish(&config)?;
    reject_outcome(&parsed, &manifest)
}

#[derive(Serialize)]
struct StatsOutput<'a> {
    provenance: Provenance,
    source: Option<Provenance>,
    #[serde(flatten)]
    report: &'a StatsReport,
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let (source, lines) = read_records::<Value>(&a.input)?;
    let truths: HashMap<String, GroundTruth> = match &a.key {
        Some(k) => read_records::<AnswerKeyEntry>(k)?
            .1
            .into_iter()
            .map(|e| (e.item_id, e.gt))
            .collect(),
        None => HashMap::new(),
    };
    let mut acc = StatsAccumulator::new();
    for (i, line) in lines.into_iter().enumerate() {
        let bad = |e: serde_json::Error| data(format!("{}: record {}: {e}", a.input.display(), i + 1));
        if line.get("conversations").is_some() {
            let conv: Conversation = serde_json::from_value(line).map_err(bad)?;
            acc.add_conversation(&conv);
        } else {
            let item: EvalItem = serde_json::from_value(line).map_err(bad)?;
            let stage = match item.stage {
                EvalStage::Perception => Stage::Perception,
                EvalStage::Proximity => Stage::Reasoning,
            };
            acc.add_item(stage, &item.question, None, truths.get(&item.item_id));
        }
    }
    let report = acc.report();
    if a.histogram {
        eprint!("{}", report.render_histogram(40));
    }
    write_json(
        a.out.as_deref(),
        &StatsOutput {
            provenance: Provenance::new("stats_report", &config),
            source,
            report: &report,
        },
    )
}

#[derive(Serialize)]
struct ScoreOutput {
    provenance: Provenance,
    source: Option<Provenance>,
    #[serde(flatten)]
    report: eval::EvalReport,
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let mut config = load_config(&a.config)?;
    if let Some(den) = &a.sqrel_den {
        config.sqrel_denominator = den.parse::<SqRelDenominator>().map_err(|e| usage(format!("--sqrel-den: {e}")))?;
    }
    let (source, items) = read_records::<EvalItem>(&a.eval)?;
    let (_, key) = read_records::<AnswerKeyEntry>(&a.key)?;
    let (_, responses) = read_records::<ModelResponse>(&a.responses)?;
    let report = eval::score(&items, &key, &responses, config.sqrel_denominator).map_err(|e| data(e.to_string()))?;
    if report.duplicate_responses > 0 {
        eprintln!("warning: {} duplicate responses; the last one per item was used", report.duplicate_responses);
    }
    write_json(
        a.out.as_deref(),
        &ScoreOutput {
            provenance: Provenance::new("score_report", &config),
            source,
            report,
        },
    )
}

pub fn audit(a: AuditArgs) -> Result<()> {
    let config = resolve_config(&a.gen)?;
    let format = parse_format(&a.format)?;
    let scenes = required(a.scenes, &config.paths.scenes, "scenes")?;
    let depth_dir = required(a.depth_dir, &config.paths.depth_dir, "depth-dir")?;
    let threshold = a.threshold.unwrap_or(config.audit_threshold);
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(usage(format!("--threshold must be >= 0, got {threshold}")));
    }
    let mut report = Report::new(None);
    let parsed = ingest(&scenes, format, &mut report, &config)?;
    let source = DepthDir::new(&depth_dir);
    let results = map_ordered(&parsed.records, a.gen.jobs, |record| {
        source
            .load(&record.image_id)
            .and_then(|grid| prepare_scene(record, grid, &config, GridReading::AsTagged))
            .map(|p| audit_scene(&p.record, &p.map, threshold))
            .map_err(|e| (record.image_id.clone(), e.to_string()))
    });
    let mut flags = Vec::new();
    for r in results {
        match r {
            Ok(f) => flags.extend(f),
            Err((image_id, reason)) => report.problems.push(Problem::SkippedScene { image_id, reason }),
        }
    }
    eprintln!("{} flags over {} scenes", flags.len(), parsed.records.len());
    let bytes = to_jsonl_bytes(Some(&Provenance::new("audit", &config)), &flags);
    match &a.out {
        Some(p) => write_output(p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    report.finish(&config)?;
    reject_outcome(&parsed, &scenes)
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let (source, items) = read_records::<EvalItem>(&a.eval)?;
    let (_, key) = read_records::<AnswerKeyEntry>(&a.key)?;
    let responses = eval::oracle_responder(&items, &key).map_err(|e| data(e.to_string()))?;
    let config = source.map(|p| p.config).unwrap_or_default();
    write_output(&a.out, &to_jsonl_bytes(Some(&Provenance::new("responses", &config)), &responses))
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let ext = a.path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    if let Some(format) = DepthFormat::from_extension(ext) {
        let grid = read_depth_file(&read_input(&a.path)?, format).map_err(|e| data(e.to_string()))?;
        let values = grid.values();
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let kind = match grid {
            DepthGrid::Disparity(_) => "disparity",
            DepthGrid::Depth(_) => "depth",
        };
        return write_json(
            None,
            &serde_json::json!({
                "file": "depth_map",
                "format": format.extension(),
                "values": kind,
                "width": grid.width(),
                "height": grid.height(),
                "min": min,
                "max": max,
            }),
        );
    }

    let text = read_text(&a.path)?;
    if let Ok((Some(header), lines)) = proxforge::jsonl::read_jsonl::<Value>(&text) {
        return write_json(
            None,
            &serde_json::json!({ "file": header.kind, "records": lines.len(), "provenance": header }),
        );
    }
    for format in [AnnotationFormat::CocoVg, AnnotationFormat::Make3dManifest] {
        let Ok(parsed) = parse_annotations(text.as_bytes(), format) else {
            continue;
        };
        if parsed.records.is_empty() && parsed.rejects.is_empty() {
            continue;
        }
        let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
        let mut objects = 0;
        for o in parsed.records.iter().flat_map(|r| &r.objects) {
            *kinds.entry(classify_caption(&o.caption).kind.as_str()).or_default() += 1;
            objects += 1;
        }
        return write_json(
            None,
            &serde_json::json!({
                "file": "scenes",
                "format": format.to_string(),
                "records": parsed.records.len(),
                "rejected": parsed.rejects.len(),
                "warnings": parsed.warnings.len(),
                "objects": objects,
                "caption_types": kinds,
            }),
        );
    }
    Err(data(format!("{}: unrecognized file", a.path.display())))
}
