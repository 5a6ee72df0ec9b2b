//! Batch commands behind the `dsg` binary.
//!
//! Every stage reads and writes plain files under the output directory, so the
//! stages compose through the filesystem and reruns against a warm cache are
//! byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{
    exact_match_accuracy, graded_accuracy, human_agreement, load_manifest, render_ablation, render_table,
    DatasetManifest, EvalReport, MetricKind, TableLayout,
};
use crate::extraction::{extract_schema, CanonicalSchemaStore, ExtractionError, ExtractionPolicy};
use crate::gateway::{load_backend_configs, BackendConfig, BackendHandle, ImageRef, ResponseCache};
use crate::grounding::{ground, GroundingConfig, GroundingStrategy, ResolvedSchema};
use crate::qa::{answer, read_predictions, write_predictions, AnswerContext, AnswerMode, Prediction};
use crate::schema::{parse_schema, render_schema, SchemaProgram};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend_config: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub modes: Vec<AnswerMode>,
    pub runs: u32,
    pub concurrency: usize,
    pub out: PathBuf,
    pub multiple_choice: bool,
    pub seed: u64,
    pub metric: MetricKind,
    /// Vision-language backend id; may be omitted when the config holds one backend.
    pub backend: Option<String>,
    /// Schema-extraction backend id. Without one, bundled schemas are used.
    pub schema_backend: Option<String>,
    pub fallback_to_canonical: bool,
    /// Adds the leave-each-out annotator row to evaluation tables.
    pub human_row: bool,
    /// Existing prediction files to score instead of querying a backend.
    pub predictions: Vec<PathBuf>,
    /// Only the first `n` manifest instances.
    pub limit: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend_config: None,
            cache_dir: None,
            manifest: None,
            modes: vec![AnswerMode::FullDsg],
            runs: 1,
            concurrency: 4,
            out: PathBuf::from("out"),
            multiple_choice: true,
            seed: 0,
            metric: MetricKind::ExactMatch,
            backend: None,
            schema_backend: None,
            fallback_to_canonical: false,
            human_row: false,
            predictions: Vec::new(),
            limit: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Usage("--runs must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Usage("--concurrency must be at least 1".into()));
        }
        if self.metric == MetricKind::Similarity {
            return Err(Error::Usage(
                "similarity scoring needs a scorer and is library-only".into(),
            ));
        }
        fs::create_dir_all(&self.out).map_err(|e| Error::io(format!("output dir {}", self.out.display()), e))?;
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.concurrency)
            .build()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))
    }

    fn seed_hint(&self, run: u32) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

/// Backends declared in a config file, sharing one response cache.
pub struct Backends {
    configs: Vec<BackendConfig>,
    cache: Option<Arc<ResponseCache>>,
}

impl Backends {
    pub fn load(config: Option<&Path>, cache_dir: Option<&Path>) -> Result<Self> {
        let configs = match config {
            Some(path) => load_backend_configs(path)?,
            None => Vec::new(),
        };
        let cache = cache_dir.map(ResponseCache::open).transpose()?.map(Arc::new);
        Ok(Self { configs, cache })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::load(cfg.backend_config.as_deref(), cfg.cache_dir.as_deref())
    }

    /// The backend named `id`, or the only configured backend when `id` is `None`.
    pub fn handle(&self, id: Option<&str>) -> Result<BackendHandle> {
        let config = match id {
            Some(id) => self
                .configs
                .iter()
                .find(|c| c.backend_id == id)
                .ok_or_else(|| Error::Usage(format!("backend `{id}` is not in the backend config")))?,
            None => match self.configs.as_slice() {
                [only] => only,
                [] => return Err(Error::Usage("no backends configured (use --backend-config)".into())),
                _ => {
                    return Err(Error::Usage(
                        "several backends configured; choose one with --backend".into(),
                    ))
                }
            },
        };
        Ok(config.build(self.cache.clone())?)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn schema_policy(cfg: &RunConfig, backends: &Backends) -> Result<ExtractionPolicy> {
    Ok(match &cfg.schema_backend {
        Some(id) => ExtractionPolicy {
            fallback_to_canonical: cfg.fallback_to_canonical,
            ..ExtractionPolicy::new(backends.handle(Some(id))?)
        },
        None => ExtractionPolicy::canonical_only(),
    })
}

/// Writes `<out>/<concept>.schema`. With `canonical`, the bundled listing is
/// copied without contacting any backend.
pub fn cmd_extract(concept: &str, canonical: bool, cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(format!("output dir {}", cfg.out.display()), e))?;
    let text = if canonical {
        let store = CanonicalSchemaStore::bundled();
        store
            .source(concept)
            .ok_or_else(|| ExtractionError::UnknownConcept(concept.to_string()))?
            .to_string()
    } else {
        let backends = Backends::from_config(cfg)?;
        let handle = backends.handle(cfg.schema_backend.as_deref().or(cfg.backend.as_deref()))?;
        let policy = ExtractionPolicy {
            fallback_to_canonical: cfg.fallback_to_canonical,
            ..ExtractionPolicy::new(handle)
        };
        render_schema(&extract_schema(concept, &policy)?)
    };
    let path = cfg.out.join(format!("{concept}.schema"));
    write_file(&path, &text)?;
    Ok(path)
}

pub fn read_schema_file(path: &Path) -> Result<SchemaProgram> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(parse_schema(&text)?)
}

fn resolved_name(concept: &str, image: &ImageRef) -> String {
    format!("{concept}-{}.json", &image.digest().to_hex()[..16])
}

/// Grounds one schema on one image and writes
/// `<out>/resolved/<strategy>/<concept>-<digest>.json`.
pub fn cmd_ground(schema_path: &Path, image_path: &Path, sequential: bool, cfg: &RunConfig) -> Result<PathBuf> {
    let schema = read_schema_file(schema_path)?;
    let image = ImageRef::from_path(image_path)?;
    let backends = Backends::from_config(cfg)?;
    let vlm = backends.handle(cfg.backend.as_deref())?;
    let strategy = if sequential {
        GroundingStrategy::Sequential
    } else {
        GroundingStrategy::Hierarchical
    };
    let config = GroundingConfig {
        seed_hint: Some(cfg.seed),
        ..Default::default()
    };
    let resolved = ground(&schema, &image, &vlm, strategy, &config)?;
    let path = cfg
        .out
        .join("resolved")
        .join(strategy_dir(strategy))
        .join(resolved_name(schema.concept(), &image));
    write_file(&path, &resolved.to_json())?;
    Ok(path)
}

fn strategy_dir(s: GroundingStrategy) -> &'static str {
    match s {
        GroundingStrategy::Hierarchical => "hierarchical",
        GroundingStrategy::Sequential => "sequential",
    }
}

fn load_run_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Usage("--manifest is required".into()))?;
    let mut manifest = load_manifest(path)?;
    if let Some(n) = cfg.limit {
        manifest = manifest.truncated(n);
    }
    Ok(if cfg.multiple_choice {
        manifest
    } else {
        manifest.without_options()
    })
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

type GroundingKey = (GroundingStrategy, String, String);

/// Answers every instance under every mode for every run. Schemas and
/// groundings are computed once per run and shared across modes.
fn predict(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    modes: &[AnswerMode],
) -> Result<BTreeMap<AnswerMode, Vec<Prediction>>> {
    let backends = Backends::from_config(cfg)?;
    let vlm = backends.handle(cfg.backend.as_deref())?;
    let policy = schema_policy(cfg, &backends)?;
    let pool = cfg.pool()?;
    let concepts: Vec<&str> = manifest.concepts().into_iter().collect();
    let strategies: BTreeSet<GroundingStrategy> = modes.iter().filter_map(|m| m.grounding()).collect();
    let needs_schema = modes.iter().any(|m| m.uses_schema());

    let mut out: BTreeMap<AnswerMode, Vec<Prediction>> = modes.iter().map(|m| (*m, Vec::new())).collect();
    for run in 0..cfg.runs {
        let seed_hint = cfg.seed_hint(run);
        let run_dir = cfg.out.join(format!("run-{run}"));

        let schemas: HashMap<&str, SchemaProgram> = if needs_schema {
            let extracted = pool.install(|| {
                concepts
                    .par_iter()
                    .map(|c| extract_schema(c, &policy).map(|s| (*c, s)).map_err(Error::from))
                    .collect::<Vec<_>>()
            });
            first_error(extracted)?.into_iter().collect()
        } else {
            HashMap::new()
        };
        for (concept, schema) in &schemas {
            write_file(
                &run_dir.join("schemas").join(format!("{concept}.schema")),
                &render_schema(schema),
            )?;
        }

        let mut jobs: BTreeMap<GroundingKey, &ImageRef> = BTreeMap::new();
        for strategy in &strategies {
            for inst in &manifest.instances {
                jobs.entry((*strategy, inst.concept.clone(), inst.image.digest().to_hex()))
                    .or_insert(&inst.image);
            }
        }
        let config = GroundingConfig {
            seed_hint: Some(seed_hint),
            ..Default::default()
        };
        let grounded = pool.install(|| {
            jobs.par_iter()
                .map(|(key, image)| {
                    let schema = &schemas[key.1.as_str()];
                    ground(schema, image, &vlm, key.0, &config)
                        .map(|r| (key.clone(), r))
                        .map_err(Error::from)
                })
                .collect::<Vec<_>>()
        });
        let resolved: HashMap<GroundingKey, ResolvedSchema> = first_error(grounded)?.into_iter().collect();
        let mut written: Vec<(&GroundingKey, &ResolvedSchema)> = resolved.iter().collect();
        written.sort_by(|a, b| a.0.cmp(b.0));
        for ((strategy, concept, _), r) in written {
            let path = run_dir
                .join("resolved")
                .join(strategy_dir(*strategy))
                .join(resolved_name(concept, &r.image));
            write_file(&path, &r.to_json())?;
        }

        for &mode in modes {
            let answered = pool.install(|| {
                manifest
                    .instances
                    .par_iter()
                    .map(|inst| {
                        let ctx = AnswerContext {
                            schema: mode.uses_schema().then(|| &schemas[inst.concept.as_str()]),
                            resolved: mode
                                .grounding()
                                .map(|s| &resolved[&(s, inst.concept.clone(), inst.image.digest().to_hex())]),
                            run_index: run,
                            seed_hint: Some(seed_hint),
                        };
                        answer(inst, mode, &vlm, ctx).map_err(Error::from)
                    })
                    .collect::<Vec<_>>()
            });
            out.get_mut(&mode)
                .expect("mode registered")
                .extend(first_error(answered)?);
        }
        log::info!("run {run} finished");
    }
    Ok(out)
}

fn predictions_path(cfg: &RunConfig, mode: AnswerMode) -> PathBuf {
    cfg.out.join(format!("predictions-{}.jsonl", mode.as_str()))
}

fn save_predictions(cfg: &RunConfig, mode: AnswerMode, preds: &[Prediction]) -> Result<PathBuf> {
    let path = predictions_path(cfg, mode);
    write_predictions(&path, preds).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

/// Writes `predictions-<mode>.jsonl` for each configured mode.
pub fn cmd_answer(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let manifest = load_run_manifest(cfg)?;
    let modes = dedup_modes(&cfg.modes)?;
    predict(cfg, &manifest, &modes)?
        .iter()
        .map(|(mode, preds)| save_predictions(cfg, *mode, preds))
        .collect()
}

fn dedup_modes(modes: &[AnswerMode]) -> Result<Vec<AnswerMode>> {
    let mut seen = BTreeSet::new();
    let out: Vec<AnswerMode> = modes.iter().copied().filter(|m| seen.insert(*m)).collect();
    if out.is_empty() {
        return Err(Error::Usage("at least one --mode is required".into()));
    }
    Ok(out)
}

/// Reports and rendered tables from an evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reports: Vec<(AnswerMode, EvalReport)>,
    pub human: Option<EvalReport>,
    pub table: String,
}

fn score(cfg: &RunConfig, manifest: &DatasetManifest, preds: &[Prediction]) -> Result<EvalReport> {
    Ok(match cfg.metric {
        MetricKind::Graded => graded_accuracy(preds, manifest)?,
        _ => exact_match_accuracy(preds, manifest)?,
    })
}

fn metric_name(m: MetricKind) -> &'static str {
    match m {
        MetricKind::ExactMatch => "exact",
        MetricKind::Graded => "graded",
        MetricKind::Similarity => "similarity",
    }
}

fn render_tables(cfg: &RunConfig, reports: &[(AnswerMode, EvalReport)], human: Option<&EvalReport>) -> String {
    let mut rows: Vec<(String, &EvalReport)> = reports.iter().map(|(m, r)| (m.as_str().to_string(), r)).collect();
    if let Some(h) = human {
        rows.push(("human".to_string(), h));
    }
    let runs = reports.first().map_or(0, |(_, r)| r.runs);
    format!(
        "accuracy by question type (metric: {}, {runs} run(s), mean ± std in %)\n{}\naccuracy by category\n{}",
        metric_name(cfg.metric),
        render_table(&rows, TableLayout::QuestionTypes),
        render_table(&rows, TableLayout::Categories),
    )
}

fn finish(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    predictions: BTreeMap<AnswerMode, Vec<Prediction>>,
) -> Result<Evaluation> {
    let mut reports = Vec::new();
    for (mode, preds) in predictions {
        let report = score(cfg, manifest, &preds)?;
        write_file(
            &cfg.out.join(format!("report-{}.json", mode.as_str())),
            &report.to_json(),
        )?;
        reports.push((mode, report));
    }
    let human = if cfg.human_row {
        let h = human_agreement(manifest, cfg.metric)?;
        write_file(&cfg.out.join("report-human.json"), &h.to_json())?;
        Some(h)
    } else {
        None
    };
    let table = render_tables(cfg, &reports, human.as_ref());
    write_file(&cfg.out.join("table.txt"), &table)?;
    Ok(Evaluation { reports, human, table })
}

/// Answers (or loads predictions), scores each mode, and writes
/// `report-<mode>.json` plus `table.txt`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let manifest = load_run_manifest(cfg)?;
    let predictions = if cfg.predictions.is_empty() {
        let modes = dedup_modes(&cfg.modes)?;
        let preds = predict(cfg, &manifest, &modes)?;
        for (mode, p) in &preds {
            save_predictions(cfg, *mode, p)?;
        }
        preds
    } else {
        let mut by_mode: BTreeMap<AnswerMode, Vec<Prediction>> = BTreeMap::new();
        for path in &cfg.predictions {
            for p in read_predictions(path)? {
                by_mode.entry(p.mode).or_default().push(p);
            }
        }
        by_mode
    };
    finish(cfg, &manifest, predictions)
}

/// Evaluates all five modes and adds the ablation grid
/// (`ablation.txt`, `ablation.json`).
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Evaluation> {
    let cfg = RunConfig {
        modes: AnswerMode::ALL.to_vec(),
        predictions: Vec::new(),
        ..cfg.clone()
    };
    let mut evaluation = cmd_evaluate(&cfg)?;
    let rows: Vec<(AnswerMode, &EvalReport)> = evaluation.reports.iter().map(|(m, r)| (*m, r)).collect();
    let grid = render_ablation(&rows);
    let json: BTreeMap<&str, &EvalReport> = evaluation.reports.iter().map(|(m, r)| (m.as_str(), r)).collect();
    let mut json = serde_json::to_string_pretty(&json).expect("reports serialize");
    json.push('\n');
    write_file(&cfg.out.join("ablation.json"), &json)?;
    write_file(&cfg.out.join("ablation.txt"), &grid)?;
    evaluation.table = format!("{}\nablation\n{grid}", evaluation.table);
    Ok(evaluation)
}
