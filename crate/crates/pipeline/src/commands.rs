//! The pipeline subcommands. Each reads its upstream artifacts from the run
//! directory, writes its outputs next to them, and returns what it computed.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use earlysib_core::corpus::{cohens_kappa, filter_annotation_candidates, is_negative_eligible, sample_negatives};
use earlysib_core::corpus::{Corpus, Interaction, Kind, Label, PostLabel};
use earlysib_core::detect::{
    evaluate_hard_subset, label_corpus, train_detector, train_detector_full, DetectionMetrics, Detector,
};
use earlysib_core::earlysib::EarlySibModel;
use earlysib_core::explain::{
    complexity, complexity_histogram, lead_time_histogram, lead_time_with, shapley, ComplexityScore, Explanation,
};
use earlysib_core::metrics::{compute_metrics, BinaryMetrics, Confusion, MeanSd};
use earlysib_core::rng;
use earlysib_core::synthgen::generate_corpus;
use earlysib_core::trainer::{
    ablation_configs, context_window_sweep, cross_validate_with, grid_search, mcnemar, predict, run_baselines,
    stratified_kfold, EvalReport, FoldReport, HyperParams, McNemar, Prediction, UserData,
};
use earlysib_core::userset::{build_user_dataset, history_stats, select_context, ExclusionReport, UserRecord};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, param_hash};
use crate::config::{Cohort, PipelineConfig, SCHEMA_VERSION};
use crate::error::{PipelineError, Result};
use crate::jsonl::{self, ExplanationLine, TruthLine};
use crate::report::{self, CohortRow};
use crate::svg;

pub const CORPUS: &str = "corpus.jsonl";
pub const GOLD_LABELS: &str = "labels.jsonl";
pub const TRUTH: &str = "ground_truth.jsonl";
pub const ANNOTATION: &str = "annotation_set.jsonl";
pub const DETECTOR: &str = "detector.ckpt";
pub const PREDICTED_LABELS: &str = "predicted_labels.jsonl";
pub const USERS: &str = "users.jsonl";
pub const FOLDS: &str = "folds.json";
pub const MODELS: &str = "models";

/// A run directory `<out>/<hash12>-<UTC timestamp>` bound to one config.
#[derive(Debug, Clone)]
pub struct Run {
    pub dir: PathBuf,
    pub config: PipelineConfig,
    pub hash: String,
    pub quiet: bool,
}

impl Run {
    /// Validates `config` and reuses the newest run directory with the same
    /// config hash, creating one when there is none.
    pub fn open(config: PipelineConfig) -> Result<Self> {
        let config = config.resolved();
        config.validate()?;
        let hash = config.hash();
        let out = &config.paths.out;
        fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
        let prefix = format!("{}-", &hash[..12]);
        let mut existing: Vec<PathBuf> = fs::read_dir(out)
            .map_err(|e| PipelineError::io(out, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()) && e.file_name().to_string_lossy().starts_with(&prefix))
            .map(|e| e.path())
            .collect();
        existing.sort();
        let dir = match existing.pop() {
            Some(d) => d,
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
                let d = out.join(format!("{prefix}{stamp}"));
                fs::create_dir_all(&d).map_err(|e| PipelineError::io(&d, e))?;
                d
            }
        };
        let cfg_path = dir.join("config.json");
        let text = serde_json::to_string_pretty(&config).map_err(|e| PipelineError::Runtime(e.to_string()))?;
        fs::write(&cfg_path, text + "\n").map_err(|e| PipelineError::io(&cfg_path, e))?;
        Ok(Self { dir, config, hash, quiet: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::MissingArtifact { name: name.into(), path: p })
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", &self.hash[..12], msg.as_ref());
        }
    }

    fn summary<T: Serialize>(&self, command: &str, results: T) -> Result<()> {
        report::write_summary(&self.path(&format!("{command}_summary.json")), command, &self.hash, self.config.seed, results)
    }

    fn write_svg(&self, name: &str, svg: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, svg).map_err(|e| PipelineError::io(&p, e))
    }

    fn corpus(&self) -> Result<Corpus> {
        jsonl::read_corpus(&self.require(CORPUS)?)
    }

    fn records(&self, corpus: &Corpus) -> Result<Vec<UserRecord>> {
        jsonl::read_users(&self.require(USERS)?, corpus)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthResult {
    pub interactions: usize,
    pub posts: usize,
    pub users: usize,
    pub sib_users: usize,
    pub sib_posts: usize,
    pub hard_posts: usize,
}

pub fn synth(run: &Run) -> Result<SynthResult> {
    let (corpus, truth, labels) = generate_corpus(&run.config.gen)?;
    jsonl::write_corpus(&run.path(CORPUS), &corpus)?;
    jsonl::write_labels(&run.path(GOLD_LABELS), &labels)?;
    jsonl::write_jsonl(&run.path(TRUTH), truth.users.iter().map(TruthLine::from))?;
    let r = SynthResult {
        interactions: corpus.len(),
        posts: corpus.posts().count(),
        users: corpus.user_count(),
        sib_users: truth.sib_user_count(),
        sib_posts: truth.sib_posts.len(),
        hard_posts: truth.hard_posts.len(),
    };
    run.log(format!("synth: {} interactions from {} users ({} SIB)", r.interactions, r.users, r.sib_users));
    run.summary("synth", &r)?;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestResult {
    pub interactions: usize,
    pub posts: usize,
    pub users: usize,
    pub threads: usize,
    pub labels: Option<usize>,
}

/// Validates the configured corpus (and labels, when given) and copies them
/// into the run directory in canonical form.
pub fn ingest(run: &Run) -> Result<IngestResult> {
    let src = run
        .config
        .paths
        .corpus
        .as_ref()
        .ok_or_else(|| PipelineError::Config("paths.corpus is not set".into()))?;
    if !src.exists() {
        return Err(PipelineError::MissingArtifact { name: "corpus".into(), path: src.clone() });
    }
    let corpus = jsonl::read_corpus(src)?;
    jsonl::write_corpus(&run.path(CORPUS), &corpus)?;
    let labels = match &run.config.paths.labels {
        Some(p) => {
            if !p.exists() {
                return Err(PipelineError::MissingArtifact { name: "labels".into(), path: p.clone() });
            }
            let labels = jsonl::read_labels(p)?;
            for l in &labels {
                if !corpus.by_id(&l.post_id).is_some_and(Interaction::is_post) {
                    return Err(PipelineError::Validation(format!("label for unknown post {:?}", l.post_id)));
                }
            }
            jsonl::write_labels(&run.path(GOLD_LABELS), &labels)?;
            Some(labels.len())
        }
        None => None,
    };
    let r = IngestResult {
        interactions: corpus.len(),
        posts: corpus.posts().count(),
        users: corpus.user_count(),
        threads: corpus.thread_count(),
        labels,
    };
    run.log(format!("ingest: {} interactions", r.interactions));
    run.summary("ingest", &r)?;
    Ok(r)
}

/// Tagged candidates plus a seeded random No-SIB sample, labelled from the
/// annotation file, in corpus order.
pub fn annotation_set(run: &Run, corpus: &Corpus, gold: &[PostLabel]) -> Result<Vec<PostLabel>> {
    let a = &run.config.annotation;
    let by_id: HashMap<&str, &PostLabel> = gold.iter().map(|l| (l.post_id.as_str(), l)).collect();
    let candidates = filter_annotation_candidates(corpus, &a.sib_tags);
    let pool = corpus.posts().filter(|p| is_negative_eligible(p, &a.sib_tags, &a.excluded_spans)).count();
    let wanted = ((candidates.len() as f64 * a.negative_ratio).round() as usize).min(pool);
    let negatives = sample_negatives(corpus, wanted, &a.sib_tags, &a.excluded_spans, rng::mix(run.config.seed, 0xA770))?;
    let mut chosen: Vec<&Interaction> = candidates.into_iter().chain(negatives).collect();
    chosen.sort_by(|x, y| x.order_key().cmp(&y.order_key()));
    chosen.dedup_by(|x, y| x.id == y.id);
    chosen
        .into_iter()
        .map(|p| match by_id.get(p.id.as_str()) {
            Some(l) => Ok((*l).clone()),
            None if !filter_annotation_candidates(&single(p), &a.sib_tags).is_empty() => {
                Err(PipelineError::Validation(format!("annotation candidate {:?} has no label", p.id)))
            }
            None => Ok(PostLabel { post_id: p.id.clone(), label: Label::NoSib, hard: false }),
        })
        .collect()
}

fn single(p: &Interaction) -> Corpus {
    Corpus::new(vec![p.clone()]).expect("a lone post is a valid corpus")
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectResult {
    pub annotated: usize,
    pub annotated_sib: usize,
    pub annotated_hard: usize,
    pub weighted_f1: MeanSd,
    pub recall: MeanSd,
    pub precision: Option<MeanSd>,
    pub folds: Vec<DetectionMetrics>,
    pub hard: Option<DetectionMetrics>,
    pub detector_param_hash: String,
}

pub fn detect_train(run: &Run) -> Result<DetectResult> {
    let corpus = run.corpus()?;
    let gold = jsonl::read_labels(&run.require(GOLD_LABELS)?)?;
    let labels = annotation_set(run, &corpus, &gold)?;
    jsonl::write_labels(&run.path(ANNOTATION), &labels)?;
    let posts: Vec<&Interaction> = labels.iter().map(|l| corpus.by_id(&l.post_id).expect("labelled post exists")).collect();
    let cfg = &run.config.detector;
    run.log(format!("detect-train: {} annotated posts, {} folds", posts.len(), run.config.annotation.folds));
    let cv = train_detector(&posts, &labels, cfg, run.config.annotation.folds)?;
    report::detector_folds(&run.path("detector_folds.csv"), &cv.folds)?;
    let hard = if labels.iter().any(|l| l.hard) {
        let m = evaluate_hard_subset(&cv, &posts, &labels)?;
        report::write_csv(
            &run.path("detector_hard.csv"),
            &["true", "predicted_0", "predicted_1", "count_0", "count_1"],
            [0usize, 1].iter().map(|&r| {
                let c = &m.confusion;
                let counts = if r == 0 { [c.tn, c.fp] } else { [c.fn_, c.tp] };
                vec![
                    r.to_string(),
                    m.row_normalized[r][0].to_string(),
                    m.row_normalized[r][1].to_string(),
                    counts[0].to_string(),
                    counts[1].to_string(),
                ]
            }),
        )?;
        Some(m)
    } else {
        None
    };
    let full = train_detector_full(&posts, &labels, cfg)?;
    let hash = param_hash(full.params());
    checkpoint::save_detector(&run.path(DETECTOR), &full, meta(run, &[]))?;
    let r = DetectResult {
        annotated: labels.len(),
        annotated_sib: labels.iter().filter(|l| l.label == Label::Sib).count(),
        annotated_hard: labels.iter().filter(|l| l.hard).count(),
        weighted_f1: cv.weighted_f1,
        recall: cv.recall,
        precision: cv.precision,
        folds: cv.folds.iter().map(|f| f.metrics).collect(),
        hard,
        detector_param_hash: hash,
    };
    run.log(format!("detect-train: weighted F1 {:.3} ± {:.3}", r.weighted_f1.mean, r.weighted_f1.sd));
    run.summary("detect_train", &r)?;
    Ok(r)
}

fn meta(run: &Run, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::from([
        ("config_hash".to_string(), run.hash.clone()),
        ("schema_version".to_string(), SCHEMA_VERSION.to_string()),
    ]);
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelResult {
    pub posts: usize,
    pub sib_posts: usize,
    /// Agreement with the annotation file over the posts it covers.
    pub agreement: Option<BinaryMetrics>,
    pub kappa: Option<f64>,
}

pub fn label(run: &Run) -> Result<LabelResult> {
    let corpus = run.corpus()?;
    let (det, _) = checkpoint::load_detector(&run.require(DETECTOR)?)?;
    let predicted = label_corpus(&det, &corpus);
    jsonl::write_labels(&run.path(PREDICTED_LABELS), &predicted)?;
    let (agreement, kappa) = match fs::metadata(run.path(GOLD_LABELS)) {
        Ok(_) => {
            let gold: HashMap<String, Label> =
                jsonl::read_labels(&run.path(GOLD_LABELS))?.into_iter().map(|l| (l.post_id, l.label)).collect();
            let (p, g): (Vec<u8>, Vec<u8>) = predicted
                .iter()
                .filter_map(|l| gold.get(&l.post_id).map(|g| (l.label.bit(), g.bit())))
                .unzip();
            if p.is_empty() {
                (None, None)
            } else {
                (Some(compute_metrics(&p, &g)?), Some(cohens_kappa(&p, &g)?))
            }
        }
        Err(_) => (None, None),
    };
    let r = LabelResult {
        posts: predicted.len(),
        sib_posts: predicted.iter().filter(|l| l.label == Label::Sib).count(),
        agreement,
        kappa,
    };
    run.log(format!("label: {} of {} posts labelled SIB", r.sib_posts, r.posts));
    run.summary("label", &r)?;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildResult {
    pub users: usize,
    pub class_counts: [usize; 2],
    pub exclusions: ExclusionReport,
}

pub fn build_users(run: &Run) -> Result<BuildResult> {
    let corpus = run.corpus()?;
    let labels = jsonl::read_labels(&run.require(PREDICTED_LABELS)?)?;
    let ds = build_user_dataset(&corpus, &labels)?;
    jsonl::write_users(&run.path(USERS), &corpus, &ds.records)?;
    if let Some(s) = history_stats(&ds.records) {
        report::history_stats(&run.path("user_stats.csv"), &s)?;
    }
    let r = BuildResult { users: ds.records.len(), class_counts: ds.class_counts(), exclusions: ds.report };
    run.log(format!("build-users: {} users, {} SIB", r.users, r.class_counts[1]));
    run.summary("build_users", &r)?;
    Ok(r)
}

/// Test folds as user ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFile {
    pub folds: Vec<Vec<String>>,
}

fn resolve_folds(file: &FoldFile, records: &[UserRecord]) -> Result<Vec<Vec<usize>>> {
    let index: HashMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.user.as_str(), i)).collect();
    file.folds
        .iter()
        .map(|f| {
            f.iter()
                .map(|u| index.get(u.as_str()).copied().ok_or_else(|| PipelineError::Validation(format!("fold user {u:?} not in dataset"))))
                .collect()
        })
        .collect()
}

fn model_path(run: &Run, k: usize) -> PathBuf {
    run.path(MODELS).join(format!("fold{k}.ckpt"))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainResult {
    pub hyper: HyperParams,
    pub balanced_accuracy: MeanSd,
    pub recall: MeanSd,
    pub precision: Option<MeanSd>,
    pub weighted_f1: MeanSd,
    pub folds: Vec<BinaryMetrics>,
    pub best_epochs: Vec<usize>,
    pub random: MeanSd,
    pub majority: MeanSd,
    pub mcnemar_vs_random: McNemar,
    pub mcnemar_vs_majority: McNemar,
    pub param_hashes: Vec<String>,
    #[serde(skip)]
    pub report: Option<EvalReport>,
}

fn labels_of(records: &[UserRecord]) -> Vec<Label> {
    records.iter().map(|r| r.label).collect()
}

fn versus(a: &EvalReport, b: &EvalReport) -> Result<McNemar> {
    Ok(mcnemar(&a.predicted_labels(), &b.predicted_labels(), &a.true_labels())?)
}

pub fn train(run: &Run) -> Result<TrainResult> {
    let corpus = run.corpus()?;
    let records = run.records(&corpus)?;
    let c = &run.config;
    let labels = labels_of(&records);
    let folds = stratified_kfold(&labels, c.train.k_folds, c.train.seed)?;
    let fold_file = FoldFile { folds: folds.iter().map(|f| f.iter().map(|&i| records[i].user.clone()).collect()).collect() };
    write_json(&run.path(FOLDS), &fold_file)?;
    let data = UserData::build(&c.model, &corpus, &records)?;
    let hyper = if c.grid_search {
        run.log(format!("train: grid search over {} points", c.train.grid().len()));
        let g = grid_search(&c.model, &data, &c.train, &folds)?;
        report::grid(&run.path("grid.csv"), &g)?;
        g.best
    } else {
        c.train.hyper
    };
    run.log(format!("train: {} users, {} folds", records.len(), folds.len()));
    let cv = cross_validate_with("early-sib", &c.model, &data, &c.train, &hyper, &folds, |k, e| {
        run.log(format!("  fold {k} epoch {}: loss {:.4}, val BA {:.3}", e.epoch, e.train_loss, e.val_balanced_accuracy));
    })?;
    let (random, majority) = run_baselines(&labels, &folds, c.train.seed)?;
    let models_dir = run.path(MODELS);
    fs::create_dir_all(&models_dir).map_err(|e| PipelineError::io(&models_dir, e))?;
    let mut hashes = Vec::new();
    for (k, m) in cv.models.iter().enumerate() {
        checkpoint::save_model(&model_path(run, k), m, meta(run, &[("fold", k.to_string())]))?;
        hashes.push(param_hash(m.params()));
    }
    let rep = &cv.report;
    report::eval_folds(&run.path("train_folds.csv"), &[rep, &random, &majority])?;
    report::eval_summary(&run.path("train_metrics.csv"), &[rep, &random, &majority])?;
    report::confusion_matrix(&run.path("confusion.csv"), rep)?;
    let users: Vec<String> = records.iter().map(|r| r.user.clone()).collect();
    report::predictions(&run.path("predictions.csv"), &users, rep)?;
    let curves: Vec<(usize, &_)> = rep.folds.iter().filter_map(|f| f.curve.as_ref().map(|c| (f.fold, c))).collect();
    report::curves(&run.path("curves.csv"), &curves)?;
    let vs_random = versus(rep, &random)?;
    let vs_majority = versus(rep, &majority)?;
    report::mcnemar_table(
        &run.path("train_mcnemar.csv"),
        &[("early-sib".into(), "random".into(), vs_random), ("early-sib".into(), "majority".into(), vs_majority)],
    )?;
    let r = TrainResult {
        hyper,
        balanced_accuracy: rep.balanced_accuracy,
        recall: rep.recall,
        precision: rep.precision,
        weighted_f1: rep.weighted_f1,
        folds: rep.folds.iter().map(|f| f.metrics).collect(),
        best_epochs: rep.folds.iter().filter_map(|f| f.curve.as_ref().map(|c| c.best_epoch)).collect(),
        random: random.balanced_accuracy,
        majority: majority.balanced_accuracy,
        mcnemar_vs_random: vs_random,
        mcnemar_vs_majority: vs_majority,
        param_hashes: hashes,
        report: Some(cv.report),
    };
    run.log(format!("train: balanced accuracy {:.3} ± {:.3}", r.balanced_accuracy.mean, r.balanced_accuracy.sd));
    run.summary("train", &r)?;
    Ok(r)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

/// Fold models from `train`, each with the records it held out.
fn load_fold_models(run: &Run, records: &[UserRecord]) -> Result<(Vec<EarlySibModel>, Vec<Vec<usize>>)> {
    let folds = resolve_folds(&read_json(&run.require(FOLDS)?)?, records)?;
    let mut models = Vec::with_capacity(folds.len());
    for k in 0..folds.len() {
        let name = format!("{MODELS}/fold{k}.ckpt");
        models.push(checkpoint::load_model(&run.require(&name)?)?.0);
    }
    Ok((models, folds))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateResult {
    pub balanced_accuracy: MeanSd,
    pub recall: MeanSd,
    pub precision: Option<MeanSd>,
    pub weighted_f1: MeanSd,
    pub row_normalized: [[f64; 2]; 2],
    pub mcnemar_vs_random: McNemar,
    pub mcnemar_vs_majority: McNemar,
    pub param_hashes: Vec<String>,
}

/// Re-scores every held-out fold from the saved checkpoints.
pub fn evaluate(run: &Run) -> Result<EvaluateResult> {
    let corpus = run.corpus()?;
    let records = run.records(&corpus)?;
    let (models, folds) = load_fold_models(run, &records)?;
    let labels = labels_of(&records);
    let mut reports = Vec::new();
    let mut preds = Vec::new();
    for (k, (model, test)) in models.iter().zip(&folds).enumerate() {
        let data = UserData::build(model.config(), &corpus, &records)?;
        let out = predict(model, &data.inputs, test);
        let truth: Vec<u8> = test.iter().map(|&i| labels[i].bit()).collect();
        let guess: Vec<u8> = out.iter().map(|p| p.0).collect();
        for (&i, (p, prob)) in test.iter().zip(out) {
            preds.push(Prediction { index: i, label: labels[i].bit(), predicted: p, probability: prob });
        }
        let metrics: BinaryMetrics = Confusion::from_predictions(&guess, &truth)?.into();
        reports.push(FoldReport { fold: k, metrics, test: test.clone(), train: vec![], val: vec![], curve: None });
    }
    let rep = EvalReport::from_folds("early-sib", reports, preds);
    let (random, majority) = run_baselines(&labels, &folds, run.config.train.seed)?;
    report::eval_folds(&run.path("evaluation_folds.csv"), &[&rep, &random, &majority])?;
    report::eval_summary(&run.path("evaluation_metrics.csv"), &[&rep, &random, &majority])?;
    report::confusion_matrix(&run.path("evaluation_confusion.csv"), &rep)?;
    let r = EvaluateResult {
        balanced_accuracy: rep.balanced_accuracy,
        recall: rep.recall,
        precision: rep.precision,
        weighted_f1: rep.weighted_f1,
        row_normalized: rep.pooled_confusion().row_normalized(),
        mcnemar_vs_random: versus(&rep, &random)?,
        mcnemar_vs_majority: versus(&rep, &majority)?,
        param_hashes: models.iter().map(|m| param_hash(m.params())).collect(),
    };
    run.log(format!("evaluate: balanced accuracy {:.3} ± {:.3}", r.balanced_accuracy.mean, r.balanced_accuracy.sd));
    run.summary("evaluate", &r)?;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub max_interactions: usize,
    pub balanced_accuracy: MeanSd,
}

pub fn sweep(run: &Run) -> Result<Vec<SweepRow>> {
    let corpus = run.corpus()?;
    let records = run.records(&corpus)?;
    let c = &run.config;
    run.log(format!("sweep: windows {:?}", c.sweep_windows));
    let points = context_window_sweep(&c.model, &corpus, &records, &c.train, &c.train.hyper, &c.sweep_windows)?;
    report::sweep(&run.path("sweep.csv"), &points)?;
    let reports: Vec<&EvalReport> = points.iter().map(|p| &p.report).collect();
    report::eval_folds(&run.path("sweep_folds.csv"), &reports)?;
    let chart: Vec<svg::Point> = points
        .iter()
        .map(|p| svg::Point { x: p.max_interactions as f64, y: p.balanced_accuracy.mean, err: p.balanced_accuracy.sd })
        .collect();
    run.write_svg("sweep.svg", &svg::line_chart("Balanced accuracy by context window", "maximum interactions N", "balanced accuracy", &chart))?;
    let rows: Vec<SweepRow> =
        points.iter().map(|p| SweepRow { max_interactions: p.max_interactions, balanced_accuracy: p.balanced_accuracy }).collect();
    run.summary("sweep", &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub config: String,
    pub balanced_accuracy: MeanSd,
    pub recall: MeanSd,
    pub precision: Option<MeanSd>,
    pub mcnemar_vs_full: Option<McNemar>,
}

pub fn ablate(run: &Run) -> Result<Vec<AblationRow>> {
    let corpus = run.corpus()?;
    let records = run.records(&corpus)?;
    let c = &run.config;
    let labels = labels_of(&records);
    let folds = stratified_kfold(&labels, c.train.k_folds, c.train.seed)?;
    let mut reports = Vec::new();
    for (name, cfg) in ablation_configs(&c.model) {
        run.log(format!("ablate: {name}"));
        cfg.validate()?;
        let data = UserData::build(&cfg, &corpus, &records)?;
        reports.push(cross_validate_with(name, &cfg, &data, &c.train, &c.train.hyper, &folds, |_, _| {})?.report);
    }
    let refs: Vec<&EvalReport> = reports.iter().collect();
    report::eval_folds(&run.path("ablation_folds.csv"), &refs)?;
    report::eval_summary(&run.path("ablation_metrics.csv"), &refs)?;
    let full = &reports[0];
    let mut tests = Vec::new();
    let mut rows = Vec::new();
    for r in &reports {
        let m = if std::ptr::eq(r, full) { None } else { Some(versus(full, r)?) };
        if let Some(m) = m {
            tests.push((full.name.clone(), r.name.clone(), m));
        }
        rows.push(AblationRow {
            config: r.name.clone(),
            balanced_accuracy: r.balanced_accuracy,
            recall: r.recall,
            precision: r.precision,
            mcnemar_vs_full: m,
        });
    }
    report::mcnemar_table(&run.path("ablation_mcnemar.csv"), &tests)?;
    run.summary("ablate", &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainResult {
    pub explained: usize,
    pub complexity: Option<MeanSd>,
    pub lead_time_days: Option<MeanSd>,
    /// Share of lead times under one day.
    pub under_one_day: Option<f64>,
    pub complexity_histogram: Vec<u64>,
    pub lead_time_histogram: Vec<u64>,
}

fn snippet(it: &Interaction, corpus: &Corpus) -> String {
    let text = match it.kind {
        Kind::Post => it.title.clone().unwrap_or_default(),
        Kind::Reply => it.body.clone(),
    };
    let text = if text.is_empty() { corpus.parent_of(it).and_then(|p| p.title.clone()).unwrap_or_default() } else { text };
    text.chars().take(40).collect()
}

/// Waterfall CSV (one row per interaction in chronological order, with the
/// running total from the base value) and SVG.
pub fn write_waterfall(dir: &Path, corpus: &Corpus, e: &Explanation) -> Result<()> {
    fs::create_dir_all(dir).map_err(|err| PipelineError::io(dir, err))?;
    let mut acc = e.base_value;
    let mut rows = Vec::new();
    let mut steps = Vec::new();
    for (id, &phi) in e.interactions.iter().zip(&e.phi) {
        let it = corpus.by_id(id).ok_or_else(|| PipelineError::Validation(format!("unknown interaction {id:?}")))?;
        let kind = if it.is_post() { "post" } else { "reply" };
        acc += phi;
        let text = snippet(it, corpus);
        rows.push(vec![id.clone(), kind.to_string(), text.clone(), phi.to_string(), acc.to_string()]);
        steps.push(svg::Step { label: format!("{} {}", if it.is_post() { "P" } else { "R" }, text), value: phi });
    }
    let stem = dir.join(&e.user);
    report::write_csv(&stem.with_extension("csv"), &["interaction_id", "kind", "text", "phi", "cumulative"], rows)?;
    let fig = svg::waterfall(&format!("{} f(x) = {:.3}", e.user, e.fx), e.base_value, &steps);
    let p = stem.with_extension("svg");
    fs::write(&p, fig).map_err(|err| PipelineError::io(&p, err))
}

pub fn explain(run: &Run) -> Result<ExplainResult> {
    let corpus = run.corpus()?;
    let records = run.records(&corpus)?;
    let (models, folds) = load_fold_models(run, &records)?;
    let ec = &run.config.explain;
    let mut holder = vec![0usize; records.len()];
    for (k, f) in folds.iter().enumerate() {
        f.iter().for_each(|&i| holder[i] = k);
    }
    let mut chosen: Vec<usize> =
        (0..records.len()).filter(|&i| ec.cohort == Cohort::All || records[i].label == Label::Sib).collect();
    if let Some(m) = ec.max_users {
        chosen.truncate(m);
    }
    run.log(format!("explain: {} users", chosen.len()));
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for (n, &i) in chosen.iter().enumerate() {
        let rec = &records[i];
        let model = &models[holder[i]];
        let ctx = select_context(&corpus, rec, &model.config().context)?;
        let e = shapley(model, &corpus, &rec.user, &ctx, ec.permutations, rng::mix(run.config.seed, 0x5AA9 + i as u64))?;
        let cx = complexity(&e);
        let lead = if rec.label == Label::Sib && !e.phi.is_empty() {
            Some(lead_time_with(&e, rec, ec.lead_rule)?)
        } else {
            None
        };
        if (n + 1) % 25 == 0 {
            run.log(format!("  explained {} users", n + 1));
        }
        rows.push(CohortRow {
            user: rec.user.clone(),
            label: rec.label.bit(),
            interactions: e.phi.len(),
            fx: e.fx,
            complexity: cx.defined.then_some(cx.entropy),
            lead_time: lead.clone(),
        });
        lines.push(ExplanationLine { explanation: e, complexity: cx, lead_time: lead });
    }
    jsonl::write_jsonl(&run.path("explanations.jsonl"), &lines)?;
    report::cohort(&run.path("cohort.csv"), &rows)?;

    let scores: Vec<ComplexityScore> = lines.iter().map(|l| l.complexity).collect();
    let ch = complexity_histogram(&scores);
    report::histogram(&run.path("complexity_histogram.csv"), &ch)?;
    let edges: Vec<f64> = (0..=ch.counts.len()).map(|i| (i as f64 * ch.bin_width * 10.0).round() / 10.0).collect();
    run.write_svg("complexity_histogram.svg", &svg::histogram("Explanation complexity", "normalized entropy", &edges, &ch.counts))?;
    let days: Vec<u64> = lines.iter().filter_map(|l| l.lead_time.as_ref().map(|t| t.days_before_sib)).collect();
    let lh = lead_time_histogram(&days);
    report::histogram(&run.path("lead_time_histogram.csv"), &lh)?;
    let edges: Vec<f64> = (0..=lh.counts.len()).map(|i| i as f64 * lh.bin_width).collect();
    run.write_svg("lead_time_histogram.svg", &svg::histogram("Most predictive interaction before SIB", "days", &edges, &lh.counts))?;

    let mut by_fx: Vec<&ExplanationLine> = lines.iter().collect();
    by_fx.sort_by(|a, b| b.explanation.fx.total_cmp(&a.explanation.fx).then(a.explanation.user.cmp(&b.explanation.user)));
    for l in by_fx.into_iter().take(ec.waterfalls) {
        write_waterfall(&run.path("waterfalls"), &corpus, &l.explanation)?;
    }

    let defined: Vec<f64> = scores.iter().filter(|s| s.defined).map(|s| s.entropy).collect();
    let r = ExplainResult {
        explained: lines.len(),
        complexity: (!defined.is_empty()).then(|| MeanSd::of(&defined)),
        lead_time_days: (!days.is_empty()).then(|| MeanSd::of(&days.iter().map(|&d| d as f64).collect::<Vec<_>>())),
        under_one_day: (!days.is_empty()).then(|| days.iter().filter(|&&d| d == 0).count() as f64 / days.len() as f64),
        complexity_histogram: ch.counts,
        lead_time_histogram: lh.counts,
    };
    run.summary("explain", &r)?;
    Ok(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SummaryFile {
    schema_version: u32,
    command: String,
    config_hash: String,
    seed: u64,
    results: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportResult {
    pub runs: usize,
    pub summaries: usize,
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                flatten(&if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") }, x, out);
            }
        }
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), x, out);
            }
        }
        serde_json::Value::Null => {}
        serde_json::Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

/// Collects every command summary under `out` into `report.csv` and
/// `report.md`. Fails when there are no runs or the runs disagree on the
/// schema version.
pub fn report(out: &Path) -> Result<ReportResult> {
    let mut runs: Vec<PathBuf> = match fs::read_dir(out) {
        Ok(d) => d.filter_map(|e| e.ok()).filter(|e| e.path().join("config.json").is_file()).map(|e| e.path()).collect(),
        Err(_) => Vec::new(),
    };
    runs.sort();
    let mut found = Vec::new();
    for dir in &runs {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| PipelineError::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with("_summary.json")))
            .collect();
        files.sort();
        for f in files {
            let s: SummaryFile = read_json(&f)?;
            found.push((dir.file_name().unwrap_or_default().to_string_lossy().into_owned(), s));
        }
    }
    if found.is_empty() {
        return Err(PipelineError::MissingArtifact { name: "run summaries".into(), path: out.to_path_buf() });
    }
    if let Some((run, s)) = found.iter().find(|(_, s)| s.schema_version != SCHEMA_VERSION) {
        return Err(PipelineError::Validation(format!(
            "run {run} ({}) has schema version {}, expected {SCHEMA_VERSION}",
            s.command, s.schema_version
        )));
    }
    let mut rows = Vec::new();
    let mut md = String::from("# Pipeline report\n");
    let mut last_run = String::new();
    for (run, s) in &found {
        if *run != last_run {
            md.push_str(&format!("\n## {run}\n\nconfig hash `{}`, seed {}\n", s.config_hash, s.seed));
            last_run = run.clone();
        }
        md.push_str(&format!("\n### {}\n\n| metric | value |\n|---|---|\n", s.command));
        let mut flat = Vec::new();
        flatten("", &s.results, &mut flat);
        for (k, v) in flat {
            if !k.contains("histogram") && !k.starts_with("folds.") && !k.contains("param_hash") {
                md.push_str(&format!("| {k} | {v} |\n"));
            }
            rows.push(vec![run.clone(), s.command.clone(), s.config_hash.clone(), k, v]);
        }
    }
    report::write_csv(&out.join("report.csv"), &["run", "command", "config_hash", "key", "value"], &rows)?;
    let p = out.join("report.md");
    fs::write(&p, md).map_err(|e| PipelineError::io(&p, e))?;
    Ok(ReportResult { runs: runs.len(), summaries: found.len() })
}

/// A detector loaded from the run, for callers that label new text.
pub fn load_detector(run: &Run) -> Result<Detector> {
    Ok(checkpoint::load_detector(&run.require(DETECTOR)?)?.0)
}
