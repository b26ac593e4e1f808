//! End-to-end orchestration behind the command-line tool: configuration,
//! per-app feature extraction, dataset assembly, training, tuning,
//! prediction and evaluation. Every random choice derives from
//! [`PipelineConfig::seed`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::callgraph::{build_call_graph, CallbackList, LifecycleTable};
use crate::error::{Error, Result};
use crate::flowgraph::icc::IccResolver;
use crate::flowgraph::{build_edges, chunk_methods, AbstractFlowGraph, EdgeType};
use crate::ir::{load_app, AppModel, Diagnostic, Label};
use crate::metrics::{
    compute_metrics, grid_search, split_dataset, stratified_subset, Factor, GridResult, MetricReport, SearchSpace,
    Split,
};
use crate::miner::CriticalApiSet;
use crate::nn::{train_with, Hyperparams, Model, ModelConfig, Prediction, Sample, TrainConfig};
use crate::trace::{
    build_matrix, extract_opcodes, find_call_traces, sample_opcodes, traces_from_tsv, traces_to_tsv, CallTrace,
    SamplingReport, SequenceMatrix, TraceCaps, DEFAULT_SAMPLE_BOUND,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub critical_apis: Option<PathBuf>,
    pub lifecycle: Option<PathBuf>,
    pub callbacks: Option<PathBuf>,
    pub intent_senders: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// Share of each class used for the sweep subsets.
    pub fraction: f64,
    /// Factors to sweep; empty means all.
    pub factors: Vec<Factor>,
    /// Re-score the top three points on the full train/validation sets.
    pub revalidate: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            fraction: 0.125,
            factors: Vec::new(),
            revalidate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Opcode budget per app before per-trace truncation.
    pub sample_bound: usize,
    pub pad_short_traces: bool,
    pub workers: usize,
    pub state_dim: usize,
    pub embed_dim: usize,
    pub threshold: f64,
    pub caps: TraceCaps,
    pub hyper: Hyperparams,
    pub train: TrainConfig,
    pub tune: TuneConfig,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            sample_bound: DEFAULT_SAMPLE_BOUND,
            pad_short_traces: false,
            workers: 1,
            state_dim: ModelConfig::DEFAULT_STATE_DIM,
            embed_dim: ModelConfig::DEFAULT_EMBED_DIM,
            threshold: crate::metrics::DEFAULT_THRESHOLD,
            caps: TraceCaps::default(),
            hyper: Hyperparams::default(),
            train: TrainConfig::default(),
            tune: TuneConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML file; relative table paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.critical_apis,
            &mut cfg.paths.lifecycle,
            &mut cfg.paths.callbacks,
            &mut cfg.paths.intent_senders,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let positive = [
            ("sample_bound", self.sample_bound),
            ("workers", self.workers),
            ("state_dim", self.state_dim),
            ("embed_dim", self.embed_dim),
            ("caps.max_depth", self.caps.max_depth),
            ("caps.max_traces_per_entry", self.caps.max_traces_per_entry),
            ("hyper.row_len", h.row_len),
            ("hyper.hidden_layers", h.hidden_layers),
            ("hyper.lstm_units", h.lstm_units),
            ("hyper.label_len", h.label_len),
            ("hyper.gnn_steps", h.gnn_steps),
            ("hyper.batch_size", h.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        if self.train.learning_rate.is_nan() || self.train.learning_rate < 0.0 {
            return Err(Error::Config("train.learning_rate must be non-negative".into()));
        }
        if !(self.tune.fraction > 0.0 && self.tune.fraction <= 1.0) {
            return Err(Error::Config("tune.fraction must lie in (0, 1]".into()));
        }
        let p = &self.paths;
        for path in [&p.critical_apis, &p.lifecycle, &p.callbacks, &p.intent_senders]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hyper: self.hyper,
            state_dim: self.state_dim,
            embed_dim: self.embed_dim,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }
}

/// Analysis tables: critical APIs, lifecycle methods, callbacks and intent senders.
#[derive(Debug, Clone)]
pub struct Tables {
    pub critical: CriticalApiSet,
    pub lifecycle: LifecycleTable,
    pub callbacks: CallbackList,
    pub icc: IccResolver,
}

impl Default for Tables {
    fn default() -> Self {
        Tables {
            critical: CriticalApiSet::bundled(),
            lifecycle: LifecycleTable::default(),
            callbacks: CallbackList::default(),
            icc: IccResolver::default(),
        }
    }
}

impl Tables {
    pub fn load(paths: &Paths) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let mut t = Tables::default();
        if let Some(p) = &paths.critical_apis {
            t.critical = CriticalApiSet::load(p)?;
        }
        if let Some(p) = &paths.lifecycle {
            t.lifecycle = LifecycleTable::load(p)?;
        }
        if let Some(p) = &paths.callbacks {
            t.callbacks = CallbackList::load(p)?;
        }
        if let Some(p) = &paths.intent_senders {
            t.icc = IccResolver::parse(&read(p)?);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub icc_edges: usize,
    pub entry_points: usize,
}

/// Per-app extraction summary written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppReport {
    pub app_id: String,
    pub label: Option<Label>,
    pub timestamp: Option<NaiveDate>,
    /// Number of call traces (y).
    pub traces: usize,
    pub sampling: SamplingReport,
    pub matrix_rows: usize,
    pub call_graph: GraphStats,
    pub chunks: usize,
    pub edge_counts: BTreeMap<String, usize>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Features of one app: the flow graph and the unsampled call traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AppFeatures {
    pub app_id: String,
    pub label: Option<Label>,
    pub timestamp: Option<NaiveDate>,
    pub graph: AbstractFlowGraph,
    pub traces: Vec<CallTrace>,
}

impl AppFeatures {
    /// Sampled opcode matrix for the given row length; empty if no row forms.
    pub fn matrix(&self, row_len: usize, sample_bound: usize, pad: bool) -> SequenceMatrix {
        let mut traces = self.traces.clone();
        sample_opcodes(&mut traces, sample_bound, row_len);
        build_matrix(&traces, row_len, pad).unwrap_or_else(|_| SequenceMatrix::empty(row_len))
    }

    /// Network input; unlabeled apps get a placeholder label.
    pub fn sample(&self, model: &ModelConfig, sample_bound: usize, pad: bool) -> Result<Sample> {
        let m = self.matrix(model.hyper.row_len, sample_bound, pad);
        Sample::new(&self.graph, m, self.label.unwrap_or(Label::Benign), model)
    }

    pub fn save(&self, dir: &Path, report: &AppReport, matrix: &SequenceMatrix) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.graph.save(&dir.join("nodes.csv"), &dir.join("edges.csv"))?;
        matrix.save(&dir.join("matrix.csv"))?;
        let tp = dir.join("traces.tsv");
        fs::write(&tp, traces_to_tsv(&self.traces)).map_err(|e| Error::io(&tp, e))?;
        let rp = dir.join("report.json");
        fs::write(&rp, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&rp, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let rp = dir.join("report.json");
        let report: AppReport =
            serde_json::from_str(&fs::read_to_string(&rp).map_err(|e| Error::io(&rp, e))?)?;
        let graph = AbstractFlowGraph::load(&dir.join("nodes.csv"), &dir.join("edges.csv"))?;
        let tp = dir.join("traces.tsv");
        let traces = traces_from_tsv(&fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?)?;
        Ok(AppFeatures {
            app_id: report.app_id,
            label: report.label,
            timestamp: report.timestamp,
            graph,
            traces,
        })
    }
}

/// Runs the static analyses on one parsed app.
pub fn extract_features(app: &AppModel, tables: &Tables, cfg: &PipelineConfig) -> Result<(AppFeatures, AppReport)> {
    let (_, cg) = build_call_graph(app, &tables.lifecycle, &tables.callbacks, &tables.icc)?;
    let (mut traces, mut diagnostics) = find_call_traces(&cg, &tables.critical, cfg.caps);
    diagnostics.extend(app.diagnostics.iter().cloned());
    diagnostics.extend(cg.diagnostics.iter().cloned());
    traces.retain_mut(|t| match extract_opcodes(t, app) {
        Ok(codes) => {
            t.opcodes = codes;
            true
        }
        Err(e) => {
            diagnostics.push(Diagnostic {
                source: t.entry().to_string(),
                message: e.to_string(),
            });
            false
        }
    });
    let chunks = chunk_methods(app, &tables.icc, &tables.critical);
    let (edges, edge_diags) = build_edges(app, &chunks, &cg, &traces, &tables.icc);
    diagnostics.extend(edge_diags);
    let graph = AbstractFlowGraph::from_parts(&chunks, edges);

    let mut sampled = traces.clone();
    let sampling = sample_opcodes(&mut sampled, cfg.sample_bound, cfg.hyper.row_len);
    let matrix_rows = build_matrix(&sampled, cfg.hyper.row_len, cfg.pad_short_traces).map_or(0, |m| m.n());
    let report = AppReport {
        app_id: app.app_id.clone(),
        label: app.metadata.label,
        timestamp: app.metadata.timestamp,
        traces: traces.len(),
        sampling,
        matrix_rows,
        call_graph: GraphStats {
            nodes: cg.nodes.len(),
            edges: cg.edge_count(),
            icc_edges: cg.icc_edges.len(),
            entry_points: cg.entry_points.len(),
        },
        chunks: chunks.len(),
        edge_counts: EdgeType::ALL
            .iter()
            .map(|&t| (t.tag().to_string(), graph.count(t)))
            .collect(),
        diagnostics,
    };
    let features = AppFeatures {
        app_id: app.app_id.clone(),
        label: app.metadata.label,
        timestamp: app.metadata.timestamp,
        graph,
        traces,
    };
    Ok((features, report))
}

/// Outcome of one app in a batch extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub app_id: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub traces: usize,
    pub diagnostics: usize,
}

/// App roots below `input`: the input itself when it looks like an app,
/// otherwise its sorted child directories and `.json` files.
pub fn discover_apps(input: &Path) -> Result<Vec<PathBuf>> {
    let is_app = |p: &Path| {
        p.is_file() && p.extension().is_some_and(|e| e == "json")
            || p.join("AndroidManifest.xml").exists()
            || p.join("smali").is_dir()
    };
    if is_app(input) {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() || p.extension().is_some_and(|e| e == "json"))
        .collect();
    out.sort();
    Ok(out)
}

fn app_name(root: &Path) -> String {
    let name = if root.is_file() { root.file_stem() } else { root.file_name() };
    name.map_or_else(|| root.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn extract_one(root: &Path, out_dir: &Path, tables: &Tables, cfg: &PipelineConfig) -> BatchEntry {
    let app_id = app_name(root);
    let result = load_app(root).and_then(|mut app| {
        app.app_id = app_id.clone();
        let (features, report) = extract_features(&app, tables, cfg)?;
        let matrix = features.matrix(cfg.hyper.row_len, cfg.sample_bound, cfg.pad_short_traces);
        features.save(&out_dir.join(&app_id), &report, &matrix)?;
        Ok(report)
    });
    match result {
        Ok(r) => BatchEntry {
            app_id,
            ok: true,
            error: None,
            traces: r.traces,
            diagnostics: r.diagnostics.len(),
        },
        Err(e) => {
            log::warn!("{app_id}: {e}");
            BatchEntry {
                app_id,
                ok: false,
                error: Some(e.to_string()),
                traces: 0,
                diagnostics: 0,
            }
        }
    }
}

/// Extracts every app, writing one feature directory per app and
/// `extraction.json` listing one entry per input app.
pub fn extract_batch(apps: &[PathBuf], out_dir: &Path, tables: &Tables, cfg: &PipelineConfig) -> Result<Vec<BatchEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let workers = cfg.workers.clamp(1, apps.len().max(1));
    let mut entries: Vec<Option<BatchEntry>> = vec![None; apps.len()];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..apps.len())
                        .step_by(workers)
                        .map(|i| (i, extract_one(&apps[i], out_dir, tables, cfg)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, e) in h.join().expect("extraction worker panicked") {
                entries[i] = Some(e);
            }
        }
    });
    let entries: Vec<BatchEntry> = entries.into_iter().map(|e| e.expect("every app processed")).collect();
    let path = out_dir.join("extraction.json");
    fs::write(&path, serde_json::to_string_pretty(&entries)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Loads every feature directory below `dir`, sorted by app id.
pub fn load_feature_set(dir: &Path) -> Result<Vec<AppFeatures>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.json").exists())
        .collect();
    dirs.sort();
    let mut out: Vec<AppFeatures> = dirs.iter().map(|d| AppFeatures::load(d)).collect::<Result<_>>()?;
    out.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub random_test: bool,
}

/// Labeled apps split 8:1:1 (newest tenth per class as test).
pub fn split_features(apps: &[AppFeatures], seed: u64) -> (Vec<usize>, Split) {
    let labeled: Vec<usize> = (0..apps.len()).filter(|&i| apps[i].label.is_some()).collect();
    let items: Vec<(Option<NaiveDate>, Label)> = labeled
        .iter()
        .map(|&i| (apps[i].timestamp, apps[i].label.expect("filtered")))
        .collect();
    let s = split_dataset(&items, seed);
    let remap = |v: Vec<usize>| v.into_iter().map(|k| labeled[k]).collect();
    let split = Split {
        train: remap(s.train),
        val: remap(s.val),
        test: remap(s.test),
        random_test: s.random_test,
    };
    (labeled, split)
}

pub fn split_ids(apps: &[AppFeatures], s: &Split) -> SplitIds {
    let ids = |v: &[usize]| v.iter().map(|&i| apps[i].app_id.clone()).collect();
    SplitIds {
        train: ids(&s.train),
        val: ids(&s.val),
        test: ids(&s.test),
        random_test: s.random_test,
    }
}

fn samples(apps: &[AppFeatures], idx: &[usize], model: &ModelConfig, cfg: &PipelineConfig) -> Result<Vec<Sample>> {
    idx.iter()
        .map(|&i| apps[i].sample(model, cfg.sample_bound, cfg.pad_short_traces))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: Model,
    pub losses: Vec<f64>,
    pub split: SplitIds,
}

/// Splits the labeled apps and trains on the training part.
pub fn train_on_features(apps: &[AppFeatures], cfg: &PipelineConfig) -> Result<TrainRun> {
    let (_, split) = split_features(apps, cfg.seed);
    let mc = cfg.model_config();
    let train_set = samples(apps, &split.train, &mc, cfg)?;
    let out = train_with(&train_set, mc, &cfg.train_config(), |_, _| {})?;
    Ok(TrainRun {
        model: out.model,
        losses: out.losses,
        split: split_ids(apps, &split),
    })
}

pub fn losses_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{l:.12}", i + 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub app_id: String,
    pub prediction: Prediction,
    pub label: Option<Label>,
}

pub fn predict_apps(model: &Model, apps: &[&AppFeatures], cfg: &PipelineConfig) -> Result<Vec<PredictionRow>> {
    apps.iter()
        .map(|a| {
            let s = a.sample(&model.config, cfg.sample_bound, cfg.pad_short_traces)?;
            Ok(PredictionRow {
                app_id: a.app_id.clone(),
                prediction: model.predict(&s),
                label: a.label,
            })
        })
        .collect()
}

fn label_str(l: Label) -> &'static str {
    match l {
        Label::Benign => "benign",
        Label::Malicious => "malicious",
    }
}

fn parse_label(s: &str) -> Result<Option<Label>> {
    match s {
        "" => Ok(None),
        "benign" | "0" => Ok(Some(Label::Benign)),
        "malicious" | "1" => Ok(Some(Label::Malicious)),
        _ => Err(Error::Format(format!("unknown label `{s}`"))),
    }
}

pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut out = String::from("app_id,predicted,probability,malicious_score,label\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.12},{:.12},{}",
            r.app_id,
            label_str(r.prediction.label),
            r.prediction.probability,
            r.prediction.malicious,
            r.label.map_or("", label_str)
        );
    }
    out
}

/// Reads `(malicious score, true label)` pairs from a predictions file.
pub fn parse_predictions(text: &str) -> Result<(Vec<f64>, Vec<Label>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("empty predictions file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Format(format!("predictions file lacks a `{name}` column")))
    };
    let (score_col, label_col) = (col("malicious_score")?, col("label")?);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != header.len() {
            return Err(Error::Format(format!("bad predictions line `{line}`")));
        }
        let score: f64 = f[score_col]
            .parse()
            .map_err(|_| Error::Format(format!("bad score in `{line}`")))?;
        let label = parse_label(f[label_col])?.ok_or_else(|| Error::Format(format!("missing label in `{line}`")))?;
        scores.push(score);
        labels.push(label);
    }
    Ok((scores, labels))
}

pub fn evaluate_rows(rows: &[PredictionRow], threshold: f64) -> Result<MetricReport> {
    let labeled: Vec<&PredictionRow> = rows.iter().filter(|r| r.label.is_some()).collect();
    let scores: Vec<f64> = labeled.iter().map(|r| r.prediction.malicious).collect();
    let labels: Vec<Label> = labeled.iter().map(|r| r.label.expect("filtered")).collect();
    Ok(compute_metrics(&scores, &labels, threshold)?.1)
}

fn select<'a>(apps: &'a [AppFeatures], idx: &[usize]) -> Vec<&'a AppFeatures> {
    idx.iter().map(|&i| &apps[i]).collect()
}

/// Trains on `train` and scores on `val` with the given hyperparameters.
fn fit_and_score(
    apps: &[AppFeatures],
    train: &[usize],
    val: &[usize],
    h: &Hyperparams,
    cfg: &PipelineConfig,
) -> Result<MetricReport> {
    let mut c = cfg.clone();
    c.hyper = *h;
    let mc = c.model_config();
    let train_set = samples(apps, train, &mc, &c)?;
    let out = train_with(&train_set, mc, &c.train_config(), |_, _| {})?;
    let rows = predict_apps(&out.model, &select(apps, val), &c)?;
    evaluate_rows(&rows, c.threshold)
}

#[derive(Debug, Clone)]
pub struct TuneRun {
    pub result: GridResult,
    pub train_subset: Vec<String>,
    pub val_subset: Vec<String>,
}

/// Grid search on stratified subsets of the training and validation parts.
pub fn tune_on_features(apps: &[AppFeatures], space: &SearchSpace, cfg: &PipelineConfig) -> Result<TuneRun> {
    let (_, split) = split_features(apps, cfg.seed);
    let labels = |idx: &[usize]| idx.iter().map(|&i| apps[i].label.expect("labeled")).collect::<Vec<_>>();
    let pick = |idx: &[usize], salt: u64| -> Vec<usize> {
        stratified_subset(&labels(idx), cfg.tune.fraction, cfg.seed ^ salt)
            .into_iter()
            .map(|k| idx[k])
            .collect()
    };
    let train_sub = pick(&split.train, 0x7a11);
    let val_sub = pick(&split.val, 0x0a11);
    let space = if cfg.tune.factors.is_empty() {
        space.clone()
    } else {
        let mut s = SearchSpace::fixed(&cfg.hyper);
        for f in &cfg.tune.factors {
            if let Some(v) = space.values.get(f) {
                s = s.with(*f, v.clone());
            }
        }
        s
    };
    let evaluate = |h: &Hyperparams| {
        log::info!("grid point {h:?}");
        fit_and_score(apps, &train_sub, &val_sub, h, cfg)
    };
    let revalidate = cfg
        .tune
        .revalidate
        .then_some(|h: &Hyperparams| fit_and_score(apps, &split.train, &split.val, h, cfg));
    let result = grid_search(&space, cfg.hyper, evaluate, revalidate)?;
    let ids = |v: &[usize]| v.iter().map(|&i| apps[i].app_id.clone()).collect();
    Ok(TuneRun {
        result,
        train_subset: ids(&train_sub),
        val_subset: ids(&val_sub),
    })
}

/// Options of the critical-API mining command.
#[derive(Debug, Clone)]
pub struct MineOptions {
    pub top_k: usize,
    pub min_matches: usize,
    pub stopwords: Option<PathBuf>,
    pub tool_lists: Vec<PathBuf>,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            top_k: crate::miner::DEFAULT_TOP_K,
            min_matches: crate::miner::DEFAULT_MIN_MATCHES,
            stopwords: None,
            tool_lists: Vec::new(),
        }
    }
}

/// Ranks corpus keywords and matches them against API documentation.
pub fn mine_apis(corpus_dir: &Path, api_docs: &Path, opts: &MineOptions) -> Result<CriticalApiSet> {
    use crate::miner::{
        default_stopwords, load_corpus, match_critical_apis, merge_tool_lists, parse_api_docs, parse_word_list,
        rank_keywords, select_top, SourceWeights,
    };
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let corpus = load_corpus(corpus_dir, &SourceWeights::default())?;
    let mut stop = default_stopwords();
    if let Some(p) = &opts.stopwords {
        stop.extend(parse_word_list(&read(p)?));
    }
    let ranked = rank_keywords(&corpus, &stop)?;
    let keywords = select_top(&ranked, opts.top_k.max(1));
    let docs = parse_api_docs(&read(api_docs)?)?;
    let mut set = match_critical_apis(&docs, &keywords, opts.min_matches);
    for p in &opts.tool_lists {
        let tools: Vec<String> = CriticalApiSet::parse(&read(p)?).apis.into_iter().collect();
        set = merge_tool_lists(&tools, &keywords, &set);
    }
    Ok(set)
}
