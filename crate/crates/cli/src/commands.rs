//! Subcommand implementations. Every command writes its run manifest
//! first, listing the outputs it is about to produce, then the outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use onconet::agreement::{correlation_matrix, flag_divergent_patients, patient_distribution, write_correlation_csv};
use onconet::engine::SeededRng;
use onconet::gnn::{build_gnn, GnnArch, GnnConfig};
use onconet::graph::{build_graph, parse_interactions, GeneGraph};
use onconet::io::write_text;
use onconet::model::Model;
use onconet::pathway::{build_masks, mask_stats, parse_gene_sets, parse_relations, MaskSet, PathwayHierarchy};
use onconet::pnet::{build_pnet, PNetConfig};
use onconet::search::{random_search, train_draw, SearchResult};
use onconet::synth;
use onconet::train::{
    aggregate_seeds, multi_seed_run, seed_metrics, write_metrics_csv, Cohort, Metric, PredictionRecord,
    PredictionStore, SeedSummary, SplitSpec,
};
use serde_json::json;

use crate::config::{PipelineConfig, ResolvedPaths};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::svg;

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SEED_METRICS_FILE: &str = "seed_metrics.csv";
pub const MASKS_DIR: &str = "masks";
pub const MASK_STATS_FILE: &str = "mask_stats.json";
pub const GRAPH_FILE: &str = "graph.txt";
pub const GRAPH_STATS_FILE: &str = "graph_stats.json";
pub const SEARCH_LOG_FILE: &str = "search_log.csv";
pub const SEARCH_RESULT_FILE: &str = "search.json";
pub const SELECTED_DIR: &str = "selected";
pub const PCC_FILE: &str = "pcc.csv";
pub const HEATMAP_FILE: &str = "pcc_heatmap.svg";
pub const FLAGGED_FILE: &str = "flagged.csv";
pub const REPORT_FILE: &str = "report.csv";

/// Stream of a seed's generator reserved for permuting its masks.
const PERMUTE_STREAM: u64 = 0x7065_726d;

/// Effective configuration plus where its relative paths resolve from.
pub struct Context {
    pub config: PipelineConfig,
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Context {
    fn paths(&self, data: Option<&Path>) -> ResolvedPaths {
        let mut d = self.config.data.clone();
        if let Some(dir) = data {
            d.dir = dir.to_path_buf();
            d.gene_sets = None;
            d.relations = None;
            d.interactions = None;
            d.features = None;
            d.labels = None;
            d.splits = None;
        }
        d.resolve(&self.base)
    }

    fn manifest(&self, command: &str, seed: u64) -> RunManifest {
        RunManifest::new(command, &self.config.canonical(), seed)
    }
}

fn json_text<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

struct Dataset {
    cohort: Cohort,
    split: SplitSpec,
}

fn load_cohort(paths: &ResolvedPaths, manifest: &mut RunManifest) -> Result<Dataset, CliError> {
    manifest.add_input(&paths.features)?;
    manifest.add_input(&paths.labels)?;
    manifest.add_input(&paths.splits)?;
    let cohort = Cohort::load(&paths.features, &paths.labels)?;
    let split = SplitSpec::load(&paths.splits)?;
    split.validate(&cohort.patient_ids)?;
    Ok(Dataset { cohort, split })
}

fn load_hierarchy(paths: &ResolvedPaths, universe: &[String], manifest: &mut RunManifest) -> Result<PathwayHierarchy, CliError> {
    manifest.add_input(&paths.gene_sets)?;
    manifest.add_input(&paths.relations)?;
    let sets = parse_gene_sets(&paths.gene_sets)?;
    let relations = parse_relations(&paths.relations)?;
    Ok(PathwayHierarchy::new(universe.to_vec(), &sets, relations)?)
}

fn load_graph(ctx: &Context, paths: &ResolvedPaths, universe: &[String], manifest: &mut RunManifest) -> Result<GeneGraph, CliError> {
    manifest.add_input(&paths.interactions)?;
    let table = parse_interactions(&paths.interactions)?;
    Ok(build_graph(&table, &ctx.config.graph, universe)?)
}

/// Gene order of a cohort's feature header.
fn universe(paths: &ResolvedPaths, manifest: &mut RunManifest) -> Result<Vec<String>, CliError> {
    manifest.add_input(&paths.features)?;
    manifest.add_input(&paths.labels)?;
    Ok(Cohort::load(&paths.features, &paths.labels)?.gene_universe)
}

pub fn synth(ctx: &Context) -> Result<(), CliError> {
    let config = &ctx.config.synth;
    let mut manifest = ctx.manifest("synth", config.seed);
    manifest.outputs = [
        synth::GENE_SETS_FILE,
        synth::RELATIONS_FILE,
        synth::INTERACTIONS_FILE,
        synth::FEATURES_FILE,
        synth::LABELS_FILE,
        synth::SPLITS_FILE,
        synth::MANIFEST_FILE,
    ]
    .map(String::from)
    .to_vec();
    manifest.write(&ctx.out)?;
    synth::generate(config)?.write(&ctx.out)?;
    Ok(())
}

pub fn build_masks_cmd(ctx: &Context, data: Option<&Path>, layers: Option<usize>) -> Result<(), CliError> {
    let paths = ctx.paths(data);
    let layers = layers.unwrap_or(ctx.config.pnet.layers);
    let mut manifest = ctx.manifest("build-masks", 0);
    let genes = universe(&paths, &mut manifest)?;
    let cohort_channels = Cohort::load(&paths.features, &paths.labels)?.channels();
    let hierarchy = load_hierarchy(&paths, &genes, &mut manifest)?;
    let masks = build_masks(&hierarchy, layers, cohort_channels)?;
    manifest.detail("layers", layers);
    manifest.outputs = vec![MASKS_DIR.into(), MASK_STATS_FILE.into()];
    manifest.write(&ctx.out)?;
    masks.save(&ctx.out.join(MASKS_DIR))?;
    write_text(&ctx.out.join(MASK_STATS_FILE), &json_text(&mask_stats(&masks)))?;
    Ok(())
}

pub fn permute_masks_cmd(ctx: &Context, masks_dir: &Path, seed: u64) -> Result<(), CliError> {
    let mut manifest = ctx.manifest("permute-masks", seed);
    let masks = MaskSet::load(masks_dir)?;
    manifest.inputs.insert(masks_dir.display().to_string(), "directory".into());
    let permuted = masks.permuted(&mut SeededRng::new(seed));
    manifest.outputs = vec![MASKS_DIR.into(), MASK_STATS_FILE.into()];
    manifest.write(&ctx.out)?;
    permuted.save(&ctx.out.join(MASKS_DIR))?;
    write_text(&ctx.out.join(MASK_STATS_FILE), &json_text(&mask_stats(&permuted)))?;
    Ok(())
}

pub fn build_graph_cmd(ctx: &Context, data: Option<&Path>) -> Result<(), CliError> {
    let paths = ctx.paths(data);
    let mut manifest = ctx.manifest("build-graph", 0);
    let genes = universe(&paths, &mut manifest)?;
    let graph = load_graph(ctx, &paths, &genes, &mut manifest)?;
    manifest.outputs = vec![GRAPH_FILE.into(), GRAPH_STATS_FILE.into()];
    manifest.write(&ctx.out)?;
    graph.save(&ctx.out.join(GRAPH_FILE))?;
    let isolated = (0..graph.n_nodes()).filter(|&i| graph.degree(i) == 0).count();
    let stats = json!({
        "nodes": graph.n_nodes(),
        "edges": graph.edge_count(),
        "threshold": graph.threshold(),
        "isolated_nodes": isolated,
    });
    write_text(&ctx.out.join(GRAPH_STATS_FILE), &json_text(&stats))?;
    Ok(())
}

/// The architectures `train` accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelTag {
    Pnet,
    Gnn(GnnArch),
}

impl ModelTag {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if s == "pnet" {
            return Ok(ModelTag::Pnet);
        }
        s.parse::<GnnArch>()
            .map(ModelTag::Gnn)
            .map_err(|_| CliError::Usage(format!("unknown model `{s}`; expected pnet, gcn, gat or meta")))
    }

    pub fn tag(self) -> &'static str {
        match self {
            ModelTag::Pnet => "pnet",
            ModelTag::Gnn(a) => a.tag(),
        }
    }
}

pub struct TrainArgs<'a> {
    pub model: ModelTag,
    pub seeds: Option<usize>,
    pub seed: Option<u64>,
    pub permute_masks: bool,
    pub layers: Option<usize>,
    pub masks: Option<&'a Path>,
    pub gnn_config: Option<&'a Path>,
    pub name: Option<String>,
    pub data: Option<&'a Path>,
}

fn gnn_variant(c: &GnnConfig) -> String {
    let mut v = format!("steps{}-hidden{}", c.steps(), c.hidden());
    if let Some(h) = c.head() {
        v += &format!("-head{h}");
    }
    if let Some(h) = c.heads() {
        v += &format!("-heads{h}");
    }
    v
}

pub fn train_cmd(ctx: &Context, args: TrainArgs<'_>) -> Result<(), CliError> {
    if args.permute_masks && args.model != ModelTag::Pnet {
        return Err(CliError::Usage("--permute-masks applies only to pnet".into()));
    }
    let paths = ctx.paths(args.data);
    let t = &ctx.config.train;
    let n_seeds = args.seeds.unwrap_or(t.seeds);
    if n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let base_seed = args.seed.unwrap_or(t.seed);
    let mut manifest = ctx.manifest("train", base_seed);
    let data = load_cohort(&paths, &mut manifest)?;
    let channels = data.cohort.channels();

    let (label, variant, store, n_params) = match args.model {
        ModelTag::Pnet => {
            let layers = args.layers.unwrap_or(ctx.config.pnet.layers);
            let masks = match args.masks {
                Some(dir) => {
                    manifest.inputs.insert(dir.display().to_string(), "directory".into());
                    MaskSet::load(dir)?
                }
                None => {
                    let h = load_hierarchy(&paths, &data.cohort.gene_universe, &mut manifest)?;
                    build_masks(&h, layers, channels)?
                }
            };
            if masks.n_layers() != layers {
                return Err(CliError::Usage(format!(
                    "mask set has {} pathway layers, {layers} requested",
                    masks.n_layers()
                )));
            }
            let pnet_config = |seed| PNetConfig {
                layers,
                channels,
                activation: ctx.config.pnet.activation,
                seed,
            };
            let permute = args.permute_masks;
            let build = |seed: u64| -> onconet::Result<Box<dyn Model>> {
                let m = if permute {
                    masks.permuted(&mut SeededRng::new(seed).derive(PERMUTE_STREAM))
                } else {
                    masks.clone()
                };
                Ok(Box::new(build_pnet(&m, &pnet_config(seed), &mut SeededRng::new(seed))?))
            };
            let n_params = build(base_seed)?.n_params();
            let mut variant = format!("L{layers}");
            variant += if permute { "-permuted" } else { "-true" };
            let label = args.name.clone().unwrap_or_else(|| {
                if permute { "pnet-permuted".into() } else { "pnet".into() }
            });
            let cfg = t.train_config(ctx.config.pnet.learning_rate);
            let cfg = onconet::train::TrainConfig { seed: base_seed, ..cfg };
            let store = multi_seed_run(&label, build, &data.cohort, &data.split, &cfg, n_seeds)?;
            (label, variant, store, n_params)
        }
        ModelTag::Gnn(arch) => {
            let config = match args.gnn_config {
                Some(path) => {
                    manifest.add_input(path)?;
                    let result = SearchResult::load_json(path)?;
                    if result.arch != arch {
                        return Err(CliError::Usage(format!(
                            "search result is for {}, not {}",
                            result.arch, arch
                        )));
                    }
                    result.selected_draw().config
                }
                None => ctx.config.gnn.config(arch),
            };
            config.validate()?;
            let graph = load_graph(ctx, &paths, &data.cohort.gene_universe, &mut manifest)?;
            let build = |seed: u64| -> onconet::Result<Box<dyn Model>> {
                Ok(Box::new(build_gnn(&config, &graph, channels, seed)?))
            };
            let n_params = build(base_seed)?.n_params();
            let label = args.name.clone().unwrap_or_else(|| arch.tag().to_string());
            let cfg = onconet::train::TrainConfig {
                seed: base_seed,
                ..t.train_config(config.learning_rate())
            };
            let store = multi_seed_run(&label, build, &data.cohort, &data.split, &cfg, n_seeds)?;
            manifest.detail("gnn_config", serde_json::to_value(config).expect("serializable"));
            (label, gnn_variant(&config), store, n_params)
        }
    };

    manifest.detail("model", args.model.tag());
    manifest.detail("label", label.clone());
    manifest.detail("variant", variant);
    manifest.detail("seeds", n_seeds);
    manifest.detail("parameters", n_params);
    manifest.outputs = vec![PREDICTIONS_FILE.into(), SEED_METRICS_FILE.into()];
    if n_seeds >= 2 {
        manifest.outputs.push(METRICS_FILE.into());
    }
    manifest.write(&ctx.out)?;
    store.write_csv(&ctx.out.join(PREDICTIONS_FILE))?;
    write_seed_metrics(&store, &label, &ctx.out.join(SEED_METRICS_FILE))?;
    if n_seeds >= 2 {
        write_metrics_csv(&[aggregate_seeds(&store, &label)?], &ctx.out.join(METRICS_FILE))?;
    } else {
        eprintln!("note: one seed trained; {METRICS_FILE} needs at least two and was not written");
    }
    Ok(())
}

fn write_seed_metrics(store: &PredictionStore, model: &str, path: &Path) -> Result<(), CliError> {
    let mut text = String::from("model,seed");
    for m in Metric::ALL {
        text += &format!(",{}", m.name());
    }
    text.push('\n');
    for (seed, report) in seed_metrics(store, model)? {
        text += &format!("{model},{seed}");
        for m in Metric::ALL {
            text += &format!(",{:.6}", report.get(m));
        }
        text.push('\n');
    }
    Ok(write_text(path, &text)?)
}

pub fn search_cmd(ctx: &Context, arch: &str, draws: Option<usize>, seed: Option<u64>, data: Option<&Path>) -> Result<(), CliError> {
    let arch = match ModelTag::parse(arch)? {
        ModelTag::Gnn(a) => a,
        ModelTag::Pnet => return Err(CliError::Usage("search applies to gcn, gat or meta".into())),
    };
    let s = &ctx.config.search;
    let draws = draws.unwrap_or(s.draws);
    if draws == 0 {
        return Err(CliError::Usage("--draws must be at least 1".into()));
    }
    let base_seed = seed.unwrap_or(s.seed);
    let paths = ctx.paths(data);
    let mut manifest = ctx.manifest("search", base_seed);
    let data = load_cohort(&paths, &mut manifest)?;
    let graph = load_graph(ctx, &paths, &data.cohort.gene_universe, &mut manifest)?;
    let train_config = ctx.config.train.train_config(1e-3);
    let result = random_search(
        &s.space,
        arch,
        &graph,
        &data.cohort,
        &data.split,
        &train_config,
        draws,
        base_seed,
    )?;
    manifest.detail("arch", arch.tag());
    manifest.detail("draws", draws);
    manifest.detail("selected", result.selected);
    manifest.outputs = vec![SEARCH_LOG_FILE.into(), SEARCH_RESULT_FILE.into(), SELECTED_DIR.into()];
    manifest.write(&ctx.out)?;
    result.write_log(&ctx.out.join(SEARCH_LOG_FILE))?;
    result.save_json(&ctx.out.join(SEARCH_RESULT_FILE))?;
    let best = train_draw(result.selected_draw(), &graph, &data.cohort, &data.split, &train_config)?;
    best.save(&ctx.out.join(SELECTED_DIR))?;
    Ok(())
}

/// `label=path` relabels the single model stored at `path`; a directory
/// stands for the predictions file inside it.
fn read_store_arg(arg: &str) -> Result<(PathBuf, PredictionStore), CliError> {
    let (label, path) = match arg.split_once('=') {
        Some((l, p)) if !l.is_empty() && !l.contains(['/', '\\']) => (Some(l), p),
        _ => (None, arg),
    };
    let mut path = PathBuf::from(path);
    if path.is_dir() {
        path = path.join(PREDICTIONS_FILE);
    }
    let store = PredictionStore::read_csv(&path)?;
    let Some(label) = label else {
        return Ok((path, store));
    };
    let models = store.models();
    if models.len() != 1 {
        return Err(CliError::Usage(format!(
            "{} holds {} models; relabeling needs exactly one",
            path.display(),
            models.len()
        )));
    }
    let records = store
        .records()
        .iter()
        .map(|r| PredictionRecord {
            model: label.to_string(),
            ..r.clone()
        })
        .collect();
    Ok((path, PredictionStore::from_records(records)?))
}

fn file_stem_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub fn agree_cmd(ctx: &Context, stores: &[String], delta: Option<f64>, alpha: Option<f64>) -> Result<(), CliError> {
    if stores.len() < 2 {
        return Err(CliError::Usage("agree needs at least two prediction stores".into()));
    }
    let delta = delta.unwrap_or(ctx.config.agreement.delta);
    let alpha = alpha.unwrap_or(ctx.config.agreement.alpha);
    if !(0.0..=1.0).contains(&delta) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("delta {delta} / alpha {alpha} out of range")));
    }
    let mut manifest = ctx.manifest("agree", 0);
    let mut loaded = Vec::new();
    for arg in stores {
        let (path, store) = read_store_arg(arg)?;
        manifest.add_input(&path)?;
        loaded.push(store);
    }
    let store = PredictionStore::merge(loaded)
        .map_err(|e| CliError::Usage(format!("stores cannot be combined: {e}")))?;
    let models = store.models();
    if models.len() < 2 {
        return Err(CliError::Usage("the stores hold fewer than two distinct models".into()));
    }
    let pcc = correlation_matrix(&store, &models)?;

    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            pairs.push((models[i].clone(), models[j].clone()));
        }
    }
    let mut reports = Vec::new();
    for (a, b) in &pairs {
        reports.push(flag_divergent_patients(&store, a, b, delta, alpha)?);
    }

    manifest.detail("delta", delta);
    manifest.detail("alpha", alpha);
    manifest.detail("models", models.clone());
    let mut outputs = vec![PCC_FILE.to_string(), HEATMAP_FILE.to_string(), FLAGGED_FILE.to_string()];
    let mut figures = Vec::new();
    for r in &reports {
        let stem = format!("{}__{}", file_stem_safe(&r.model_a), file_stem_safe(&r.model_b));
        outputs.push(format!("agreement_{stem}.csv"));
        for p in r.divergent() {
            let name = format!("dist_{stem}_{}.svg", file_stem_safe(p));
            outputs.push(name.clone());
            figures.push((name, r.model_a.clone(), r.model_b.clone(), p.to_string()));
        }
    }
    manifest.outputs = outputs;
    manifest.write(&ctx.out)?;

    write_correlation_csv(&models, &pcc, &ctx.out.join(PCC_FILE))?;
    write_text(&ctx.out.join(HEATMAP_FILE), &svg::heatmap(&models, &pcc))?;
    let mut flagged = String::from("model_a,model_b,patient_id,statistic,p_value,p_adjusted,median_a,median_b\n");
    for r in &reports {
        let stem = format!("{}__{}", file_stem_safe(&r.model_a), file_stem_safe(&r.model_b));
        r.write_csv(&ctx.out.join(format!("agreement_{stem}.csv")))?;
        for p in r.patients.iter().filter(|p| p.divergent) {
            flagged += &format!(
                "{},{},{},{:.6},{:.6e},{:.6e},{:.6},{:.6}\n",
                r.model_a, r.model_b, p.patient_id, p.statistic, p.p_value, p.p_adjusted, p.median_a, p.median_b
            );
        }
    }
    write_text(&ctx.out.join(FLAGGED_FILE), &flagged)?;
    for (name, a, b, patient) in figures {
        let da = patient_distribution(&store, &a, &patient)?;
        let db = patient_distribution(&store, &b, &patient)?;
        let text = svg::distribution(&patient, (&a, &da.probabilities), (&b, &db.probabilities));
        write_text(&ctx.out.join(name), &text)?;
    }
    Ok(())
}

struct ReportRow {
    model: String,
    variant: String,
    summary: SeedSummary,
}

fn collect_runs(dir: &Path, rows: &mut Vec<ReportRow>) -> Result<(), CliError> {
    let preds = dir.join(PREDICTIONS_FILE);
    if !preds.is_file() || !dir.join(crate::manifest::MANIFEST_FILE).is_file() {
        return Ok(());
    }
    let manifest = RunManifest::load(dir)?;
    if manifest.command != "train" {
        return Ok(());
    }
    let store = PredictionStore::read_csv(&preds)?;
    let detail = |k: &str| manifest.details.get(k).and_then(|v| v.as_str()).map(String::from);
    for label in store.models() {
        rows.push(ReportRow {
            model: detail("model").unwrap_or_else(|| label.clone()),
            variant: detail("variant").unwrap_or_default(),
            summary: aggregate_seeds(&store, &label)?,
        });
    }
    Ok(())
}

pub fn report_cmd(ctx: &Context, run_dir: &Path) -> Result<(), CliError> {
    if !run_dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", run_dir.display())));
    }
    let mut rows = Vec::new();
    collect_runs(run_dir, &mut rows)?;
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| onconet::Error::Io {
            path: run_dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in &subdirs {
        collect_runs(d, &mut rows)?;
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "no completed training runs under {}",
            run_dir.display()
        )));
    }
    rows.sort_by(|a, b| (&a.model, &a.variant, &a.summary.model).cmp(&(&b.model, &b.variant, &b.summary.model)));

    let mut manifest = ctx.manifest("report", 0);
    manifest.detail("runs", rows.len());
    manifest.outputs = vec![REPORT_FILE.into()];
    manifest.write(&ctx.out)?;
    let mut text = String::from("model,variant,label,n_seeds");
    for m in Metric::ALL {
        text += &format!(",{}", m.name());
    }
    text.push('\n');
    for r in &rows {
        text += &format!("{},{},{},{}", r.model, r.variant, r.summary.model, r.summary.n_seeds);
        for m in Metric::ALL {
            let s = r.summary.get(m);
            text += &format!(",{:.6}±{:.6}", s.median, s.std);
        }
        text.push('\n');
    }
    write_text(&ctx.out.join(REPORT_FILE), &text)?;
    Ok(())
}

/// Names of the files a run directory holds, excluding its manifest.
pub fn output_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().is_some_and(|n| n != crate::manifest::MANIFEST_FILE) {
                let rel = p.strip_prefix(root).unwrap_or(&p).display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap_or_default());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
