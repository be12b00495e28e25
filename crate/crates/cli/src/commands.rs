//! One function per subcommand. Each resolves its configuration, reads and
//! hashes its inputs, writes its outputs and a manifest beside the primary
//! output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use latticeprop::bench::{run_bench, BenchConfig};
use latticeprop::cp::{cp_step, init_one_hot};
use latticeprop::geometry::{evaluate, OrientedBox};
use latticeprop::gps::combined_vector_field;
use latticeprop::io::{
    field_from_json, field_to_json, omega_to_json, sparse_dump, trace_csv, trap_map_to_json, DetectionsFile, SceneFile,
};
use latticeprop::lattice::{CorrelationField, Lattice};
use latticeprop::learn::{label_scene, SceneLabels, TrainConfig, TrainedModel};
use latticeprop::pipeline::{self, Algo, Heads, InferConfig, MergePath};
use latticeprop::render::{heatmap_pgm, omega_ppm};
use latticeprop::synth::{generate_scene, ideal_field, GenerateConfig};

use crate::error::{CliError, CliResult};
use crate::manifest::{read_parsed, Manifest, Outputs};

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn check_range(name: &str, lo: f64, hi: f64) -> CliResult<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(CliError::Args(format!("{name}: need finite min <= max, got [{lo}, {hi}]")))
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image height in pixels.
    #[arg(long, default_value_t = 256)]
    h: usize,
    /// Image width in pixels.
    #[arg(long, default_value_t = 256)]
    w: usize,
    /// Pixels per lattice cell side.
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    boxes: usize,
    /// Short side range in pixels.
    #[arg(long, default_value_t = 40.0)]
    scale_min: f64,
    #[arg(long, default_value_t = 64.0)]
    scale_max: f64,
    #[arg(long, default_value_t = 1.0)]
    aspect_min: f64,
    #[arg(long, default_value_t = 3.0)]
    aspect_max: f64,
    /// Long-side orientation range in radians.
    #[arg(long, default_value_t = -std::f64::consts::FRAC_PI_6, allow_hyphen_values = true)]
    angle_min: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_6, allow_hyphen_values = true)]
    angle_max: f64,
    #[arg(long)]
    allow_overlap: bool,
    /// Largest IoU between boxes when overlap is not allowed.
    #[arg(long, default_value_t = 0.0)]
    overlap_cap: f64,
    /// Scene file to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the scene's ideal field here.
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenerateRun {
    seed: u64,
    scene: GenerateConfig,
    write_field: bool,
}

pub fn generate(a: GenerateArgs, threads: usize) -> CliResult<()> {
    check_range("scale", a.scale_min, a.scale_max)?;
    check_range("aspect", a.aspect_min, a.aspect_max)?;
    check_range("angle", a.angle_min, a.angle_max)?;
    let cfg = GenerateConfig {
        h: a.h,
        w: a.w,
        d: a.d,
        n_boxes: a.boxes,
        scale_range: (a.scale_min, a.scale_max),
        aspect_range: (a.aspect_min, a.aspect_max),
        angle_range: (a.angle_min, a.angle_max),
        allow_overlap: a.allow_overlap,
        overlap_cap: a.overlap_cap,
    };
    let mut manifest = Manifest::new(
        "generate",
        &GenerateRun {
            seed: a.seed,
            scene: cfg,
            write_field: a.field.is_some(),
        },
    );
    let t = Instant::now();
    let scene = generate_scene(a.seed, &cfg)?;
    manifest.time_ms("generate_ms", elapsed_ms(t));

    let mut outputs = Outputs::default();
    let file = SceneFile::new(&scene.lattice, scene.gt_boxes.clone(), Some(a.seed));
    outputs.write(&a.out, file.to_json().as_bytes())?;
    if let Some(path) = &a.field {
        let field = ideal_field(&scene.lattice, &scene.labels)?;
        outputs.write(path, field_to_json(&field).as_bytes())?;
    }
    manifest.results = json!({
        "rows": scene.lattice.rows(),
        "cols": scene.lattice.cols(),
        "boxes": scene.gt_boxes.len(),
        "foreground_nodes": scene.labels.foreground_count(),
    });
    manifest.finish(&a.out, outputs, threads)?;
    Ok(())
}

/// A scene file with its lattice and labels.
struct LoadedScene {
    lattice: Lattice,
    boxes: Vec<OrientedBox>,
    labels: SceneLabels,
}

fn load_scene(path: &Path, inputs: &mut BTreeMap<String, String>) -> CliResult<LoadedScene> {
    let file = read_parsed(path, inputs, SceneFile::from_json)?;
    let lattice = file.lattice().map_err(|e| CliError::file(path, e))?;
    let boxes = file.canonical_boxes().map_err(|e| CliError::file(path, e))?;
    let labels = label_scene(&lattice, &boxes)?;
    Ok(LoadedScene { lattice, boxes, labels })
}

fn load_model(path: &Path, inputs: &mut BTreeMap<String, String>) -> CliResult<TrainedModel> {
    read_parsed(path, inputs, |t| serde_json::from_str::<TrainedModel>(t))
}

/// Field from a model, a field file, or the scene's ideal field.
fn resolve_field(
    scene: &LoadedScene,
    field: Option<&Path>,
    model: Option<&TrainedModel>,
    inputs: &mut BTreeMap<String, String>,
) -> CliResult<CorrelationField> {
    let f = match (model, field) {
        (Some(m), _) => m.field()?,
        (None, Some(p)) => read_parsed(p, inputs, field_from_json)?,
        (None, None) => ideal_field(&scene.lattice, &scene.labels)?,
    };
    if f.lattice() != &scene.lattice {
        return Err(latticeprop::Error::LatticeMismatch("field and scene use different lattices".into()).into());
    }
    Ok(f)
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Field file; the scene's ideal field when neither this nor a model is given.
    #[arg(long, conflicts_with = "model")]
    field: Option<PathBuf>,
    /// Trained model; supplies the field and the foreground and geometry heads.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "gps")]
    algo: Algo,
    #[arg(long, default_value = "pca")]
    merge: MergePath,
    /// Propagation step cap; the lattice diameter when absent.
    #[arg(long)]
    cp_max_steps: Option<usize>,
    #[arg(long, default_value_t = latticeprop::cp::DEFAULT_TOL)]
    cp_tol: f64,
    #[arg(long, default_value_t = latticeprop::cp::DEFAULT_PRUNE_EPS)]
    prune_eps: f64,
    #[arg(long, default_value_t = 0.0)]
    min_conf: f64,
    #[arg(long, default_value_t = latticeprop::gps::DEFAULT_MERGE_DISTANCE)]
    merge_distance: f64,
    #[arg(long, default_value_t = latticeprop::mcl::DEFAULT_MAX_ITERS)]
    mc_max_iters: usize,
    #[arg(long, default_value_t = latticeprop::mcl::DEFAULT_PRUNE_THRESHOLD)]
    mc_threshold: f64,
    #[arg(long, default_value_t = latticeprop::mcl::DEFAULT_MC_TOL)]
    mc_tol: f64,
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f64,
    #[arg(long, default_value_t = 1)]
    min_cluster_size: usize,
    /// Detections file to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Heatmap of the final propagation state (`--algo cp`).
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Trap map after merging (`--algo gps`).
    #[arg(long)]
    traps: Option<PathBuf>,
    /// Sparse dump of the converged flow matrix (`--algo mc`).
    #[arg(long)]
    flow: Option<PathBuf>,
}

impl InferArgs {
    fn config(&self) -> CliResult<InferConfig> {
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(CliError::Args(format!("--nms-iou must lie in [0, 1], got {}", self.nms_iou)));
        }
        let need = |flag: &str, algo: Algo| {
            if self.algo == algo {
                Ok(())
            } else {
                Err(CliError::Args(format!("{flag} needs --algo {algo}")))
            }
        };
        if self.heatmap.is_some() {
            need("--heatmap", Algo::Cp)?;
        }
        if self.traps.is_some() {
            need("--traps", Algo::Gps)?;
        }
        if self.flow.is_some() {
            need("--flow", Algo::Mc)?;
        }
        Ok(InferConfig {
            algo: self.algo,
            merge: self.merge,
            cp_max_steps: self.cp_max_steps,
            cp_tol: self.cp_tol,
            prune_eps: self.prune_eps,
            min_conf: self.min_conf,
            merge_distance: self.merge_distance,
            mc_max_iters: self.mc_max_iters,
            mc_threshold: self.mc_threshold,
            mc_tol: self.mc_tol,
            nms_iou: self.nms_iou,
            min_cluster_size: self.min_cluster_size,
        })
    }
}

#[derive(Serialize)]
struct InferRun {
    infer: InferConfig,
    field_source: &'static str,
}

pub fn infer(a: InferArgs, threads: usize) -> CliResult<()> {
    let cfg = a.config()?;
    let source = match (&a.model, &a.field) {
        (Some(_), _) => "model",
        (None, Some(_)) => "field",
        (None, None) => "ideal",
    };
    let mut manifest = Manifest::new("infer", &InferRun { infer: cfg, field_source: source });
    let scene = load_scene(&a.scene, &mut manifest.inputs)?;
    let model = a.model.as_deref().map(|p| load_model(p, &mut manifest.inputs)).transpose()?;
    let field = resolve_field(&scene, a.field.as_deref(), model.as_ref(), &mut manifest.inputs)?;
    let heads = match &model {
        Some(m) => Heads::from_model(m),
        None => Heads::from_labels(&scene.labels),
    };

    let t = Instant::now();
    let outcome = pipeline::cluster(&scene.lattice, &field, &heads.fg_mask(), &cfg)?;
    manifest.time_ms("cluster_ms", elapsed_ms(t));
    let t = Instant::now();
    let boxes = pipeline::assemble(&scene.lattice, &outcome.assignment, &heads, &cfg)?;
    manifest.time_ms("assemble_ms", elapsed_ms(t));

    let mut outputs = Outputs::default();
    outputs.write(&a.out, DetectionsFile { boxes: boxes.clone() }.to_json().as_bytes())?;
    if let (Some(path), Some(state)) = (&a.heatmap, &outcome.cp_state) {
        let centers: Vec<usize> = outcome.assignment.clusters.keys().copied().collect();
        outputs.write(path, &heatmap_pgm(state, &centers))?;
    }
    if let (Some(path), Some(traps)) = (&a.traps, &outcome.traps) {
        outputs.write(path, trap_map_to_json(traps).as_bytes())?;
    }
    if let (Some(path), Some(flow)) = (&a.flow, &outcome.flow) {
        outputs.write(path, sparse_dump(flow).as_bytes())?;
    }

    let preds: Vec<OrientedBox> = boxes.iter().map(|b| b.bbox).collect();
    manifest.results = json!({
        "clusters": outcome.assignment.clusters.len(),
        "detections": boxes.len(),
        "cp_steps": outcome.cp_steps,
        "gps_hops": outcome.gps_hops,
        "gps_merges": outcome.gps_merges,
        "mc_counters": outcome.mc_counters,
        "against_scene": evaluate(&preds, &scene.boxes, 0.5),
    });
    manifest.finish(&a.out, outputs, threads)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Weight of the centre loss.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Weight of the geometry loss.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the initial logit noise.
    #[arg(long, default_value_t = 0.01)]
    init_noise: f64,
    /// Box fitting used for the final evaluation.
    #[arg(long, default_value = "pca")]
    merge: MergePath,
    /// Model file to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Loss trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Field file with the trained correlation logits.
    #[arg(long)]
    field_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainRun {
    train: TrainConfig,
    eval: InferConfig,
}

pub fn train(a: TrainArgs, threads: usize) -> CliResult<()> {
    if a.iters == 0 {
        return Err(CliError::Args("--iters must be at least 1".into()));
    }
    if !(a.lr.is_finite() && a.lr >= 0.0) {
        return Err(CliError::Args(format!("--lr must be finite and non-negative, got {}", a.lr)));
    }
    let cfg = TrainConfig {
        alpha: a.alpha,
        beta: a.beta,
        lr: a.lr,
        iters: a.iters,
        seed: a.seed,
        init_noise: a.init_noise,
    };
    let eval_cfg = InferConfig {
        merge: a.merge,
        ..InferConfig::default()
    };
    let mut manifest = Manifest::new("train", &TrainRun { train: cfg, eval: eval_cfg });
    let scene = load_scene(&a.scene, &mut manifest.inputs)?;

    let t = Instant::now();
    let out = latticeprop::learn::train(&scene.lattice, &scene.labels, &cfg)?;
    manifest.time_ms("train_ms", elapsed_ms(t));

    let t = Instant::now();
    let field = out.model.field()?;
    let boxes = pipeline::assemble(&scene.lattice, &out.assignment, &Heads::from_model(&out.model), &eval_cfg)?;
    manifest.time_ms("eval_ms", elapsed_ms(t));
    let preds: Vec<OrientedBox> = boxes.iter().map(|b| b.bbox).collect();
    let metrics = evaluate(&preds, &scene.boxes, 0.5);

    let mut outputs = Outputs::default();
    let model_json = serde_json::to_string(&out.model).expect("model serialises") + "\n";
    outputs.write(&a.out, model_json.as_bytes())?;
    if let Some(path) = &a.trace {
        outputs.write(path, trace_csv(&out.trace).as_bytes())?;
    }
    if let Some(path) = &a.field_out {
        outputs.write(path, field_to_json(&field).as_bytes())?;
    }
    let first = out.trace[0].total;
    let last = out.trace[out.trace.len() - 1].total;
    manifest.results = json!({
        "initial_loss": first,
        "final_loss": last,
        "loss_ratio": last / first,
        "detections": boxes.len(),
        "eval": metrics,
    });
    println!(
        "loss {first:.6} -> {last:.6}; F {:.4} (P {:.4}, R {:.4})",
        metrics.f_score, metrics.precision, metrics.recall
    );
    manifest.finish(&a.out, outputs, threads)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, default_value_t = 512)]
    h: usize,
    #[arg(long, default_value_t = 512)]
    w: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 6)]
    boxes: usize,
    /// Propagation step cap; the lattice diameter when absent.
    #[arg(long)]
    cp_max_steps: Option<usize>,
    #[arg(long, default_value_t = latticeprop::cp::DEFAULT_TOL)]
    cp_tol: f64,
    /// Report file to write.
    #[arg(short, long)]
    out: PathBuf,
}

pub fn bench(a: BenchArgs, threads: usize) -> CliResult<()> {
    if a.repeats == 0 {
        return Err(CliError::Args("--repeats must be at least 1".into()));
    }
    let base = BenchConfig::default();
    let cfg = BenchConfig {
        seed: a.seed,
        repeats: a.repeats,
        scene: GenerateConfig {
            h: a.h,
            w: a.w,
            d: a.d,
            n_boxes: a.boxes,
            ..base.scene
        },
        cp_max_steps: a.cp_max_steps,
        cp_tol: a.cp_tol,
    };
    let mut manifest = Manifest::new("bench", &cfg);
    let report = run_bench(&cfg)?;
    let mut outputs = Outputs::default();
    let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    outputs.write_timed(&a.out, text.as_bytes())?;
    manifest.results = json!({ "counters": report.counters });
    manifest.time_ms("cp_median_ms", report.timing.cp_median_ms);
    manifest.time_ms("gps_median_ms", report.timing.gps_median_ms);
    manifest.time_ms("speedup", report.timing.speedup);
    println!(
        "cp {:.4} ms, gps {:.4} ms, speedup {:.1}x",
        report.timing.cp_median_ms, report.timing.gps_median_ms, report.timing.speedup
    );
    manifest.finish(&a.out, outputs, threads)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    /// Mass in the scene's labelled centres.
    Centers,
    /// Every node's total mass.
    All,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Field file; the scene's ideal field when neither this nor a model is given.
    #[arg(long, conflicts_with = "model")]
    field: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated propagation steps to draw.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    steps: Vec<usize>,
    #[arg(long, value_enum, default_value = "centers")]
    track: Track,
    /// Output prefix; heatmaps go to `<prefix>_t<step>.pgm`.
    #[arg(short, long)]
    out: PathBuf,
    /// Vector-field raster to write.
    #[arg(long)]
    omega: Option<PathBuf>,
    /// Vector field as JSON.
    #[arg(long)]
    omega_json: Option<PathBuf>,
    /// Pixels per node in the vector-field raster.
    #[arg(long, default_value_t = 8)]
    cell: usize,
}

#[derive(Serialize)]
struct RenderRun {
    steps: Vec<usize>,
    track: Track,
    cell: usize,
    field_source: &'static str,
}

pub fn render(a: RenderArgs, threads: usize) -> CliResult<()> {
    let mut steps = a.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let source = match (&a.model, &a.field) {
        (Some(_), _) => "model",
        (None, Some(_)) => "field",
        (None, None) => "ideal",
    };
    let mut manifest = Manifest::new(
        "render",
        &RenderRun {
            steps: steps.clone(),
            track: a.track,
            cell: a.cell,
            field_source: source,
        },
    );
    let scene = load_scene(&a.scene, &mut manifest.inputs)?;
    let model = a.model.as_deref().map(|p| load_model(p, &mut manifest.inputs)).transpose()?;
    let field = resolve_field(&scene, a.field.as_deref(), model.as_ref(), &mut manifest.inputs)?;
    let lattice = scene.lattice;
    let tracked: Vec<usize> = match a.track {
        Track::Centers => scene.labels.centers(),
        Track::All => (0..lattice.node_count()).collect(),
    };

    let mut outputs = Outputs::default();
    let t = Instant::now();
    let mut state = init_one_hot(&lattice);
    let mut done = 0;
    for &step in &steps {
        while done < step {
            state = cp_step(&lattice, &field, &state)?;
            done += 1;
        }
        let mut name = a.out.as_os_str().to_owned();
        name.push(format!("_t{step}.pgm"));
        outputs.write(Path::new(&name), &heatmap_pgm(&state, &tracked))?;
    }
    manifest.time_ms("propagate_ms", elapsed_ms(t));
    let omega = combined_vector_field(&field);
    if let Some(path) = &a.omega {
        outputs.write(path, &omega_ppm(&lattice, &omega, &scene.labels.fg_mask, a.cell))?;
    }
    if let Some(path) = &a.omega_json {
        outputs.write(path, omega_to_json(&omega).as_bytes())?;
    }
    manifest.results = json!({ "heatmaps": steps.len() });
    manifest.finish(&a.out, outputs, threads)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Metrics file to write.
    #[arg(short, long)]
    out: PathBuf,
}

pub fn eval(a: EvalArgs, threads: usize) -> CliResult<()> {
    if !(a.iou > 0.0 && a.iou < 1.0) {
        return Err(CliError::Args(format!("--iou must lie in (0, 1), got {}", a.iou)));
    }
    let mut manifest = Manifest::new("eval", &json!({ "iou": a.iou }));
    let scene = read_parsed(&a.scene, &mut manifest.inputs, SceneFile::from_json)?;
    let gts = scene.canonical_boxes().map_err(|e| CliError::file(&a.scene, e))?;
    let dets = read_parsed(&a.detections, &mut manifest.inputs, DetectionsFile::from_json)?;
    let preds: Vec<OrientedBox> = dets.boxes.iter().map(|b| b.bbox).collect();
    let metrics = evaluate(&preds, &gts, a.iou);
    let mut outputs = Outputs::default();
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialise") + "\n";
    outputs.write(&a.out, text.as_bytes())?;
    println!("P {:.4} R {:.4} F {:.4}", metrics.precision, metrics.recall, metrics.f_score);
    manifest.results = serde_json::to_value(&metrics).expect("metrics serialise");
    manifest.finish(&a.out, outputs, threads)?;
    Ok(())
}
