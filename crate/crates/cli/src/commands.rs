//! Subcommand implementations. Each writes its artefacts plus a
//! `run_manifest.json` into its `--out` directory and prints a one-line JSON
//! summary on stdout.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thermosynth::data::{generate_synthetic_dataset, write_f32, Dataset, Heatmap, RgbImage};
use thermosynth::eval::{
    dataset_fid, disentanglement_grid, disentanglement_probe, privacy_harness, synthetic_privacy_frames,
    throughput_bench, BlobDetector, Detector, ExternalDetector, LabelledCode, RandomConvEmbedder,
};
use thermosynth::model::{generate_batch, load_bundle, save_bundle, stack_heatmaps, stack_images, LatentCode, ModelBundle};
use thermosynth::train::{build_latent_set, mean_reconstruction_l1, train_gan, train_inversion, LatentCodeSet, RunOptions, StepRecord};
use thermosynth_service::{Encoding, ReplaySource, Session, SessionConfig};

use crate::config::{resolve, RunConfig};
use crate::error::{CliError, Result};
use crate::{Cli, Command};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const BUNDLE_FILE: &str = "model.bundle";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance of one invocation, without timestamps so reruns compare equal.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: Vec<String>,
    seed: u64,
    config: &'a RunConfig,
    inputs: BTreeMap<&'static str, String>,
    outputs: BTreeMap<&'static str, String>,
    version: &'static str,
}

struct Run<'a> {
    command: &'static str,
    cfg: &'a RunConfig,
    out: PathBuf,
    inputs: BTreeMap<&'static str, String>,
    outputs: BTreeMap<&'static str, String>,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, cfg: &'a RunConfig, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(Self { command, cfg, out: out.to_path_buf(), inputs: BTreeMap::new(), outputs: BTreeMap::new() })
    }

    fn input(&mut self, name: &'static str, path: &Path) {
        self.inputs.insert(name, path.display().to_string());
    }

    /// Registers `file` (relative to `--out`) and returns its full path.
    fn output(&mut self, name: &'static str, file: &str) -> PathBuf {
        self.outputs.insert(name, file.to_string());
        self.out.join(file)
    }

    fn finish(self, summary: Value) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().skip(1).collect(),
            seed: self.cfg.seed,
            config: self.cfg,
            inputs: self.inputs,
            outputs: self.outputs,
            version: env!("CARGO_PKG_VERSION"),
        };
        write_json(&self.out.join(RUN_MANIFEST_FILE), &manifest)?;
        println!("{summary}");
        Ok(())
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_dataset(path: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let ds = Dataset::load(path, cfg.seed)?;
    if ds.is_empty() {
        return Err(CliError::Usage(format!("{}: dataset is empty", path.display())));
    }
    Ok(ds)
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<ModelBundle> {
    Ok(load_bundle(path, Some(&cfg.model))?)
}

/// Random-code generations for every heatmap of `ds`, seeded by `seed`.
pub fn generate_for(ds: &Dataset, bundle: &ModelBundle, seed: u64) -> Result<thermosynth::Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    for chunk in ds.samples.chunks(32) {
        let h = stack_heatmaps(&chunk.iter().map(|s| &s.heatmap).collect::<Vec<_>>())?;
        let z: Vec<_> = chunk.iter().map(|_| LatentCode::sample(&mut rng)).collect();
        parts.push(generate_batch(&bundle.config, &bundle.ema_generator, &LatentCode::stack(&z), &h)?);
    }
    Ok(thermosynth::Tensor::stack(&parts)?)
}

fn images_of(ds: &Dataset) -> Result<thermosynth::Tensor> {
    Ok(stack_images(&ds.samples.iter().map(|s| &s.rgb).collect::<Vec<_>>())?)
}

/// Evenly spaced picks of `k` out of `n` items.
fn spread(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    (0..k).map(|i| i * n / k).collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = resolve(g.toy, g.config.as_deref(), &g.overrides, g.seed)?;
    match cli.command {
        Command::PrintConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(())
        }
        Command::SynthData { out, count } => synth_data(&cfg, &out, count),
        Command::Preprocess { data, out } => preprocess(&cfg, &data, &out),
        Command::TrainGan { data, out, resume, checkpoint_every, stop_at } => {
            train_gan_cmd(&cfg, &data, &out, resume.as_deref(), checkpoint_every, stop_at)
        }
        Command::TrainInversion { data, bundle, out, checkpoint_every, stop_at } => {
            train_inversion_cmd(&cfg, &data, &bundle, &out, checkpoint_every, stop_at)
        }
        Command::BuildLatents { data, bundle, out } => build_latents(&cfg, &data, &bundle, &out),
        Command::EvalFid { real, fake, bundle, out } => eval_fid(&cfg, &real, fake.as_deref(), bundle.as_deref(), &out),
        Command::Grid { bundle, latents, data, codes, heatmaps, out } => {
            grid(&cfg, &bundle, &latents, &data, codes, heatmaps, &out)
        }
        Command::Probe { bundle, latents, out } => probe(&cfg, &bundle, &latents, &out),
        Command::Privacy { detector, detector_cmd, detector_arg, out } => {
            privacy(&cfg, &detector, detector_cmd, detector_arg, &out)
        }
        Command::Bench { bundle, batch, iters, warmup, out } => bench(&cfg, &bundle, &batch, iters, warmup, &out),
        Command::Serve { bundle, latents, replay, looping, host, port, fps, encode, duration, out } => {
            let opts = ServeOptions { looping, host, port, fps, encode, duration };
            serve(&cfg, &bundle, &latents, &replay, &opts, &out)
        }
    }
}

fn synth_data(cfg: &RunConfig, out: &Path, count: usize) -> Result<()> {
    let mut run = Run::new("synth-data", cfg, out)?;
    let manifest = generate_synthetic_dataset(out, count, cfg.seed, &cfg.synth)?;
    run.output("manifest", thermosynth::data::MANIFEST_FILE);
    run.finish(json!({ "samples": manifest.entries.len(), "dir": out }))
}

#[derive(Serialize)]
struct TensorFile {
    path: String,
    shape: Vec<usize>,
}

#[derive(Serialize)]
struct PreprocessedEntry {
    id: String,
    heatmap: TensorFile,
    rgb: TensorFile,
    mask_hat: TensorFile,
    meta: thermosynth::data::SampleMeta,
}

fn preprocess(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("preprocess", cfg, out)?;
    run.input("data", data);
    let ds = load_dataset(data, cfg)?;
    let mut entries = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let (hh, hw) = (s.heatmap.height(), s.heatmap.width());
        let file = |kind: &str| format!("{kind}/{}.f32", s.sample_id);
        write_f32(&out.join(file("heatmap")), s.heatmap.values())?;
        write_f32(&out.join(file("rgb")), s.rgb.values())?;
        write_f32(&out.join(file("mask_hat")), s.mask_hat_or_ones().values())?;
        entries.push(PreprocessedEntry {
            id: s.sample_id.clone(),
            heatmap: TensorFile { path: file("heatmap"), shape: vec![hh, hw] },
            rgb: TensorFile { path: file("rgb"), shape: vec![s.rgb.height(), s.rgb.width(), 3] },
            mask_hat: TensorFile { path: file("mask_hat"), shape: vec![hh, hw] },
            meta: s.meta.clone(),
        });
    }
    let index = run.output("index", "index.json");
    write_json(&index, &json!({ "config": ds.config, "entries": entries }))?;
    run.finish(json!({ "samples": ds.len(), "index": index }))
}

/// Opens the history file, appending when continuing a run.
fn history_writer(path: &Path, append: bool) -> Result<BufWriter<File>> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn progress_logger(phase: &'static str, total: usize) -> impl FnMut(&StepRecord) {
    let every = (total / 20).max(1);
    move |r: &StepRecord| {
        if r.step.is_multiple_of(every) || r.step == total {
            let losses: Vec<String> = r.losses.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
            log::info!("{phase} step {}/{total} {}", r.step, losses.join(" "));
        }
    }
}

fn train_gan_cmd(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    checkpoint_every: Option<usize>,
    stop_at: Option<usize>,
) -> Result<()> {
    let mut run = Run::new("train-gan", cfg, out)?;
    run.input("data", data);
    let ds = load_dataset(data, cfg)?;
    let mut bundle = match resume {
        Some(p) => {
            run.input("resume", p);
            load_model(p, cfg)?
        }
        None => ModelBundle::init(cfg.model.clone(), cfg.seed)?,
    };
    let history_path = run.output("history", HISTORY_FILE);
    let mut history = history_writer(&history_path, resume.is_some())?;
    let checkpoint_path = out.join("checkpoint.bundle");
    if checkpoint_every.is_some() {
        run.output("checkpoint", "checkpoint.bundle");
    }
    let mut on_checkpoint = |b: &ModelBundle| save_bundle(b, &checkpoint_path);
    let mut on_step = progress_logger("gan", cfg.train.gan.total_steps(ds.len()));
    let records = train_gan(
        &ds,
        &mut bundle,
        &cfg.train,
        RunOptions {
            history: Some(&mut history),
            stop_at,
            checkpoint_every,
            on_checkpoint: Some(&mut on_checkpoint),
            on_step: Some(&mut on_step),
        },
    )?;
    history.flush().map_err(|e| CliError::io(&history_path, e))?;
    let bundle_path = run.output("bundle", BUNDLE_FILE);
    save_bundle(&bundle, &bundle_path)?;
    let last = records.last().map(|r| r.step);
    run.finish(json!({ "steps_run": records.len(), "last_step": last, "bundle": bundle_path }))
}

fn train_inversion_cmd(
    cfg: &RunConfig,
    data: &Path,
    bundle_in: &Path,
    out: &Path,
    checkpoint_every: Option<usize>,
    stop_at: Option<usize>,
) -> Result<()> {
    let mut run = Run::new("train-inversion", cfg, out)?;
    run.input("data", data);
    run.input("bundle", bundle_in);
    let ds = load_dataset(data, cfg)?;
    let mut bundle = load_model(bundle_in, cfg)?;
    let l1_before = mean_reconstruction_l1(&ds, &bundle)?;
    let history_path = run.output("history", HISTORY_FILE);
    let mut history = history_writer(&history_path, false)?;
    let checkpoint_path = out.join("checkpoint.bundle");
    if checkpoint_every.is_some() {
        run.output("checkpoint", "checkpoint.bundle");
    }
    let mut on_checkpoint = |b: &ModelBundle| save_bundle(b, &checkpoint_path);
    let mut on_step = progress_logger("inversion", cfg.train.inversion.total_steps(ds.len()));
    let records = train_inversion(
        &ds,
        &mut bundle,
        &cfg.train,
        RunOptions {
            history: Some(&mut history),
            stop_at,
            checkpoint_every,
            on_checkpoint: Some(&mut on_checkpoint),
            on_step: Some(&mut on_step),
        },
    )?;
    history.flush().map_err(|e| CliError::io(&history_path, e))?;
    let l1_after = mean_reconstruction_l1(&ds, &bundle)?;
    let bundle_path = run.output("bundle", BUNDLE_FILE);
    save_bundle(&bundle, &bundle_path)?;
    let summary = json!({ "steps_run": records.len(), "l1_before": l1_before, "l1_after": l1_after });
    write_json(&run.output("reconstruction", "reconstruction.json"), &summary)?;
    run.finish(summary)
}

fn build_latents(cfg: &RunConfig, data: &Path, bundle_in: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("build-latents", cfg, out)?;
    run.input("data", data);
    run.input("bundle", bundle_in);
    let ds = load_dataset(data, cfg)?;
    let bundle = load_model(bundle_in, cfg)?;
    let set = build_latent_set(&ds, &bundle)?;
    let path = run.output("latents", "latents.json");
    set.save(&path)?;
    run.finish(json!({ "codes": set.len(), "latents": path }))
}

fn eval_fid(cfg: &RunConfig, real: &Path, fake: Option<&Path>, bundle: Option<&Path>, out: &Path) -> Result<()> {
    let mut run = Run::new("eval-fid", cfg, out)?;
    run.input("real", real);
    let real_ds = load_dataset(real, cfg)?;
    let x = images_of(&real_ds)?;
    let (y, source) = match (fake, bundle) {
        (Some(f), None) => {
            run.input("fake", f);
            (images_of(&load_dataset(f, cfg)?)?, "dataset")
        }
        (None, Some(b)) => {
            run.input("bundle", b);
            (generate_for(&real_ds, &load_model(b, cfg)?, cfg.seed)?, "generator")
        }
        _ => return Err(CliError::Usage("give exactly one of --fake or --bundle".into())),
    };
    let extractor = RandomConvEmbedder::default();
    let fid = dataset_fid(&x, &y, &extractor)?;
    let summary = json!({
        "fid": fid,
        "real": x.shape()[0],
        "fake": y.shape()[0],
        "fake_source": source,
        "embedder_seed": extractor.seed(),
    });
    write_json(&run.output("fid", "fid.json"), &summary)?;
    run.finish(summary)
}

fn grid(
    cfg: &RunConfig,
    bundle_in: &Path,
    latents: &Path,
    data: &Path,
    n_codes: usize,
    n_heatmaps: usize,
    out: &Path,
) -> Result<()> {
    let mut run = Run::new("grid", cfg, out)?;
    run.input("bundle", bundle_in);
    run.input("latents", latents);
    run.input("data", data);
    let bundle = load_model(bundle_in, cfg)?;
    let set = LatentCodeSet::load(latents)?;
    let ds = load_dataset(data, cfg)?;
    if set.is_empty() || n_codes == 0 || n_heatmaps == 0 {
        return Err(CliError::Usage("grid needs a non-empty code set and positive --codes/--heatmaps".into()));
    }
    let picked: Vec<_> = spread(set.len(), n_codes).into_iter().map(|i| &set.codes[i]).collect();
    let codes: Vec<LatentCode> = picked.iter().map(|e| e.code.clone()).collect();
    // Source images come from the dataset when it holds the codes' samples.
    let sources: Option<Vec<RgbImage>> = picked
        .iter()
        .map(|e| ds.samples.iter().find(|s| s.sample_id == e.id).map(|s| s.rgb.clone()))
        .collect();
    let cols = spread(ds.len(), n_heatmaps);
    let heatmaps: Vec<Heatmap> = cols.iter().map(|&i| ds.samples[i].heatmap.clone()).collect();
    let g = disentanglement_grid(&bundle.config, &bundle.ema_generator, &codes, sources.as_deref(), &heatmaps)?;
    let png = run.output("grid", "grid.png");
    g.save_png(&png)?;
    let layout = json!({
        "rows": picked.iter().map(|e| &e.id).collect::<Vec<_>>(),
        "columns": cols.iter().map(|&i| &ds.samples[i].sample_id).collect::<Vec<_>>(),
        "cell_height": g.cell_height,
        "cell_width": g.cell_width,
        "header_row": "heatmaps",
        "header_column": if sources.is_some() { "source images" } else { "blank" },
    });
    write_json(&run.output("layout", "grid.json"), &layout)?;
    run.finish(json!({ "grid": png, "rows": g.rows, "cols": g.cols }))
}

fn probe(cfg: &RunConfig, bundle_in: &Path, latents: &Path, out: &Path) -> Result<()> {
    let mut run = Run::new("probe", cfg, out)?;
    run.input("bundle", bundle_in);
    run.input("latents", latents);
    let bundle = load_model(bundle_in, cfg)?;
    let set = LatentCodeSet::load(latents)?;
    let codes: Vec<LabelledCode> =
        set.codes.iter().map(|e| LabelledCode { code: e.code.clone(), environment: e.meta.environment }).collect();
    let report = disentanglement_probe(&bundle.config, &bundle.ema_generator, &codes, &cfg.synth, &cfg.probe)?;
    write_json(&run.output("probe", "probe.json"), &report)?;
    run.finish(json!({ "direction_rate": report.direction_rate, "background_rate": report.background_rate }))
}

fn privacy(cfg: &RunConfig, detector: &str, cmd: Option<PathBuf>, args: Vec<String>, out: &Path) -> Result<()> {
    let mut run = Run::new("privacy", cfg, out)?;
    let det: Box<dyn Detector> = match (detector, cmd) {
        ("blob", None) => Box::new(BlobDetector::default()),
        ("external", Some(program)) => {
            run.input("detector", &program);
            Box::new(ExternalDetector { program, args })
        }
        ("external", None) => return Err(CliError::Usage("--detector external needs --detector-cmd".into())),
        ("blob", Some(_)) => return Err(CliError::Usage("--detector-cmd only applies to --detector external".into())),
        (other, _) => return Err(CliError::Usage(format!("unknown detector `{other}` (blob or external)"))),
    };
    let frames = synthetic_privacy_frames(&cfg.privacy)?;
    let report = privacy_harness(&frames, &cfg.privacy.resolutions, det.as_ref())?;
    let csv = report.to_csv();
    let csv_path = run.output("table", "privacy.csv");
    fs::write(&csv_path, &csv).map_err(|e| CliError::io(&csv_path, e))?;
    write_json(&run.output("report", "privacy.json"), &report)?;
    eprint!("{csv}");
    run.finish(json!({ "detector": report.detector, "frames": report.frames, "table": csv_path }))
}

fn bench(cfg: &RunConfig, bundle_in: &Path, batch: &[usize], iters: usize, warmup: usize, out: &Path) -> Result<()> {
    let mut run = Run::new("bench", cfg, out)?;
    run.input("bundle", bundle_in);
    let bundle = load_model(bundle_in, cfg)?;
    let report = throughput_bench(&bundle.config, &bundle.ema_generator, batch, warmup, iters)?;
    write_json(&run.output("report", "bench.json"), &report)?;
    let fps: Vec<_> = report.rows.iter().map(|r| json!({ "batch": r.batch, "fps": r.fps })).collect();
    run.finish(json!({ "rows": fps }))
}

struct ServeOptions {
    looping: bool,
    host: String,
    port: u16,
    fps: f64,
    encode: String,
    duration: Option<f64>,
}

fn serve(cfg: &RunConfig, bundle_in: &Path, latents: &Path, replay: &Path, opts: &ServeOptions, out: &Path) -> Result<()> {
    let mut run = Run::new("serve", cfg, out)?;
    run.input("bundle", bundle_in);
    run.input("latents", latents);
    run.input("replay", replay);
    let bundle = load_model(bundle_in, cfg)?;
    let codes = LatentCodeSet::load(latents)?;
    let source = ReplaySource::from_manifest(replay, opts.looping)?;
    let encoding: Encoding = opts.encode.parse()?;
    let session_cfg = SessionConfig { fps: Some(opts.fps), encoding, ..Default::default() };
    let session = Session::start(&bundle, codes, Box::new(source), session_cfg, None)?;
    let handle = session.handle();

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Usage(format!("tokio runtime: {e}")))?;
    let addr = format!("{}:{}", opts.host, opts.port);
    let duration = opts.duration;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::io(Path::new(&addr), e))?;
        let local = listener.local_addr().map_err(|e| CliError::io(Path::new(&addr), e))?;
        println!("{}", json!({ "listening": format!("http://{local}"), "ws": format!("ws://{local}/ws") }));
        let shutdown = async move {
            match duration {
                Some(s) => tokio::time::sleep(Duration::from_secs_f64(s.max(0.0))).await,
                None => {
                    let _ = tokio::signal::ctrl_c().await;
                }
            }
        };
        thermosynth_service::http::serve(handle.clone(), listener, shutdown)
            .await
            .map_err(|e| CliError::io(Path::new(&addr), e))
    })?;
    let stats = handle.stats();
    session.stop();
    write_json(&run.output("stats", "serve_stats.json"), &stats)?;
    run.finish(json!({ "frames_out": stats.frames_out }))
}
