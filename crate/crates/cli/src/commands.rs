use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use dvt_core::analysis::{
    attention_cost, count_comparisons, export_trace, global_dsta_ratio, random_small_configs, verify_counts,
};
use dvt_core::attention::{AttnConfig, Scheme};
use dvt_core::model::{
    build_model, evaluate_with_workers, gradcheck_model, load_checkpoint, load_manifest, prepare_examples, probe_clip,
    restore_params, save_checkpoint, tiny_config, train as run_training, write_dataset, Checkpoint, Dvt,
    ForwardOptions, KeyValue, ModelConfig, RunConfig, SyntheticDatasetSpec, TrainState, MANIFEST_NAME,
};
use dvt_core::motioncue::{block_match_encode, gop_decode, write_gop, CodecParams, ResidualMode};
use dvt_core::numerics::{GradCheckOptions, ParamStore, Tape};
use dvt_core::tokenization::{read_clip, GridGeom};
use dvt_core::{DvtError, Result};

use crate::output::{block, pass};
use crate::resolve::{opt, resolve};
use crate::ConfigArgs;

fn echo<C: KeyValue>(c: &C) {
    block("config", c.entries());
}

fn manifest_of(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Dataset spec file (`key = value`); alias of `--config`.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    num_clips: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    square: Option<usize>,
    #[arg(long)]
    speed_min: Option<usize>,
    #[arg(long)]
    speed_max: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    texture: Option<f64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn gen_data(a: GenDataArgs) -> Result<bool> {
    let mut cargs = a.cfg.clone();
    if cargs.config.is_none() {
        cargs.config = a.spec.clone();
    }
    let spec: SyntheticDatasetSpec = resolve(
        SyntheticDatasetSpec::default(),
        &cargs,
        vec![
            ("num_clips", opt(&a.num_clips)),
            ("frames", opt(&a.frames)),
            ("height", opt(&a.height)),
            ("width", opt(&a.width)),
            ("square", opt(&a.square)),
            ("speed_min", opt(&a.speed_min)),
            ("speed_max", opt(&a.speed_max)),
            ("noise", opt(&a.noise)),
            ("texture", opt(&a.texture)),
        ],
    )?;
    echo(&spec);
    let t0 = Instant::now();
    let manifest = write_dataset(&spec, &a.out)?;
    let mut hist = [0usize; 4];
    for i in 0..spec.num_clips {
        hist[spec.direction(i).label()] += 1;
    }
    block(
        "dataset",
        [
            ("clips", spec.num_clips.to_string()),
            ("manifest", manifest.display().to_string()),
            ("labels", format!("{hist:?}")),
            ("seconds", format!("{:.3}", t0.elapsed().as_secs_f64())),
        ],
    );
    Ok(true)
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Input `.dvt-clip`.
    #[arg(long)]
    clip: PathBuf,
    /// Output `.dvt-gop`; defaults to the clip path with that extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    block: usize,
    #[arg(long, default_value_t = 3)]
    radius: usize,
    #[arg(long, default_value_t = 8)]
    gop: usize,
    /// Residual storage: f32 (lossless) or quantized.
    #[arg(long, default_value = "f32")]
    residual: String,
}

/// Peak signal-to-noise ratio for signals in `[0, 1]`.
fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn encode(a: EncodeArgs) -> Result<bool> {
    let residual = match a.residual.as_str() {
        "f32" => ResidualMode::F32,
        "quantized" => ResidualMode::Quantized,
        r => return Err(DvtError::config(format!("unknown residual mode `{r}` (f32|quantized)"))),
    };
    let params = CodecParams {
        block: a.block,
        radius: a.radius,
        gop_len: a.gop,
        residual,
    };
    block(
        "config",
        [
            ("clip", a.clip.display().to_string()),
            ("block", a.block.to_string()),
            ("radius", a.radius.to_string()),
            ("gop", a.gop.to_string()),
            ("residual", a.residual.clone()),
        ],
    );
    let clip = read_clip(&a.clip)?;
    let gop = block_match_encode(&clip, &params)?;
    let out = a.out.unwrap_or_else(|| a.clip.with_extension("dvt-gop"));
    write_gop(&out, &gop)?;
    let decoded = gop_decode(&gop)?;
    let (mut sq, mut max_err) = (0.0, 0.0f64);
    for (x, y) in clip.frames.data().iter().zip(decoded.frames.data()) {
        let e = (*x as f64 - *y as f64).abs();
        sq += e * e;
        max_err = max_err.max(e);
    }
    let mse = sq / clip.frames.len() as f64;
    let (mut blocks, mut nonzero, mut sum_abs, mut max_abs) = (0usize, 0usize, 0.0, 0i32);
    for (md, _) in gop.p_frames() {
        for &(dy, dx) in md {
            blocks += 1;
            let m = (dy as i32).abs().max((dx as i32).abs());
            if m > 0 {
                nonzero += 1;
            }
            sum_abs += ((dy as f64).powi(2) + (dx as f64).powi(2)).sqrt();
            max_abs = max_abs.max(m);
        }
    }
    let lossless = residual == ResidualMode::Quantized || max_err < 1e-6;
    block(
        "encode",
        [
            ("out", out.display().to_string()),
            ("frames", gop.len().to_string()),
            ("i_frames", gop.i_frames().count().to_string()),
            ("p_frames", gop.p_frames().count().to_string()),
            ("md_blocks", blocks.to_string()),
            ("md_nonzero_blocks", nonzero.to_string()),
            ("md_all_zero", (nonzero == 0).to_string()),
            (
                "md_mean_norm",
                format!("{:.6}", if blocks > 0 { sum_abs / blocks as f64 } else { 0.0 }),
            ),
            ("md_max_abs", max_abs.to_string()),
            ("psnr_db", format!("{:.3}", psnr(mse))),
            ("max_abs_err", format!("{max_err:.3e}")),
            ("roundtrip", pass(lossless).to_string()),
        ],
    );
    Ok(lossless)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training clips: a dataset directory or a manifest file.
    #[arg(long)]
    data: PathBuf,
    /// Validation clips evaluated after every epoch.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    ckpt: PathBuf,
    /// Per-epoch metrics log; defaults to `<ckpt>.log`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    target_accuracy: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    cue: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn train(a: TrainArgs) -> Result<bool> {
    let run: RunConfig = resolve(
        RunConfig::default(),
        &a.cfg,
        vec![
            ("epochs", opt(&a.epochs)),
            ("batch", opt(&a.batch)),
            ("lr", opt(&a.lr)),
            ("workers", opt(&a.workers)),
            ("target_accuracy", opt(&a.target_accuracy)),
            ("scheme", a.scheme.clone()),
            ("cue", a.cue.clone()),
            ("layers", opt(&a.layers)),
            ("dim", opt(&a.dim)),
            ("heads", opt(&a.heads)),
        ],
    )?;
    echo(&run);
    let mut store = ParamStore::<f32>::new();
    let model = build_model(&run.model, &mut store)?;
    let t0 = Instant::now();
    let train_set = prepare_examples(&model, &load_manifest(&manifest_of(&a.data))?)?;
    let val_set = match &a.val {
        Some(v) => prepare_examples(&model, &load_manifest(&manifest_of(v))?)?,
        None => Vec::new(),
    };
    block(
        "data",
        [
            ("train_clips", train_set.len().to_string()),
            ("val_clips", val_set.len().to_string()),
            ("parameters", store.count().to_string()),
            ("prepare_seconds", format!("{:.3}", t0.elapsed().as_secs_f64())),
        ],
    );
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.ckpt.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    let mut log = String::new();
    let mut state = TrainState::new(store);
    let t0 = Instant::now();
    run_training(&model, &mut state, &train_set, &val_set, &run.train, |m| {
        let line = m.to_line();
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    std::fs::write(&log_path, &log).map_err(|e| DvtError::io(&log_path, e))?;
    save_checkpoint(&a.ckpt, &Checkpoint::from_state(&run.model, &state))?;
    let last = state.log.last();
    block(
        "train",
        [
            ("epochs_run", state.epoch.to_string()),
            (
                "final_train_loss",
                last.map_or("nan".into(), |m| format!("{:.6}", m.train_loss)),
            ),
            (
                "final_val_acc",
                last.map_or("nan".into(), |m| format!("{:.4}", m.val_acc)),
            ),
            ("best_val_acc", format!("{:.4}", state.best_val_acc())),
            ("seconds", format!("{:.3}", t0.elapsed().as_secs_f64())),
            ("checkpoint", a.ckpt.display().to_string()),
            ("log", log_path.display().to_string()),
        ],
    );
    Ok(true)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: PathBuf,
    /// Concurrent evaluation threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn load_model(path: &Path) -> Result<(Dvt, ParamStore<f32>)> {
    let ckpt = load_checkpoint(path)?;
    let mut store = ParamStore::<f32>::new();
    let model = build_model(&ckpt.config, &mut store)?;
    restore_params(&mut store, &ckpt.params)?;
    Ok((model, store))
}

pub fn eval(a: EvalArgs) -> Result<bool> {
    let (model, store) = load_model(&a.ckpt)?;
    echo(&model.cfg);
    let data = prepare_examples(&model, &load_manifest(&manifest_of(&a.data))?)?;
    let m = evaluate_with_workers(&model, &store, &data, a.workers)?;
    let mut entries = vec![
        ("clips".to_string(), m.count.to_string()),
        ("top1".to_string(), format!("{:.6}", m.top1)),
        ("mean_loss".to_string(), format!("{:.6}", m.mean_loss)),
    ];
    for (k, acc) in m.per_class.iter().enumerate() {
        entries.push((format!("class{k}_acc"), acc.map_or("nan".into(), |v| format!("{v:.6}"))));
    }
    for (k, row) in m.confusion.iter().enumerate() {
        entries.push((format!("confusion{k}"), format!("{row:?}")));
    }
    block("eval", entries);
    Ok(true)
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Check every scheme instead of the configured one.
    #[arg(long)]
    all_schemes: bool,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Check at most this many random coordinates per parameter tensor.
    #[arg(long)]
    max_coords: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let base = RunConfig {
        model: tiny_config(),
        ..RunConfig::default()
    };
    let run: RunConfig = resolve(base, &a.cfg, vec![("scheme", a.scheme.clone())])?;
    echo(&run.model);
    let schemes = if a.all_schemes {
        Scheme::ALL.to_vec()
    } else {
        vec![run.model.attn.scheme]
    };
    let opts = GradCheckOptions {
        step: a.step,
        tol: a.tol,
        max_coords: a.max_coords,
        seed: run.model.seed,
    };
    let mut ok = true;
    for scheme in schemes {
        let mut cfg = run.model.clone();
        cfg.attn.scheme = scheme;
        let t0 = Instant::now();
        let r = gradcheck_model(&cfg, &opts)?;
        ok &= r.passed();
        block(
            "gradcheck",
            [
                ("scheme", scheme.as_str().to_string()),
                ("checked", r.checked.to_string()),
                ("failures", r.failures.len().to_string()),
                ("max_rel_err", format!("{:.3e}", r.max_rel_err)),
                ("worst", format!("{:?}", r.worst)),
                ("tol", format!("{:e}", a.tol)),
                ("seconds", format!("{:.3}", t0.elapsed().as_secs_f64())),
                ("status", pass(r.passed()).to_string()),
            ],
        );
    }
    Ok(ok)
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    /// One scheme; all when omitted.
    #[arg(long)]
    scheme: Option<String>,
    /// Spatial sites S (overrides the config geometry).
    #[arg(long)]
    sites: Option<u64>,
    /// Token frames T (overrides the config geometry).
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    subclips: Option<usize>,
    #[arg(long)]
    ms_samples: Option<usize>,
    #[arg(long)]
    scales: Option<usize>,
    /// Also run instrumented layers on random small configs and compare.
    #[arg(long)]
    verify: bool,
    /// Random configs per scheme for `--verify`.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn flops(a: FlopsArgs) -> Result<bool> {
    let run: RunConfig = resolve(
        RunConfig::default(),
        &a.cfg,
        vec![
            ("scheme", a.scheme.clone()),
            ("samples", opt(&a.samples)),
            ("subclips", opt(&a.subclips)),
            ("ms_samples", opt(&a.ms_samples)),
            ("scales", opt(&a.scales)),
        ],
    )?;
    let m = &run.model;
    let attn: AttnConfig = m.attn;
    let geom = m.geom()?;
    let (s, t) = (
        a.sites.unwrap_or(geom.sites() as u64),
        a.frames.unwrap_or(geom.frames as u64),
    );
    // MACs need a 2-D grid; an explicit S is laid out as one row
    let mac_geom = if a.sites.is_some() || a.frames.is_some() {
        GridGeom {
            frames: t as usize,
            grid_h: if a.sites.is_some() { 1 } else { geom.grid_h },
            grid_w: if a.sites.is_some() { s as usize } else { geom.grid_w },
        }
    } else {
        geom
    };
    block(
        "config",
        [
            ("sites", s.to_string()),
            ("frames", t.to_string()),
            ("samples", attn.samples.to_string()),
            ("subclips", attn.subclips.to_string()),
            ("ms_samples", attn.ms_samples.to_string()),
            ("scales", attn.scales.to_string()),
            ("heads", attn.heads.to_string()),
            ("dim", m.dim.to_string()),
        ],
    );
    let schemes = if a.scheme.is_some() {
        vec![attn.scheme]
    } else {
        Scheme::ALL.to_vec()
    };
    println!("{:<8} {:>16} {:>16}", "scheme", "comparisons", "macs");
    let mut entries = Vec::new();
    for scheme in &schemes {
        let c = count_comparisons(*scheme, s, t, &attn)?;
        let macs = attention_cost(
            *scheme,
            &mac_geom,
            m.dim,
            &AttnConfig {
                scheme: *scheme,
                ..attn
            },
            m.cue,
            m.patch,
        )
        .map(|c| c.macs.to_string())
        .unwrap_or_else(|_| "n/a".into());
        println!("{:<8} {:>16} {:>16}", scheme.as_str(), c, macs);
        if schemes.len() == 1 {
            entries.push(("comparisons".to_string(), c.to_string()));
            entries.push(("macs".to_string(), macs));
        } else {
            entries.push((format!("{}.comparisons", scheme.as_str()), c.to_string()));
            entries.push((format!("{}.macs", scheme.as_str()), macs));
        }
    }
    if let Ok((num, den)) = global_dsta_ratio(s, t, &attn) {
        entries.push((
            "global_over_dsta".into(),
            if den == 1 {
                num.to_string()
            } else {
                format!("{num}/{den}")
            },
        ));
    }
    block("flops", entries);

    let mut ok = true;
    if a.verify {
        let seed = m.seed;
        for scheme in &schemes {
            let mut fails = 0;
            for (i, (c, g, d)) in random_small_configs(*scheme, a.trials, seed).into_iter().enumerate() {
                let r = verify_counts(&c, g, d, seed + i as u64)?;
                if !r.passed() {
                    fails += 1;
                    println!(
                        "mismatch {} T={} grid={}x{}: expected {} observed {}",
                        scheme.as_str(),
                        g.frames,
                        g.grid_h,
                        g.grid_w,
                        r.expected,
                        r.observed
                    );
                }
            }
            ok &= fails == 0;
            block(
                "verify",
                [
                    ("scheme", scheme.as_str().to_string()),
                    ("trials", a.trials.to_string()),
                    ("mismatches", fails.to_string()),
                    ("status", pass(fails == 0).to_string()),
                ],
            );
        }
    }
    Ok(ok)
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    /// Checkpoint to trace; a freshly initialised model when omitted.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Clip to run; a synthetic probe clip when omitted.
    #[arg(long)]
    clip: Option<PathBuf>,
    /// Output directory for `trace.jsonl` and `frame_NNN.ppm`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, default_value_t = 0)]
    head: usize,
    /// Query token frame.
    #[arg(long, default_value_t = 0)]
    t: usize,
    /// Query site; the grid centre when omitted.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    scheme: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn trace(a: TraceArgs) -> Result<bool> {
    let (model, store) = match &a.ckpt {
        Some(p) => load_model(p)?,
        None => {
            let run: RunConfig = resolve(RunConfig::default(), &a.cfg, vec![("scheme", a.scheme.clone())])?;
            let mut store = ParamStore::<f32>::new();
            let model = build_model(&run.model, &mut store)?;
            (model, store)
        }
    };
    let cfg: &ModelConfig = &model.cfg;
    echo(cfg);
    if !cfg.attn.scheme.is_deformable() {
        return Err(DvtError::config(format!(
            "scheme `{}` records no sampling trace",
            cfg.attn.scheme.as_str()
        )));
    }
    let clip = match &a.clip {
        Some(p) => read_clip(p)?,
        None => probe_clip(cfg, 0)?.0,
    };
    let geom = model.geom;
    let s = a.s.unwrap_or_else(|| geom.site(geom.grid_h / 2, geom.grid_w / 2));
    let input = model.prepare::<f32>(&clip)?;
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let out = model.forward(
        &input,
        &bound,
        ForwardOptions {
            trace: true,
            ..ForwardOptions::default()
        },
    )?;
    let summary = export_trace(
        &out.trace,
        &clip,
        &geom,
        cfg.patch,
        cfg.tubelet,
        (a.layer, a.head, a.t, s),
        &a.out,
    )?;

    let worst_sum = out
        .trace
        .records
        .iter()
        .map(|r| (r.weight_sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let normalised = worst_sum <= 1e-6;
    // expected markers per raw frame for this query
    let mut expected = vec![0usize; clip.dims().0];
    let scheme = cfg.attn.scheme;
    if matches!(scheme, Scheme::Dsta | Scheme::DstMs) {
        for tp in model.subclips()?.range_of(a.t) {
            expected[tp * cfg.tubelet] += cfg.attn.samples;
        }
    }
    if matches!(scheme, Scheme::Dmsa | Scheme::DstMs) {
        expected[a.t * cfg.tubelet] += cfg.attn.scales * cfg.attn.ms_samples;
    }
    let markers_ok = summary.markers == expected;
    block(
        "trace",
        [
            ("records", out.trace.len().to_string()),
            ("query", format!("layer {} head {} t {} s {}", a.layer, a.head, a.t, s)),
            ("jsonl", summary.jsonl.display().to_string()),
            ("frames_written", summary.frames.len().to_string()),
            ("markers_per_frame", format!("{:?}", summary.markers)),
            ("expected_markers", format!("{expected:?}")),
            ("max_weight_sum_err", format!("{worst_sum:.3e}")),
            ("normalisation", pass(normalised).to_string()),
            ("markers", pass(markers_ok).to_string()),
        ],
    );
    Ok(normalised && markers_ok)
}
