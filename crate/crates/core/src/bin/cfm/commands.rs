use std::path::{Path, PathBuf};

use cfm::conformal::{apply_mask, calibrate, CalibrationResult, CalibrationSet, FnrCounts};
use cfm::dataset::{load_frames, read_any_image};
use cfm::demo::{end_to_end_demo, DemoConfig};
use cfm::errnet::{
    extract_features, load_params, predict, save_params, BatchUnit, BlockOrder, FeatureMode, TrainConfig,
};
use cfm::errormaps::{failure_mask, psnr_map_with, squared_error_map, BinaryMask, FailureLevel, PsnrOptions};
use cfm::eval::{
    ablation_csv, ablation_sweep, auroc, auroc_histogram, curve_csv, fit, fpr95, mask_size, prepare_frames,
    risk_coverage_curve, run_trials, train_eval_videos, AblationAxis, AblationConfig, CurveConfig, ScoreSource,
    SplitUnit, TrialConfig, HISTOGRAM_BINS,
};
use cfm::io::{read_string, write_atomic};
use cfm::raster::{degrade, read_emap, sr_standin, write_emap, MapUnit, ScalarMap, ScaleFactor, SrMode};
use cfm::synth::{make_dataset, DatasetManifest, DatasetSpec, SceneConfig, MANIFEST_FILE};
use cfm::{Error, Result};
use serde::Serialize;

use crate::args::*;

pub struct Ctx {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Ctx {
    fn out(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn seed(&self, cmd: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidArgument(format!("'{cmd}' is randomized and requires --seed")))
    }

    /// Runs `f` in a scratch directory under `out_dir`, then moves its entries into
    /// place; on failure the scratch directory is removed and nothing is published.
    fn staged<T>(&self, f: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
        let tmp = self.out_dir.join(format!(".cfm-staging-{}", std::process::id()));
        std::fs::create_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
        let out = f(&tmp).and_then(|v| {
            for entry in std::fs::read_dir(&tmp).map_err(|e| io_err(&tmp, e))? {
                let entry = entry.map_err(|e| io_err(&tmp, e))?;
                let dst = self.out_dir.join(entry.file_name());
                if dst.is_dir() {
                    std::fs::remove_dir_all(&dst).map_err(|e| io_err(&dst, e))?;
                }
                std::fs::rename(entry.path(), &dst).map_err(|e| io_err(&dst, e))?;
            }
            Ok(v)
        });
        let _ = std::fs::remove_dir_all(&tmp);
        out
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("outputs serialize") + "\n";
    write_atomic(path, text.as_bytes())
}

fn sr_mode(m: SrModeArg) -> SrMode {
    match m {
        SrModeArg::Plain => SrMode::Plain,
        SrModeArg::Sharpen => SrMode::Sharpen,
    }
}

fn feature_mode(m: FeatureArg) -> FeatureMode {
    match m {
        FeatureArg::Identity => FeatureMode::Identity,
        FeatureArg::Handcrafted => FeatureMode::Handcrafted,
    }
}

fn order(o: OrderArg) -> BlockOrder {
    match o {
        OrderArg::ConvReluBn => BlockOrder::ConvReluBn,
        OrderArg::ConvBnRelu => BlockOrder::ConvBnRelu,
    }
}

fn dataset_spec(a: &SceneArgs, seed: u64) -> Result<DatasetSpec> {
    Ok(DatasetSpec {
        scene: SceneConfig {
            seed,
            height: a.height,
            width: a.width,
            n_ellipses: a.n_ellipses,
            vessel_density: a.vessel_density,
            specular_count: a.specular_count,
            texture_amplitude: a.texture_amplitude,
            frames_per_video: a.frames,
            translation_px: a.translation_px,
        },
        n_videos: a.n_videos,
        scale: ScaleFactor::new(a.scale)?,
        noise_sigma: a.noise_sigma,
        sr_mode: sr_mode(a.sr_mode),
    })
}

fn train_config(a: &OptimArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        batch_unit: match a.batch_unit {
            BatchUnitArg::Image => BatchUnit::Image,
            BatchUnitArg::Video => BatchUnit::Video,
        },
        base_lr: a.lr,
        seed,
        normalize_targets: !a.raw_targets,
        ..TrainConfig::default()
    }
}

/// Paths listed in an `.emap-list`, resolved against the list's directory.
pub fn read_list(list: &Path) -> Result<Vec<PathBuf>> {
    let base = list.parent().unwrap_or(Path::new("."));
    let paths: Vec<PathBuf> = read_string(list)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if paths.is_empty() {
        return Err(Error::Format {
            what: "emap-list",
            detail: format!("{} lists no files", list.display()),
        });
    }
    Ok(paths)
}

fn read_scores(path: &Path) -> Result<ScalarMap> {
    read_emap(path)?.into_scalar_map(MapUnit::Score)
}

fn read_scores_list(list: &Path) -> Result<Vec<ScalarMap>> {
    read_list(list)?.iter().map(|p| read_scores(p)).collect()
}

fn read_masks_list(list: &Path) -> Result<Vec<BinaryMask>> {
    read_list(list)?
        .iter()
        .map(|p| BinaryMask::from_tensor(read_emap(p)?))
        .collect()
}

fn paired(scores: &Path, masks: &Path) -> Result<Vec<(ScalarMap, BinaryMask)>> {
    let s = read_scores_list(scores)?;
    let m = read_masks_list(masks)?;
    if s.len() != m.len() {
        return Err(Error::Shape(format!("{} score maps vs {} masks", s.len(), m.len())));
    }
    Ok(s.into_iter().zip(m).collect())
}

fn read_calibration(path: &Path) -> Result<CalibrationResult> {
    serde_json::from_str(&read_string(path)?).map_err(|e| Error::Format {
        what: "calibration result",
        detail: format!("{}: {e}", path.display()),
    })
}

pub fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let spec = dataset_spec(&a.scene, ctx.seed("synth")?)?;
    ctx.staged(|tmp| {
        let mut manifest = make_dataset(&spec, tmp)?;
        if let Some(n) = a.n_train_videos {
            manifest.assign_train_prefix(n);
            manifest.write(tmp.join(MANIFEST_FILE))?;
        }
        log::info!("wrote {} videos", manifest.videos.len());
        Ok(())
    })
}

pub fn degrade_cmd(ctx: &Ctx, a: &DegradeArgs) -> Result<()> {
    let hr = read_any_image(&a.input)?;
    let lr = degrade(&hr, ScaleFactor::new(a.scale)?, a.noise_sigma, ctx.seed("degrade")?)?;
    let bytes = cfm::raster::encode_pnm(&lr);
    write_atomic(&ctx.out(&a.output), &bytes)
}

pub fn sr(ctx: &Ctx, a: &SrArgs) -> Result<()> {
    let lr = read_any_image(&a.input)?;
    let out = sr_standin(&lr, ScaleFactor::new(a.scale)?, sr_mode(a.mode))?;
    write_atomic(&ctx.out(&a.output), &cfm::raster::encode_pnm(&out))
}

pub fn errmap(ctx: &Ctx, a: &ErrmapArgs) -> Result<()> {
    let pred = read_any_image(&a.pred)?;
    let reference = read_any_image(&a.reference)?;
    let opts = PsnrOptions {
        window: a.window,
        ..PsnrOptions::default()
    };
    let tensor = match a.kind {
        MapKind::Se => (&squared_error_map(&pred, &reference)?).into(),
        MapKind::Psnr => (&psnr_map_with(&pred, &reference, opts)?).into(),
        MapKind::Mask => {
            let tau = a
                .tau_fail
                .ok_or_else(|| Error::InvalidArgument("--kind mask needs --tau-fail".into()))?;
            failure_mask(&psnr_map_with(&pred, &reference, opts)?, FailureLevel::new(tau)?).to_tensor()
        }
    };
    write_emap(&tensor, ctx.out(&a.output))
}

pub fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let (train_videos, _) = train_eval_videos(&manifest);
    if train_videos.is_empty() {
        return Err(Error::InvalidArgument("manifest has no train-tagged videos".into()));
    }
    let frames = load_frames(&manifest, &train_videos, feature_mode(a.arch.feature_mode))?;
    let cfg = train_config(&a.optim, ctx.seed("train")?);
    let (params, report) = fit(&frames, a.arch.n_blocks, a.arch.net_width, order(a.arch.order), &cfg)?;
    let out = ctx.out(&a.output);
    save_params(&params, &out)?;
    write_json(&out.with_extension("report.json"), &report)
}

pub fn predict_cmd(ctx: &Ctx, a: &PredictArgs) -> Result<()> {
    let params = load_params(&a.params)?;
    let mode = feature_mode(a.feature_mode);
    match (&a.input, &a.manifest) {
        (Some(input), None) => {
            let lr = read_any_image(input)?;
            let scores = predict(&params, &extract_features(&lr, mode))?;
            write_emap(&(&scores).into(), ctx.out(&a.output))
        }
        (None, Some(manifest)) => {
            let manifest = DatasetManifest::read(manifest)?;
            let (_, eval_videos) = train_eval_videos(&manifest);
            let frames = load_frames(&manifest, &eval_videos, mode)?;
            let out = ctx.out(&a.output);
            let stem = out
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "scores".into());
            let dir = out.parent().unwrap_or(Path::new(".")).to_path_buf();
            let sub = Ctx {
                seed: ctx.seed,
                out_dir: dir,
            };
            sub.staged(|tmp| {
                std::fs::create_dir_all(tmp.join(&stem)).map_err(|e| io_err(tmp, e))?;
                let mut list = String::new();
                for f in &frames {
                    let name = format!("{stem}/{}_f{:03}.emap", manifest.videos[f.video].video_id, f.frame);
                    write_emap(&(&predict(&params, &f.features)?).into(), tmp.join(&name))?;
                    list.push_str(&name);
                    list.push('\n');
                }
                write_atomic(&tmp.join(format!("{stem}.emap-list")), list.as_bytes())
            })
        }
        _ => Err(Error::InvalidArgument("predict needs exactly one of --input or --manifest".into())),
    }
}

pub fn calibrate_cmd(ctx: &Ctx, a: &CalibrateArgs) -> Result<()> {
    let set = CalibrationSet::new(FailureLevel::new(a.tau_fail)?, paired(&a.scores, &a.masks)?)?;
    let result = calibrate(&set, a.alpha)?;
    log::info!("tau_tilde {:?} from {} positives", result.tau_tilde, result.n_positives);
    write_json(&ctx.out(&a.output), &result)
}

pub fn mask_cmd(ctx: &Ctx, a: &MaskArgs) -> Result<()> {
    let scores = read_scores(&a.scores)?;
    let result = read_calibration(&a.tau_tilde)?;
    write_emap(&apply_mask(&scores, result.tau_tilde).to_tensor(), ctx.out(&a.output))
}

#[derive(Serialize)]
struct EvalOutput {
    n_images: usize,
    n_pixels: usize,
    n_positives: usize,
    auroc: Option<f64>,
    fpr95: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fnr: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_mask_size_pct: Option<f64>,
}

pub fn eval_cmd(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let items = paired(&a.scores, &a.masks)?;
    let metric = |s: &[f64], l: &[u8]| -> (Option<f64>, Option<f64>) {
        let au = if a.histogram {
            auroc_histogram(s, l, HISTOGRAM_BINS)
        } else {
            auroc(s, l)
        };
        (au.ok(), fpr95(s, l).ok())
    };
    let to_f64 = |m: &ScalarMap| m.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
    let (au, fpr) = if a.per_image {
        let per: Vec<(f64, f64)> = items
            .iter()
            .filter_map(|(s, m)| match metric(&to_f64(s), m.data()) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => None,
            })
            .collect();
        let n = per.len() as f64;
        if per.is_empty() {
            (None, None)
        } else {
            (
                Some(per.iter().map(|p| p.0).sum::<f64>() / n),
                Some(per.iter().map(|p| p.1).sum::<f64>() / n),
            )
        }
    } else {
        let s: Vec<f64> = items.iter().flat_map(|(s, _)| to_f64(s)).collect();
        let l: Vec<u8> = items.iter().flat_map(|(_, m)| m.data().to_vec()).collect();
        metric(&s, &l)
    };
    let (fnr, size) = match &a.tau_tilde {
        Some(p) => {
            let result = read_calibration(p)?;
            let mut counts = FnrCounts::default();
            let mut sizes = 0.0;
            for (s, m) in &items {
                let pred = apply_mask(s, result.tau_tilde);
                counts.add(m.data(), pred.data());
                sizes += mask_size(&pred);
            }
            (Some(counts.rate().ok()), Some(sizes / items.len() as f64))
        }
        None => (None, None),
    };
    let out = EvalOutput {
        n_images: items.len(),
        n_pixels: items.iter().map(|(s, _)| s.len()).sum(),
        n_positives: items.iter().map(|(_, m)| m.count_ones()).sum(),
        auroc: au,
        fpr95: fpr,
        fnr,
        mean_mask_size_pct: size,
    };
    write_json(&ctx.out(&a.output), &out)
}

fn trial_config(a: &SplitArgs, seed: u64, alphas: Vec<f64>, tau_fails: Vec<f64>) -> TrialConfig {
    TrialConfig {
        n_trials: a.n_trials,
        cal_fraction: a.cal_fraction,
        split_unit: match a.split_unit {
            SplitUnitArg::Video => SplitUnit::Video,
            SplitUnitArg::Image => SplitUnit::Image,
        },
        seed,
        alphas,
        tau_fails,
    }
}

fn eval_frames(a: &SourceArgs, seed: u64) -> Result<(Vec<cfm::eval::EvalFrame>, &'static str)> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let (_, videos) = train_eval_videos(&manifest);
    let params;
    let source = match a.source {
        SourceArg::Oracle => ScoreSource::Oracle,
        SourceArg::Noisy => ScoreSource::NoisyOracle {
            sigma: a.score_noise,
            seed,
        },
        SourceArg::Errnet => {
            let p = a
                .params
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--source errnet needs --params".into()))?;
            params = load_params(p)?;
            ScoreSource::ErrNet(&params)
        }
        SourceArg::Precomputed => {
            let p = a
                .scores
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--source precomputed needs --scores".into()))?;
            ScoreSource::Precomputed(read_scores_list(p)?)
        }
    };
    let name = source.name();
    Ok((prepare_frames(&manifest, &videos, feature_mode(a.feature_mode), &source)?, name))
}

pub fn trials(ctx: &Ctx, a: &TrialsArgs) -> Result<()> {
    let seed = ctx.seed("trials")?;
    let (frames, name) = eval_frames(&a.source, seed)?;
    let cfg = trial_config(&a.split, seed, a.alphas.clone(), a.tau_fails.clone());
    let report = run_trials(&frames, &cfg, name)?;
    write_atomic(&ctx.out(&a.output), report.to_json().as_bytes())
}

pub fn curve(ctx: &Ctx, a: &CurveArgs) -> Result<()> {
    let seed = ctx.seed("curve")?;
    let (frames, _) = eval_frames(&a.source, seed)?;
    let cfg = CurveConfig {
        tau_fail: a.tau_fail,
        alphas: a.alphas.clone(),
        baseline_levels: a.baseline_levels.clone(),
        trials: trial_config(&a.split, seed, vec![0.1], vec![a.tau_fail]),
    };
    let rows = risk_coverage_curve(&frames, &cfg)?;
    write_atomic(&ctx.out(&a.output), curve_csv(&rows).as_bytes())
}

pub fn ablate(ctx: &Ctx, a: &AblateArgs) -> Result<()> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let cfg = AblationConfig {
        n_blocks: a.arch.n_blocks,
        width: a.arch.net_width,
        order: order(a.arch.order),
        n_train_videos: a.n_train_videos,
        feature_mode: feature_mode(a.arch.feature_mode),
        tau_fail: a.tau_fail,
        per_image: a.per_image,
        train: train_config(&a.optim, ctx.seed("ablate")?),
    };
    let axis = match a.axis {
        AxisArg::NBlocks => AblationAxis::NBlocks,
        AxisArg::Width => AblationAxis::Width,
        AxisArg::NTrainVideos => AblationAxis::NTrainVideos,
    };
    let rows = ablation_sweep(&manifest, axis, &a.values, &cfg)?;
    write_atomic(&ctx.out(&a.output), ablation_csv(&rows).as_bytes())
}

pub fn demo(ctx: &Ctx, a: &DemoArgs) -> Result<()> {
    let seed = ctx.seed("demo")?;
    let mut cfg = DemoConfig {
        dataset: dataset_spec(&a.scene, 0)?,
        n_train_videos: a.n_train_videos,
        feature_mode: feature_mode(a.arch.feature_mode),
        n_blocks: a.arch.n_blocks,
        width: a.arch.net_width,
        order: order(a.arch.order),
        train: train_config(&a.optim, 0),
        ..DemoConfig::default()
    };
    cfg.trials.n_trials = a.n_trials;
    cfg.curve.trials.n_trials = a.n_trials;
    ctx.staged(|tmp| end_to_end_demo(seed, cfg, tmp).map(|_| ()))
}
