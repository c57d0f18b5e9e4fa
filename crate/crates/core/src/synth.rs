//! Procedural endoscopy-like scenes and on-disk datasets.
//!
//! A scene is a smooth tissue background with soft blobs, dark vessel curves and a
//! fine texture, all periodic on the image torus, plus fixed specular highlights.
//! Frame `t` of a video is frame 0's periodic layers rolled right by
//! `t * translation_px` pixels, with the highlights composited on top unmoved.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_string, write_atomic};
use crate::raster::{degrade, sr_standin, write_image, Image, ScaleFactor, SrMode};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_ellipses: usize,
    /// Vessels per 8 pixels of `height + width`.
    pub vessel_density: f64,
    pub specular_count: usize,
    pub texture_amplitude: f64,
    pub frames_per_video: usize,
    pub translation_px: i64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            height: 128,
            width: 128,
            n_ellipses: 6,
            vessel_density: 0.12,
            specular_count: 5,
            texture_amplitude: 0.12,
            frames_per_video: 5,
            translation_px: 3,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 32 || self.width < 32 {
            return Err(Error::InvalidArgument(format!(
                "scene dims must be >= 32, got {}x{}",
                self.height, self.width
            )));
        }
        for (name, v) in [
            ("vessel_density", self.vessel_density),
            ("texture_amplitude", self.texture_amplitude),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.frames_per_video == 0 {
            return Err(Error::InvalidArgument("frames_per_video must be >= 1".into()));
        }
        Ok(())
    }

    fn n_vessels(&self) -> usize {
        (self.vessel_density * (self.height + self.width) as f64 / 8.0).round() as usize
    }
}

/// Periodic layers of frame 0, as three planes.
fn render_tissue(cfg: &SceneConfig, rng: &mut impl Rng) -> [Vec<f64>; 3] {
    let (h, w) = (cfg.height, cfg.width);
    let (hf, wf) = (h as f64, w as f64);
    let base = [
        0.72 + rng.gen_range(-0.04..0.04),
        0.42 + rng.gen_range(-0.04..0.04),
        0.38 + rng.gen_range(-0.04..0.04),
    ];
    let mut planes = [vec![0f64; h * w], vec![0f64; h * w], vec![0f64; h * w]];

    // low-frequency shading, integer frequencies keep it periodic
    let shading: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                f64::from(rng.gen_range(1..3)),
                f64::from(rng.gen_range(0..3)),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.03..0.07),
            )
        })
        .collect();

    struct Blob {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        shift: [f64; 3],
    }
    let blobs: Vec<Blob> = (0..cfg.n_ellipses)
        .map(|_| {
            let tone = rng.gen_range(-0.15..0.15);
            Blob {
                cy: rng.gen_range(0.0..hf),
                cx: rng.gen_range(0.0..wf),
                ry: rng.gen_range(0.08..0.25) * hf,
                rx: rng.gen_range(0.08..0.25) * wf,
                shift: [tone, tone * 0.8 + rng.gen_range(-0.03..0.03), tone * 0.7],
            }
        })
        .collect();

    struct Vessel {
        vertical: bool,
        offset: f64,
        amp: f64,
        freq: f64,
        phase: f64,
        thickness: f64,
        depth: f64,
    }
    let vessels: Vec<Vessel> = (0..cfg.n_vessels())
        .map(|_| {
            let vertical = rng.gen_bool(0.5);
            let span = if vertical { wf } else { hf };
            Vessel {
                vertical,
                offset: rng.gen_range(0.0..span),
                amp: rng.gen_range(0.05..0.2) * span,
                freq: f64::from(rng.gen_range(1..4)),
                phase: rng.gen_range(0.0..TAU),
                thickness: rng.gen_range(0.7..2.0),
                depth: rng.gen_range(0.2..0.35),
            }
        })
        .collect();

    let texture: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                f64::from(rng.gen_range(h as i32 / 6..h as i32 / 3)),
                f64::from(rng.gen_range(w as i32 / 6..w as i32 / 3)),
                rng.gen_range(0.0..TAU),
            )
        })
        .collect();
    let envelope = (f64::from(rng.gen_range(1..3)), f64::from(rng.gen_range(1..3)), rng.gen_range(0.0..TAU));

    let wrap = |d: f64, span: f64| {
        let d = d.rem_euclid(span);
        d.min(span - d)
    };

    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let (u, v) = (yf / hf, xf / wf);
            let mut lum = 0.0;
            for &(fy, fx, ph, a) in &shading {
                lum += a * (TAU * (fy * u + fx * v) + ph).cos();
            }
            let mut px = [base[0] + lum, base[1] + lum * 0.8, base[2] + lum * 0.7];

            for b in &blobs {
                let dy = wrap(yf - b.cy, hf) / b.ry;
                let dx = wrap(xf - b.cx, wf) / b.rx;
                let r = (dy * dy + dx * dx).sqrt();
                // soft edge about 2 px wide
                let edge = 1.0 / (1.0 + ((r - 1.0) * b.ry.min(b.rx)).exp());
                for c in 0..3 {
                    px[c] += edge * b.shift[c];
                }
            }

            let env = 0.5 + 0.5 * (TAU * (envelope.0 * u + envelope.1 * v) + envelope.2).sin();
            let mut tex = 0.0;
            for &(fy, fx, ph) in &texture {
                tex += (TAU * (fy * u + fx * v) + ph).cos();
            }
            let tex = cfg.texture_amplitude * 0.25 * tex * env;
            for p in px.iter_mut() {
                *p += tex;
            }

            for vs in &vessels {
                let (along, across, span_along, span_across) =
                    if vs.vertical { (yf, xf, hf, wf) } else { (xf, yf, wf, hf) };
                let centre = vs.offset + vs.amp * (TAU * vs.freq * along / span_along + vs.phase).sin();
                let d = wrap(across - centre, span_across) / vs.thickness;
                let profile = (-d * d).exp() * vs.depth;
                px[0] -= profile * 0.7;
                px[1] -= profile;
                px[2] -= profile * 0.8;
            }

            for c in 0..3 {
                planes[c][y * w + x] = px[c];
            }
        }
    }
    planes
}

fn roll_right(plane: &[f64], h: usize, w: usize, shift: i64) -> Vec<f64> {
    let s = shift.rem_euclid(w as i64) as usize;
    let mut out = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + (x + s) % w] = plane[y * w + x];
        }
    }
    out
}

fn composite_speculars(cfg: &SceneConfig, planes: &mut [Vec<f64>; 3], rng: &mut impl Rng) {
    let (h, w) = (cfg.height, cfg.width);
    for _ in 0..cfg.specular_count {
        let cy = rng.gen_range(0.0..h as f64);
        let cx = rng.gen_range(0.0..w as f64);
        let r: f64 = rng.gen_range(1.5..4.0);
        let reach = (r * 2.5).ceil() as i64;
        for yy in (cy as i64 - reach)..=(cy as i64 + reach) {
            for xx in (cx as i64 - reach)..=(cx as i64 + reach) {
                if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                    continue;
                }
                let d = ((yy as f64 - cy).powi(2) + (xx as f64 - cx).powi(2)).sqrt();
                let a = if d <= r { 1.0 } else { (-((d - r) / (0.5 * r)).powi(2)).exp() };
                let i = yy as usize * w + xx as usize;
                for p in planes.iter_mut() {
                    p[i] = p[i] * (1.0 - a) + a;
                }
            }
        }
    }
}

/// Frame `frame_index` of the video described by `cfg`. Pure in `(cfg, frame_index)`.
pub fn generate_scene(cfg: &SceneConfig, frame_index: usize) -> Result<Image> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = seeded(cfg.seed);
    let tissue = render_tissue(cfg, &mut rng);
    let shift = cfg.translation_px * frame_index as i64;
    let mut planes = tissue.map(|p| roll_right(&p, h, w, shift));
    composite_speculars(cfg, &mut planes, &mut rng);
    Image::from_planes(h, w, &planes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Cal,
    Test,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub hr: PathBuf,
    pub lr: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feat: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub split: Split,
    pub frames: Vec<FrameRecord>,
}

/// List of videos; relative frame paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub videos: Vec<VideoRecord>,
}

impl DatasetManifest {
    /// JSON lines, one video per line.
    pub fn to_jsonl(&self) -> String {
        self.videos
            .iter()
            .map(|v| serde_json::to_string(v).expect("manifest records serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut videos = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: VideoRecord = serde_json::from_str(line)
                .map_err(|e| Error::format("manifest", format!("line {}: {e}", i + 1)))?;
            videos.push(v);
        }
        let m = Self {
            base_dir: base_dir.into(),
            videos,
        };
        m.check_ids()?;
        Ok(m)
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.video_id.as_str()) {
                return Err(Error::format("manifest", format!("duplicate video id {}", v.video_id)));
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_jsonl(&read_string(path)?, base)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_jsonl().as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Videos carrying `split`.
    pub fn videos_in(&self, split: Split) -> impl Iterator<Item = &VideoRecord> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    /// Tags the first `n_train` videos as train and the rest as test.
    pub fn assign_train_prefix(&mut self, n_train: usize) {
        for (i, v) in self.videos.iter_mut().enumerate() {
            v.split = if i < n_train { Split::Train } else { Split::Test };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scene: SceneConfig,
    pub n_videos: usize,
    pub scale: ScaleFactor,
    pub noise_sigma: f64,
    pub sr_mode: SrMode,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            n_videos: 10,
            scale: ScaleFactor::new(2).expect("2 is a valid scale"),
            noise_sigma: 0.01,
            sr_mode: SrMode::Plain,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Renders every frame, degrades it, runs the SR stand-in and writes a manifest.
///
/// Video `v` uses scene seed `derive_seed(scene.seed, v)`; split tags are left unset.
pub fn make_dataset(spec: &DatasetSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    spec.scene.validate()?;
    let s = spec.scale.get();
    if spec.scene.height % s != 0 || spec.scene.width % s != 0 {
        return Err(Error::InvalidArgument(format!(
            "scene dims {}x{} not divisible by scale {s}",
            spec.scene.height, spec.scene.width
        )));
    }
    let mut videos = Vec::with_capacity(spec.n_videos);
    for v in 0..spec.n_videos {
        let video_seed = derive_seed(spec.scene.seed, v as u64);
        let cfg = SceneConfig {
            seed: video_seed,
            ..spec.scene.clone()
        };
        let mut frames = Vec::with_capacity(cfg.frames_per_video);
        for t in 0..cfg.frames_per_video {
            let hr = generate_scene(&cfg, t)?;
            let lr = degrade(&hr, spec.scale, spec.noise_sigma, derive_seed(video_seed, 1_000 + t as u64))?;
            let sr = sr_standin(&lr, spec.scale, spec.sr_mode)?;
            let rec = FrameRecord {
                hr: format!("v{v:03}_f{t:03}_hr.ppm").into(),
                lr: format!("v{v:03}_f{t:03}_lr.ppm").into(),
                sr: Some(format!("v{v:03}_f{t:03}_sr.ppm").into()),
                feat: None,
            };
            write_image(&hr, out_dir.join(&rec.hr))?;
            write_image(&lr, out_dir.join(&rec.lr))?;
            write_image(&sr, out_dir.join(rec.sr.as_ref().unwrap()))?;
            frames.push(rec);
        }
        videos.push(VideoRecord {
            video_id: format!("video_{v:03}"),
            split: Split::None,
            frames,
        });
    }
    let manifest = DatasetManifest {
        base_dir: out_dir.to_path_buf(),
        videos,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig {
            seed: 17,
            height: 48,
            width: 64,
            ..Default::default()
        }
    }

    #[test]
    fn scene_is_deterministic() {
        let cfg = small();
        assert_eq!(generate_scene(&cfg, 2).unwrap(), generate_scene(&cfg, 2).unwrap());
        let other = SceneConfig { seed: 18, ..cfg.clone() };
        assert_ne!(generate_scene(&cfg, 0).unwrap(), generate_scene(&other, 0).unwrap());
    }

    #[test]
    fn frames_are_translations_without_speculars() {
        let cfg = SceneConfig {
            specular_count: 0,
            ..small()
        };
        let f0 = generate_scene(&cfg, 0).unwrap();
        let f1 = generate_scene(&cfg, 1).unwrap();
        let (h, w) = (cfg.height, cfg.width);
        let dx = cfg.translation_px as usize;
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    assert_eq!(f1.get(y, (x + dx) % w, c), f0.get(y, x, c));
                }
            }
        }
        assert_ne!(f0, f1);
    }

    #[test]
    fn speculars_do_not_move() {
        let cfg = small();
        let f0 = generate_scene(&cfg, 0).unwrap();
        let f3 = generate_scene(&cfg, 3).unwrap();
        let white = |img: &Image| -> Vec<usize> {
            (0..cfg.height * cfg.width)
                .filter(|&i| img.data()[i * 3..i * 3 + 3].iter().all(|&v| v == 1.0))
                .collect()
        };
        let w0 = white(&f0);
        assert!(!w0.is_empty());
        assert_eq!(w0, white(&f3));
    }

    #[test]
    fn validation() {
        assert!(SceneConfig { height: 16, ..small() }.validate().is_err());
        assert!(SceneConfig { texture_amplitude: 1.5, ..small() }.validate().is_err());
        assert!(SceneConfig { frames_per_video: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn manifest_jsonl_round_trip() {
        let m = DatasetManifest {
            base_dir: "/data".into(),
            videos: vec![
                VideoRecord {
                    video_id: "a".into(),
                    split: Split::Train,
                    frames: vec![FrameRecord {
                        hr: "a_hr.ppm".into(),
                        lr: "a_lr.ppm".into(),
                        sr: None,
                        feat: Some("a.emap".into()),
                    }],
                },
                VideoRecord {
                    video_id: "b".into(),
                    split: Split::None,
                    frames: vec![],
                },
            ],
        };
        let text = m.to_jsonl();
        assert!(text.starts_with(r#"{"video_id":"a","split":"train","frames":[{"hr":"a_hr.ppm","lr":"a_lr.ppm","feat":"a.emap"}]}"#));
        let back = DatasetManifest::from_jsonl(&text, "/data").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn manifest_rejects_duplicates_and_unknown_fields() {
        let dup = "{\"video_id\":\"a\",\"split\":\"none\",\"frames\":[]}\n".repeat(2);
        assert!(DatasetManifest::from_jsonl(&dup, ".").is_err());
        let extra = r#"{"video_id":"a","split":"none","frames":[],"x":1}"#;
        assert!(DatasetManifest::from_jsonl(extra, ".").is_err());
    }
}
