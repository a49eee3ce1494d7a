//! Person detection accuracy versus thermal resolution.
//!
//! Frames show one distant person (a few pixels across) plus noise and
//! occasional hot distractors. Each frame is block-averaged to every tested
//! resolution, a detector runs on the result, and a frame counts as correct
//! when the most confident box, mapped back to native pixels, contains the
//! person's centroid.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{pixel_average, write_f32, RawThermalFrame};
use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates of the frame it was found in;
/// `x1`, `y1` are exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
    pub confidence: f32,
}

impl Detection {
    pub fn contains(&self, x: f32, y: f32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn scaled(self, sx: f32, sy: f32) -> Self {
        Self { x0: self.x0 * sx, y0: self.y0 * sy, x1: self.x1 * sx, y1: self.y1 * sy, ..self }
    }
}

pub trait Detector {
    fn name(&self) -> &str;
    /// Person detections in a temperature frame (°C).
    /// [`Error::DetectorUnavailable`] marks the detector as absent.
    fn detect(&self, frame: &RawThermalFrame) -> Result<Vec<Detection>>;
}

/// Threshold-and-connected-components baseline.
///
/// Pixels at or above `threshold` are grouped 4-connectedly; each group becomes
/// a box whose confidence falls off as its mean temperature departs from
/// `body_temp`, so very hot objects rank below body-warm ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobDetector {
    pub threshold: f32,
    pub body_temp: f32,
    pub temp_tolerance: f32,
}

impl Default for BlobDetector {
    fn default() -> Self {
        Self { threshold: 30.0, body_temp: 33.5, temp_tolerance: 2.5 }
    }
}

impl Detector for BlobDetector {
    fn name(&self) -> &str {
        "blob"
    }

    fn detect(&self, frame: &RawThermalFrame) -> Result<Vec<Detection>> {
        let (h, w) = (frame.height(), frame.width());
        let v = frame.values();
        let mut label = vec![usize::MAX; h * w];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..h * w {
            if v[start] < self.threshold || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
            let (mut sum, mut n) = (0.0f64, 0usize);
            label[start] = id;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (y, x) = (p / w, p % w);
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1));
                sum += v[p] as f64;
                n += 1;
                let neighbours = [
                    (y > 0).then(|| p - w),
                    (y + 1 < h).then(|| p + w),
                    (x > 0).then(|| p - 1),
                    (x + 1 < w).then(|| p + 1),
                ];
                for q in neighbours.into_iter().flatten() {
                    if v[q] >= self.threshold && label[q] == usize::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
            let dev = (sum / n as f64) as f32 - self.body_temp;
            let confidence = (-(dev / self.temp_tolerance).powi(2)).exp();
            out.push(Detection { x0: x0 as f32, y0: y0 as f32, x1: x1 as f32, y1: y1 as f32, confidence });
        }
        Ok(out)
    }
}

/// Runs an external program per frame: `program args... <frame.f32> <height> <width>`.
/// The frame is little-endian f32 row-major in °C; the program prints a JSON
/// array of [`Detection`]s on stdout.
#[derive(Clone, Debug)]
pub struct ExternalDetector {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl Detector for ExternalDetector {
    fn name(&self) -> &str {
        "external"
    }

    fn detect(&self, frame: &RawThermalFrame) -> Result<Vec<Detection>> {
        let dir = tempfile_dir()?;
        let path = dir.join("frame.f32");
        write_f32(&path, frame.values())?;
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .arg(frame.height().to_string())
            .arg(frame.width().to_string())
            .output();
        let _ = std::fs::remove_dir_all(&dir);
        let output = output.map_err(|e| Error::DetectorUnavailable(format!("{}: {e}", self.program.display())))?;
        if !output.status.success() {
            return Err(Error::DetectorUnavailable(format!(
                "{} exited with {}: {}",
                self.program.display(),
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        Ok(serde_json::from_slice(&output.stdout)?)
    }
}

fn tempfile_dir() -> Result<PathBuf> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = std::env::temp_dir()
        .join(format!("thermosynth-det-{}-{}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed)));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// `width x height`, as in `160x120`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("resolution `{s}` is not WIDTHxHEIGHT"));
        let (w, h) = s.split_once('x').ok_or_else(bad)?;
        let (width, height) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(Self { width, height })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyConfig {
    pub frames: usize,
    pub native: Resolution,
    pub resolutions: Vec<Resolution>,
    /// Person radius range in native pixels.
    pub person_radius: (f32, f32),
    pub person_temp: (f32, f32),
    pub background_temp: f32,
    pub noise_std: f32,
    /// Probability of a hot non-person object in a frame.
    pub distractor_prob: f64,
    pub distractor_temp: (f32, f32),
    pub seed: u64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        let r = |width, height| Resolution { width, height };
        Self {
            frames: 300,
            native: r(160, 120),
            resolutions: vec![r(160, 120), r(16, 12), r(8, 5)],
            person_radius: (1.5, 3.5),
            person_temp: (31.0, 35.0),
            background_temp: 22.0,
            noise_std: 1.5,
            distractor_prob: 0.5,
            distractor_temp: (33.0, 45.0),
            seed: 0,
        }
    }
}

/// A native-resolution frame with its person centroid in pixels.
#[derive(Clone, Debug)]
pub struct LabelledFrame {
    pub frame: RawThermalFrame,
    pub person: (f32, f32),
}

fn paint_disc(v: &mut [f32], w: usize, h: usize, (cx, cy): (f32, f32), r: f32, temp: f32) {
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                v[y * w + x] = temp;
            }
        }
    }
}

pub fn synthetic_privacy_frames(cfg: &PrivacyConfig) -> Result<Vec<LabelledFrame>> {
    let (w, h) = (cfg.native.width, cfg.native.height);
    let noise = Normal::new(0.0f32, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut frames = Vec::with_capacity(cfg.frames);
    for _ in 0..cfg.frames {
        let mut v: Vec<f32> = (0..w * h).map(|_| cfg.background_temp + noise.sample(&mut rng)).collect();
        let r = rng.random_range(cfg.person_radius.0..=cfg.person_radius.1);
        let c = (rng.random_range(r..w as f32 - r), rng.random_range(r..h as f32 - r));
        if rng.random_bool(cfg.distractor_prob) {
            let dr = rng.random_range(1.0..=2.5);
            let dc = (rng.random_range(dr..w as f32 - dr), rng.random_range(dr..h as f32 - dr));
            let temp = rng.random_range(cfg.distractor_temp.0..=cfg.distractor_temp.1);
            paint_disc(&mut v, w, h, dc, dr, temp);
        }
        let temp = rng.random_range(cfg.person_temp.0..=cfg.person_temp.1);
        paint_disc(&mut v, w, h, c, r, temp);
        frames.push(LabelledFrame { frame: RawThermalFrame::new(h, w, v)?, person: c });
    }
    Ok(frames)
}

/// Privacy level implied by a detection accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrivacyDegree {
    Low,
    Medium,
    High,
}

impl PrivacyDegree {
    pub fn from_accuracy(acc: f64) -> Self {
        if acc >= 0.5 {
            Self::Low
        } else if acc >= 0.1 {
            Self::Medium
        } else {
            Self::High
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyRow {
    pub resolution: Resolution,
    /// `None` when the detector was unavailable.
    pub accuracy: Option<f64>,
    pub degree: Option<PrivacyDegree>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub detector: String,
    pub frames: usize,
    pub rows: Vec<PrivacyRow>,
}

impl PrivacyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("resolution,accuracy,degree\n");
        for r in &self.rows {
            match (r.accuracy, r.degree) {
                (Some(a), Some(d)) => writeln!(s, "{},{:.1}%,{d:?}", r.resolution, 100.0 * a),
                _ => writeln!(s, "{},skipped,skipped", r.resolution),
            }
            .unwrap();
        }
        s
    }

    pub fn accuracy(&self, res: Resolution) -> Option<f64> {
        self.rows.iter().find(|r| r.resolution == res).and_then(|r| r.accuracy)
    }
}

fn downsample(frame: &RawThermalFrame, to: Resolution) -> Result<RawThermalFrame> {
    let v = pixel_average(frame.values(), frame.height(), frame.width(), 1, to.height, to.width)?;
    RawThermalFrame::new(to.height, to.width, v)
}

/// Detection accuracy of `detector` on `frames` at each resolution.
pub fn privacy_harness(frames: &[LabelledFrame], resolutions: &[Resolution], detector: &dyn Detector) -> Result<PrivacyReport> {
    if frames.is_empty() {
        return Err(Error::Config("privacy harness needs at least one frame".into()));
    }
    let mut rows = Vec::with_capacity(resolutions.len());
    'res: for &res in resolutions {
        let mut correct = 0usize;
        for f in frames {
            let small = downsample(&f.frame, res)?;
            let dets = match detector.detect(&small) {
                Ok(d) => d,
                Err(Error::DetectorUnavailable(msg)) => {
                    log::warn!("detector `{}` unavailable at {res}: {msg}", detector.name());
                    rows.push(PrivacyRow { resolution: res, accuracy: None, degree: None });
                    continue 'res;
                }
                Err(e) => return Err(e),
            };
            let sx = f.frame.width() as f32 / res.width as f32;
            let sy = f.frame.height() as f32 / res.height as f32;
            let best = dets.into_iter().max_by(|a, b| a.confidence.total_cmp(&b.confidence));
            if best.is_some_and(|d| d.scaled(sx, sy).contains(f.person.0, f.person.1)) {
                correct += 1;
            }
        }
        let acc = correct as f64 / frames.len() as f64;
        rows.push(PrivacyRow { resolution: res, accuracy: Some(acc), degree: Some(PrivacyDegree::from_accuracy(acc)) });
    }
    Ok(PrivacyReport { detector: detector.name().to_string(), frames: frames.len(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oracle(Vec<(f32, f32)>, std::cell::Cell<usize>);

    impl Detector for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }
        fn detect(&self, _: &RawThermalFrame) -> Result<Vec<Detection>> {
            let i = self.1.get();
            self.1.set(i + 1);
            let (x, y) = self.0[i % self.0.len()];
            Ok(vec![Detection { x0: x - 0.5, y0: y - 0.5, x1: x + 0.5, y1: y + 0.5, confidence: 1.0 }])
        }
    }

    #[test]
    fn oracle_detector_is_perfect_at_native_resolution() {
        let cfg = PrivacyConfig { frames: 20, ..Default::default() };
        let frames = synthetic_privacy_frames(&cfg).unwrap();
        let oracle = Oracle(frames.iter().map(|f| f.person).collect(), Default::default());
        let r = privacy_harness(&frames, &[cfg.native], &oracle).unwrap();
        assert_eq!(r.rows[0].accuracy, Some(1.0));
        assert_eq!(r.rows[0].degree, Some(PrivacyDegree::Low));
    }

    #[test]
    fn blob_detector_finds_components() {
        let mut v = vec![20.0; 6 * 8];
        for p in [9, 10, 17, 18] {
            v[p] = 33.5;
        }
        v[47] = 45.0;
        let dets = BlobDetector::default().detect(&RawThermalFrame::new(6, 8, v).unwrap()).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!((dets[0].x0, dets[0].y0, dets[0].x1, dets[0].y1), (1.0, 1.0, 3.0, 3.0));
        assert!((dets[0].confidence - 1.0).abs() < 1e-6);
        assert!(dets[1].confidence < 1e-3);
        assert!(dets[0].contains(2.9, 1.0) && !dets[0].contains(3.0, 1.0));
    }

    #[test]
    fn accuracy_falls_with_resolution() {
        let cfg = PrivacyConfig::default();
        let frames = synthetic_privacy_frames(&cfg).unwrap();
        let r = privacy_harness(&frames, &cfg.resolutions, &BlobDetector::default()).unwrap();
        let acc: Vec<f64> = r.rows.iter().map(|r| r.accuracy.unwrap()).collect();
        assert!(acc[0] > acc[1] && acc[1] >= acc[2], "{acc:?}");
        assert!(acc[0] > 0.5, "{acc:?}");
        assert_eq!(acc[1], 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("resolution,accuracy,degree\n160x120,"));
        assert!(csv.contains("16x12,0.0%,High\n"));
    }

    #[test]
    fn missing_external_detector_yields_skipped_rows() {
        let cfg = PrivacyConfig { frames: 3, ..Default::default() };
        let frames = synthetic_privacy_frames(&cfg).unwrap();
        let ext = ExternalDetector { program: "/nonexistent/yolo-detect".into(), args: vec![] };
        let r = privacy_harness(&frames, &cfg.resolutions, &ext).unwrap();
        assert!(r.rows.iter().all(|r| r.accuracy.is_none()));
        assert_eq!(r.to_csv().lines().nth(2), Some("16x12,skipped,skipped"));
    }

    #[test]
    fn degrees_and_resolution_parsing() {
        assert_eq!(PrivacyDegree::from_accuracy(0.807), PrivacyDegree::Low);
        assert_eq!(PrivacyDegree::from_accuracy(0.2), PrivacyDegree::Medium);
        assert_eq!(PrivacyDegree::from_accuracy(0.0), PrivacyDegree::High);
        assert_eq!("160x120".parse::<Resolution>().unwrap(), Resolution { width: 160, height: 120 });
        assert!("160".parse::<Resolution>().is_err());
        assert!("0x5".parse::<Resolution>().is_err());
    }
}
