use std::collections::{HashMap, VecDeque};
use std::io::Cursor;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thermosynth::data::{Heatmap, RgbImage, SampleMeta};
use thermosynth::model::{generate, ModelBundle, ModelConfig};
use thermosynth::nn::ParamStore;
use thermosynth::train::LatentCodeSet;
use tokio::sync::watch;

use crate::error::{Result, ServiceError};
use crate::header::FrameHeader;
use crate::source::FrameSource;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    #[default]
    Png,
    Jpeg,
}

impl std::str::FromStr for Encoding {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png" => Ok(Self::Png),
            "jpeg" | "jpg" => Ok(Self::Jpeg),
            _ => Err(ServiceError::Startup(format!("unknown encoding `{s}` (png or jpeg)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Target frame rate; `None` runs as fast as the generator allows.
    pub fps: Option<f64>,
    pub encoding: Encoding,
    pub jpeg_quality: u8,
    /// Index into the code set active at startup.
    pub initial_code: u32,
    /// Hold the loop before the first frame until [`SessionHandle::set_paused`].
    pub start_paused: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            fps: Some(thermosynth::data::NATIVE_FPS),
            encoding: Encoding::Png,
            jpeg_quality: 90,
            initial_code: 0,
            start_paused: false,
        }
    }
}

/// One synthesized frame before encoding, as seen by a lossless tap.
#[derive(Clone, Debug)]
pub struct Frame {
    pub header: FrameHeader,
    /// Index of the source frame within the stream (counting loops).
    pub source_index: u64,
    pub heatmap: Heatmap,
    pub image: RgbImage,
}

/// Header followed by the encoded image, ready to send.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFrame {
    pub header: FrameHeader,
    pub message: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeInfo {
    pub index: u32,
    pub id: String,
    pub meta: SampleMeta,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub frames_out: u64,
    pub current_fps: f64,
    pub last_latency_ms: f64,
    pub active_code_index: u32,
    pub active_code_id: String,
    pub running: bool,
    pub paused: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectAck {
    pub active_index: u32,
    pub active_id: String,
    /// `false` when the code was already active.
    pub changed: bool,
}

const FPS_WINDOW: usize = 16;

#[derive(Default)]
struct LoopStats {
    frames_out: u64,
    last_latency_ms: f64,
    recent: VecDeque<Instant>,
    error: Option<String>,
}

struct Shared {
    model: ModelConfig,
    generator: ParamStore,
    codes: LatentCodeSet,
    reference: Heatmap,
    active: AtomicU32,
    paused: AtomicBool,
    stop: AtomicBool,
    running: AtomicBool,
    stats: Mutex<LoopStats>,
    latest: watch::Sender<Option<Arc<EncodedFrame>>>,
    previews: Mutex<HashMap<u32, Arc<Vec<u8>>>>,
}

/// Cheap, cloneable access to a running session for control handlers.
#[derive(Clone)]
pub struct SessionHandle(Arc<Shared>);

impl SessionHandle {
    pub fn model(&self) -> &ModelConfig {
        &self.0.model
    }

    pub fn codes(&self) -> Vec<CodeInfo> {
        self.0
            .codes
            .codes
            .iter()
            .enumerate()
            .map(|(i, e)| CodeInfo { index: i as u32, id: e.id.clone(), meta: e.meta.clone() })
            .collect()
    }

    pub fn code_index(&self, id: &str) -> Option<u32> {
        self.0.codes.codes.iter().position(|e| e.id == id).map(|i| i as u32)
    }

    pub fn active_code(&self) -> u32 {
        self.0.active.load(Ordering::Acquire)
    }

    /// Takes effect from the next frame the loop starts.
    pub fn select_index(&self, index: u32) -> Result<SelectAck> {
        let entry = self.0.codes.codes.get(index as usize).ok_or_else(|| ServiceError::UnknownCode(index.to_string()))?;
        let prev = self.0.active.swap(index, Ordering::AcqRel);
        Ok(SelectAck { active_index: index, active_id: entry.id.clone(), changed: prev != index })
    }

    pub fn select_id(&self, id: &str) -> Result<SelectAck> {
        let index = self.code_index(id).ok_or_else(|| ServiceError::UnknownCode(id.to_string()))?;
        self.select_index(index)
    }

    pub fn set_paused(&self, paused: bool) {
        self.0.paused.store(paused, Ordering::Release);
    }

    pub fn is_running(&self) -> bool {
        self.0.running.load(Ordering::Acquire)
    }

    pub fn stats(&self) -> Stats {
        let s = self.0.stats.lock().unwrap();
        let current_fps = match (s.recent.front(), s.recent.back()) {
            (Some(a), Some(b)) if s.recent.len() > 1 && b > a => (s.recent.len() - 1) as f64 / (*b - *a).as_secs_f64(),
            _ => 0.0,
        };
        let active = self.active_code();
        Stats {
            frames_out: s.frames_out,
            current_fps,
            last_latency_ms: s.last_latency_ms,
            active_code_index: active,
            active_code_id: self.0.codes.codes[active as usize].id.clone(),
            running: self.is_running(),
            paused: self.0.paused.load(Ordering::Acquire),
            error: s.error.clone(),
        }
    }

    /// Latest-value subscription: a slow reader only ever sees the newest frame.
    pub fn subscribe(&self) -> watch::Receiver<Option<Arc<EncodedFrame>>> {
        self.0.latest.subscribe()
    }

    /// PNG of the code rendered with the source's reference heatmap.
    pub fn preview_png(&self, index: u32) -> Result<Arc<Vec<u8>>> {
        if let Some(p) = self.0.previews.lock().unwrap().get(&index) {
            return Ok(p.clone());
        }
        let entry = self.0.codes.codes.get(index as usize).ok_or_else(|| ServiceError::UnknownCode(index.to_string()))?;
        let img = generate(&self.0.model, &self.0.generator, &entry.code, &self.0.reference)?;
        let png = Arc::new(encode(&img, Encoding::Png, 0)?);
        self.0.previews.lock().unwrap().insert(index, png.clone());
        Ok(png)
    }
}

pub fn encode(img: &RgbImage, encoding: Encoding, jpeg_quality: u8) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .ok_or_else(|| ServiceError::Protocol("image buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    match encoding {
        Encoding::Png => buf.write_to(&mut out, image::ImageFormat::Png)?,
        Encoding::Jpeg => image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, jpeg_quality).encode_image(&buf)?,
    }
    Ok(out.into_inner())
}

/// A running synthesis loop on its own thread.
pub struct Session {
    handle: SessionHandle,
    thread: Option<JoinHandle<()>>,
}

impl Session {
    /// Starts synthesizing with the bundle's EMA generator. `tap`, when given,
    /// receives every frame unencoded and never drops any.
    pub fn start(
        bundle: &ModelBundle,
        codes: LatentCodeSet,
        source: Box<dyn FrameSource>,
        cfg: SessionConfig,
        tap: Option<mpsc::Sender<Frame>>,
    ) -> Result<Self> {
        if codes.is_empty() {
            return Err(ServiceError::Startup("latent code set is empty".into()));
        }
        if cfg.initial_code as usize >= codes.len() {
            return Err(ServiceError::UnknownCode(cfg.initial_code.to_string()));
        }
        if let Some(f) = cfg.fps {
            if !(f > 0.0 && f.is_finite()) {
                return Err(ServiceError::Startup(format!("fps must be positive, got {f}")));
            }
        }
        bundle.validate()?;
        let reference = source.reference();
        // Fail at startup rather than on the first frame.
        generate(&bundle.config, &bundle.ema_generator, &codes.codes[0].code, &reference)?;

        let (latest, _) = watch::channel(None);
        let shared = Arc::new(Shared {
            model: bundle.config.clone(),
            generator: bundle.ema_generator.clone(),
            codes,
            reference,
            active: AtomicU32::new(cfg.initial_code),
            paused: AtomicBool::new(cfg.start_paused),
            stop: AtomicBool::new(false),
            running: AtomicBool::new(true),
            stats: Mutex::new(LoopStats::default()),
            latest,
            previews: Mutex::new(HashMap::new()),
        });
        let loop_shared = shared.clone();
        let thread = std::thread::Builder::new()
            .name("synthesis".into())
            .spawn(move || {
                if let Err(e) = run_loop(&loop_shared, source, &cfg, tap) {
                    log::error!("synthesis loop stopped: {e}");
                    loop_shared.stats.lock().unwrap().error = Some(e.to_string());
                }
                loop_shared.running.store(false, Ordering::Release);
            })?;
        Ok(Self { handle: SessionHandle(shared), thread: Some(thread) })
    }

    pub fn handle(&self) -> SessionHandle {
        self.handle.clone()
    }

    /// Asks the loop to finish after the current frame and waits for it.
    pub fn stop(mut self) {
        self.handle.0.stop.store(true, Ordering::Release);
        self.join_thread();
    }

    /// Waits for the source to run out.
    pub fn wait(mut self) {
        self.join_thread();
    }

    fn join_thread(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.handle.0.stop.store(true, Ordering::Release);
        self.join_thread();
    }
}

fn run_loop(shared: &Shared, mut source: Box<dyn FrameSource>, cfg: &SessionConfig, tap: Option<mpsc::Sender<Frame>>) -> Result<()> {
    let period = cfg.fps.map(|f| Duration::from_secs_f64(1.0 / f));
    let start = Instant::now();
    let mut next_due = start;
    let mut seq = 0u64;
    loop {
        while shared.paused.load(Ordering::Acquire) && !shared.stop.load(Ordering::Acquire) {
            std::thread::sleep(Duration::from_millis(2));
            next_due = Instant::now();
        }
        if shared.stop.load(Ordering::Acquire) {
            return Ok(());
        }
        let Some(heatmap) = source.next_frame() else { return Ok(()) };
        // One load per frame: the whole frame uses this code.
        let code_index = shared.active.load(Ordering::Acquire);
        let t0 = Instant::now();
        let image = generate(&shared.model, &shared.generator, &shared.codes.codes[code_index as usize].code, &heatmap)?;
        let header = FrameHeader { seq, code_index, ts_ms: start.elapsed().as_millis() as u32 };
        let mut message = header.encode().to_vec();
        message.extend_from_slice(&encode(&image, cfg.encoding, cfg.jpeg_quality)?);
        let latency = t0.elapsed();

        shared.latest.send_replace(Some(Arc::new(EncodedFrame { header, message })));
        if let Some(tap) = &tap {
            let _ = tap.send(Frame { header, source_index: seq, heatmap, image });
        }
        {
            let mut s = shared.stats.lock().unwrap();
            s.frames_out += 1;
            s.last_latency_ms = latency.as_secs_f64() * 1e3;
            s.recent.push_back(Instant::now());
            if s.recent.len() > FPS_WINDOW {
                s.recent.pop_front();
            }
        }
        seq += 1;
        if let Some(p) = period {
            next_due += p;
            let now = Instant::now();
            if next_due > now {
                std::thread::sleep(next_due - now);
            } else {
                // Behind schedule: resynchronize instead of bursting.
                next_due = now;
            }
        }
    }
}
