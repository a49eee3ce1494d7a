mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use common::Fixture;
use thermosynth::model::generate;
use thermosynth_service::{FrameHeader, ReplaySource, Session, SessionConfig};

fn unpaced() -> SessionConfig {
    SessionConfig { fps: None, ..Default::default() }
}

#[test]
fn replayed_frames_are_bit_identical_to_offline_generation() {
    let fx = Fixture::new(6, 2);
    let replay = ReplaySource::from_manifest(&fx.data(), false).unwrap();
    let frames = replay.frames().to_vec();
    let (tx, rx) = mpsc::channel();
    let cfg = SessionConfig { initial_code: 1, ..unpaced() };
    Session::start(&fx.bundle, fx.codes.clone(), Box::new(replay), cfg, Some(tx)).unwrap().wait();
    let got: Vec<_> = rx.iter().collect();
    assert_eq!(got.len(), 6, "loop off: exactly one frame per source frame");
    for (i, f) in got.iter().enumerate() {
        assert_eq!(f.header.seq, i as u64);
        assert_eq!(f.header.code_index, 1);
        assert_eq!(f.heatmap, frames[i]);
        let offline = generate(&fx.bundle.config, &fx.bundle.ema_generator, &fx.codes.codes[1].code, &frames[i]).unwrap();
        assert_eq!(f.image.values(), offline.values());
    }
}

#[test]
fn rapid_code_switches_never_tear_frames() {
    let fx = Fixture::new(4, 3);
    let replay = ReplaySource::from_manifest(&fx.data(), true).unwrap();
    let frames = replay.frames().to_vec();
    let (tx, rx) = mpsc::channel();
    let session = Session::start(&fx.bundle, fx.codes.clone(), Box::new(replay), unpaced(), Some(tx)).unwrap();
    let h = session.handle();
    let done = Arc::new(AtomicBool::new(false));
    let switcher = {
        let (h, done) = (h.clone(), done.clone());
        std::thread::spawn(move || {
            let mut acks = Vec::new();
            let mut k = 0u32;
            while !done.load(Ordering::Relaxed) || acks.len() < 100 {
                acks.push(h.select_index(k % 2 + 1).unwrap());
                k += 1;
                std::thread::sleep(Duration::from_micros(300 + 700 * (k as u64 % 5)));
            }
            acks
        })
    };
    let got: Vec<_> = rx.iter().take(100).collect();
    done.store(true, Ordering::Relaxed);
    let acks = switcher.join().unwrap();
    session.stop();
    assert!(acks.len() >= 100);
    assert!(acks.iter().all(|a| a.changed));
    assert!(!h.select_index(h.active_code()).unwrap().changed, "re-selecting the active code is a no-op");

    let mut seen = std::collections::BTreeSet::new();
    for (i, f) in got.iter().enumerate() {
        assert_eq!(f.header.seq, i as u64);
        let code = &fx.codes.codes[f.header.code_index as usize].code;
        let src = &frames[(f.source_index % frames.len() as u64) as usize];
        let offline = generate(&fx.bundle.config, &fx.bundle.ema_generator, code, src).unwrap();
        assert_eq!(f.image.values(), offline.values(), "frame {i} does not match its declared code");
        seen.insert(f.header.code_index);
    }
    assert!(seen.contains(&1) && seen.contains(&2), "switches not observed: {seen:?}");
}

#[test]
fn unknown_code_leaves_session_untouched() {
    let fx = Fixture::new(2, 2);
    let replay = ReplaySource::from_manifest(&fx.data(), true).unwrap();
    let session = Session::start(&fx.bundle, fx.codes.clone(), Box::new(replay), unpaced(), None).unwrap();
    let h = session.handle();
    assert!(h.select_index(7).is_err());
    assert!(h.select_id("nope").is_err());
    assert_eq!(h.active_code(), 0);
    assert_eq!(h.select_id("code-1").unwrap().active_index, 1);
    session.stop();
}

#[test]
fn stalled_subscriber_sees_only_the_latest_frame() {
    let fx = Fixture::new(3, 1);
    let replay = ReplaySource::from_manifest(&fx.data(), true).unwrap();
    let session =
        Session::start(&fx.bundle, fx.codes.clone(), Box::new(replay), SessionConfig { fps: Some(30.0), ..Default::default() }, None)
            .unwrap();
    let mut rx = session.handle().subscribe();
    let rt = tokio::runtime::Builder::new_current_thread().enable_time().build().unwrap();
    let first = rt.block_on(async {
        rx.changed().await.unwrap();
        rx.borrow_and_update().clone().unwrap().header.seq
    });
    std::thread::sleep(Duration::from_secs(1));
    let after = rx.borrow_and_update().clone().unwrap();
    // The receiver holds a single slot, so the stall shows up as a gap.
    assert!(after.header.seq >= first + 10, "{first} -> {}", after.header.seq);
    let (hdr, payload) = FrameHeader::decode(&after.message).unwrap();
    assert_eq!(hdr, after.header);
    assert_eq!(&payload[1..4], b"PNG");
    session.stop();
}

#[test]
fn paced_session_reports_configured_rate() {
    let fx = Fixture::new(3, 1);
    let replay = ReplaySource::from_manifest(&fx.data(), true).unwrap();
    let session = Session::start(&fx.bundle, fx.codes.clone(), Box::new(replay), SessionConfig::default(), None).unwrap();
    let h = session.handle();
    let t = Instant::now();
    std::thread::sleep(Duration::from_millis(2500));
    let s = h.stats();
    session.stop();
    assert!((s.current_fps - 8.7).abs() <= 0.2 * 8.7, "fps {}", s.current_fps);
    let expected = t.elapsed().as_secs_f64() * 8.7;
    assert!((s.frames_out as f64 - expected).abs() <= 3.0, "{} frames in {:?}", s.frames_out, t.elapsed());
    assert!(s.last_latency_ms > 0.0);
    assert!(s.running);
    assert!(!h.stats().running);
}

#[test]
fn startup_errors() {
    let fx = Fixture::new(2, 1);
    let src = || Box::new(ReplaySource::from_manifest(&fx.data(), false).unwrap());
    let mut empty = fx.codes.clone();
    empty.codes.clear();
    assert!(Session::start(&fx.bundle, empty, src(), unpaced(), None).is_err());
    let bad = SessionConfig { initial_code: 5, ..unpaced() };
    assert!(Session::start(&fx.bundle, fx.codes.clone(), src(), bad, None).is_err());
    let bad = SessionConfig { fps: Some(0.0), ..Default::default() };
    assert!(Session::start(&fx.bundle, fx.codes.clone(), src(), bad, None).is_err());
    let other = thermosynth::model::ModelBundle::init(thermosynth::model::ModelConfig::small(12, 16), 0).unwrap();
    assert!(Session::start(&other, fx.codes.clone(), src(), unpaced(), None).is_err(), "heatmap size mismatch");
}
