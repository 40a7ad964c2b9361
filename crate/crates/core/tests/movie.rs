use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxcast::container::{resume_scan, ImportOptions};
use voxcast::movie::{append_frame, append_frame_with, bench_playback, Movie};
use voxcast::volume::{Volume, VolumeMeta};
use voxcast::Error;

fn random_frame(meta: &VolumeMeta, seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Volume::for_meta(meta);
    rng.fill(v.data.as_mut_slice());
    v
}

#[test]
fn frames_decode_to_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.syg");
    let meta = VolumeMeta::new([20, 12, 9], 2, 8, [1.0; 3], 8).unwrap();
    let frames: Vec<Volume> = (0..3).map(|i| random_frame(&meta, i)).collect();
    for (i, f) in frames.iter().enumerate() {
        let r = append_frame(&path, &meta, f).unwrap();
        assert_eq!((r.frame, r.finished), (i as u32, true));
    }
    let movie = Movie::open(&path).unwrap();
    assert_eq!(movie.frame_count(), 3);
    assert_eq!(movie.decode_frame(1).unwrap(), frames[1]);
    assert_eq!(movie.decode_frame(0).unwrap(), frames[0]);
    assert!(matches!(movie.decode_frame(3), Err(Error::FrameOutOfRange { index: 3, count: 3 })));
    // Decoding is deterministic and reuses buffers cleanly.
    let mut buf = movie.decode_frame(2).unwrap();
    movie.decode_frame_into(0, &mut buf).unwrap();
    assert_eq!(buf, frames[0]);
}

#[test]
fn mismatched_frame_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([8, 8, 8], 1, 8, [1.0; 3], 8).unwrap();
    let wrong = Volume::zeroed([8, 8, 7], 1, 8);
    assert!(matches!(append_frame(&dir.path().join("x.syg"), &meta, &wrong), Err(Error::DimensionMismatch(_))));
}

#[test]
fn interrupted_append_resumes_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([24, 16, 16], 1, 8, [1.0; 3], 8).unwrap();
    let frames: Vec<Volume> = (0..3).map(|i| random_frame(&meta, 10 + i)).collect();
    let reference = dir.path().join("ref.syg");
    for f in &frames {
        append_frame(&reference, &meta, f).unwrap();
    }
    let want = std::fs::read(&reference).unwrap();
    let per_frame = meta.level_blocks(0).count();
    for stop in [0, 1, per_frame / 2, per_frame - 1] {
        let path = dir.path().join(format!("cut{stop}.syg"));
        append_frame(&path, &meta, &frames[0]).unwrap();
        let opts = ImportOptions {
            stop_after: Some(stop),
            progress: None,
        };
        let r = append_frame_with(&path, &meta, &frames[1], &opts).unwrap();
        assert!(!r.finished);
        let r = append_frame(&path, &meta, &frames[1]).unwrap();
        assert_eq!((r.frame, r.chunks_existing, r.chunks_written), (1, stop, per_frame - stop));
        append_frame(&path, &meta, &frames[2]).unwrap();
        assert!(std::fs::read(&path).unwrap() == want, "stop after {stop}");
    }
    // Torn bytes anywhere: the scan tells the caller which frame to resend.
    let movie = Movie::open(&reference).unwrap();
    assert_eq!(movie.frame_count(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let footer = u64::from_le_bytes(want[want.len() - 12..want.len() - 4].try_into().unwrap()) as usize;
    let cuts: Vec<usize> = [footer, footer + 3, want.len() - 1].into_iter().chain((0..8).map(|_| rng.gen_range(0..want.len()))).collect();
    for cut in cuts {
        let path = dir.path().join("torn.syg");
        std::fs::write(&path, &want[..cut]).unwrap();
        let done = resume_scan(&path).map(|s| s.index.len()).unwrap_or(0);
        for f in &frames[done.saturating_sub(1) / per_frame..] {
            append_frame(&path, &meta, f).unwrap();
        }
        assert!(std::fs::read(&path).unwrap() == want, "cut at {cut}");
    }
}

#[test]
fn zero_frames_decode_faster_than_noise() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([128, 128, 64], 1, 8, [1.0; 3], 32).unwrap();
    let zero = dir.path().join("zero.syg");
    let noise = dir.path().join("noise.syg");
    for i in 0..2 {
        append_frame(&zero, &meta, &Volume::for_meta(&meta)).unwrap();
        append_frame(&noise, &meta, &random_frame(&meta, i)).unwrap();
    }
    assert!(std::fs::metadata(&zero).unwrap().len() * 20 < std::fs::metadata(&noise).unwrap().len());
    let z = bench_playback(&Movie::open(&zero).unwrap(), 0.3, 1).unwrap();
    let n = bench_playback(&Movie::open(&noise).unwrap(), 0.3, 1).unwrap();
    assert!(z.frames_per_second > n.frames_per_second, "zero {} noise {}", z.frames_per_second, n.frames_per_second);
}

#[test]
fn playback_stats_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.syg");
    let meta = VolumeMeta::new([32, 32, 32], 1, 8, [1.0; 3], 16).unwrap();
    append_frame(&path, &meta, &random_frame(&meta, 1)).unwrap();
    let movie = Movie::open(&path).unwrap();
    for (seconds, workers) in [(0.0, 1), (0.15, 1), (0.15, 3)] {
        let s = bench_playback(&movie, seconds, workers).unwrap();
        assert!(s.frames_decoded >= 1 && s.frames_per_second > 0.0);
        let implied = s.frames_per_second * s.wall_seconds;
        assert!((implied - s.frames_decoded as f64).abs() <= 1.0, "{s:?}");
        assert!((s.decompressed_bytes_per_second - s.frames_per_second * movie.frame_bytes() as f64).abs() < 1e-6 * s.decompressed_bytes_per_second);
        assert_eq!((s.frame_voxels, s.workers), (32 * 32 * 32, workers));
        assert!(s.wall_seconds >= seconds);
    }
}

#[test]
fn volume_containers_are_not_movies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.syg");
    let meta = VolumeMeta::new([8, 8, 8], 1, 8, [1.0; 3], 8).unwrap();
    voxcast::container::import_volume(&Volume::for_meta(&meta), &meta, &path).unwrap();
    assert!(matches!(Movie::open(&path), Err(Error::UnsupportedVersion(1))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_movies_roundtrip(
        dx in 1u32..20, dy in 1u32..20, dz in 1u32..12, channels in 1u8..3,
        wide in any::<bool>(), count in 1usize..4, pick in any::<prop::sample::Index>(), seed in any::<u64>(),
    ) {
        let meta = VolumeMeta::new([dx, dy, dz], channels, if wide { 16 } else { 8 }, [1.0; 3], 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.syg");
        let frames: Vec<Volume> = (0..count).map(|i| random_frame(&meta, seed ^ i as u64)).collect();
        for f in &frames {
            append_frame(&path, &meta, f).unwrap();
        }
        let movie = Movie::open(&path).unwrap();
        let i = pick.index(count);
        prop_assert_eq!(movie.decode_frame(i).unwrap(), frames[i].clone());
    }
}
