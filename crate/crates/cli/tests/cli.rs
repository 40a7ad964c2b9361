use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voxcast::image::FloatImage;
use voxcast::stack::write_stack;
use voxcast::synth::blob_scene;
use voxcast::volume::VolumeMeta;

fn voxcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxcast")).args(args).output().expect("spawn voxcast")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small slice stack and imports it; returns the container path.
fn imported(dir: &Path) -> PathBuf {
    let meta = VolumeMeta::new([24, 20, 16], 1, 8, [1.0; 3], 8).unwrap();
    let stack = dir.join("stack");
    std::fs::create_dir_all(&stack).unwrap();
    write_stack(&blob_scene(meta.dims, 4, 2), &meta, &stack).unwrap();
    let out = dir.join("vol.syg");
    let o = voxcast(&["import", s(&stack), s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn config(dir: &Path, container: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "[input]\ncontainer = {}\n[camera]\nposition = 12,10,-40\nlook_at = 12,10,8\nsize = 40,30\nvfov = 40\n\
         [tf]\nemission_scale = 0.2\nopacity_scale = 0.1\n[output]\npfm = out.pfm\n{extra}",
        container.display()
    );
    let path = dir.join("render.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn import_then_rerun_is_up_to_date() {
    let dir = tempfile::tempdir().unwrap();
    let out = imported(dir.path());
    let o = voxcast(&["import", s(&dir.path().join("stack")), s(&out)]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("up to date"), "{}", stderr(&o));
    let info = voxcast(&["info", s(&out)]);
    assert!(info.status.success());
    let v: serde_json::Value = serde_json::from_slice(&info.stdout).unwrap();
    assert_eq!(v["dims"], serde_json::json!([24, 20, 16]));
    assert_eq!(v["version"], 1);
}

#[test]
fn missing_meta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = voxcast(&["import", s(dir.path()), s(&dir.path().join("x.syg"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("voxcast-error:"), "{err}");
    assert!(err.contains("meta.txt"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = imported(dir.path());
    let cfg = config(dir.path(), &out, "[render]\nmodle = mip\n");
    let o = voxcast(&["render", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("voxcast-error:") && err.contains("modle"), "{err}");
}

#[test]
fn render_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = imported(dir.path());
    let cfg = config(dir.path(), &out, "");
    let o = voxcast(&["render", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(stats["eyes"][0]["samples"].as_u64().unwrap() > 0, "{stats}");
    let first = std::fs::read(dir.path().join("out.pfm")).unwrap();
    let img = FloatImage::read_pfm(&dir.path().join("out.pfm")).unwrap();
    assert_eq!((img.width, img.height), (40, 30));
    assert!(img.max_rgb() > 0.0);
    for threads in ["1", "3"] {
        let o = voxcast(&["--threads", threads, "render", s(&cfg)]);
        assert!(o.status.success());
        assert!(std::fs::read(dir.path().join("out.pfm")).unwrap() == first, "threads {threads}");
    }
}

#[test]
fn stereo_doubles_the_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = imported(dir.path());
    let cfg = config(dir.path(), &out, "[stereo]\nenabled = true\nipd = 2\n");
    let o = voxcast(&["render", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = FloatImage::read_pfm(&dir.path().join("out.pfm")).unwrap();
    assert_eq!((img.width, img.height), (80, 30));
}

#[test]
fn zero_frame_bench_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = imported(dir.path());
    let o = voxcast(&["bench", "--container", s(&out), "--frames", "0", "--size", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["frames"], serde_json::json!([]));
}

#[test]
fn small_bench_stays_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let o = voxcast(&[
        "bench", "--dims", "64", "--block-size", "16", "--frames", "3", "--size", "24", "--render-bytes", "65536",
        "--work-dir", s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["frames"].as_array().unwrap().len(), 3);
    assert!(v["report"]["render_peak_bytes"].as_u64().unwrap() <= 65536);
}

#[test]
fn movie_append_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([16, 16, 8], 1, 8, [1.0; 3], 8).unwrap();
    let movie = dir.path().join("m.syg");
    for seed in 0..2 {
        let stack = dir.path().join(format!("s{seed}"));
        std::fs::create_dir_all(&stack).unwrap();
        write_stack(&blob_scene(meta.dims, 3, seed), &meta, &stack).unwrap();
        let o = voxcast(&["movie-append", s(&movie), s(&stack)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let cfg = config(dir.path(), &movie, "");
    let frames = dir.path().join("frames");
    let o = voxcast(&["render-movie", s(&cfg), "--out-dir", s(&frames)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(frames.join("frame_0001.png").exists() && frames.join("frame_0001.pfm").exists());
    let o = voxcast(&["bench-movie", s(&movie), "--seconds", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["frames_per_second"].as_f64().unwrap() > 0.0);
}
