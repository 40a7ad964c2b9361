use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use voxcast::camera::Camera;
use voxcast::config::RenderConfig;
use voxcast::container::{import_volume_with, ContainerHandle, ImportOptions, ImportReport};
use voxcast::dvr::{OpticalModel, TransferFunction};
use voxcast::image::FloatImage;
use voxcast::movie::{append_frame_with, bench_playback, Movie};
use voxcast::octree::TraversalOptions;
use voxcast::pipeline::{bench_orbit, frame_from_config, render_resident, FrameSettings, Overlays, Renderer};
use voxcast::stack::{import_stack, SliceStack};
use voxcast::synth::blob_scene;
use voxcast::volume::VolumeMeta;
use voxcast::warp::WarpMap;
use voxcast::Error;

#[derive(Parser)]
#[command(name = "voxcast", version, about = "Out-of-core volume renderer")]
struct Cli {
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true, env = "VOXCAST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a slice stack (directory with meta.txt) into a container.
    Import {
        stack: PathBuf,
        output: PathBuf,
        /// Stop after this many chunks (leaves a resumable partial file).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Print container or movie metadata.
    Info { container: PathBuf },
    /// Render one frame (or stereo pair) from a config file.
    Render {
        config: PathBuf,
        /// Also write the stats JSON here.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Render every frame of the movie named by `input.container`.
    RenderMovie {
        config: PathBuf,
        /// Directory for frame_NNNN.png / .pfm.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        first: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Append a slice stack as the next movie frame.
    MovieAppend {
        movie: PathBuf,
        stack: PathBuf,
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Orbit benchmark under fixed cache budgets.
    Bench(BenchArgs),
    /// Movie decode throughput.
    BenchMovie {
        movie: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Render every decoded frame with this config as well.
        #[arg(long)]
        render: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WarpArg {
    Identity,
    Radial,
}

#[derive(Args)]
struct BenchArgs {
    /// Existing container; otherwise a synthetic one is generated.
    #[arg(long)]
    container: Option<PathBuf>,
    /// Edge length of the synthetic volume.
    #[arg(long, default_value_t = 512)]
    dims: u32,
    #[arg(long, default_value_t = 64)]
    block_size: u32,
    #[arg(long, default_value_t = 32)]
    blobs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where the synthetic container is written (default: temp dir).
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    /// Square image edge in pixels.
    #[arg(long, default_value_t = 128)]
    size: u32,
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 45.0)]
    vfov: f64,
    /// Orbit radius in multiples of the volume's bounding radius. Default
    /// frames the whole volume.
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long, default_value_t = 64 << 20)]
    render_bytes: usize,
    #[arg(long, default_value_t = 256 << 20)]
    memory_bytes: usize,
    #[arg(long, value_enum, default_value_t = WarpArg::Identity)]
    warp: WarpArg,
    #[arg(long, default_value_t = 0.75)]
    warp_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    k1: f64,
    #[arg(long, default_value_t = 1.0)]
    quality: f64,
    /// Load rounds per frame before rendering; requests left over are
    /// loaded between frames.
    #[arg(long, default_value_t = 0)]
    load_rounds: usize,
}

/// Exit codes: 1 runtime failure, 2 bad input, 3 budget violation.
enum Failure {
    Error(Error),
    Budget(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("voxcast-error: threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("voxcast-error: {}: {line}", e.kind());
            let code = match e {
                Error::Io(_) | Error::Path { .. } | Error::Parse { .. } | Error::Config(_) | Error::InvalidMeta(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("voxcast-error: budget: {msg}");
            ExitCode::from(3)
        }
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("stats serialize"));
}

fn progress_logger(label: &'static str) -> impl Fn(usize, usize) {
    move |done, total| {
        if done == total || done % 64 == 0 {
            info!("{label}: {done}/{total} chunks");
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Import { stack, output, stop_after } => cmd_import(&stack, &output, stop_after),
        Command::Info { container } => cmd_info(&container),
        Command::Render { config, stats } => cmd_render(&config, stats.as_deref()),
        Command::RenderMovie {
            config,
            out_dir,
            first,
            count,
        } => cmd_render_movie(&config, &out_dir, first.unwrap_or(0), count),
        Command::MovieAppend { movie, stack, stop_after } => cmd_movie_append(&movie, &stack, stop_after),
        Command::Bench(args) => cmd_bench(&args),
        Command::BenchMovie {
            movie,
            seconds,
            workers,
            render,
        } => cmd_bench_movie(&movie, seconds, workers, render.as_deref()),
    }
}

fn import_json(report: &ImportReport, output: &Path) -> serde_json::Value {
    let status = if report.up_to_date {
        "up to date"
    } else if report.finished {
        "finished"
    } else {
        "partial"
    };
    json!({ "status": status, "output": output, "report": report })
}

fn cmd_import(stack: &Path, output: &Path, stop_after: Option<usize>) -> CliResult {
    let source = SliceStack::open(stack)?;
    let progress = progress_logger("import");
    let opts = ImportOptions {
        stop_after,
        progress: Some(&progress),
    };
    let report = import_stack(&source, output, &opts)?;
    if report.up_to_date {
        eprintln!("{}: up to date", output.display());
    }
    print_json(&import_json(&report, output));
    Ok(())
}

fn cmd_info(path: &Path) -> CliResult {
    let handle = ContainerHandle::open(path)?;
    let m = handle.meta();
    let levels: Vec<_> = (0..m.level_count())
        .map(|l| json!({ "level": l, "dims": m.level_dims(l), "blocks": m.block_grid(l) }))
        .collect();
    print_json(&json!({
        "path": path,
        "version": handle.version(),
        "dims": m.dims,
        "channels": m.channels,
        "bits_per_channel": m.bits_per_channel,
        "voxel_spacing": m.voxel_spacing,
        "block_size": m.block_size,
        "chunks": handle.index().len(),
        "frames": handle.index().frame_count(),
        "levels": levels,
    }));
    Ok(())
}

fn write_outputs(image: &FloatImage, png: Option<&Path>, pfm: Option<&Path>) -> CliResult {
    if let Some(p) = pfm {
        image.write_pfm(p)?;
    }
    if let Some(p) = png {
        image.write_png(p)?;
    }
    Ok(())
}

fn cmd_render(config: &Path, stats_path: Option<&Path>) -> CliResult {
    let cfg = RenderConfig::load(config)?;
    let renderer = Renderer::open(&cfg.container, cfg.memory_cache_bytes, cfg.render_cache_bytes)?;
    let (camera, settings, overlays) = frame_from_config(&cfg, renderer.tree().meta().channels as usize)?;
    let (image, stats) = renderer.render_view(&camera, &settings, &overlays, cfg.stereo_ipd)?;
    write_outputs(&image, cfg.output_png.as_deref(), cfg.output_pfm.as_deref())?;
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    if let Some(p) = stats_path {
        std::fs::write(p, &text).map_err(|e| Error::Path {
            path: p.to_path_buf(),
            source: e,
        })?;
    }
    println!("{text}");
    Ok(())
}

fn render_movie_frame(
    vol: &voxcast::volume::Volume,
    meta: &VolumeMeta,
    camera: &Camera,
    settings: &FrameSettings,
    overlays: &Overlays,
    ipd: Option<f64>,
) -> CliResult<(FloatImage, u64)> {
    Ok(match ipd {
        None => {
            let (img, s) = render_resident(vol, meta, camera, settings, overlays)?;
            (img, s.samples)
        }
        Some(ipd) => {
            let (l, ls) = render_resident(vol, meta, &camera.shifted(-ipd / 2.0), settings, overlays)?;
            let (r, rs) = render_resident(vol, meta, &camera.shifted(ipd / 2.0), settings, overlays)?;
            (l.side_by_side(&r)?, ls.samples + rs.samples)
        }
    })
}

fn cmd_render_movie(config: &Path, out_dir: &Path, first: usize, count: Option<usize>) -> CliResult {
    let cfg = RenderConfig::load(config)?;
    let movie = Movie::open(&cfg.container)?;
    let meta = movie.meta().clone();
    let (camera, settings, overlays) = frame_from_config(&cfg, meta.channels as usize)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Path {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let total = movie.frame_count() as usize;
    let last = count.map_or(total, |c| (first + c).min(total));
    let mut frames = Vec::new();
    for i in first..last {
        let t = Instant::now();
        let vol = movie.decode_frame(i)?;
        let decode_ms = t.elapsed().as_secs_f64() * 1e3;
        let (image, samples) = render_movie_frame(&vol, &meta, &camera, &settings, &overlays, cfg.stereo_ipd)?;
        let png = out_dir.join(format!("frame_{i:04}.png"));
        let pfm = out_dir.join(format!("frame_{i:04}.pfm"));
        write_outputs(&image, Some(&png), Some(&pfm))?;
        frames.push(json!({
            "frame": i,
            "decode_ms": decode_ms,
            "total_ms": t.elapsed().as_secs_f64() * 1e3,
            "samples": samples,
        }));
    }
    print_json(&json!({ "frames": frames, "movie_frames": total }));
    Ok(())
}

fn cmd_movie_append(movie: &Path, stack: &Path, stop_after: Option<usize>) -> CliResult {
    let source = SliceStack::open(stack)?;
    let vol = source.load()?;
    let progress = progress_logger("append");
    let opts = ImportOptions {
        stop_after,
        progress: Some(&progress),
    };
    let report = append_frame_with(movie, &source.meta, &vol, &opts)?;
    print_json(&report);
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> CliResult {
    let _tmp;
    let container = match &args.container {
        Some(p) => p.clone(),
        None => {
            let dir = match &args.work_dir {
                Some(d) => d.clone(),
                None => {
                    let t = tempdir()?;
                    let p = t.path().to_path_buf();
                    _tmp = t;
                    p
                }
            };
            let path = dir.join(format!("synthetic_{}_{}_{}.syg", args.dims, args.block_size, args.seed));
            let meta = VolumeMeta::new([args.dims; 3], 1, 8, [1.0; 3], args.block_size)?;
            let t = Instant::now();
            let vol = blob_scene(meta.dims, args.blobs, args.seed);
            let progress = progress_logger("synthetic");
            let opts = ImportOptions {
                stop_after: None,
                progress: Some(&progress),
            };
            import_volume_with(&vol, &meta, &path, &opts)?;
            info!("synthetic container ready in {:.1}s", t.elapsed().as_secs_f64());
            path
        }
    };
    let renderer = Renderer::open(&container, args.memory_bytes, args.render_bytes)?;
    let meta = renderer.tree().meta().clone();
    let aabb = meta.volume_aabb();
    let center = aabb.center();
    let radius = aabb.extent().norm() / 2.0;
    let vfov = args.vfov.to_radians();
    let distance = args.distance.map_or(1.2 * radius / (vfov / 2.0).sin(), |d| d * radius);
    let camera = Camera::look_at(
        center + nalgebra::Vector3::new(0.0, 0.25, 1.0).normalize() * distance,
        center,
        nalgebra::Vector3::y(),
        vfov,
        (args.size, args.size),
        distance * 1e-3,
        distance * 10.0,
    )?;
    let warp = match args.warp {
        WarpArg::Identity => WarpMap::identity((args.size, args.size)),
        WarpArg::Radial => WarpMap::radial_scaled(args.k1, 0.0, args.warp_scale, (args.size, args.size))?,
    };
    let mut settings = FrameSettings::new(TransferFunction::linear(meta.channels as usize), (args.size, args.size));
    settings.warp = warp;
    settings.render.model = OpticalModel::EmissionAbsorption;
    settings.tf.opacity_scale = 0.05;
    settings.tf.emission_scale = 0.05;
    settings.lod = TraversalOptions {
        quality_k: args.quality,
        force_finest: false,
    };
    settings.max_load_rounds = args.load_rounds;
    let report = bench_orbit(&renderer, &camera, &center, args.frames, &settings, &Overlays::default())?;
    print_json(&json!({
        "container": container,
        "rays_per_frame": settings.warp.ray_count(),
        "full_resolution_rays": args.size as u64 * args.size as u64,
        "report": report,
    }));
    if !report.within_budget {
        return Err(Failure::Budget(format!(
            "peak render {} / {} bytes, memory {} / {} bytes",
            report.render_peak_bytes, report.render_budget_bytes, report.memory_peak_bytes, report.memory_budget_bytes
        )));
    }
    if report.checksum_errors > 0 {
        return Err(Failure::Error(Error::Corrupt(format!("{} checksum errors", report.checksum_errors))));
    }
    Ok(())
}

fn tempdir() -> CliResult<tempfile::TempDir> {
    tempfile::tempdir().map_err(|e| Failure::Error(Error::Io(e)))
}

fn cmd_bench_movie(path: &Path, seconds: f64, workers: usize, render: Option<&Path>) -> CliResult {
    let movie = Movie::open(path)?;
    let stats = bench_playback(&movie, seconds, workers)?;
    let Some(config) = render else {
        print_json(&stats);
        return Ok(());
    };
    // Decode + render, sequential, for the same duration.
    let cfg = RenderConfig::load(config)?;
    let meta = movie.meta().clone();
    let (camera, settings, overlays) = frame_from_config(&cfg, meta.channels as usize)?;
    let start = Instant::now();
    let mut frames = 0u64;
    let mut buf = voxcast::volume::Volume::for_meta(&meta);
    while frames == 0 || start.elapsed() < Duration::from_secs_f64(seconds) {
        movie.decode_frame_into(frames as usize % movie.frame_count() as usize, &mut buf)?;
        render_movie_frame(&buf, &meta, &camera, &settings, &overlays, cfg.stereo_ipd)?;
        frames += 1;
    }
    let wall = start.elapsed().as_secs_f64();
    print_json(&json!({
        "decode": stats,
        "with_render": { "frames": frames, "wall_seconds": wall, "frames_per_second": frames as f64 / wall },
    }));
    Ok(())
}
