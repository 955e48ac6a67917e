use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gazetrack::dataset::ingest_dataset;
use gazetrack::formats::{
    read_calibration, read_estimates, read_poses, read_truth, read_vectors, write_calibration, write_eyes,
    write_estimates, write_features, write_poses, write_truth, write_user_points, write_vectors, EyeDetection,
};
use gazetrack::geometry::{build_user_plane, project_calibration_to_user_points, HeadPose, ScreenGeometry};
use gazetrack::imageio::load_gray;
use gazetrack::imgproc::GrayImage;
use gazetrack::isocenter::{locate_eye_center_with, IsophoteParams, Roi};
use gazetrack::lk::{track_sequence, TrackedFeature};
use gazetrack::models::{Eye, Fusion, ModelSpec, ScreenPoint};
use gazetrack::pipeline::{FrameInput, Thresholds, Tracker, TrackerConfig, TrackerKind};
use gazetrack::report::{compute_report, foveal_window_px, format_table, ReportRow};
use gazetrack::sim::{serpentine_targets, simulate_stream, translation_sweep, yaw_sweep, SceneConfig, TrueMapping, World};
use gazetrack::template::{locate_template, MatchMethod};
use gazetrack::{Error, Result};

#[derive(Parser)]
#[command(name = "gazetrack", version, about = "Gaze estimation from eye images, head poses and screen calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate eye centres in frames and write `frame,eye,x,y,confidence`.
    DetectEyes(DetectEyes),
    /// Follow image features with Lucas-Kanade and write `frame,feature,x,y,status`.
    TrackFeatures(TrackFeatures),
    /// Fit a screen mapping to a calibration file and save it as JSON.
    Fit(Fit),
    /// Run a tracker over a vector stream and write `frame,sx,sy,kind,recalibrated`.
    Track(Track),
    /// Generate a synthetic session with ground truth.
    Simulate(Simulate),
    /// Error statistics of one estimate file against ground truth.
    Evaluate(Evaluate),
    /// Comparison table over several estimate files.
    Report(Report),
}

#[derive(Args, Clone, Copy)]
struct ScreenArgs {
    /// Screen resolution, WxH pixels.
    #[arg(long, default_value = "1280x1024", value_parser = parse_pair)]
    screen_px: (f64, f64),
    /// Physical screen size, WxH millimetres.
    #[arg(long, default_value = "430x320", value_parser = parse_pair)]
    screen_mm: (f64, f64),
}

impl ScreenArgs {
    fn geometry(&self) -> Result<ScreenGeometry> {
        ScreenGeometry::new(self.screen_px.0, self.screen_px.1, self.screen_mm.0, self.screen_mm.1)
    }
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Comma-separated numbers.
#[derive(Debug, Clone)]
struct Floats(Vec<f64>);

fn parse_float_list(s: &str) -> std::result::Result<Floats, String> {
    parse_floats(s).map(Floats)
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

fn parse_pose(s: &str) -> std::result::Result<HeadPose, String> {
    match parse_floats(s)?.as_slice() {
        &[wx, wy, wz, tx, ty, tz] => HeadPose::new(wx, wy, wz, tx, ty, tz).map_err(|e| e.to_string()),
        _ => Err("pose must be wx,wy,wz,tx,ty,tz".into()),
    }
}

fn parse_from_str<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// `x,y,w,h` or `eye:x,y,w,h`.
fn parse_eye_roi(s: &str) -> std::result::Result<(Eye, Roi), String> {
    let (eye, roi) = match s.split_once(':') {
        Some((e, r)) => (parse_from_str::<Eye>(e)?, r),
        None => (Eye::Left, s),
    };
    Ok((eye, parse_from_str::<Roi>(roi)?))
}

#[derive(Args)]
struct FrameSource {
    /// Frame images, or directories whose .pgm/.png files are taken in name order.
    #[arg(long = "frames", required = true, num_args = 1..)]
    frames: Vec<PathBuf>,
}

impl FrameSource {
    fn paths(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for p in &self.frames {
            if p.is_dir() {
                let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<std::io::Result<_>>()?;
                entries.retain(|e| {
                    matches!(
                        e.extension().and_then(|x| x.to_str()).map(str::to_ascii_lowercase).as_deref(),
                        Some("pgm" | "png")
                    )
                });
                entries.sort();
                out.extend(entries);
            } else {
                out.push(p.clone());
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("no frame images found".into()));
        }
        Ok(out)
    }

    fn load(&self) -> Result<Vec<GrayImage>> {
        self.paths()?.iter().map(load_gray).collect()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Locator {
    Isophote,
    Template,
}

#[derive(Args)]
struct DetectEyes {
    #[command(flatten)]
    frames: FrameSource,
    /// Search region, `x,y,w,h` or `left:x,y,w,h`; repeat for both eyes.
    #[arg(long = "roi", required = true, value_parser = parse_eye_roi)]
    rois: Vec<(Eye, Roi)>,
    #[arg(long, value_enum, default_value = "isophote")]
    locator: Locator,
    /// Template image for the template locator.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Matching method for the template locator.
    #[arg(long, default_value = "ccoeff_normed", value_parser = parse_from_str::<MatchMethod>)]
    method: MatchMethod,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.5)]
    sigma_acc: f64,
    #[arg(long, default_value_t = 15)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

fn detect_eyes(a: &DetectEyes) -> Result<()> {
    let params = IsophoteParams {
        sigma: a.sigma,
        sigma_acc: a.sigma_acc,
        window: a.window,
        ..IsophoteParams::default()
    };
    let template = match (a.locator, &a.template) {
        (Locator::Template, Some(p)) => Some(load_gray(p)?),
        (Locator::Template, None) => return Err(Error::InvalidInput("--locator template needs --template".into())),
        _ => None,
    };
    let mut rows = Vec::new();
    for (frame, image) in a.frames.load()?.iter().enumerate() {
        for &(eye, roi) in &a.rois {
            let (x, y, confidence) = match &template {
                None => {
                    let p = locate_eye_center_with(image, roi, &params)?;
                    (p.x, p.y, p.confidence)
                }
                Some(t) => {
                    let search = image.crop(roi.x, roi.y, roi.width, roi.height)?;
                    let m = locate_template(&search, t, a.method)?;
                    (
                        (roi.x + m.x) as f64 + (t.width() as f64 - 1.0) / 2.0,
                        (roi.y + m.y) as f64 + (t.height() as f64 - 1.0) / 2.0,
                        m.score,
                    )
                }
            };
            rows.push(EyeDetection {
                frame: frame as u64,
                eye,
                x,
                y,
                confidence,
            });
        }
    }
    write_eyes(&a.out, &rows)
}

#[derive(Args)]
struct TrackFeatures {
    #[command(flatten)]
    frames: FrameSource,
    /// Initial positions in the first frame, `x,y[,x,y...]`.
    #[arg(long, value_parser = parse_float_list)]
    init: Floats,
    #[arg(long, default_value_t = 15)]
    patch: usize,
    #[arg(long)]
    out: PathBuf,
}

fn track_features(a: &TrackFeatures) -> Result<()> {
    let init = &a.init.0;
    if init.is_empty() || !init.len().is_multiple_of(2) {
        return Err(Error::InvalidInput("--init needs x,y pairs".into()));
    }
    let frames = a.frames.load()?;
    let tracks = init
        .chunks(2)
        .map(|c| track_sequence(TrackedFeature::new(&frames[0], [c[0], c[1]], a.patch)?, &frames))
        .collect::<Result<Vec<_>>>()?;
    write_features(&a.out, &tracks)
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "quadratic25", value_parser = parse_from_str::<ModelSpec>)]
    model: ModelSpec,
    #[command(flatten)]
    screen: ScreenArgs,
}

#[derive(Args)]
struct Fit {
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Pose at calibration time, `wx,wy,wz,tx,ty,tz`.
    #[arg(long, default_value = "0,0,0,0,0,750", value_parser = parse_pose)]
    calib_pose: HeadPose,
    #[arg(long, default_value_t = 100.0)]
    user_plane_offset: f64,
    /// Model file to write; one file per eye, suffixed with the eye name when
    /// both eyes are calibrated.
    #[arg(long)]
    out: PathBuf,
    /// Also write the user points built at the calibration pose.
    #[arg(long)]
    user_points: Option<PathBuf>,
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).map(|e| format!(".{e}")).unwrap_or_default();
    path.with_file_name(format!("{stem}-{suffix}{ext}"))
}

fn fit(a: &Fit) -> Result<()> {
    let screen = a.model.screen.geometry()?;
    let sets = read_calibration(&a.calib, &screen)?;
    let many = sets.len() > 1;
    for set in &sets {
        let eye = set.eye().expect("non-empty set").to_string();
        let model = a.model.model.fit(set)?;
        let out = if many { suffixed(&a.out, &eye) } else { a.out.clone() };
        fs::write(&out, model.to_json()? + "\n")?;
        if let Some(up) = &a.user_points {
            let plane = build_user_plane(&a.calib_pose, a.user_plane_offset)?;
            let ups = project_calibration_to_user_points(&a.calib_pose, &plane, &screen, set)?;
            write_user_points(&if many { suffixed(up, &eye) } else { up.clone() }, &ups)?;
        }
    }
    Ok(())
}

#[derive(Args)]
struct Track {
    #[arg(long, value_parser = parse_from_str::<TrackerKind>)]
    kind: TrackerKind,
    #[arg(long)]
    calib: PathBuf,
    /// Pose stream; required by the 2.5d and 3d trackers.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    vectors: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "average", value_parser = parse_from_str::<Fusion>)]
    fusion: Fusion,
    #[arg(long, default_value = "0,0,0,0,0,750", value_parser = parse_pose)]
    calib_pose: HeadPose,
    #[arg(long, default_value_t = 100.0)]
    user_plane_offset: f64,
    /// Refit when any rotation angle changes by more than this (degrees).
    #[arg(long, default_value_t = 0.25)]
    rotation_threshold: f64,
    /// Refit when any translation component changes by more than this (mm).
    #[arg(long, default_value_t = 1.0)]
    translation_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

fn track(a: &Track) -> Result<()> {
    let screen = a.model.screen.geometry()?;
    let sets = read_calibration(&a.calib, &screen)?;
    let poses: BTreeMap<u64, HeadPose> = match &a.poses {
        Some(p) => read_poses(p)?.into_iter().collect(),
        None if a.kind.needs_pose() => {
            return Err(Error::InvalidInput(format!("the {} tracker needs --poses", a.kind)));
        }
        None => BTreeMap::new(),
    };
    let config = TrackerConfig {
        fusion: a.fusion,
        thresholds: Thresholds {
            rotation_deg: a.rotation_threshold,
            translation_mm: a.translation_threshold,
        },
        calibration_pose: a.calib_pose,
        user_plane_offset_mm: a.user_plane_offset,
        ..TrackerConfig::new(a.kind, a.model.model)
    };
    let mut tracker = Tracker::new(config, sets)?;
    let estimates = read_vectors(&a.vectors)?
        .into_iter()
        .map(|(frame, vectors)| tracker.process(&FrameInput::vectors(frame, vectors, poses.get(&frame).copied())))
        .collect::<Result<Vec<_>>>()?;
    write_estimates(&a.out, &estimates)
}

#[derive(Clone, Copy, ValueEnum)]
enum PathKind {
    /// Yaw 0 → +max → 0 → −max → 0.
    YawSweep,
    /// Head translation on a Lissajous path.
    Translation,
    /// Head fixed at the calibration pose.
    Static,
}

#[derive(Clone, Copy, ValueEnum)]
enum WorldArg {
    Projective,
    ModelConsistent,
}

#[derive(Clone, Copy, ValueEnum)]
enum TruthArg {
    Quadratic,
    Affine,
}

#[derive(Args)]
struct Simulate {
    #[arg(long, default_value_t = 101)]
    frames: usize,
    #[arg(long, value_enum, default_value = "yaw-sweep")]
    path: PathKind,
    /// Largest yaw of the sweep, degrees.
    #[arg(long, default_value_t = 16.5)]
    max_yaw: f64,
    /// Translation amplitude, mm.
    #[arg(long, default_value_t = 60.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 750.0)]
    depth: f64,
    #[arg(long, value_enum, default_value = "projective")]
    world: WorldArg,
    #[arg(long, value_enum, default_value = "quadratic")]
    truth: TruthArg,
    #[arg(long, default_value_t = 0.0)]
    vector_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pose_noise_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    pose_noise_mm: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for calib.csv, poses.csv, vectors.csv, vectors_raw.csv and truth.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn simulate(a: &Simulate) -> Result<()> {
    let cfg = SceneConfig {
        screen: a.model.screen.geometry()?,
        depth_mm: a.depth,
        vector_noise_px: a.vector_noise,
        pose_noise_deg: a.pose_noise_deg,
        pose_noise_mm: a.pose_noise_mm,
        truth: match a.truth {
            TruthArg::Quadratic => TrueMapping::default(),
            TruthArg::Affine => TrueMapping::affine([640.0, 42.0, 0.8], [512.0, 0.5, 48.0]),
        },
        world: match a.world {
            WorldArg::Projective => World::Projective,
            WorldArg::ModelConsistent => World::ModelConsistent,
        },
        family: a.model.model,
        seed: a.seed,
        ..SceneConfig::default()
    };
    let poses = match a.path {
        PathKind::YawSweep => yaw_sweep(a.frames, a.max_yaw, a.depth),
        PathKind::Translation => translation_sweep(a.frames, a.amplitude, a.depth),
        PathKind::Static => vec![cfg.calibration_pose(); a.frames],
    };
    let targets = serpentine_targets(&cfg.screen, cfg.grid_margin, a.frames);
    let stream = simulate_stream(&cfg, &poses, &targets)?;
    fs::create_dir_all(&a.out_dir)?;
    let dir = &a.out_dir;
    write_calibration(&dir.join("calib.csv"), std::slice::from_ref(&stream.calibration))?;
    write_poses(&dir.join("poses.csv"), &stream.frames.iter().map(|f| (f.index, f.pose)).collect::<Vec<_>>())?;
    write_vectors(&dir.join("vectors.csv"), &stream.frames.iter().map(|f| (f.index, vec![f.vector])).collect::<Vec<_>>())?;
    write_vectors(&dir.join("vectors_raw.csv"), &stream.frames.iter().map(|f| (f.index, vec![f.raw])).collect::<Vec<_>>())?;
    write_truth(&dir.join("truth.csv"), &stream.frames.iter().map(|f| (f.index, f.truth)).collect::<Vec<_>>())
}

#[derive(Args)]
struct TruthSource {
    /// Ground truth as `frame,sx,sy`.
    #[arg(long, conflicts_with = "dataset")]
    truth: Option<PathBuf>,
    /// Recorded session whose truth.csv is used.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl TruthSource {
    fn load(&self) -> Result<BTreeMap<u64, ScreenPoint>> {
        match (&self.truth, &self.dataset) {
            (Some(t), _) => Ok(read_truth(t)?.into_iter().collect()),
            (None, Some(d)) => Ok(ingest_dataset(d)?.frames.into_iter().map(|f| (f.index, f.truth)).collect()),
            (None, None) => Err(Error::InvalidInput("give --truth or --dataset".into())),
        }
    }
}

fn paired(estimates: &Path, truth: &BTreeMap<u64, ScreenPoint>) -> Result<(Vec<ScreenPoint>, Vec<ScreenPoint>)> {
    let mut e = Vec::new();
    let mut t = Vec::new();
    for (frame, p) in read_estimates(estimates)? {
        let truth = truth
            .get(&frame)
            .ok_or_else(|| Error::InvalidInput(format!("{}: no truth for frame {frame}", estimates.display())))?;
        e.push(p);
        t.push(*truth);
    }
    Ok((e, t))
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    estimates: PathBuf,
    #[command(flatten)]
    truth: TruthSource,
    #[arg(long, default_value_t = 750.0)]
    depth: f64,
    #[command(flatten)]
    screen: ScreenArgs,
    /// Write the report as JSON here instead of printing a table.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn evaluate(a: &Evaluate) -> Result<()> {
    let (est, truth) = paired(&a.estimates, &a.truth.load()?)?;
    let report = compute_report(&est, &truth, a.depth, &a.screen.geometry()?)?;
    match &a.out {
        Some(p) => fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?,
        None => print!(
            "{}",
            format_table(&[ReportRow {
                run: a.estimates.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string(),
                tracker: String::from("-"),
                report,
            }])
        ),
    }
    Ok(())
}

#[derive(Args)]
struct Report {
    /// Runs as `label=estimates.csv`; repeat for each row.
    #[arg(long = "run", required = true, value_parser = parse_run)]
    runs: Vec<(String, PathBuf)>,
    #[command(flatten)]
    truth: TruthSource,
    #[arg(long, default_value_t = 750.0)]
    depth: f64,
    /// Visual angle of the foveal window line, degrees.
    #[arg(long, default_value_t = 2.0)]
    foveal_deg: f64,
    #[command(flatten)]
    screen: ScreenArgs,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_run(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (label, path) = s.split_once('=').ok_or_else(|| format!("expected label=path, got `{s}`"))?;
    Ok((label.to_string(), PathBuf::from(path)))
}

fn report(a: &Report) -> Result<()> {
    let screen = a.screen.geometry()?;
    let truth = a.truth.load()?;
    let mut rows = Vec::new();
    for (label, path) in &a.runs {
        let tracker = read_tracker_label(path)?;
        let (est, t) = paired(path, &truth)?;
        rows.push(ReportRow {
            run: label.clone(),
            tracker,
            report: compute_report(&est, &t, a.depth, &screen)?,
        });
    }
    let (wx, wy) = foveal_window_px(a.depth, &screen, a.foveal_deg)?;
    let text = format!(
        "{}\nFoveal window ({} deg at {} mm): {:.2} x {:.2} px\n",
        format_table(&rows),
        a.foveal_deg,
        a.depth,
        wx,
        wy
    );
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Tracker column of the first estimate row, or `-` for an empty file.
fn read_tracker_label(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(3))
        .unwrap_or("-")
        .trim()
        .to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::DetectEyes(a) => detect_eyes(a),
        Command::TrackFeatures(a) => track_features(a),
        Command::Fit(a) => fit(a),
        Command::Track(a) => track(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gazetrack: {e}");
            ExitCode::FAILURE
        }
    }
}
