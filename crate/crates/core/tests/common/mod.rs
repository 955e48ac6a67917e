#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gazetrack::imageio::save_pgm;
use gazetrack::synth::{render_eye, EyeSpec, Texture};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gazetrack"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn gazetrack")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "gazetrack {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Eye crops with the pupil moving one pixel right per frame, starting at (30, 26).
pub fn write_eye_frames(dir: &Path, n: usize) -> PathBuf {
    let frames = dir.join("eyes");
    std::fs::create_dir_all(&frames).unwrap();
    for k in 0..n {
        let spec = EyeSpec {
            cx: 30.0 + k as f64,
            cy: 26.0,
            radius: 8.0,
            noise_sigma: 0.01,
            seed: k as u64,
            ..EyeSpec::default()
        };
        save_pgm(&render_eye(64, 52, &spec), frames.join(format!("{k:04}.pgm"))).unwrap();
    }
    frames
}

/// Textured frames drifting by (0.5, 0.25) px per frame.
pub fn write_texture_frames(dir: &Path, n: usize) -> PathBuf {
    let frames = dir.join("texture");
    std::fs::create_dir_all(&frames).unwrap();
    let tex = Texture::random(5, 8);
    for k in 0..n {
        let img = tex.render(64, 64, 0.5 * k as f64, 0.25 * k as f64);
        save_pgm(&img, frames.join(format!("{k:04}.pgm"))).unwrap();
    }
    frames
}

/// Runs every subcommand with fixed inputs and seeds, writing into `dir`.
/// Returns the output files, including captured standard output.
pub fn exercise_cli(dir: &Path) -> Vec<PathBuf> {
    let mut outputs = Vec::new();
    let eyes = write_eye_frames(dir, 4);
    let texture = write_texture_frames(dir, 4);

    let p = dir.join("eyes.csv");
    run_ok(&["detect-eyes", "--frames", s(&eyes), "--roi", "left:0,0,64,52", "--out", s(&p)]);
    outputs.push(p);

    let p = dir.join("features.csv");
    run_ok(&["track-features", "--frames", s(&texture), "--init", "32,32,20,40", "--out", s(&p)]);
    outputs.push(p);

    let sim = dir.join("sim");
    run_ok(&[
        "simulate", "--out-dir", s(&sim), "--frames", "41", "--vector-noise", "0.05", "--pose-noise-deg", "0.1",
        "--pose-noise-mm", "0.5", "--seed", "7",
    ]);
    for f in ["calib.csv", "poses.csv", "vectors.csv", "vectors_raw.csv", "truth.csv"] {
        outputs.push(sim.join(f));
    }

    let p = dir.join("model.json");
    let ups = dir.join("user_points.json");
    run_ok(&["fit", "--calib", s(&sim.join("calib.csv")), "--out", s(&p), "--user-points", s(&ups)]);
    outputs.push(p);
    outputs.push(ups);

    let mut runs = Vec::new();
    for (kind, vectors) in [("2d", "vectors_raw.csv"), ("2.5d", "vectors.csv"), ("3d", "vectors.csv")] {
        let p = dir.join(format!("est_{kind}.csv"));
        run_ok(&[
            "track", "--kind", kind, "--calib", s(&sim.join("calib.csv")), "--poses", s(&sim.join("poses.csv")),
            "--vectors", s(&sim.join(vectors)), "--out", s(&p),
        ]);
        runs.push(format!("{kind}={}", s(&p)));
        outputs.push(p);
    }

    let p = dir.join("evaluate.json");
    run_ok(&["evaluate", "--estimates", s(&dir.join("est_3d.csv")), "--truth", s(&sim.join("truth.csv")), "--out", s(&p)]);
    outputs.push(p);

    let p = dir.join("evaluate.txt");
    let out = run_ok(&["evaluate", "--estimates", s(&dir.join("est_2d.csv")), "--truth", s(&sim.join("truth.csv"))]);
    std::fs::write(&p, out.stdout).unwrap();
    outputs.push(p);

    let p = dir.join("report.txt");
    let mut args = vec!["report".to_string(), "--truth".into(), s(&sim.join("truth.csv")).into(), "--out".into(), s(&p).into()];
    for r in &runs {
        args.push("--run".into());
        args.push(r.clone());
    }
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    outputs.push(p);
    outputs
}

/// Paths of differing files between two runs of `exercise_cli`.
pub fn differing_outputs(a: &[PathBuf], b: &[PathBuf]) -> Vec<String> {
    a.iter()
        .zip(b)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect()
}
