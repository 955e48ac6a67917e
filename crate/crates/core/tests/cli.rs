mod common;

use common::*;
use gazetrack::formats::{read_estimates, read_truth};
use gazetrack::models::MappingModel;
use tempfile::tempdir;

#[test]
fn every_command_is_deterministic() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let oa = exercise_cli(a.path());
    let ob = exercise_cli(b.path());
    assert_eq!(oa.len(), ob.len());
    let diff = differing_outputs(&oa, &ob);
    assert!(diff.is_empty(), "outputs differ between runs: {diff:?}");
}

#[test]
fn simulate_seed_changes_noisy_output() {
    let dir = tempdir().unwrap();
    for seed in ["1", "2"] {
        run_ok(&["simulate", "--out-dir", s(&dir.path().join(seed)), "--frames", "5", "--vector-noise", "0.1", "--seed", seed]);
    }
    let a = std::fs::read(dir.path().join("1/vectors.csv")).unwrap();
    let b = std::fs::read(dir.path().join("2/vectors.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn detect_eyes_follows_the_pupil() {
    let dir = tempdir().unwrap();
    let frames = write_eye_frames(dir.path(), 3);
    let out = dir.path().join("eyes.csv");
    run_ok(&["detect-eyes", "--frames", s(&frames), "--roi", "0,0,64,52", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[1], "left");
            vec![f[0].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap()]
        })
        .collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!((r[1] - (30.0 + r[0])).abs() < 2.0 && (r[2] - 26.0).abs() < 2.0, "{r:?}");
    }
}

#[test]
fn detect_eyes_with_template() {
    let dir = tempdir().unwrap();
    let frames = write_eye_frames(dir.path(), 2);
    let tmpl = gazetrack::imageio::load_gray(frames.join("0000.pgm")).unwrap().crop(22, 18, 17, 17).unwrap();
    let tpath = dir.path().join("t.pgm");
    gazetrack::imageio::save_pgm(&tmpl, &tpath).unwrap();
    let out = dir.path().join("eyes.csv");
    run_ok(&[
        "detect-eyes", "--frames", s(&frames), "--roi", "0,0,64,52", "--locator", "template", "--template", s(&tpath),
        "--method", "ccoeff_normed", "--out", s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((first[2], first[3]), ("30", "26"));
    assert!((first[4].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn track_features_follows_drift() {
    let dir = tempdir().unwrap();
    let frames = write_texture_frames(dir.path(), 5);
    let out = dir.path().join("f.csv");
    run_ok(&["track-features", "--frames", s(&frames), "--init", "32,32", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "4");
    assert_eq!(last[4], "tracking");
    let (x, y): (f64, f64) = (last[2].parse().unwrap(), last[3].parse().unwrap());
    assert!((x - 34.0).abs() < 0.2 && (y - 33.0).abs() < 0.2, "({x}, {y})");
}

#[test]
fn tracker_ordering_on_simulated_sweep() {
    let dir = tempdir().unwrap();
    let outputs = exercise_cli(dir.path());
    assert!(outputs.iter().all(|p| p.exists()));
    let truth = read_truth(&dir.path().join("sim/truth.csv")).unwrap();
    let mean = |kind: &str| {
        let est = read_estimates(&dir.path().join(format!("est_{kind}.csv"))).unwrap();
        est.iter().zip(&truth).map(|(e, t)| e.1.distance(&t.1)).sum::<f64>() / est.len() as f64
    };
    let (e2, e25, e3) = (mean("2d"), mean("2.5d"), mean("3d"));
    assert!(e3 < e25 && e25 < e2, "2d {e2}, 2.5d {e25}, 3d {e3}");
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("Mean (x, y) px") && report.contains("Foveal window"));
    let model = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    MappingModel::from_json(&model).unwrap();
}

#[test]
fn three_d_without_poses_fails() {
    let dir = tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&["simulate", "--out-dir", s(&sim), "--frames", "3"]);
    let out = run(&[
        "track", "--kind", "3d", "--calib", s(&sim.join("calib.csv")), "--vectors", s(&sim.join("vectors.csv")), "--out",
        s(&dir.path().join("e.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--poses"));
}

#[test]
fn malformed_calibration_names_file_and_line() {
    let dir = tempdir().unwrap();
    let calib = dir.path().join("calib.csv");
    std::fs::write(&calib, "index,eye,vx,vy,sx,sy\n1,left,0,0,1,1\n2,left,x,0,1,1\n").unwrap();
    let out = run(&["fit", "--calib", s(&calib), "--out", s(&dir.path().join("m.json"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("calib.csv:3"), "{err}");
}

#[test]
fn evaluate_against_dataset() {
    let dir = tempdir().unwrap();
    let ds = dir.path().join("ds");
    std::fs::create_dir_all(ds.join("frames")).unwrap();
    let frames = write_eye_frames(dir.path(), 2);
    for k in 0..2 {
        std::fs::copy(frames.join(format!("{k:04}.pgm")), ds.join(format!("frames/{k:04}.pgm"))).unwrap();
    }
    std::fs::write(ds.join("truth.csv"), "frame,sx,sy\n0,100,100\n1,200,100\n").unwrap();
    let est = dir.path().join("est.csv");
    std::fs::write(&est, "frame,sx,sy,kind,recalibrated\n0,110,100,2d,false\n1,190,104,2d,false\n").unwrap();
    let json = dir.path().join("r.json");
    run_ok(&["evaluate", "--estimates", s(&est), "--dataset", s(&ds), "--out", s(&json)]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(r["mean_px"][0], 10.0);
    assert_eq!(r["mean_px"][1], 2.0);
    assert_eq!(r["std_px"][1], 2.0);
}
