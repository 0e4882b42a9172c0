//! Command-line behavior through the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsi_unmix::grid::{Direction, GridDims};
use hsi_unmix::io::{read_cube, read_endmembers_csv, read_raster, write_raster};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsi-unmix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small simulated scene in `dir`.
fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "simulate", "--height", "8", "--width", "7", "--bands", "12", "--num-endmembers", "3",
        "--regions", "3", "--beta", "1", "--seed", "3", "--out-dir", s(dir),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn evaluate_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {text:?}"))
        .parse()
        .unwrap()
}

#[test]
fn simulate_outputs_read_back_with_their_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("scene");
    simulate(&dir, &[]);
    let cube = read_cube(&dir.join("cube.hsi")).unwrap();
    assert_eq!((cube.bands(), cube.dims()), (12, GridDims::new(8, 7).unwrap()));
    let lib = read_endmembers_csv(&dir.join("endmembers.csv")).unwrap();
    assert_eq!((lib.bands(), lib.count()), (12, 3));
    for name in [
        "abundance_00.raster",
        "abundance_01.raster",
        "abundance_02.raster",
        "dsm.raster",
        "dsm_clean.raster",
        "edge_mask.raster",
        "labels.raster",
    ] {
        let (dims, values) = read_raster(&dir.join(name)).unwrap();
        assert_eq!((dims.height(), dims.width(), values.len()), (8, 7, 56), "{name}");
    }
    assert!(!dir.join("abundance_03.raster").exists());
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.lines().any(|l| l == "seed = 3"));
    assert!(!manifest.contains("out-dir"));
}

#[test]
fn noiseless_cube_is_exactly_the_mixture() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("scene");
    simulate(&dir, &["--snr-hsi", "inf"]);
    let cube = read_cube(&dir.join("cube.hsi")).unwrap();
    let lib = read_endmembers_csv(&dir.join("endmembers.csv")).unwrap();
    let n = cube.dims().len();
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|m| read_raster(&dir.join(format!("abundance_{m:02}.raster"))).unwrap().1)
        .collect();
    let a = nalgebra::DMatrix::from_fn(3, n, |m, i| planes[m][i]);
    assert_eq!(cube.data(), &(lib.data() * a));
}

#[test]
fn noiseless_unmix_recovers_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let est = tmp.path().join("est");
    simulate(&scene, &["--snr-hsi", "inf"]);
    let out = run(&[
        "unmix", "--cube", s(&scene.join("cube.hsi")), "--endmembers",
        s(&scene.join("endmembers.csv")), "--weight-kind", "none", "--lambda", "0", "--max-iter",
        "20000", "--tol", "1e-11", "--out-dir", s(&est),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(est.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,primal_residual,dual_residual\n"));
    assert!(trace.lines().count() > 1);

    let out = run(&[
        "evaluate", "--truth-dir", s(&scene), "--estimate-dir", s(&est), "--edge-mask",
        s(&scene.join("edge_mask.raster")),
    ]);
    assert_eq!(code(&out), 0);
    assert!(evaluate_value(&out, "rmse_whole") < 1e-4);
    assert!(evaluate_value(&out, "rmse_edge") < 1e-4);
}

#[test]
fn unmix_dsm_flag_rules() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    simulate(&scene, &[]);
    let (cube, lib, dsm) = (
        scene.join("cube.hsi"),
        scene.join("endmembers.csv"),
        scene.join("dsm.raster"),
    );
    let out_dir = tmp.path().join("out");
    let base = ["unmix", "--cube", s(&cube), "--endmembers", s(&lib), "--out-dir", s(&out_dir)];

    let missing = run(&[&base[..], &["--weight-kind", "dsm"]].concat());
    assert_eq!(code(&missing), 1);
    let extra = run(&[&base[..], &["--weight-kind", "hi", "--dsm", s(&dsm)]].concat());
    assert_eq!(code(&extra), 1);

    let small = tmp.path().join("small.raster");
    write_raster(&small, GridDims::new(2, 2).unwrap(), &[0.0; 4]).unwrap();
    let mismatch = run(&[&base[..], &["--weight-kind", "dsm", "--dsm", s(&small)]].concat());
    assert_eq!(code(&mismatch), 2);

    let ok = run(&[&base[..], &["--weight-kind", "dsm", "--dsm", s(&dsm), "--max-iter", "20"]].concat());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
}

fn weight_planes(dir: &Path) -> Vec<Vec<f64>> {
    Direction::ALL
        .iter()
        .map(|d| read_raster(&dir.join(format!("weights_{}.raster", d.name()))).unwrap().1)
        .collect()
}

#[test]
fn weights_of_flat_step_and_constant_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dims = GridDims::new(5, 6).unwrap();
    let flat = tmp.path().join("flat.raster");
    write_raster(&flat, dims, &[3.0; 30]).unwrap();
    let step = tmp.path().join("step.raster");
    let step_heights: Vec<f64> = (0..30).map(|i| if dims.coords(i).1 < 3 { 0.0 } else { 2.0 }).collect();
    write_raster(&step, dims, &step_heights).unwrap();
    let cube_path = tmp.path().join("const.hsi");
    let cube = hsi_unmix::SpectralCube::new(dims, nalgebra::DMatrix::from_element(4, 30, 0.3)).unwrap();
    hsi_unmix::io::write_cube(&cube_path, &cube).unwrap();

    let flat_out = tmp.path().join("w_flat");
    let out = run(&["weights", "--kind", "dsm", "--dsm", s(&flat), "--out-dir", s(&flat_out)]);
    assert_eq!(code(&out), 0);
    let planes = weight_planes(&flat_out);
    for i in 0..30 {
        if dims.degree(i) == 4 {
            for plane in &planes {
                assert_eq!(plane[i], 0.25);
            }
        }
    }
    let summary = std::fs::read_to_string(flat_out.join("weights_summary.csv")).unwrap();
    assert!(summary.starts_with("direction,edges,min,mean,max\n"));
    assert_eq!(summary.lines().count(), 6);

    let step_out = tmp.path().join("w_step");
    let out = run(&[
        "weights", "--kind", "dsm", "--dsm", s(&step), "--sigma-height", "1e-4", "--out-dir",
        s(&step_out),
    ]);
    assert_eq!(code(&out), 0);
    let planes = weight_planes(&step_out);
    for (k, d) in Direction::ALL.iter().enumerate() {
        for i in 0..30 {
            if let Some(j) = dims.neighbor(i, *d) {
                if (dims.coords(i).1 < 3) != (dims.coords(j).1 < 3) {
                    assert!(planes[k][i] < 1e-6, "cross-step weight {}", planes[k][i]);
                }
            }
        }
    }

    let cube_out = tmp.path().join("w_cube");
    let out = run(&["weights", "--kind", "hi", "--cube", s(&cube_path), "--out-dir", s(&cube_out)]);
    assert_eq!(code(&out), 0);
    assert_eq!(weight_planes(&cube_out), weight_planes(&flat_out));

    let none = run(&["weights", "--kind", "hi", "--dsm", s(&flat), "--out-dir", s(&cube_out)]);
    assert_eq!(code(&none), 1);
}

fn sweep_dir(tmp: &Path, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let out_dir = tmp.join(name);
    let mut args = vec![
        "sweep", "--seeds", "4", "--height", "6", "--width", "6", "--bands", "8",
        "--num-endmembers", "2", "--regions", "2", "--beta", "1", "--max-iter", "30", "--out-dir", s(&out_dir),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    (out_dir, out)
}

#[test]
fn sweep_csv_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let (one, out) = sweep_dir(
        tmp.path(),
        "one",
        &["--kinds", "dsm", "--lambdas", "0.1", "--sigmas", "0.01"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(one.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 2);
    assert!(!one.join("aggregate.csv").exists());

    let (many, out) = sweep_dir(
        tmp.path(),
        "many",
        &["--seeds", "4,5", "--kinds", "none,hi,dsm", "--lambdas", "0.1,1", "--sigmas", "0.01,0.1"],
    );
    assert_eq!(code(&out), 0);
    let summary = std::fs::read_to_string(many.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);
    let records = std::fs::read_to_string(many.join("records.csv")).unwrap();
    // per scene: none 2 lambdas, hi and dsm 2 sigmas x 2 lambdas
    assert_eq!(records.lines().count(), 1 + 2 * (2 + 4 + 4));
    let curves = std::fs::read_to_string(many.join("lambda_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 3 * 2 * 2);
    let aggregate = std::fs::read_to_string(many.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 2 + 4 + 4);

    let (_, out) = sweep_dir(tmp.path(), "none", &["--seeds", ""]);
    assert_ne!(code(&out), 0);
}

fn abundance_dir(root: &Path, name: &str, planes: &[[f64; 2]]) -> PathBuf {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    let dims = GridDims::new(1, 2).unwrap();
    for (m, plane) in planes.iter().enumerate() {
        write_raster(&dir.join(format!("abundance_{m:02}.raster")), dims, plane).unwrap();
    }
    dir
}

#[test]
fn evaluate_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = abundance_dir(tmp.path(), "truth", &[[0.5, 0.5], [0.5, 0.5]]);
    let shifted = abundance_dir(tmp.path(), "shifted", &[[0.6, 0.4], [0.4, 0.6]]);
    let edge = abundance_dir(tmp.path(), "edge", &[[0.8, 0.5], [0.1, 0.5]]);
    let mask = tmp.path().join("mask.raster");
    write_raster(&mask, GridDims::new(1, 2).unwrap(), &[1.0, 0.0]).unwrap();

    let same = run(&["evaluate", "--truth-dir", s(&truth), "--estimate-dir", s(&truth)]);
    assert_eq!(String::from_utf8(same.stdout).unwrap(), "rmse_whole,0.000000\n");

    let report = tmp.path().join("report.csv");
    let out = run(&[
        "evaluate", "--truth-dir", s(&truth), "--estimate-dir", s(&shifted), "--out", s(&report),
    ]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "rmse_whole,0.100000\n");
    assert_eq!(std::fs::read_to_string(&report).unwrap(), "rmse_whole,0.100000\n");

    // errors (0.3, 0.4) on the masked pixel only
    let out = run(&[
        "evaluate", "--truth-dir", s(&truth), "--estimate-dir", s(&edge), "--edge-mask", s(&mask),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1), Some("rmse_edge,0.353553"));

    let three = abundance_dir(tmp.path(), "three", &[[0.5, 0.5], [0.5, 0.5], [0.0, 0.0]]);
    let out = run(&["evaluate", "--truth-dir", s(&truth), "--estimate-dir", s(&three)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&run(&["unmix", "--cube", "x"])), 1);

    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("file");
    std::fs::write(&file, b"").unwrap();
    let under_file = file.join("out");
    let out = run(&["simulate", "--height", "4", "--width", "4", "--bands", "6", "--num-endmembers",
        "2", "--regions", "2", "--beta", "1", "--out-dir", s(&under_file)]);
    assert_eq!(code(&out), 3);

    let missing = tmp.path().join("missing.hsi");
    let out = run(&["weights", "--kind", "hi", "--cube", s(&missing), "--out-dir", s(tmp.path())]);
    assert_eq!(code(&out), 3);

    let bad = tmp.path().join("bad.hsi");
    std::fs::write(&bad, b"NOTACUBE\n").unwrap();
    let out = run(&["weights", "--kind", "hi", "--cube", s(&bad), "--out-dir", s(tmp.path())]);
    assert_eq!(code(&out), 2);

    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let out = run(&["simulate", "--config", s(&cfg), "--out-dir", s(tmp.path())]);
    assert_eq!(code(&out), 1);
}
