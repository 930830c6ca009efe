use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anatomy_guide::io::{read_volume, save, Datatype};
use anatomy_guide::{Dims, Mask, ScalarGrid, Spacing};
use tempfile::tempdir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anatomy-guide"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn spacing() -> Spacing {
    Spacing::new(2.0, 1.0, 1.0).unwrap()
}

fn write_masks(dir: &Path) {
    let d = Dims::new(8, 12, 12).unwrap();
    let ooi = Mask::from_fn(d, spacing(), |c| {
        (2..6).contains(&c.z) && (3..9).contains(&c.y) && (3..9).contains(&c.x)
    })
    .unwrap();
    let tumor = Mask::from_fn(d, spacing(), |c| c.z == 4 && c.y == 5 && (5..7).contains(&c.x)).unwrap();
    save(&ooi, Datatype::Uint8, dir.join("ooi.nii")).unwrap();
    save(&tumor, Datatype::Uint8, dir.join("tumor.nii")).unwrap();
    save(
        &Mask::filled(d, spacing(), false).unwrap(),
        Datatype::Uint8,
        dir.join("empty.nii"),
    )
    .unwrap();
}

#[test]
fn psm_sums_to_one_after_reread() {
    let dir = tempdir().unwrap();
    write_masks(dir.path());
    let out = run(
        dir.path(),
        &[
            "psm",
            "--ooi",
            "ooi.nii",
            "--tumor",
            "tumor.nii",
            "--lambda",
            "0.33",
            "--patch",
            "4,6,6",
            "--out",
            "s.nii",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (s, meta) = read_volume(dir.path().join("s.nii")).unwrap();
    assert_eq!(meta.datatype, Datatype::Float32);
    assert!((s.sum() - 1.0).abs() <= 1e-6);
}

#[test]
fn sample_count_zero_is_usage_error() {
    let dir = tempdir().unwrap();
    let out = run(dir.path(), &["sample", "--psm", "s.nii", "--count", "0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn randomized_commands_need_a_seed() {
    let dir = tempdir().unwrap();
    write_masks(dir.path());
    let out = run(
        dir.path(),
        &["ssl-mask", "--ct", "ooi.nii", "--wall", "tumor.nii", "--out", "x.nii"],
    );
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("c.json"), r#"{"seed": 4}"#).unwrap();
    let out = run(
        dir.path(),
        &[
            "ssl-mask",
            "--ct",
            "ooi.nii",
            "--wall",
            "tumor.nii",
            "--out",
            "x.nii",
            "--config",
            "c.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn empty_prediction_gets_penalty() {
    let dir = tempdir().unwrap();
    write_masks(dir.path());
    let out = run(dir.path(), &["metrics", "--gt", "tumor.nii", "--pred", "empty.nii"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["hd95_mm"], 1000.0);
    assert_eq!(v["dice"], 0.0);
    assert_eq!(v["nsd"], 0.0);
}

#[test]
fn missing_file_exits_1_with_path() {
    let dir = tempdir().unwrap();
    let out = run(dir.path(), &["metrics", "--gt", "nope.nii", "--pred", "nope2.nii"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.nii"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"lamda": 0.3}"#).unwrap();
    let out = run(dir.path(), &["psm", "--config", "bad.json", "--print-config"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("broken.json"), "{").unwrap();
    let out = run(dir.path(), &["psm", "--config", "broken.json", "--print-config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"lambda": 0.5, "mu": 2.0}"#).unwrap();
    let out = run(
        dir.path(),
        &["psm", "--config", "c.json", "--lambda", "0.1", "--print-config"],
    );
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lambda"], 0.1);
    assert_eq!(v["mu"], 2.0);
    assert_eq!(v["nsd_tol_mm"], 4.0);
}

#[test]
fn sample_is_reproducible_and_writes_patches() {
    let dir = tempdir().unwrap();
    write_masks(dir.path());
    let p = dir.path();
    assert!(run(
        p,
        &[
            "psm",
            "--ooi",
            "ooi.nii",
            "--tumor",
            "tumor.nii",
            "--patch",
            "4,6,6",
            "--out",
            "s.nii"
        ]
    )
    .status
    .success());
    let args = [
        "sample", "--psm", "s.nii", "--count", "5", "--seed", "9", "--patch", "4,6,6",
    ];
    let a = run(p, &args);
    let b = run(p, &args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let centers: Vec<[usize; 3]> = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(centers.len(), 5);

    let img = ScalarGrid::from_fn(Dims::new(8, 12, 12).unwrap(), spacing(), |c| c.x as f64).unwrap();
    save(&img, Datatype::Float32, p.join("img.nii")).unwrap();
    let mut with_patches = args.to_vec();
    with_patches.extend(["--image", "img.nii", "--patch-dir", "patches"]);
    assert!(run(p, &with_patches).status.success());
    let (patch, _) = read_volume(p.join("patches/patch_0000.nii")).unwrap();
    assert_eq!(patch.dims().as_array(), [4, 6, 6]);
}

#[test]
fn cohort_metrics_independent_of_jobs() {
    let dir = tempdir().unwrap();
    write_masks(dir.path());
    let cases = r#"[
        {"case_id": "a", "gt": "tumor.nii", "pred": "ooi.nii"},
        {"case_id": "b", "gt": "ooi.nii", "pred": "ooi.nii"},
        {"case_id": "c", "gt": "tumor.nii", "pred": "empty.nii"}
    ]"#;
    fs::write(dir.path().join("cases.json"), cases).unwrap();
    let one = run(dir.path(), &["metrics", "--cases", "cases.json", "--jobs", "1"]);
    let three = run(dir.path(), &["metrics", "--cases", "cases.json", "--jobs", "3"]);
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, three.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1]["case_id"], "b");
    assert_eq!(lines[1]["dice"], 1.0);
    assert_eq!(lines[3]["aggregate"], "mean");
    assert_eq!(lines[3]["cases"], 3);
}

#[test]
fn phantom_outputs_are_byte_identical() {
    let dir = tempdir().unwrap();
    let spec = r#"{"dims": [16, 40, 40], "spacing": [2.0, 1.0, 1.0], "arc_radius_mm": 12.0,
                   "tube_radius_mm": 6.0, "wall_thickness_mm": 2.0, "tumor_radius_mm": 3.0}"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();
    for out in ["a", "b"] {
        let o = run(
            dir.path(),
            &["phantom", "--spec", "spec.json", "--seed", "3", "--out-dir", out],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["ct.nii", "labels.nii", "tumor.nii"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let o = run(dir.path(), &["phantom", "--spec", "spec.json", "--out-dir", "c"]);
    assert_eq!(o.status.code(), Some(2));
}
