use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden")
        .join(name)
}

fn urbani(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_urbani"));
    for a in args {
        cmd.arg(a);
    }
    cmd.env_remove("RUST_LOG").output().expect("spawn urbani")
}

fn models() -> [PathBuf; 2] {
    [golden("classifier.ckpt"), golden("detector.ckpt")]
}

fn map(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let [c, d] = models();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_urbani"));
    cmd.arg("map")
        .arg(input)
        .arg("--classifier")
        .arg(c)
        .arg("--detector")
        .arg(d)
        .arg("--out")
        .arg(out);
    cmd.args(extra).output().expect("spawn urbani")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(urbani(&[]).status.code(), Some(1));
    assert_eq!(urbani(&[&"map"]).status.code(), Some(1));
    assert_eq!(urbani(&[&"train-slumsnet", &"--out", &"x"]).status.code(), Some(1));
    assert_eq!(urbani(&[&"--help"]).status.code(), Some(0));
    assert_eq!(urbani(&[&"--version"]).status.code(), Some(0));
}

#[test]
fn bad_thresholds_and_workers_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    assert_eq!(
        map(dir.path(), &out, &["--score-threshold", "1.5"]).status.code(),
        Some(1)
    );
    assert_eq!(map(dir.path(), &out, &["--workers", "0"]).status.code(), Some(1));
    let [c, d] = models();
    let o = Command::new(env!("CARGO_BIN_EXE_urbani"))
        .arg("map")
        .arg(dir.path())
        .arg("--classifier")
        .arg(c)
        .arg("--detector")
        .arg(d)
        .arg("--out")
        .arg(&out)
        .env("URBANI_CLASS_THRESHOLD", "-0.1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unusable_checkpoints_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let missing = dir.path().join("missing.ckpt");
    let [c, d] = models();
    let o = urbani(&[
        &"map",
        &dir.path(),
        &"--classifier",
        &missing,
        &"--detector",
        &d,
        &"--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    // Each checkpoint in the other's slot.
    let o = urbani(&[
        &"map",
        &dir.path(),
        &"--classifier",
        &d,
        &"--detector",
        &c,
        &"--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let junk = dir.path().join("junk.ckpt");
    fs::write(&junk, b"URBNCKPT garbage").unwrap();
    let o = urbani(&[
        &"map",
        &dir.path(),
        &"--classifier",
        &junk,
        &"--detector",
        &d,
        &"--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = map(&dir.path().join("nowhere"), &dir.path().join("out.csv"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere"));
    let o = urbani(&[
        &"train-slumsnet",
        &"--data",
        &dir.path().join("nowhere"),
        &"--out",
        &dir.path().join("c.ckpt"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere"));
}

#[test]
fn empty_directory_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    let out = dir.path().join("out.csv");
    let o = map(&input, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "latitude,longitude,year,month,day,hour,minute,second,planning_status,person,car,bus,motorbike\n"
    );
    assert!(stderr(&o).contains("0 processed, 0 skipped, 0 missing geo"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn undecodable_and_untagged_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::copy(golden("images/scene0.jpg"), input.join("a.jpg")).unwrap();
    fs::write(input.join("b.jpg"), b"not a jpeg").unwrap();
    image::RgbImage::from_pixel(32, 32, image::Rgb([90, 120, 60]))
        .save(input.join("c.png"))
        .unwrap();

    let out = dir.path().join("out.csv");
    let gj = dir.path().join("out.geojson");
    let o = map(&input, &out, &["--geojson", gj.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stderr(&o).contains("2 processed, 1 skipped, 1 missing geo"),
        "{}",
        stderr(&o)
    );
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(
        csv.lines().nth(1),
        fs::read_to_string(golden("expected.csv")).unwrap().lines().nth(1)
    );
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&gj).unwrap()).unwrap();
    assert_eq!(doc["features"].as_array().unwrap().len(), 1);

    let o = map(&input, &out, &["--keep-missing-geo"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with(",,,,,,,,"), "{}", lines[2]);
    assert_eq!(lines[2].split(',').count(), 13);
}

#[test]
fn inspect_reports_every_section_and_annotates() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("scene1.jpg");
    fs::copy(golden("images/scene1.jpg"), &image).unwrap();
    let [c, d] = models();
    let o = urbani(&[
        &"inspect",
        &image,
        &"--classifier",
        &c,
        &"--detector",
        &d,
        &"--annotate",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for prefix in [
        "image:",
        "planning:",
        "detections:",
        "geo: -1.292100, 36.820000",
        "time: 2019-03-02 16:04:41",
        "annotated:",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(prefix)),
            "missing {prefix:?} in\n{text}"
        );
    }
    let annotated = dir.path().join("scene1_annotated.png");
    let (w, h) = image::image_dimensions(&annotated).unwrap();
    assert_eq!((w, h), image::image_dimensions(&image).unwrap());

    let untagged = dir.path().join("plain.png");
    image::RgbImage::new(40, 20).save(&untagged).unwrap();
    let custom = dir.path().join("boxes.png");
    let o = urbani(&[
        &"inspect",
        &untagged,
        &"--classifier",
        &c,
        &"--detector",
        &d,
        &"--annotate",
        &custom,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("geo: absent"));
    assert!(stdout(&o).contains("time: absent"));
    assert_eq!(image::image_dimensions(&custom).unwrap(), (40, 20));
}

#[test]
fn short_training_runs_write_loadable_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cls = dir.path().join("c.ckpt");
    let det = dir.path().join("d.ckpt");
    let o = urbani(&[
        &"train-slumsnet",
        &"--synthetic",
        &"20",
        &"--preset",
        &"desk",
        &"--epochs",
        &"1",
        &"--steps-per-epoch",
        &"2",
        &"--out",
        &cls,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("(16 training / 4 validation images)"),
        "{}",
        stdout(&o)
    );
    let metrics = fs::read_to_string(dir.path().join("c.ckpt.metrics")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let o = urbani(&[
        &"train-detector",
        &"--synthetic",
        &"2",
        &"--preset",
        &"desk",
        &"--steps",
        &"2",
        &"--batch-size",
        &"2",
        &"--out",
        &det,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(2 steps, 2 images)"), "{}", stdout(&o));

    let o = urbani(&[
        &"inspect",
        &golden("images/scene0.jpg"),
        &"--classifier",
        &cls,
        &"--detector",
        &det,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = urbani(&[
        &"train-detector",
        &"--synthetic",
        &"2",
        &"--classes",
        &"person,car",
        &"--out",
        &det,
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = urbani(&[
        &"train-slumsnet",
        &"--synthetic",
        &"20",
        &"--batch-size",
        &"0",
        &"--out",
        &cls,
    ]);
    assert_eq!(o.status.code(), Some(1));
}
