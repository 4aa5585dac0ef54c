//! Session archives written here must open with an unrelated zip reader, and
//! archives from other tools must load. Skipped when python3 is unavailable.

use std::fs;
use std::process::Command;

use medsensor::ingest::{self, AccelSample, AnnotationMark};

fn python() -> Option<Command> {
    let ok = Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success());
    ok.then(|| Command::new("python3"))
}

fn sample_session() -> (Vec<AccelSample>, Vec<AnnotationMark>) {
    let samples = (0..100)
        .map(|i| AccelSample::new(i * 40, i as f32 * 0.25, -1.5, 9.81))
        .collect();
    (samples, vec![AnnotationMark::start(400), AnnotationMark::end(2000)])
}

#[test]
fn python_reads_our_archives() {
    let Some(mut py) = python() else {
        eprintln!("python3 not found, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let (samples, marks) = sample_session();
    let path = dir.path().join("s01.zip");
    fs::write(&path, ingest::write_session_archive(&samples, &marks).unwrap()).unwrap();

    let script = r#"
import sys, zipfile
z = zipfile.ZipFile(sys.argv[1])
assert z.testzip() is None
print(sorted(z.namelist()))
print(z.read("sensor.csv").decode().splitlines()[2])
print(z.read("annotation.csv").decode().splitlines()[1:])
"#;
    let out = py.arg("-c").arg(script).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "['annotation.csv', 'sensor.csv']");
    assert_eq!(lines[1], "40,0.25,-1.5,9.81");
    assert_eq!(lines[2], "['400,START', '2000,END']");
}

#[test]
fn we_read_python_archives() {
    let Some(mut py) = python() else {
        eprintln!("python3 not found, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s01.zip");
    let (samples, marks) = sample_session();
    let sensor = ingest::write_sensor_csv(&samples);
    let annotation = ingest::write_annotation_csv(&marks);

    let script = r#"
import sys, zipfile
with zipfile.ZipFile(sys.argv[1], "w", zipfile.ZIP_DEFLATED) as z:
    z.writestr("annotation.csv", sys.argv[3])
    z.writestr("sensor.csv", sys.argv[2])
"#;
    let out = py.arg("-c").arg(script).arg(&path).arg(&sensor).arg(&annotation).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (series, loaded) = ingest::load_session_file(&path, "p01", "s01").unwrap();
    assert_eq!(series.samples, samples);
    assert_eq!(loaded, marks);
}
