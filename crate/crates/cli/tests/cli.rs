use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lepjpeg_testkit::{not_an_image, photographic, progressive};

fn lepjpeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lepjpeg"))
        .args(args)
        .output()
        .expect("run lepjpeg")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn compress_then_decompress() {
    let dir = tempfile::tempdir().unwrap();
    let (jpg, lep, out) = (dir.path().join("a.jpg"), dir.path().join("a.lep"), dir.path().join("b.jpg"));
    let original = photographic(0).bytes;
    fs::write(&jpg, &original).unwrap();
    let r = lepjpeg(&["compress", s(&jpg), s(&lep)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(&fs::read(&lep).unwrap()[..2], &[0xCF, 0x84]);
    let r = lepjpeg(&["decompress", s(&lep), "-o", s(&out)]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), original);
    let r = lepjpeg(&["decompress", s(&lep), "-o", "-"]);
    assert_eq!(r.stdout, original);
}

#[test]
fn progressive_input_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let (jpg, lep) = (dir.path().join("p.jpg"), dir.path().join("p.lep"));
    fs::write(&jpg, progressive(1).bytes).unwrap();
    let r = lepjpeg(&["compress", s(&jpg), s(&lep)]);
    assert_eq!(r.status.code(), Some(10));
    assert!(!lep.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "no temporary files left behind");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = lepjpeg(&["compress", s(&dir.path().join("nope.jpg")), s(&dir.path().join("x.lep"))]);
    assert_eq!(r.status.code(), Some(74));
}

#[test]
fn garbage_container_is_reported_as_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let (bad, out) = (dir.path().join("bad.lep"), dir.path().join("out.jpg"));
    fs::write(&bad, b"definitely not a container").unwrap();
    let r = lepjpeg(&["decompress", s(&bad), "-o", s(&out)]);
    assert_eq!(r.status.code(), Some(65));
    assert!(!out.exists());
}

#[test]
fn chunked_compression_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (jpg, lep, out) = (dir.path().join("a.jpg"), dir.path().join("a.lep"), dir.path().join("b.jpg"));
    let mut original = photographic(2).bytes;
    while original.len() < 150_000 {
        original.extend_from_slice(&photographic(3).bytes);
    }
    fs::write(&jpg, &original).unwrap();
    let r = lepjpeg(&["compress", s(&jpg), s(&lep), "--chunk-size", "65536"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let chunks: Vec<String> = (0..)
        .map(|i| format!("{}.{i}", s(&lep)))
        .take_while(|p| Path::new(p).exists())
        .collect();
    assert_eq!(chunks.len(), original.len().div_ceil(65536));
    let mut args = vec!["decompress"];
    args.extend(chunks.iter().map(String::as_str));
    args.extend(["-o", s(&out)]);
    assert_eq!(lepjpeg(&args).status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), original);
}

#[test]
fn verify_flags_a_corrupted_container() {
    let dir = tempfile::tempdir().unwrap();
    let (jpg, lep) = (dir.path().join("a.jpg"), dir.path().join("a.lep"));
    fs::write(&jpg, photographic(4).bytes).unwrap();
    assert_eq!(lepjpeg(&["compress", s(&jpg), s(&lep)]).status.code(), Some(0));
    assert_eq!(lepjpeg(&["verify", s(&jpg), "--container", s(&lep)]).status.code(), Some(0));
    let mut bytes = fs::read(&lep).unwrap();
    let mid = bytes.len() * 3 / 4;
    bytes[mid] ^= 0xFF;
    fs::write(&lep, bytes).unwrap();
    let r = lepjpeg(&["verify", s(&jpg), "--container", s(&lep)]);
    assert_eq!(r.status.code(), Some(18));
    assert!(String::from_utf8_lossy(&r.stdout).contains("MISMATCH"));
}

#[test]
fn verify_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let jpg = dir.path().join("a.jpg");
    fs::write(&jpg, photographic(5).bytes).unwrap();
    let r = lepjpeg(&["verify", s(&jpg), "--json"]);
    assert_eq!(r.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["status"], "Success");
    assert!(v["breakdown"]["dc"]["compressed"].as_f64().unwrap() > 0.0);
}

#[test]
fn corpus_counts_non_images_separately() {
    let dir = tempfile::tempdir().unwrap();
    let files = dir.path().join("files");
    fs::create_dir_all(files.join("nested")).unwrap();
    for i in 0..4 {
        fs::write(files.join(format!("{i}.jpg")), photographic(i).bytes).unwrap();
    }
    fs::write(files.join("nested/readme.txt"), not_an_image(0).bytes).unwrap();
    let report = dir.path().join("report.jsonl");
    let r = lepjpeg(&["corpus", s(&files), "--jobs", "2", "--report", s(&report)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("NotAnImage") && stdout.contains("+/-"), "{stdout}");
    let lines: Vec<serde_json::Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines.iter().filter(|l| l["status"] == "Success").count(), 4);
    assert_eq!(lines[5]["summary"]["files"], 5);
}

#[test]
fn memory_limit_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (jpg, lep) = (dir.path().join("a.jpg"), dir.path().join("a.lep"));
    fs::write(&jpg, photographic(6).bytes).unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_lepjpeg"))
        .args(["compress", s(&jpg), s(&lep)])
        .env("LEPJPEG_MEM_LIMIT_ENCODE", "100")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(15));
}

#[test]
fn stats_prints_the_layout_total() {
    let r = lepjpeg(&["stats", "--layout"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains(&lepjpeg::model::TOTAL_BINS.to_string()));
}

#[test]
fn bench_runs() {
    let dir = tempfile::tempdir().unwrap();
    let jpg = dir.path().join("a.jpg");
    fs::write(&jpg, photographic(7).bytes).unwrap();
    let r = lepjpeg(&["bench", s(&jpg), "--iterations", "1", "--segments", "1,2"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("Mbps"));
}
