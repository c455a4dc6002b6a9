use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use psgd_sim::idx::{write_idx, IdxImages};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psgd-sim")).args(args).output().expect("spawn psgd-sim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--synth", "480,10,0", "--iters", "40"];

#[test]
fn identical_runs_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = sim(&[&["run", "--scheme", "cada", "--seed", "7", "--out", path(out)], SMALL].concat());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,t_iter,t_cum,n_dispatch,n_upload,comm_iter,comm_cum,comp_iter,comp_cum,loss");
    assert_eq!(lines.len(), 41);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn different_seeds_write_different_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    sim(&[&["run", "--seed", "1", "--out", path(&a)], SMALL].concat());
    sim(&[&["run", "--seed", "2", "--out", path(&b)], SMALL].concat());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# settings\nscheme = d-adam\nsynth = 480,10,0\niters = 5\nloss-threshold = 0\n").unwrap();
    let out = dir.path().join("o.csv");
    let o = sim(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 6);
    let o = sim(&["run", "--config", path(&cfg), "--iters", "3", "--out", path(&out)]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    // d-adam: every worker downloads and uploads
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(5) == Some("24")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // configuration
    assert_eq!(code(&sim(&["run", "--workers", "10", "--groups", "3", "--group-size", "4"])), 2);
    assert_eq!(code(&sim(&["run", "--scheme", "nope"])), 2);
    assert_eq!(code(&sim(&["run", "--lr", "-1"])), 2);
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "colour = blue\n").unwrap();
    assert_eq!(code(&sim(&["run", "--config", path(&bad)])), 2);
    // divergence
    let o = sim(&["run", "--scheme", "d-sgd", "--lr", "2.6", "--synth", "480,10,0"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // io
    let missing = dir.path().join("missing");
    assert_eq!(code(&sim(&["run", "--config", path(&missing)])), 4);
    let o = sim(&["run", "--mnist-images", path(&missing), "--mnist-labels", path(&missing)]);
    assert_eq!(code(&o), 4);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(code(&sim(&[&["run", "--out", path(&unwritable)], SMALL].concat())), 4);
}

fn digits(dir: &Path, count: usize) -> (String, String) {
    let pixels = (0..count * 28 * 28).map(|i| ((i * 37 + i / 784 * 11) % 256) as u8).collect();
    let images = IdxImages { count, rows: 28, cols: 28, pixels };
    let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
    let (ip, lp) = (dir.join("images.idx"), dir.join("labels.idx"));
    write_idx(&ip, &lp, &images, &labels).unwrap();
    (path(&ip).to_owned(), path(&lp).to_owned())
}

#[test]
fn mnist_shaped_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = digits(dir.path(), 300);
    let out = dir.path().join("m.csv");
    for scheme in ["cada", "g-cada"] {
        let o = sim(&[
            "run",
            "--scheme",
            scheme,
            "--mnist-images",
            &images,
            "--mnist-labels",
            &labels,
            "--limit",
            "240",
            "--iters",
            "20",
            "--loss-threshold",
            "0",
            "--out",
            path(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 21);
        let losses: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(losses.last().unwrap() < &losses[0]);
    }
}

#[test]
fn mismatched_idx_pair_is_an_io_class_error() {
    let dir = tempfile::tempdir().unwrap();
    let (images, _) = digits(dir.path(), 24);
    let other = tempfile::tempdir().unwrap();
    let (_, labels) = digits(other.path(), 12);
    let o = sim(&["run", "--mnist-images", &images, "--mnist-labels", &labels]);
    assert_eq!(code(&o), 4);
}

#[test]
fn compare_writes_one_series_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = sim(&[&["compare", "--seed", "3", "--out", path(&out)], SMALL].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for scheme in ["d-sgd", "d-adam", "cada", "g-cada"] {
        let text = fs::read_to_string(out.join(format!("{scheme}.csv"))).unwrap();
        let limit = match scheme {
            "g-cada" => 15,
            _ => 24,
        };
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(5).unwrap().parse::<u64>().unwrap() <= limit));
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn sweep_summary_is_sorted_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = sim(&[&["sweep", "--schemes", "cada,g-cada", "--seeds", "4", "--out", path(out)], SMALL].concat());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let keys: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().to_owned(), f.next().unwrap().to_owned())
        })
        .collect();
    assert_eq!(keys.len(), 8);
    assert_eq!(keys[0], ("cada".to_owned(), "0".to_owned()));
    assert_eq!(keys[7], ("g-cada".to_owned(), "3".to_owned()));
}

#[test]
fn analyze_prints_baseline_and_lazy_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("an.csv");
    let o = sim(&["analyze", "--synth", "480,10,0", "--trials", "2000", "--csv", path(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(["d-adam", "cada", "g-cada"].iter().all(|s| stdout.contains(s)));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
}
