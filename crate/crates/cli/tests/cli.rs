use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use burstnav::iq_io::{read_csv, read_header, Cell, Table};
use burstnav::signal_model::uplink;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_burstnav"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn csv_stdout(out: &Output) -> Table {
    burstnav::iq_io::read_csv_from(out.stdout.as_slice()).unwrap()
}

fn floats(t: &Table, col: usize) -> Vec<f64> {
    t.rows.iter().map(|r| r[col].as_f64().unwrap()).collect()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

const SMALL_TRAIN: [&str; 10] = [
    "--bursts",
    "5",
    "--bri-ms",
    "0.1",
    "--burst-duration",
    "40e-6",
    "--lead",
    "30000",
    "--trail",
    "25000",
];

#[test]
fn synth_length_is_guards_plus_bursts() {
    let d = Dir::new();
    let iq = d.s("t.iq");
    let mut args = vec!["synth", "--out", &iq];
    args.extend(SMALL_TRAIN);
    ok(&args);
    let spacing = (0.1e-3 * uplink::SAMPLE_RATE).round() as u64;
    let burst = (40e-6 * uplink::SAMPLE_RATE).round() as u64;
    let header = read_header(Path::new(&iq)).unwrap();
    assert_eq!(header.num_samples, 30_000 + 4 * spacing + burst + 25_000);
    assert_eq!(header.sample_rate_hz, uplink::SAMPLE_RATE);
}

#[test]
fn synth_same_seed_same_bytes() {
    let d = Dir::new();
    let (a, b, c) = (d.s("a.iq"), d.s("b.iq"), d.s("c.iq"));
    for (path, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let mut args = vec!["synth", "--out", path, "--snr-db", "0", "--seed", seed];
        args.extend(SMALL_TRAIN);
        ok(&args);
    }
    let read = |p: &str| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn synth_default_bri_spacing() {
    let d = Dir::new();
    let (iq, truth) = (d.s("t.iq"), d.s("truth.csv"));
    ok(&[
        "synth", "--out", &iq, "--truth", &truth, "--bursts", "2", "--format", "ci16le",
    ]);
    let t = read_csv(Path::new(&truth)).unwrap();
    let starts: Vec<i64> = t.rows.iter().map(|r| r[1].as_i64().unwrap()).collect();
    assert_eq!(starts[1] - starts[0], 3_751_875);
    assert_eq!((6.67e-3 * 562.5e6f64).round() as i64, 3_751_875);
}

#[test]
fn detect_recovers_every_burst() {
    let d = Dir::new();
    let (iq, truth, events) = (d.s("t.iq"), d.s("truth.csv"), d.s("ev.csv"));
    let mut args = vec![
        "synth",
        "--out",
        &iq,
        "--truth",
        &truth,
        "--snr-db",
        "-3",
        "--freq-offset",
        "15e3",
    ];
    args.extend(SMALL_TRAIN);
    ok(&args);
    ok(&["detect", "--input", &iq, "--out", &events]);
    let truth = read_csv(Path::new(&truth)).unwrap();
    let ev = read_csv(Path::new(&events)).unwrap();
    assert_eq!(
        ev.columns,
        vec!["sample_index", "statistic", "low_confidence"]
    );
    let found: Vec<i64> = ev.rows.iter().map(|r| r[0].as_i64().unwrap()).collect();
    let expected: Vec<i64> = truth.rows.iter().map(|r| r[1].as_i64().unwrap()).collect();
    assert_eq!(found, expected);
    assert!(ev.rows.iter().all(|r| r[2] == Cell::Bool(false)));
}

#[test]
fn detect_noise_only_is_empty() {
    let d = Dir::new();
    let iq = d.s("n.iq");
    ok(&[
        "synth", "--out", &iq, "--bursts", "0", "--lead", "200000", "--trail", "0", "--snr-db", "0",
    ]);
    let out = ok(&["detect", "--input", &iq]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "sample_index,statistic,low_confidence\n"
    );
}

#[test]
fn invalid_threshold_rejected_before_output() {
    let d = Dir::new();
    let (iq, events) = (d.s("t.iq"), d.path("ev.csv"));
    let mut args = vec!["synth", "--out", &iq];
    args.extend(SMALL_TRAIN);
    ok(&args);
    let out = run(&[
        "detect",
        "--input",
        &iq,
        "--threshold",
        "1.1",
        "--out",
        events.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
    assert!(!events.exists());
}

#[test]
fn malformed_flags_never_start() {
    let d = Dir::new();
    let iq = d.path("t.iq");
    let out = run(&["synth", "--out", iq.to_str().unwrap(), "--bursts", "many"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!iq.exists());
    let out = run(&["synth", "--out", d.path("missing/t.iq").to_str().unwrap()]);
    assert!(!out.status.success());
    let out = run(&["crb", "--rx-gain", "2", "--rx-gain-db", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["snr", "--noise-temperature", "-5"]);
    assert!(!out.status.success());
}

#[test]
fn estimate_recovers_known_offsets() {
    let d = Dir::new();
    let (iq, truth, events, est) = (d.s("t.iq"), d.s("truth.csv"), d.s("ev.csv"), d.s("est.csv"));
    let mut args = vec![
        "synth",
        "--out",
        &iq,
        "--truth",
        &truth,
        "--snr-db",
        "10",
        "--freq-offset",
        "250e3",
        "--freq-slope",
        "-1e8",
    ];
    args.extend(SMALL_TRAIN);
    ok(&args);
    ok(&["detect", "--input", &iq, "--out", &events]);
    ok(&[
        "estimate", "--input", &iq, "--events", &events, "--out", &est,
    ]);
    let truth = read_csv(Path::new(&truth)).unwrap();
    let est = read_csv(Path::new(&est)).unwrap();
    assert_eq!(est.columns, vec!["l_j", "coarse", "fine", "g_j"]);
    assert_eq!(est.rows.len(), 5);
    let expected = floats(&truth, 2);
    let fine = floats(&est, 2);
    // The fine estimate's standard deviation is about 100 Hz here.
    for (f, e) in fine.iter().zip(&expected) {
        assert!((f - e).abs() < 500.0, "{f} vs {e}");
    }
    // Offsets straddle the first branch boundary at fs / (2 L) = 234.375 kHz.
    let branches: Vec<i64> = est.rows.iter().map(|r| r[3].as_i64().unwrap()).collect();
    assert_eq!(branches, vec![1, 1, 0, 0, 0]);
}

#[test]
fn estimate_defaults_and_empty_events() {
    let d = Dir::new();
    let (iq, events, empty) = (d.s("t.iq"), d.s("ev.csv"), d.s("empty.csv"));
    let mut args = vec![
        "synth",
        "--out",
        &iq,
        "--snr-db",
        "0",
        "--freq-offset",
        "40e3",
    ];
    args.extend(SMALL_TRAIN);
    ok(&args);
    ok(&["detect", "--input", &iq, "--out", &events]);
    let implicit = ok(&["estimate", "--input", &iq, "--events", &events]).stdout;
    let step = (uplink::SAMPLE_RATE / (4.0 * 9820.0)).to_string();
    let explicit = ok(&[
        "estimate",
        "--input",
        &iq,
        "--events",
        &events,
        "--grid-min",
        "-600e3",
        "--grid-max",
        "600e3",
        "--grid-step",
        &step,
    ])
    .stdout;
    assert_eq!(implicit, explicit);
    std::fs::write(&empty, "sample_index,statistic,low_confidence\n").unwrap();
    let out = ok(&["estimate", "--input", &iq, "--events", &empty]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "l_j,coarse,fine,g_j\n"
    );
}

#[test]
fn doppler_curve_shapes() {
    let out = ok(&[
        "doppler",
        "--cross-track-km",
        "-400,0,200,400,800",
        "--t-step",
        "0.5",
    ]);
    let t = csv_stdout(&out);
    let time = floats(&t, 0);
    let zero = time.iter().position(|&x| x == 0.0).unwrap();
    let center = floats(&t, 2);
    assert_eq!(center[zero], 11.7e9);
    assert!(center[zero - 1] > 11.7e9 && center[zero + 1] < 11.7e9);
    assert_eq!(floats(&t, 1), floats(&t, 4));
    let slope = |col: usize| {
        floats(&t, col)
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    };
    let slopes: Vec<f64> = [2, 3, 4, 5].iter().map(|&c| slope(c)).collect();
    assert!(slopes.windows(2).all(|w| w[1] < w[0]), "{slopes:?}");
}

#[test]
fn crb_map_properties() {
    let out = ok(&[
        "crb",
        "--distances-km",
        "0,1,10,200,300,400,500,600,700",
        "--tracking-spans-min",
        "1,2,4,8",
    ]);
    let t = csv_stdout(&out);
    assert_eq!(
        t.columns,
        vec!["cross_track", "rx_gain_db", "tracking_span", "bound"]
    );
    assert_eq!(t.rows.len(), 36);
    let bound = |d: f64, span: f64| {
        t.rows
            .iter()
            .find(|r| r[0].as_f64() == Some(d) && r[2].as_f64() == Some(span))
            .unwrap()[3]
            .as_f64()
            .unwrap()
    };
    for d in [200e3, 300e3, 400e3, 500e3, 600e3, 700e3] {
        assert!(bound(d, 240.0) < 1000.0);
    }
    assert!(bound(0.0, 240.0).is_infinite());
    assert!(bound(1e3, 240.0) > bound(10e3, 240.0) && bound(10e3, 240.0) > bound(200e3, 240.0));
    let spans: Vec<f64> = [60.0, 120.0, 240.0, 480.0]
        .iter()
        .map(|&s| bound(400e3, s))
        .collect();
    assert!(spans.windows(2).all(|w| w[1] < w[0]), "{spans:?}");
}

fn snr_fields(args: &[&str]) -> (f64, f64, f64) {
    let out = String::from_utf8(ok(args).stdout).unwrap();
    assert_eq!(out.lines().count(), 1);
    let v: Vec<f64> = out
        .split_whitespace()
        .map(|kv| kv.split('=').nth(1).unwrap().parse().unwrap())
        .collect();
    (v[0], v[1], v[2])
}

#[test]
fn snr_report() {
    let (db, linear, sigma) = snr_fields(&["snr"]);
    assert!((db + 12.844).abs() < 1e-3);
    assert!((10.0 * linear.log10() - db).abs() < 1e-5);
    assert!((sigma - 22_449.4).abs() < 1.0);
    let (_, doubled, _) = snr_fields(&["snr", "--rx-gain", &(2.0 * 10f64.powf(0.8)).to_string()]);
    assert!((doubled / linear - 2.0).abs() < 1e-8);
    // -122 dB(W/m^2/MHz) is 10^-18.2 W/m^2/Hz.
    let (db_hz, ..) = snr_fields(&["snr", "--flux-density", "6.309573444801929e-19"]);
    assert!((db_hz - db).abs() < 1e-5);
}
