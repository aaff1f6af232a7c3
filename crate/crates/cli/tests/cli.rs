use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;
use std::thread;

use anm_cli::commands::{abalone_options, AbaloneTarget};
use anm_cli::fetch::{fetch_dataset, read_manifest, Dataset, FetchOptions, ABALONE_ROWS, MANIFEST_FILE};
use anm_cli::input::{parse_csv, parse_csv_reader, CellCoding, Column, CsvOptions};
use anm_cli::report::{curve_csv, render, Artifact, Format, InferenceReport};
use discrete_anm::{infer_direction, CurvePoint, PairedSample, RegressionConfig, ValueDomain};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_anm");

/// A file shaped like the abalone data: sex plus eight numeric fields.
fn synthetic_abalone(rows: usize) -> String {
    let mut s = String::new();
    let mut state: u64 = 12345;
    for i in 0..rows {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let sex = ["M", "F", "I"][(state >> 33) as usize % 3];
        let base = match sex {
            "I" => 60,
            _ => 100,
        };
        let len = base + ((state >> 40) % 20) as i64;
        s.push_str(&format!(
            "{sex},{:.3},{:.3},{:.3},0.5,0.2,0.1,0.15,{}\n",
            len as f64 * 0.005,
            (len - 15) as f64 * 0.005,
            (len / 4) as f64 * 0.005,
            i % 20 + 1
        ));
    }
    s
}

fn sample_of(text: &str, opts: &CsvOptions) -> anyhow::Result<PairedSample> {
    parse_csv_reader(text.as_bytes(), opts)
}

#[test]
fn parses_plain_integer_pairs() {
    let s = sample_of("0,1\n1,2\n2,3", &CsvOptions::default()).unwrap();
    assert_eq!(s.rows(), &[(0, 1), (1, 2), (2, 3)]);
    assert_eq!(s.x_domain(), ValueDomain::Integer);
}

#[test]
fn header_names_delimiters_and_domains() {
    let opts = CsvOptions {
        x_col: Column::Name("b".into()),
        y_col: Column::Name("a".into()),
        header: true,
        delimiter: b';',
        x_domain: ValueDomain::Cyclic(12),
        ..CsvOptions::default()
    };
    let s = sample_of("a;b\n5;13\n6;2\n", &opts).unwrap();
    assert_eq!(s.rows(), &[(1, 5), (2, 6)]);
    assert_eq!(s.x_domain(), ValueDomain::Cyclic(12));
}

#[test]
fn quantization_and_value_maps() {
    let opts = CsvOptions {
        x_coding: CellCoding::Map("I=0,M=1,F=2".parse().unwrap()),
        y_coding: CellCoding::Quantize { step: 0.005 },
        ..CsvOptions::default()
    };
    let s = sample_of("M,0.455\nF,0.53\nI,0.33\n", &opts).unwrap();
    assert_eq!(s.rows(), &[(1, 91), (2, 106), (0, 66)]);
}

#[test]
fn parse_errors_name_row_and_column() {
    let err = sample_of("0,1\n1,x\n", &CsvOptions::default()).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("column 1"), "{err}");

    let err = sample_of("0,1\n1\n", &CsvOptions::default()).unwrap_err().to_string();
    assert!(err.contains("missing column 1"), "{err}");

    let opts = CsvOptions {
        x_col: Column::Name("z".into()),
        header: true,
        ..CsvOptions::default()
    };
    let err = sample_of("a,b\n1,2\n", &opts).unwrap_err().to_string();
    assert!(err.contains("missing column \"z\""), "{err}");

    assert!(sample_of("", &CsvOptions::default()).is_err());
    let header_only = CsvOptions {
        header: true,
        ..CsvOptions::default()
    };
    assert!(sample_of("a,b\n", &header_only).is_err());

    let mapped = CsvOptions {
        x_coding: CellCoding::Map("I=0".parse().unwrap()),
        ..CsvOptions::default()
    };
    assert!(sample_of("Q,1\n", &mapped)
        .unwrap_err()
        .to_string()
        .contains("not in value map"));
}

#[test]
fn abalone_preset_keeps_the_file_prefix() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("abalone.data");
    let text = synthetic_abalone(ABALONE_ROWS);
    std::fs::write(&path, &text).unwrap();

    let s = parse_csv(&path, &abalone_options(AbaloneTarget::Length, ValueDomain::Integer)).unwrap();
    assert_eq!(s.len(), 1000);
    let all = parse_csv(
        &path,
        &CsvOptions {
            limit: None,
            ..abalone_options(AbaloneTarget::Length, ValueDomain::Integer)
        },
    )
    .unwrap();
    assert_eq!(all.len(), ABALONE_ROWS);
    assert_eq!(&all.rows()[..1000], s.rows());

    let xs: std::collections::BTreeSet<i64> = s.xs().into_iter().collect();
    assert_eq!(xs.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    let first = text.lines().next().unwrap();
    let len: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(s.rows()[0].1, (len / 0.005).round() as i64);
}

/// Serves `body` over HTTP for `requests` connections and returns the URL.
fn serve(body: String, requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap() > 0 && line != "\r\n" {
                line.clear();
            }
            let head = format!(
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nContent-Type: text/plain\r\nConnection: close\r\n\r\n",
                body.len()
            );
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(body.as_bytes()).unwrap();
        }
    });
    format!("http://{addr}/abalone.data")
}

fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/abalone.data")
}

fn opts(dir: &Path, url: String) -> FetchOptions {
    FetchOptions {
        cache_dir: dir.to_path_buf(),
        url,
        timeout: std::time::Duration::from_secs(5),
    }
}

#[test]
fn fetch_downloads_once_then_hits_the_cache() {
    let dir = TempDir::new().unwrap();
    let body = synthetic_abalone(ABALONE_ROWS);
    let first = fetch_dataset(Dataset::Abalone, &opts(dir.path(), serve(body.clone(), 1))).unwrap();
    assert!(!first.from_cache);
    assert_eq!(first.rows, ABALONE_ROWS);
    assert_eq!(std::fs::read_to_string(&first.path).unwrap(), body);
    let manifest = read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.get("abalone.data"), Some(&first.sha256));

    let second = fetch_dataset(Dataset::Abalone, &opts(dir.path(), dead_url())).unwrap();
    assert!(second.from_cache);
    assert_eq!(second.path, first.path);
    assert_eq!(second.sha256, first.sha256);
}

#[test]
fn fetch_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let body = synthetic_abalone(ABALONE_ROWS);
    let f = fetch_dataset(Dataset::Abalone, &opts(dir.path(), serve(body.clone(), 1))).unwrap();
    std::fs::write(&f.path, body.replacen("0.", "9.", 1)).unwrap();
    let err = fetch_dataset(Dataset::Abalone, &opts(dir.path(), dead_url())).unwrap_err();
    assert!(format!("{err:#}").contains("checksum mismatch"), "{err:#}");

    // a re-download that differs from the recorded digest is refused too
    std::fs::remove_file(&f.path).unwrap();
    let other = synthetic_abalone(ABALONE_ROWS).replace(",15\n", ",16\n");
    let err = fetch_dataset(Dataset::Abalone, &opts(dir.path(), serve(other, 1))).unwrap_err();
    assert!(format!("{err:#}").contains("checksum mismatch"), "{err:#}");
    assert!(!f.path.exists());
}

#[test]
fn fetch_rejects_bad_payloads_and_offline_empty_cache() {
    let dir = TempDir::new().unwrap();
    let err = fetch_dataset(Dataset::Abalone, &opts(dir.path(), serve(synthetic_abalone(10), 1))).unwrap_err();
    assert!(format!("{err:#}").contains("expected 4177 rows"), "{err:#}");
    assert!(!dir.path().join(MANIFEST_FILE).exists());

    let err = fetch_dataset(Dataset::Abalone, &opts(dir.path(), dead_url())).unwrap_err();
    assert!(format!("{err:#}").contains("no cached copy"), "{err:#}");
}

fn report_for(rows: Vec<(i64, i64)>, seed: u64) -> InferenceReport {
    let s = PairedSample::integer(rows).unwrap();
    let cfg = RegressionConfig::default().with_seed(seed);
    let v = infer_direction(&s, &cfg).unwrap();
    InferenceReport::new("test", &s, &v, &cfg)
}

fn noisy_rows() -> Vec<(i64, i64)> {
    (0..400i64).map(|i| (i % 5, (i % 5) * (i % 5) + (i * 7 % 3))).collect()
}

#[test]
fn reports_round_trip_and_are_consistent() {
    let r = report_for(noisy_rows(), 3);
    assert!(r.is_consistent());
    let text = render(&Artifact::Reports(std::slice::from_ref(&r)), Format::Json).unwrap();
    let back: Vec<InferenceReport> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, vec![r.clone()]);

    let mut bad = r;
    bad.config.alpha = 1.0 - 1e-9;
    bad.forward.p_value = 0.5;
    assert!(!bad.is_consistent());
    assert!(render(&Artifact::Reports(&[]), Format::Csv).is_err());
}

#[test]
fn curve_csv_shape() {
    let pts: Vec<CurvePoint> = [100, 200, 300]
        .iter()
        .map(|&n| CurvePoint {
            n,
            p_forward: 0.5,
            p_backward: 1e-20,
        })
        .collect();
    let csv = curve_csv(&pts);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "n,p_forward,p_backward");
    assert_eq!(lines[3], "300,0.5,1e-20");
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["--version"]).0, 0);
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["infer", "--no-such-flag"]).0, 1);
    assert_eq!(run(&["infer", "--x-domain", "cyclic:0", "--csv", "x"]).0, 1);
    assert_eq!(run(&["infer"]).0, 1);
    assert_eq!(run(&["simulate", "--suite", "ds9"]).0, 1);

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let (code, _, err) = run(&["infer", "--csv", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("row 2, column 1"), "{err}");
    assert_eq!(
        run(&["infer", "--csv", dir.path().join("none.csv").to_str().unwrap()]).0,
        2
    );
}

#[test]
fn every_command_takes_seed_alpha_and_json_out() {
    for cmd in ["infer", "curve", "simulate", "oracle", "fetch"] {
        let (code, help, _) = run(&[cmd, "--help"]);
        assert_eq!(code, 0);
        for flag in ["--seed", "--alpha", "--json-out"] {
            assert!(help.contains(flag), "{cmd} lacks {flag}");
        }
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    let text: String = noisy_rows().iter().map(|(x, y)| format!("{x},{y}\n")).collect();
    std::fs::write(&data, text).unwrap();
    let d = data.to_str().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let json = dir.path().join(format!("r{k}.json"));
        let curve = dir.path().join(format!("c{k}.csv"));
        let sim = dir.path().join(format!("s{k}.json"));
        let rec = dir.path().join(format!("s{k}.csv"));
        let j = json.to_str().unwrap();
        assert_eq!(run(&["infer", "--csv", d, "--seed", "9", "--json-out", j]).0, 0);
        let c = curve.to_str().unwrap();
        assert_eq!(
            run(&[
                "curve",
                "--csv",
                d,
                "--seed",
                "9",
                "--grid",
                "100,200,400",
                "--csv-out",
                c
            ])
            .0,
            0
        );
        let s = sim.to_str().unwrap();
        let r = rec.to_str().unwrap();
        let args = [
            "simulate",
            "--suite",
            "ds1b:3:3",
            "--models",
            "4",
            "--samples",
            "200",
            "--seed",
            "2",
        ];
        let (code, stdout, _) = run(&[&args[..], &["--json-out", s, "--records-out", r]].concat());
        assert_eq!(code, 0);
        assert!(stdout.contains("correct"));
        files.push([json, curve, sim, rec].map(|p| std::fs::read(p).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let curve = String::from_utf8(files[0][1].clone()).unwrap();
    assert_eq!(curve.lines().count(), 4);
    let reports: Vec<InferenceReport> = serde_json::from_slice(&files[0][0]).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].config.seed_forward, 9);
}

#[test]
fn preset_runs_integer_and_cyclic_sex_codings() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("abalone.data");
    std::fs::write(&path, synthetic_abalone(ABALONE_ROWS)).unwrap();
    let json = dir.path().join("r.json");
    let (code, out, err) = run(&[
        "infer",
        "--preset",
        "abalone:height",
        "--csv",
        path.to_str().unwrap(),
        "--json-out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 2);
    let reports: Vec<InferenceReport> = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(reports[0].x_domain, ValueDomain::Integer);
    assert_eq!(reports[1].x_domain, ValueDomain::Cyclic(3));
    assert!(reports.iter().all(|r| r.n_samples == 1000 && r.is_consistent()));
}

#[test]
fn oracle_writes_and_reads_fixtures() {
    let dir = TempDir::new().unwrap();
    let fx = dir.path().join("m.json");
    let (code, out, _) = run(&[
        "oracle",
        "--builtin",
        "interleaved",
        "--fixture-out",
        fx.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("decomposition: found"));
    let (code, out, _) = run(&["oracle", "--model", fx.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("backward model: found"));
    let (_, out, _) = run(&["oracle", "--builtin", "staircase"]);
    assert!(out.contains("backward model: none"));
    assert_eq!(run(&["oracle", "--builtin", "nonsense"]).0, 1);
    std::fs::write(&fx, "{").unwrap();
    assert_eq!(run(&["oracle", "--model", fx.to_str().unwrap()]).0, 2);
}
