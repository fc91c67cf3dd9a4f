use std::fs;
use std::path::Path;
use std::process::Command;

use heavybrw_lab::exit;

const BIN: &str = env!("CARGO_BIN_EXE_brwlab");

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn brwlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

const COX: &str = r#"
seed = 1
[model.law]
kind = "cox"
p = 3.0
"#;

const DESK: &str = r#"
seed = 3
n_grid = [10]
[model.law]
kind = "atoms"
atoms = [{ count = 0, prob = 0.5 }, { count = 4, prob = 0.5 }]
[schedule]
a = 1.05
cutoff = 5.0
case = "II"
r = { kind = "min-over-log" }
[population]
generations = 6
prune = { kind = "none" }
"#;

const NAGAEV: &str = r#"
seed = 99
reps = 3000
n_grid = [100, 300]
[model.law]
kind = "poisson"
p = 3.0
b = 3.0
[schedule]
a = 1.05
t_multiplier = 1.2
cutoff = 5.0
case = "II"
r = { kind = "min-over-log" }
"#;

#[test]
fn assumptions_csv_flags_a5_on_cox_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COX);
    let out = dir.path().join("o");
    let (code, err) = brwlab(&["check-assumptions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, exit::OK, "{err}");
    let mut rdr = csv::Reader::from_path(out.join("results.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let a5 = rows.iter().find(|r| &r[col("quantity")] == "A5").unwrap();
    assert_eq!(&a5[col("status")], "fails");
    // The evidence rows carry the ratio E[Z(t)^γ]/F̄(t)^γ, which grows along the probe points.
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r[col("quantity")].starts_with("A5:"))
        .map(|r| r[col("estimate")].parse::<f64>().unwrap())
        .collect();
    assert!(ratios.len() >= 2);
    assert!(ratios.last().unwrap() > &(10.0 * ratios[0]), "{ratios:?}");
    for r in &rows {
        assert_eq!(&r[col("seed")], "1");
        assert_eq!(r[col("config_hash")].len(), 64);
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 1);
    assert!(manifest.get("workers").is_none());
}

#[test]
fn theorem_on_atomic_model_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", DESK);
    let (code, err) = brwlab(&["theorem", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, exit::PRECONDITION, "{err}");
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write(dir.path(), "a.toml", &COX.replace("seed = 1", ""));
    assert_eq!(brwlab(&["check-assumptions", "--config", no_seed.to_str().unwrap()]).0, exit::CONFIG);
    let missing = dir.path().join("missing.toml");
    assert_eq!(brwlab(&["nagaev", "--config", missing.to_str().unwrap()]).0, exit::CONFIG);
    let no_grid = write(dir.path(), "b.toml", &NAGAEV.replace("n_grid = [100, 300]", ""));
    assert_eq!(brwlab(&["nagaev", "--config", no_grid.to_str().unwrap()]).0, exit::CONFIG);
    let cfg = write(dir.path(), "c.toml", NAGAEV);
    assert_eq!(brwlab(&["nagaev", "--config", cfg.to_str().unwrap(), "--reps", "0"]).0, exit::CONFIG);
    let declared = write(dir.path(), "d.toml", &format!("experiment = \"spine\"\n{COX}"));
    assert_eq!(brwlab(&["check-assumptions", "--config", declared.to_str().unwrap()]).0, exit::CONFIG);
}

#[test]
fn failed_check_under_assert() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{COX}\n[assumptions.expect]\nA5 = \"holds\"\n");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("o");
    let args = ["check-assumptions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(brwlab(&args).0, exit::OK);
    let mut with_assert = args.to_vec();
    with_assert.push("--assert");
    assert_eq!(brwlab(&with_assert).0, exit::ASSERT);
    assert!(out.join("results.csv").exists());
}

#[test]
fn resource_cap_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = DESK.replace("prune = { kind = \"none\" }", "prune = { kind = \"none\" }\nmax_bytes = 64")
        .replace("generations = 6", "generations = 12")
        .replace("seed = 3", "seed = 4");
    let cfg = write(dir.path(), "d.toml", &text);
    // Most seeds survive past a few generations; keep trying until one exceeds the cap.
    let mut saw = false;
    for seed in 0..20 {
        let (code, _) = brwlab(&["dump-population", "--config", cfg.to_str().unwrap(), "--seed", &seed.to_string(), "--out", dir.path().to_str().unwrap()]);
        assert!(code == exit::OK || code == exit::RESOURCE, "{code}");
        saw |= code == exit::RESOURCE;
    }
    assert!(saw);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n.toml", NAGAEV);
    let mut csvs = Vec::new();
    for (i, w) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let (code, err) =
            brwlab(&["nagaev", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", w]);
        assert_eq!(code, exit::OK, "{err}");
        csvs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    let other = dir.path().join("other");
    brwlab(&["nagaev", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "100"]);
    assert_ne!(fs::read(other.join("results.csv")).unwrap(), csvs[0]);
}

#[test]
fn dump_population_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", DESK);
    let out = dir.path().join("o");
    let (code, err) = brwlab(&["dump-population", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(code, exit::OK, "{err}");
    let text = fs::read_to_string(out.join("population.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# seed=2 ") && header.contains("ledger=0"), "{header}");
    assert_eq!(lines.next().unwrap(), "generation,index,label,parent,position,weight,ledger,seed,config_hash");
    let root = lines.next().unwrap();
    assert!(root.starts_with("0,0,,,0,1,0,2,"), "{root}");
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        let g: usize = f[0].parse().unwrap();
        let pos: f64 = f[4].parse().unwrap();
        assert!((pos - g as f64 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(f[2].split('.').count(), g);
    }
}
