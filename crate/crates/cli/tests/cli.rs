use std::path::PathBuf;

use serde_json::Value;
use sqdkit::fcidump::read_fcidump;
use sqdkit_cli::{main_with_args, EXIT_INPUT, EXIT_NOT_CONVERGED};

#[allow(dead_code)]
#[path = "../../core/tests/support/fock.rs"]
mod fock;

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn schema() -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/records.schema.json");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut all = vec!["sqdkit"];
    all.extend_from_slice(args);
    let code = main_with_args(all, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn records(r: &Run) -> Vec<Value> {
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let errors: Vec<String> = schema().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}\n{}", r.stdout);
    v.as_array().unwrap().clone()
}

#[test]
fn missing_file_is_an_input_error() {
    let r = run(&["fci", "--fcidump", "/nonexistent/x.fcidump"]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("cannot read"));
    assert!(r.stdout.is_empty());
    assert_eq!(run(&["fci"]).code, EXIT_INPUT);
    assert_eq!(run(&["fci", "--seed", "x"]).code, EXIT_INPUT);
    assert_eq!(run(&["bogus"]).code, EXIT_INPUT);
}

#[test]
fn malformed_fcidump_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.fcidump");
    std::fs::write(&path, "&FCI NORB=2,NELEC=2,MS2=0\n&END\n 1.0 x 1 1 1\n").unwrap();
    let r = run(&["fci", "--fcidump", path.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_INPUT, "{}", r.stderr);
}

#[test]
fn toy_fci_matches_brute_force() {
    for name in ["toy_1orb.fcidump", "h2_sto3g.fcidump"] {
        let path = fixture(name);
        let ints = read_fcidump(&path).unwrap();
        let dim = 1usize << (2 * ints.n_orbitals());
        let m = fock::fock_matrix(&ints);
        // Lowest eigenvalue of the sector block by dense diagonalization of
        // the brute-force matrix restricted to the right occupations.
        let idx: Vec<usize> = (0..dim)
            .filter(|&i| {
                let n = ints.n_orbitals();
                (i & ((1 << n) - 1)).count_ones() as usize == ints.n_alpha()
                    && (i >> n).count_ones() as usize == ints.n_beta()
            })
            .collect();
        let block: Vec<f64> = idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| m[i * dim + j]).collect();
        let k = idx.len();
        let e = sqdkit::eigen::dense_lowest_eigenpair(&sqdkit::eigen::DenseSymmetric::new(k, block).unwrap())
            .unwrap()
            .value;
        let r = run(&["fci", "--fcidump", &path]);
        assert_eq!(r.code, 0);
        let rec = &records(&r)[0];
        assert!((rec["fci_energy"].as_f64().unwrap() - e).abs() < 1e-10, "{name}");
        assert_eq!(rec["space_dimension"], k);
    }
}

#[test]
fn every_command_validates_against_the_schema() {
    let h4 = fixture("h4_chain_sto3g.fcidump");
    for cmd in ["fci", "vqe", "qsci", "sqd", "sample", "coupon"] {
        let r = run(&[cmd, "--fcidump", &h4, "--shots", "200,2000", "--trials", "2000"]);
        assert_eq!(r.code, 0, "{cmd}: {}", r.stderr);
        let recs = records(&r);
        assert!(!recs.is_empty());
        for rec in &recs {
            assert_eq!(rec["seed"], 0);
            assert_eq!(rec["version"], env!("CARGO_PKG_VERSION"));
        }
    }
    let r = run(&["coupon", "--m", "5,25,60"]);
    assert_eq!(records(&r).len(), 3);
}

#[test]
fn records_reproduce_bit_exactly() {
    let h4 = fixture("h4_chain_sto3g.fcidump");
    for cmd in ["vqe", "qsci", "sqd", "sample"] {
        let args = [cmd, "--fcidump", &h4, "--shots", "300,3000", "--seed", "17", "--noise-p01", "0.02"];
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        let c = run(&[cmd, "--fcidump", &h4, "--shots", "300,3000", "--seed", "18", "--noise-p01", "0.02"]);
        assert_ne!(records(&a)[0]["config_hash"], records(&c)[0]["config_hash"]);
    }
}

#[test]
fn vqe_exact_mode_on_water() {
    let r = run(&["vqe", "--fcidump", &fixture("h2o_sto3g_8e6o.fcidump"), "--shots", "0", "--trial-state", "vqe"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rec = &records(&r)[0];
    assert_eq!(rec["method"], "vqe");
    assert_eq!(rec["stderr"], 0.0);
    assert!((rec["energy"].as_f64().unwrap() + 75.0125).abs() < 2e-4);
}

#[test]
fn unfinished_vqe_exits_with_non_convergence() {
    let r = run(&[
        "vqe", "--fcidump", &fixture("h4_chain_sto3g.fcidump"), "--shots", "0", "--trial-state", "vqe",
        "--vqe-sweeps", "1", "--vqe-tolerance", "1e-14",
    ]);
    assert_eq!(r.code, EXIT_NOT_CONVERGED);
    assert_eq!(records(&r)[0]["converged"], false);
}

#[test]
fn coupon_csv_columns() {
    let r = run(&["coupon", "--m", "3,10,30", "--p-max", "0.5", "--format", "csv", "--trials", "20000", "--seed", "4"]);
    assert_eq!(r.code, 0);
    let mut rd = csv::Reader::from_reader(r.stdout.as_bytes());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let f = |row: &csv::StringRecord, name: &str| row[col(name)].parse::<f64>().unwrap();
    let mut last = 0.0;
    for row in &rows {
        let m = f(row, "m") as usize;
        let h: f64 = (1..=m).map(|k| 1.0 / k as f64).sum();
        assert!((f(row, "uniform") - m as f64 * h).abs() < 1e-9);
        let (mc, se) = (f(row, "mc_mean"), f(row, "mc_stderr"));
        assert!((mc - f(row, "integral")).abs() < 3.0 * se, "m = {m}");
        assert!(f(row, "lower_bound") > last);
        last = f(row, "lower_bound");
    }
}

#[test]
fn coupon_from_state() {
    let r = run(&["coupon", "--fcidump", &fixture("h2o_sto3g_8e6o.fcidump"), "--trials", "0"]);
    let rec = &records(&r)[0];
    assert!(rec["m"].as_u64().unwrap() <= 225);
    assert!((rec["p_max"].as_f64().unwrap() - 0.972).abs() < 0.005);
    assert!(rec["lower_bound"].as_f64().unwrap() <= rec["integral"].as_f64().unwrap());
}

#[test]
fn config_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out.json");
    std::fs::write(&cfg, "shots = [500]\nseed = 3\n").unwrap();
    let r = run(&[
        "sample", "--fcidump", &fixture("h2_sto3g.fcidump"), "--config", cfg.to_str().unwrap(), "--seed", "8",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(schema().is_valid(&v));
    assert_eq!(v[0]["shots"], 500);
    assert_eq!(v[0]["seed"], 8);
}

#[test]
fn help_succeeds() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("coupon"));
}
