use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use qconserve::conservation::finite_composition;
use qconserve::instrument::n_fold;
use qconserve::io::{instrument_from_json, instrument_to_json, kernel_from_json, povm_from_json, povm_to_json};
use qconserve::models::{number_povm, photon_counting_instrument};
use qconserve::{Instrument, Operator};

const PC: &str = r#"{"model":"photon_counting","lambda_t":0.6931471805599453,"cutoff":3}"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_qconserve")).args(args).current_dir(self.dir.path()).output().unwrap()
    }

    /// Runs `command` on a config file, writing into `out/`.
    fn run(&self, command: &str, config: &str, extra: &[&str]) -> Output {
        self.file("config.json", config);
        let mut args = vec![command, "--config", "config.json", "--out", "out"];
        args.extend_from_slice(extra);
        self.exec(&args)
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path("out").join(name)).unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(command: &str, model: &str, rest: &str) -> String {
    format!(r#"{{"command":"{command}","model":{model}{rest}}}"#)
}

#[test]
fn validate_writes_a_loadable_instrument() {
    let r = Run::new();
    let o = r.run("validate", &config("validate", PC, ""), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(r.json("report.json")["valid"], true);
    let ins = instrument_from_json(&r.read("instrument.json"), 1e-10).unwrap();
    let reference = photon_counting_instrument(std::f64::consts::LN_2, 3).unwrap();
    for i in 0..ins.len() {
        assert!(qconserve::max_abs_diff(&ins.kraus(i)[0], &reference.kraus(i)[0]).unwrap() <= 1e-12);
    }
}

#[test]
fn validate_flags_a_broken_instrument() {
    let r = Run::new();
    let bad = r#"{"labels":[0,1],"dim":2,"kraus":[[[[1,0],[0,0]]],[[[0,0],[0,0.9]]]]}"#;
    r.file("bad.json", bad);
    let o = r.run("validate", r#"{"model":{"model":"custom","instrument":"bad.json"}}"#, &[]);
    assert_eq!(code(&o), 1);
    let report = r.json("report.json");
    assert_eq!(report["valid"], false);
    assert!((report["instrument"]["normalization_defect"].as_f64().unwrap() - 0.19).abs() < 1e-12);
}

#[test]
fn conserve_number_observable_under_photon_counting() {
    let r = Run::new();
    let o = r.run("conserve", &config("conserve", PC, ""), &["--expect-conserved"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = r.json("report.json");
    assert_eq!(report["conserved"], true);
    assert!(report["residual_forward"].as_f64().unwrap() <= 1e-8);
    assert!(report["residual_backward"].as_f64().unwrap() <= 1e-8);
    // n photons go to (m, n − m) with probability p(m|n); for n = 1 and λt = ln 2 that is ½ each.
    let kernel = kernel_from_json(&serde_json::to_string(&report["kernel_forward"]).unwrap()).unwrap();
    assert!((kernel.get(1, 1) - 0.5).abs() < 1e-9);
    assert!((kernel.get(1, 4) - 0.5).abs() < 1e-9);
}

#[test]
fn expect_conserved_fails_on_a_disturbing_instrument() {
    let r = Run::new();
    let z = Instrument::projective(vec![Operator::ket_bra(0, 0, 2), Operator::ket_bra(1, 1, 2)]).unwrap();
    r.file("z.json", &instrument_to_json(&z).unwrap());
    let x = r#"{"labels":["+","-"],"dim":2,"effects":[[[0.5,0.5],[0.5,0.5]],[[0.5,-0.5],[-0.5,0.5]]]}"#;
    r.file("x.json", x);
    let cfg = r#"{"model":{"model":"custom","instrument":"z.json"},"povm":"x.json"}"#;

    let o = r.run("conserve", cfg, &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(r.json("report.json")["conserved"], false);

    let o = r.run("conserve", cfg, &["--expect-conserved"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("not conserved"));
}

#[test]
fn infinite_approx_writes_consistent_approximants() {
    let r = Run::new();
    let o = r.run("infinite-approx", &config("infinite-approx", PC, ""), &["--n", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pc = photon_counting_instrument(std::f64::consts::LN_2, 3).unwrap();
    for n in 1..=3 {
        let loaded = povm_from_json(&r.read(&format!("E_{n}.json")), 1e-10).unwrap();
        let expected = finite_composition(&pc, n).unwrap();
        assert!(loaded.space().same_as(expected.space()));
        assert!(loaded.max_abs_diff(&expected).unwrap() <= 1e-12);
    }
    let csv = r.read("consistency.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,residual"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let (n, res) = l.split_once(',').unwrap();
            (n.parse().unwrap(), res.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2]);
    assert!(rows.iter().all(|r| r.1 < 1e-11));
}

#[test]
fn compose_and_povm_files_round_trip() {
    let r = Run::new();
    r.file("en.json", &povm_to_json(&number_povm(3)).unwrap());
    let o = r.run("compose", &config("compose", PC, r#","povm":"en.json""#), &["--n", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pc = photon_counting_instrument(std::f64::consts::LN_2, 3).unwrap();
    let loaded = instrument_from_json(&r.read("instrument_2.json"), 1e-10).unwrap();
    let expected = n_fold(&pc, 2).unwrap();
    assert_eq!(loaded.len(), expected.len());
    for i in 0..loaded.len() {
        for (a, b) in loaded.kraus(i).iter().zip(expected.kraus(i)) {
            assert!(qconserve::max_abs_diff(a, b).unwrap() <= 1e-12);
        }
    }
    let joint = povm_from_json(&r.read("composed_povm.json"), 1e-10).unwrap();
    assert_eq!(joint.len(), 16 * 4);
}

#[test]
fn povm_order_between_files() {
    let r = Run::new();
    r.file("noisy.json", r#"{"labels":[0,1],"dim":2,"effects":[[[0.8,0],[0,0.2]],[[0.2,0],[0,0.8]]]}"#);
    r.file("sharp.json", r#"{"labels":[0,1],"dim":2,"effects":[[[1,0],[0,0]],[[0,0],[0,1]]]}"#);
    let o = r.run("povm-order", r#"{"povms":["noisy.json","sharp.json"]}"#, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = r.json("report.json");
    assert_eq!(report["first_fuzzier"]["feasible"], true);
    assert_eq!(report["second_fuzzier"]["feasible"], false);
    assert_eq!(report["equivalent"], false);
}

#[test]
fn witness_chain_files() {
    let r = Run::new();
    let model = r#"{"model":"photon_counting","lambda_t":0.5,"cutoff":2}"#;
    let o = r.run("witness", &config("witness", model, ""), &["--n", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = r.json("report.json");
    assert_eq!(report["verified"], true);
    for k in 1..=2 {
        let kernel = kernel_from_json(&r.read(&format!("kernel_{k}.json"))).unwrap();
        assert_eq!(kernel.target().len(), 3usize.pow(k as u32 + 1));
    }
}

#[test]
fn quantum_counter_intensity_check_reports_grid_residuals() {
    let r = Run::new();
    let model = r#"{"model":"quantum_counter","lambda_t":0.6931471805599453,"cutoff":2,"m_max":12,"grid":{"nodes":32,"x_max":30}}"#;
    let o = r.run("conserve", &config("conserve", model, r#","tol":1e-5"#), &["--expect-conserved"]);
    let report = r.json("report.json");
    assert_eq!(report["compared_levels"], 3);
    let (f, b) = (report["residual_forward"].as_f64().unwrap(), report["residual_backward"].as_f64().unwrap());
    assert!(f > 0.0 && b > 0.0);
    assert_eq!(report["conserved"], f <= 1e-5 && b <= 1e-5);
    assert_eq!(code(&o), if report["conserved"] == true { 0 } else { 1 });

    // Too few nodes for 15 levels: the rest effect goes negative.
    let coarse = model.replace("\"nodes\":32", "\"nodes\":16");
    let o = r.run("conserve", &config("conserve", &coarse, ""), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid too coarse"));
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let sim = config(
        "simulate",
        r#"{"model":"photon_counting","lambda_t":0.5,"cutoff":3}"#,
        r#","k":40,"n_traj":2000,"initial_state":{"diagonal":[0,0.5,0,0.5]},"reference":[[1,0.5],[3,0.5]]"#,
    );
    let runs: Vec<Vec<String>> = (0..2)
        .map(|_| {
            let r = Run::new();
            let o = r.run("simulate", &sim, &["--seed", "17"]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            ["trajectories.csv", "stats.json", "histogram.dat"].iter().map(|f| r.read(f)).collect()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let stats: Value = serde_json::from_str(&runs[0][1]).unwrap();
    assert!(stats["tv"].as_f64().unwrap() < 0.05);
    let csv = &runs[0][0];
    assert_eq!(csv.lines().next(), Some("index,step,outcome,prob"));
    assert_eq!(csv.lines().count(), 1 + 2000 * 40);
    let hist = &runs[0][2];
    assert!(hist.starts_with("# m frequency reference"));
    let m3: Vec<f64> = hist.lines().nth(4).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(m3[0], 3.0);
    assert_eq!(m3[2], 0.5);
}

#[test]
fn simulate_intensity_histogram() {
    let r = Run::new();
    let sim = config(
        "simulate",
        r#"{"model":"quantum_counter","lambda_t":0.5,"cutoff":0,"m_max":30}"#,
        r#","k":3,"n_traj":500,"statistic":"X_k","bins":10"#,
    );
    let o = r.run("simulate", &sim, &["--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hist = r.read("histogram.dat");
    assert_eq!(hist.lines().count(), 11);
    let total: usize = hist.lines().skip(1).map(|l| l.split_whitespace().nth(3).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 500);
}

#[test]
fn usage_errors_exit_with_2() {
    let r = Run::new();
    let sim = config("simulate", PC, r#","k":4,"n_traj":10"#);
    let o = r.run("simulate", &sim, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed: missing"));

    let o = r.run("validate", r#"{"model":{"model":"photon_counting","cutoff":-2},"speed":3}"#, &[]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for field in ["model.lambda_t: missing", "model.cutoff:", "speed: unknown key"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }

    assert_eq!(code(&r.exec(&["validate"])), 2);
    assert_eq!(code(&r.exec(&["levitate", "--config", "config.json"])), 2);
    assert_eq!(code(&r.exec(&["validate", "--config", "nowhere.json"])), 2);
    assert_eq!(code(&r.run("conserve", "{not json", &[])), 2);
    assert_eq!(code(&r.run("witness", &config("conserve", PC, ""), &[])), 2);
}

#[test]
fn output_numbers_carry_17_significant_digits() {
    let r = Run::new();
    assert_eq!(code(&r.run("conserve", &config("conserve", PC, ""), &[])), 0);
    let text = r.read("report.json");
    let numbers = text
        .split(|c: char| !(c.is_ascii_alphanumeric() || ".-+_".contains(c)))
        .filter(|t| t.trim_start_matches('-').starts_with(|c: char| c.is_ascii_digit()) && t.contains('e'));
    let mut seen = 0;
    for token in numbers {
        seen += 1;
        let mantissa = token.split(['e', 'E']).next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.replace('.', "").len(), 17, "{token}");
    }
    assert!(seen > 10);
}
