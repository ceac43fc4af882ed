use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mfgstop");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mfgstop(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("MFGSTOP_OUT", out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const ACCEPT: &str = "\n[acceptance]\nr_obstacle = 1e-6\nr_continuation = 1e-6\nr_subsolution = 1e-6\nr_contact = 1e-6\nr_duality = 1e-6\n";

fn config(dir: &Path, name: &str, head: &str, tail: &str) -> PathBuf {
    write(dir, name, &format!("{head}{ACCEPT}{tail}"))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_verify_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("monotone_1d.toml");
    let o = mfgstop(tmp.path(), &["run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("monotone_1d");
    for f in [
        "u.csv",
        "m.csv",
        "alpha.csv",
        "convergence.csv",
        "report.json",
        "report.txt",
        "checks.json",
        "manifest.json",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let (u, m) = (dir.join("u.csv"), dir.join("m.csv"));
    let v = mfgstop(
        tmp.path(),
        &["verify", "--u", s(&u), "--m", s(&m), "--config", s(&cfg)],
    );
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let stdout = String::from_utf8_lossy(&v.stdout);
    for key in [
        "r_obstacle",
        "r_continuation",
        "r_subsolution",
        "r_contact",
        "r_duality",
    ] {
        let value = report[key].as_f64().unwrap();
        let line = stdout
            .lines()
            .find(|l| l.trim_start().starts_with(&format!("{key} = ")))
            .unwrap();
        let printed: f64 = line
            .split_once(" = ")
            .unwrap()
            .1
            .split_whitespace()
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(printed, value, "{line}");
    }

    // Doubling m breaks the continuation equation.
    let text = fs::read_to_string(&m).unwrap();
    let mut lines = text.lines();
    let mut bad = format!("{}\n", lines.next().unwrap());
    for l in lines {
        let (x, val) = l.split_once(',').unwrap();
        bad += &format!("{x},{}\n", 2.0 * val.parse::<f64>().unwrap());
    }
    let bad_m = write(tmp.path(), "bad_m.csv", &bad);
    let v = mfgstop(
        tmp.path(),
        &[
            "verify",
            "--u",
            s(&u),
            "--m",
            s(&bad_m),
            "--config",
            s(&cfg),
        ],
    );
    assert_eq!(code(&v), 1);
    let empty = write(tmp.path(), "empty.csv", "");
    let v = mfgstop(
        tmp.path(),
        &[
            "verify",
            "--u",
            s(&u),
            "--m",
            s(&empty),
            "--config",
            s(&cfg),
        ],
    );
    assert_eq!(code(&v), 2);
}

#[test]
fn evolutive_run_verifies_its_own_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("evolutive_psi0.toml");
    let o = mfgstop(tmp.path(), &["run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("evolutive_psi0");
    let v = mfgstop(
        tmp.path(),
        &[
            "verify",
            "--u",
            s(&dir.join("u.csv")),
            "--m",
            s(&dir.join("m.csv")),
            "--config",
            s(&cfg),
        ],
    );
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn artifacts_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("monotone_1d.toml");
    assert_eq!(
        code(&mfgstop(
            a.path(),
            &["run", "--config", s(&cfg), "--parallel-starts", "3"]
        )),
        0
    );
    assert_eq!(code(&mfgstop(b.path(), &["run", "--config", s(&cfg)])), 0);
    for f in [
        "u.csv",
        "m.csv",
        "alpha.csv",
        "convergence.csv",
        "report.json",
        "checks.json",
        "manifest.json",
    ] {
        let x = fs::read(a.path().join("monotone_1d").join(f)).unwrap();
        let y = fs::read(b.path().join("monotone_1d").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    assert_eq!(
        code(&mfgstop(tmp.path(), &["run", "--config", s(&missing)])),
        2
    );
    let bogus = config(
        tmp.path(),
        "bogus.toml",
        "problem = \"sosmfg\"\nmethod = \"continuation\"\nscenario = \"bogus\"\n",
        "",
    );
    let o = mfgstop(tmp.path(), &["run", "--config", s(&bogus)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
    let mismatch = config(
        tmp.path(),
        "mismatch.toml",
        "problem = \"osmfg\"\nmethod = \"variational\"\nscenario = \"evolutive_psi0\"\n",
        "",
    );
    let o = mfgstop(tmp.path(), &["run", "--config", s(&mismatch)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("variational"), "{}", stderr(&o));
    let unknown = config(
        tmp.path(),
        "unknown.toml",
        "problem = \"sosmfg\"\nmethod = \"continuation\"\nscenario = \"monotone_1d\"\ncolour = \"blue\"\n",
        "",
    );
    let o = mfgstop(tmp.path(), &["run", "--config", s(&unknown)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
    let no_gate = write(
        tmp.path(),
        "no_gate.toml",
        "problem = \"sosmfg\"\nmethod = \"continuation\"\nscenario = \"monotone_1d\"\n",
    );
    assert_eq!(
        code(&mfgstop(tmp.path(), &["run", "--config", s(&no_gate)])),
        2
    );
    let o = mfgstop(tmp.path(), &["scenario", "no_such_scenario"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistence_ball"));
    assert_eq!(code(&mfgstop(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn shape_mismatch_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("monotone_1d.toml");
    let short = write(tmp.path(), "short.csv", "x,value\n0.5,0.0\n");
    assert_eq!(
        code(&mfgstop(
            tmp.path(),
            &[
                "verify",
                "--u",
                s(&short),
                "--m",
                s(&short),
                "--config",
                s(&cfg)
            ]
        )),
        2
    );
}

#[test]
fn scenario_bundles_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, files) in [
        (
            "nonuniqueness",
            &[
                "m_zero.csv",
                "m_star.csv",
                "u_star.csv",
                "report_star.json",
                "evidence.json",
            ][..],
        ),
        (
            "nonexistence",
            &[
                "m.csv",
                "u_star.csv",
                "residual_floor.csv",
                "convergence.csv",
                "evidence.json",
            ][..],
        ),
    ] {
        let o = mfgstop(tmp.path(), &["scenario", name]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("confirmed"));
        let dir = tmp.path().join(format!("scenario_{name}"));
        for f in files {
            assert!(dir.join(f).exists(), "{name}/{f}");
        }
        let ev: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("evidence.json")).unwrap()).unwrap();
        assert_eq!(ev["confirmed"], true);
    }
}

#[test]
fn out_flag_is_used_without_the_environment_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["scenario", "nonuniqueness", "--out", s(tmp.path())])
        .env_remove("MFGSTOP_OUT")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp
        .path()
        .join("scenario_nonuniqueness")
        .join("manifest.json")
        .exists());
}

#[test]
fn stalled_solver_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "stalled.toml",
        "problem = \"osmfg\"\nmethod = \"continuation\"\nscenario = \"evolutive_heat_g\"\n",
        "r_terminal = 1e-12\nr_initial = 1e-12\n\n[solver]\nmax_outer = 2\n",
    );
    let o = mfgstop(tmp.path(), &["run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("stalled").join("error.json").exists());
}
