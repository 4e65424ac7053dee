use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spi"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPI_OUT_DIR")
        .output()
        .expect("spawn spi")
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(suffix))
        .collect();
    names.sort();
    names
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spi(&["transmogrify"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_and_info_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(spi(&["--help"], dir.path()).status.code(), Some(0));
    let help = spi(&["run", "--help"], dir.path());
    assert!(String::from_utf8_lossy(&help.stdout).contains("local_normalization"));
    let info = spi(&["info"], dir.path());
    assert_eq!(info.status.code(), Some(0));
    let text = String::from_utf8_lossy(&info.stdout);
    assert!(text.contains("fig5") && text.contains("psnr_mean_db"));
}

#[test]
fn noiseless_reconstruct_reports_inf() {
    let dir = tempfile::tempdir().unwrap();
    let out = spi(
        &[
            "reconstruct",
            "--disturbance",
            "none",
            "--method",
            "cgi",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("o/reconstruct_cgi_1.csv")).unwrap();
    assert_eq!(
        csv,
        "sweep_param,sweep_value,method,seed,psnr_db,mse\nepsilon_db,0,cgi,1,inf,0\n"
    );
    assert_eq!(
        files_with_suffix(&dir.path().join("o"), ".pgm"),
        ["reconstruct_cgi_1.pgm"]
    );
}

#[test]
fn reconstruct_is_repeatable_and_honours_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_spi"))
            .args([
                "reconstruct",
                "--method",
                "spc",
                "--disturbance",
                "composite",
            ])
            .args([
                "--epsilon-db",
                "-5",
                "--gamma",
                "0.1",
                "--seed",
                "7",
                "--size",
                "16",
            ])
            .current_dir(dir.path())
            .env("SPI_OUT_DIR", "from_env")
            .output()
            .unwrap()
    };
    assert_eq!(run().status.code(), Some(0));
    let csv = dir.path().join("from_env/reconstruct_spc_7.csv");
    let first = fs::read(&csv).unwrap();
    assert_eq!(run().status.code(), Some(0));
    assert_eq!(fs::read(&csv).unwrap(), first);
}

#[test]
fn bad_target_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spi(
        &["reconstruct", "--method", "cgi", "--target", "missing.pgm"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let out = spi(
        &["reconstruct", "--method", "cgi", "--size", "12"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("typo.toml"), "side = 8\nepsilon = -5.0\n").unwrap();
    let out = spi(&["run", "--config", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("unknown field `epsilon`") && err.contains("line 2"),
        "{err}"
    );
    assert_eq!(
        spi(&["run", "--config", "absent.toml"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "not a directory").unwrap();
    let out = spi(
        &[
            "reconstruct",
            "--method",
            "cgi",
            "--size",
            "8",
            "--out",
            "blocker",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_run_writes_csvs_without_leftovers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sweep.toml"),
        r#"
name = "small"
target = "checker"
side = 16
disturbance = "global"
sweep_values = [-5.0, 5.0]
seeds = [1, 2]
methods = ["cgi", "spc", "spc_corrected"]
out_dir = "results"
write_images = false
"#,
    )
    .unwrap();
    let out = spi(
        &["run", "--config", "sweep.toml", "--threads", "2"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = dir.path().join("results");
    let mut all: Vec<String> = files_with_suffix(&results, "");
    all.sort();
    assert_eq!(all, ["small_aggregate.csv", "small_rows.csv"]);
    let rows = fs::read_to_string(results.join("small_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 3 * 2);
    assert!(rows
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("epsilon_db,-5,cgi,1,"));
}

#[test]
fn preset_fig4_writes_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = spi(&["preset", "fig4", "--out", "f4"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let f4 = dir.path().join("f4");
    assert_eq!(files_with_suffix(&f4, ".pgm").len(), 6 * 2 * 5);
    let rows = fs::read_to_string(f4.join("fig4_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 6 * 2 * 5);
    let agg = fs::read_to_string(f4.join("fig4_aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 6 * 2);
    assert!(
        agg.starts_with("sweep_param,sweep_value,method,psnr_mean_db,psnr_std_db\ngamma,0.01,cgi,")
    );
}
