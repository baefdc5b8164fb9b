use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dualpol(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualpol"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = dualpol(args, cwd);
    assert!(
        out.status.success(),
        "dualpol {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn line<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn bits_of_the_reference_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["bits", "--ns", "32", "--nt", "32", "--sigma", "8", "--qsa", "3", "--qsp", "3"], dir.path());
    assert_eq!(line(&out, "nominal_bits"), "768");
    assert_eq!(line(&out, "latent_len"), "85");
}

#[test]
fn params_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["params", "--ns", "32", "--nt", "32", "--sigma", "8"], dir.path());
    assert_eq!(line(&out, "P0"), "524288");
    assert_eq!(line(&out, "P1/P0"), "1/2");
    assert_eq!(line(&out, "P2/P0"), "2/3");
}

#[test]
fn config_file_sits_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bits.cfg"), "# budget\nq_sa = 4\nq_sp = 4\n").unwrap();
    let from_file = ok(&["bits", "--config", "bits.cfg"], dir.path());
    assert_eq!(line(&from_file, "nominal_bits"), "1024");
    let overridden = ok(&["bits", "--config", "bits.cfg", "--qsa", "3", "--qsp", "3"], dir.path());
    assert_eq!(line(&overridden, "nominal_bits"), "768");

    fs::write(dir.path().join("bad.cfg"), "q_ss = 4\n").unwrap();
    assert!(!dualpol(&["bits", "--config", "bad.cfg"], dir.path()).status.success());
}

#[test]
fn unknown_flag_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualpol(
        &["gen-data", "--count", "2", "--ns", "8", "--nt", "8", "--frobnicate", "--out", "x.dpcsi"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn failures_print_one_diagnostic_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualpol(&["inspect-gcs", "--data", "missing.dpcsi"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
}

#[test]
fn manifest_replay_is_bit_identical_and_inputs_are_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    for (name, seed) in [("train", "1"), ("val", "2")] {
        let file = format!("{name}.dpcsi");
        ok(
            &["gen-data", "--scenario", "cdl-a", "--count", "12", "--ns", "8", "--nt", "8", "--seed", seed, "--out", &file],
            cwd,
        );
    }
    let inputs_before: Vec<Vec<u8>> = ["train.dpcsi", "val.dpcsi"].iter().map(|f| fs::read(cwd.join(f)).unwrap()).collect();

    let tiny = [
        "--data", "train.dpcsi", "--val", "val.dpcsi", "--sigma", "4", "--epochs", "2", "--batch", "4", "--channels", "4",
        "--depth", "1", "--width", "1", "--estimator-hidden", "8", "--lambda", "0.01", "--seed", "3", "--quiet",
    ];
    ok(&[&["train"][..], &tiny, &["--out", "first"]].concat(), cwd);
    ok(&["train", "--config", "first/manifest.txt", "--out", "second"], cwd);
    assert_eq!(listing(&cwd.join("first")), listing(&cwd.join("second")));
    for f in ["best.ckpt", "final.ckpt", "manifest.txt"] {
        assert!(fs::read(cwd.join("first").join(f)).unwrap() == fs::read(cwd.join("second").join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(cwd.join("first/manifest.txt")).unwrap();
    for key in ["run.seed.init", "run.seed.batching", "run.seed.estimator_init", "\nsigma=4\n"] {
        assert!(manifest.contains(key), "{key} missing from manifest");
    }
    assert!(!dualpol(&[&["train"][..], &tiny, &["--out", "first"]].concat(), cwd).status.success());

    ok(&["eval", "--ckpt", "first/best.ckpt", "--data", "val.dpcsi", "--report", "eval"], cwd);
    ok(&["quant-eval", "--ckpt", "first/best.ckpt", "--data", "val.dpcsi", "--range-data", "train.dpcsi", "--report", "quant"], cwd);
    ok(&["inspect-gcs", "--data", "train.dpcsi", "--report", "gcs"], cwd);
    for dir in ["eval", "quant", "gcs"] {
        assert!(cwd.join(dir).join("manifest.txt").exists(), "{dir}");
    }
    let inputs_after: Vec<Vec<u8>> = ["train.dpcsi", "val.dpcsi"].iter().map(|f| fs::read(cwd.join(f)).unwrap()).collect();
    assert!(inputs_before == inputs_after);
}
