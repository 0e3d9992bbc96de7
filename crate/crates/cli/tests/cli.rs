use std::path::Path;
use std::process::{Command, Output};

fn condcl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condcl"))
        .current_dir(dir)
        .env_remove("CONDCL_DATA_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SMALL: &str = "[train]\nepochs = 2\n[data]\nn_train = 300\nn_test = 200\n\
[experiment]\nprobe_epochs = 50\nn_seeds = 2\nkinds = [\"infonce\", \"align+cond_unif\"]\n\
lambdas = [0.5]\ncurve_every = 1\n";

#[test]
fn gradcheck_passes_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = condcl(dir.path(), &["gradcheck", "--out", "run"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("run/gradcheck.csv")).unwrap();
    assert!(csv.lines().count() > 50);
    assert!(dir.path().join("run/config.toml").exists());
    assert!(dir.path().join("run/log.txt").exists());
}

#[test]
fn zero_threshold_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[experiment]\nthreshold = 0.0\n");
    let out = condcl(
        dir.path(),
        &["--config", "c.toml", "gradcheck", "--out", "run"],
    );
    assert_eq!(out.status.code(), Some(1));
    // outputs are still published
    assert!(dir.path().join("run/gradcheck.csv").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = condcl(dir.path(), &["--config", "nope.toml", "decompose"]);
    assert_eq!(out.status.code(), Some(2));

    write(dir.path(), "bad.toml", "[loss]\ntau = -1.0\n");
    let out = condcl(
        dir.path(),
        &["--config", "bad.toml", "decompose", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());

    write(dir.path(), "typo.toml", "[loss]\ntua = 0.1\n");
    let out = condcl(dir.path(), &["--config", "typo.toml", "decompose"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::create_dir(dir.path().join("taken")).unwrap();
    let out = condcl(dir.path(), &["decompose", "--out", "taken"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        std::fs::read_dir(dir.path().join("taken")).unwrap().count(),
        0
    );

    let out = condcl(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_run_directory_is_named_after_command_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = condcl(dir.path(), &["--seed", "9", "decompose"]);
    assert_eq!(out.status.code(), Some(0));
    let names: Vec<String> = std::fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 1);
    assert!(
        names[0].starts_with("decompose-") && names[0].ends_with("-seed9"),
        "{names:?}"
    );
}

#[test]
fn decompose_rows_close_and_single_sample_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = condcl(dir.path(), &["decompose", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("run/decompose.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,N,d,tau,lhs,rhs,abs_gap,grad_gap"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 100);
    for r in &rows {
        let gap: f64 = r[6].parse().unwrap();
        assert!(gap < 1e-12);
        if r[1] == "1" {
            assert_eq!(gap, 0.0);
            assert_eq!(r[4], "0.0");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "small.toml", SMALL);
    for cmd in ["decompose", "train", "compare"] {
        let a = format!("{cmd}-a");
        let b = format!("{cmd}-b");
        for out in [&a, &b] {
            let o = condcl(dir.path(), &["--config", "small.toml", cmd, "--out", out]);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        for entry in std::fs::read_dir(dir.path().join(&a)).unwrap() {
            let name = entry.unwrap().file_name();
            let x = std::fs::read(dir.path().join(&a).join(&name)).unwrap();
            let y = std::fs::read(dir.path().join(&b).join(&name)).unwrap();
            assert!(x == y, "{cmd}: {name:?} differs");
        }
    }
    let o = condcl(
        dir.path(),
        &[
            "--config",
            "small.toml",
            "--threads",
            "2",
            "compare",
            "--out",
            "compare-c",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("compare-a/compare.csv")).unwrap(),
        std::fs::read(dir.path().join("compare-c/compare.csv")).unwrap()
    );
}

#[test]
fn train_then_probe_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "small.toml", SMALL);
    let o = condcl(
        dir.path(),
        &["--config", "small.toml", "train", "--out", "t"],
    );
    assert_eq!(o.status.code(), Some(0));
    let history = std::fs::read_to_string(dir.path().join("t/history.csv")).unwrap();
    assert_eq!(
        history.lines().next(),
        Some("step,epoch,loss,align_term,unif_term,lr")
    );
    // 300 samples in batches of 128 for 2 epochs
    assert_eq!(history.lines().count(), 1 + 6);

    let o = condcl(
        dir.path(),
        &[
            "--config",
            "small.toml",
            "probe",
            "--checkpoint",
            "t/checkpoint.ccl",
            "--export-features",
            "--out",
            "p",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let probe = std::fs::read_to_string(dir.path().join("p/probe.csv")).unwrap();
    assert!(probe.starts_with("top1,n_train,n_test,probe_epochs,class0,class1,class2\n"));
    let features = std::fs::read_to_string(dir.path().join("p/features.csv")).unwrap();
    assert_eq!(features.lines().count(), 201);

    std::fs::write(dir.path().join("junk.ccl"), b"not a checkpoint").unwrap();
    let o = condcl(
        dir.path(),
        &[
            "--config",
            "small.toml",
            "probe",
            "--checkpoint",
            "junk.ccl",
            "--out",
            "j",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("j").exists());
}

#[test]
fn compare_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "small.toml", SMALL);
    let o = condcl(
        dir.path(),
        &["--config", "small.toml", "compare", "--out", "c"],
    );
    assert_eq!(o.status.code(), Some(0));
    let read = |n: &str| std::fs::read_to_string(dir.path().join("c").join(n)).unwrap();
    let rows = read("compare.csv");
    // random_init, infonce, align+cond_unif at lambda 1 and 0.5, two seeds each
    assert_eq!(rows.lines().count(), 1 + 8);
    assert!(rows.lines().any(|l| l.starts_with("infonce,,1,")));
    let summary = read("compare_summary.csv");
    assert_eq!(summary.lines().count(), 1 + 4);
    assert_eq!(read("plot_accuracy_vs_lambda.csv").lines().count(), 1 + 2);
    assert!(read("plot_accuracy_vs_epoch.csv").starts_with("series,x,y,stderr\n"));
}

#[test]
fn missing_cifar_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[data]\nsource = \"cifar10\"\n");
    let o = Command::new(env!("CARGO_BIN_EXE_condcl"))
        .current_dir(dir.path())
        .env("CONDCL_DATA_DIR", dir.path().join("nowhere"))
        .args(["--config", "c.toml", "probe", "--out", "p"])
        .output()
        .unwrap();
    assert_ne!(o.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn shipped_configs_parse() {
    use condcl_cli::config::{Overrides, RunConfig};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path, &Overrides::default()).unwrap();
        assert_eq!(cfg.experiment.n_seeds, 5, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 2);
}

#[test]
fn cifar_pipeline_runs_on_fixture_batches() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cifar-10-batches-bin");
    std::fs::create_dir(&data).unwrap();
    for (name, n, salt) in [("data_batch_1.bin", 60u32, 1u32), ("test_batch.bin", 30, 2)] {
        let mut bytes = Vec::new();
        for r in 0..n {
            bytes.push((r % 10) as u8);
            bytes.extend((0..3072u32).map(|k| ((k * (r + salt) + r * 31) % 251) as u8));
        }
        std::fs::write(data.join(name), bytes).unwrap();
    }
    write(
        dir.path(),
        "c.toml",
        "[kernel]\nfamily = \"categorical\"\n[train]\npreset = \"cifar\"\nepochs = 1\nbatch_size = 16\n\
         hidden = [8]\nembed_dim = 4\n[data]\nsource = \"cifar10\"\nn_train = 40\nn_test = 20\nside = 4\n\
         [experiment]\nn_seeds = 1\nkinds = [\"supcon\", \"align+cond_unif\"]\nlambdas = []\nprobe_epochs = 5\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_condcl"))
        .current_dir(dir.path())
        .env("CONDCL_DATA_DIR", dir.path())
        .args(["--config", "c.toml", "compare", "--out", "run"])
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = std::fs::read_to_string(dir.path().join("run/compare.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3);
    let echoed = std::fs::read_to_string(dir.path().join("run/config.toml")).unwrap();
    assert!(echoed.contains("cifar-10") || echoed.contains(&dir.path().display().to_string()));
}

#[test]
fn decompose_holds_at_tiny_temperature() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "[experiment]\ndecompose_taus = [0.001]\ndecompose_batches = 30\n",
    );
    let out = condcl(
        dir.path(),
        &["--config", "c.toml", "decompose", "--out", "run"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("run/decompose.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3], "0.001");
        assert!(f[6].parse::<f64>().unwrap() < 1e-12, "{line}");
    }
}
