use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rpde_cli::checkpoint::Checkpoint;
use rpde_cli::csvio::{read_loss, read_samples};

fn rpde(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rpde"));
    cmd.args(args).env_remove("RPDE_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const DIFFUSION: &str = "\
problem.tag = \"diffusion-smooth\"
problem.d = 3
net.width = 8
net.layers = 2
adam.lr = 1e-3
train.batch = 8
train.shard = 4
train.seed = 5
train.log_every = 1
oracle.samples = 40
oracle.nx = 21
oracle.nt = 20
eval.samples = 40
eval.pdf_points = 11
";

fn train_config(dir: &Path, iterations: u64) -> PathBuf {
    write_config(
        dir,
        &format!("train{iterations}.toml"),
        &format!("{DIFFUSION}train.iterations = {iterations}\n"),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_budget_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config(dir.path(), 0);
    let out = dir.path().join("run");
    let o = rpde(&["train", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    assert_eq!(files, ["checkpoint.ckpt", "loss.csv"]);
    let ck = Checkpoint::load(&out.join("checkpoint.ckpt")).unwrap();
    assert_eq!(ck.state.iteration, 0);
    assert!(read_loss(&out.join("loss.csv")).unwrap().is_empty());
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let split = dir.path().join("split");
    let cfg20 = train_config(dir.path(), 20);
    let cfg12 = train_config(dir.path(), 12);
    assert_eq!(
        code(&rpde(&["train", "--config", s(&cfg20), "--out", s(&full)], &[])),
        0
    );
    assert_eq!(
        code(&rpde(&["train", "--config", s(&cfg12), "--out", s(&split)], &[])),
        0
    );
    let ck = split.join("checkpoint.ckpt");
    let o = rpde(
        &["train", "--config", s(&cfg20), "--out", s(&split), "--resume", s(&ck)],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.ckpt", "loss.csv"] {
        assert_eq!(
            std::fs::read(full.join(f)).unwrap(),
            std::fs::read(split.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(read_loss(&full.join("loss.csv")).unwrap().len(), 20);
}

#[test]
fn resume_with_another_seed_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config(dir.path(), 3);
    let out = dir.path().join("run");
    assert_eq!(code(&rpde(&["train", "--config", s(&cfg), "--out", s(&out)], &[])), 0);
    let ck = out.join("checkpoint.ckpt");
    let o = rpde(
        &[
            "train",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--resume",
            s(&ck),
            "--seed",
            "99",
        ],
        &[],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn periodic_checkpoints_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("{DIFFUSION}train.iterations = 6\ntrain.checkpoint_every = 3\n"),
    );
    let out = dir.path().join("run");
    assert_eq!(code(&rpde(&["train", "--config", s(&cfg), "--out", s(&out)], &[])), 0);
    let mid = Checkpoint::load(&out.join("checkpoint-00000003.ckpt")).unwrap();
    assert_eq!(mid.state.iteration, 3);
    assert_eq!(
        std::fs::read(out.join("checkpoint-00000006.ckpt")).unwrap(),
        std::fs::read(out.join("checkpoint.ckpt")).unwrap()
    );
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        "problem.tag = \"diffusion-smooth\"\nnet.depth = 4\n",
        "problem.tag = \"no-such-problem\"\n",
        "problem.tag = \"diffusion-smooth\"\nadam.lr = -1.0\n",
        "this is not toml",
    ];
    for (i, body) in bad.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{i}.toml"), body);
        let o = rpde(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("x"))], &[]);
        assert_eq!(code(&o), 2, "{body}");
        assert!(!o.stderr.is_empty());
    }
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&rpde(&["oracle", "--config", s(&missing)], &[])), 2);
    assert_eq!(code(&rpde(&["frobnicate"], &[])), 2);
}

#[test]
fn thread_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config(dir.path(), 1);
    let out = dir.path().join("run");
    let args = ["train", "--config", s(&cfg), "--out", s(&out)];
    assert_eq!(code(&rpde(&args, &[("RPDE_THREADS", "lots")])), 2);
    assert_eq!(code(&rpde(&args, &[("RPDE_THREADS", "2")])), 0);
    let mut with_flag = vec!["--threads", "1"];
    with_flag.extend(args);
    assert_eq!(code(&rpde(&with_flag, &[("RPDE_THREADS", "lots")])), 0);
}

#[test]
fn numeric_fault_exits_with_3_and_names_the_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("{DIFFUSION}train.iterations = 50\nadam.lr = 1e300\n").replace("adam.lr = 1e-3\n", ""),
    );
    let o = rpde(
        &["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))],
        &[],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"));
}

#[test]
fn oracle_single_member_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let one = write_config(
        dir.path(),
        "one.toml",
        &DIFFUSION.replace("oracle.samples = 40", "oracle.samples = 1"),
    );
    let out = dir.path().join("one");
    assert_eq!(code(&rpde(&["oracle", "--config", s(&one), "--out", s(&out)], &[])), 0);
    let samples = read_samples(&out.join("oracle_samples.csv")).unwrap();
    assert_eq!(samples.nrows(), 1);

    let cfg = write_config(dir.path(), "many.toml", DIFFUSION);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&rpde(&["oracle", "--config", s(&cfg), "--out", s(&a)], &[])), 0);
    assert_eq!(
        code(&rpde(
            &["oracle", "--config", s(&cfg), "--out", s(&b), "--threads", "3"],
            &[]
        )),
        0
    );
    for f in ["oracle_samples.csv", "oracle_stats.csv", "oracle_pdf.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn evaluate_respects_the_hard_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{DIFFUSION}train.iterations = 5\nprobes.points = [[0.4, 0.0], [0.9, 1.0], [0.0, 0.3], [0.0, 0.75], [1.0, 0.5]]\n");
    let cfg = write_config(dir.path(), "c.toml", &body);
    let out = dir.path().join("run");
    assert_eq!(code(&rpde(&["train", "--config", s(&cfg), "--out", s(&out)], &[])), 0);
    assert_eq!(
        code(&rpde(&["evaluate", "--config", s(&cfg), "--out", s(&out)], &[])),
        0
    );
    let v = read_samples(&out.join("surrogate_samples.csv")).unwrap();
    assert_eq!(v.nrows(), 40);
    for m in 0..40 {
        assert_eq!(v[[m, 0]], 0.0);
        assert_eq!(v[[m, 1]], 0.0);
        assert_eq!(v[[m, 2]], 10.0 * (0.3 - 0.09));
        assert_eq!(v[[m, 3]], 10.0 * (0.75 - 0.75 * 0.75));
    }
    let first = std::fs::read(out.join("surrogate_samples.csv")).unwrap();
    assert_eq!(
        code(&rpde(&["evaluate", "--config", s(&cfg), "--out", s(&out)], &[])),
        0
    );
    assert_eq!(first, std::fs::read(out.join("surrogate_samples.csv")).unwrap());
    assert_ne!(
        std::fs::read_to_string(out.join("surrogate_pdf.csv"))
            .unwrap()
            .lines()
            .count(),
        0
    );

    let outside = write_config(dir.path(), "o.toml", &body.replace("[1.0, 0.5]]", "[1.0, 1.5]]"));
    let o = rpde(
        &[
            "evaluate",
            "--config",
            s(&outside),
            "--checkpoint",
            s(&out.join("checkpoint.ckpt")),
            "--out",
            s(&dir.path().join("o")),
        ],
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1.5"));
}

#[test]
fn compare_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", DIFFUSION);
    let out = dir.path().join("o");
    assert_eq!(code(&rpde(&["oracle", "--config", s(&cfg), "--out", s(&out)], &[])), 0);
    let stats = out.join("oracle_stats.csv");
    let samples = out.join("oracle_samples.csv");
    let o = rpde(
        &[
            "compare",
            s(&stats),
            s(&stats),
            "--samples",
            s(&samples),
            s(&samples),
            "--ks-tol",
            "0.1",
            "--out",
            s(&out),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(report.contains("mean_rel_l2 0.000000e0"));
    assert!(report.ends_with("verdict PASS\n"));
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), report);

    // a shifted copy fails the mean threshold
    let text = std::fs::read_to_string(&stats).unwrap();
    let mut shifted = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            shifted += line;
        } else {
            let mut cols: Vec<String> = line.split(',').map(String::from).collect();
            cols[3] = (cols[3].parse::<f64>().unwrap() * 1.5 + 0.1).to_string();
            shifted += &cols.join(",");
        }
        shifted.push('\n');
    }
    let shifted_path = write_config(dir.path(), "shifted.csv", &shifted);
    assert_eq!(code(&rpde(&["compare", s(&shifted_path), s(&stats)], &[])), 1);

    let corrupted = write_config(dir.path(), "bad.csv", &text.replacen("coord0", "x", 1));
    assert_eq!(code(&rpde(&["compare", s(&corrupted), s(&stats)], &[])), 2);
}
