//! The `dirt` binary end to end: outputs, overrides and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn dirt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirt")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

const SIM: &str = "seed = 3\n[design]\nkind = \"k_group\"\ngroup_kind = \"block\"\ngroups = [[4, 4], [4, 4]]\n";

#[test]
fn simulate_fit_score_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("sim.toml"), SIM).unwrap();
    let o = dirt(&["simulate", "-c", &path(d, "sim.toml"), "-o", &path(d, "data")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["responses.csv", "design.csv", "items.csv", "truth.json", "true_latents.csv", "sources.toml", "manifest.json"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }

    let o = dirt(&[
        "fit", "--data-dir", &path(d, "data"), "-o", &path(d, "fit"), "--chains", "2", "--iterations", "600",
        "--burn-in", "300", "--draws", "--set", "mcmc.latent_moments=true",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(d.join("fit/summary.csv")).unwrap();
    assert!(summary.contains("sigma_alpha") && summary.contains("rho_gamma"));
    let diag = std::fs::read_to_string(d.join("fit/diagnostics.txt")).unwrap();
    assert!(diag.contains("variance partition"));

    let o = dirt(&["score", &path(d, "fit"), "--truth", &path(d, "data/true_latents.csv")]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("correlation of alpha scores"), "{text}");
    let scores = std::fs::read_to_string(d.join("fit/scores.csv")).unwrap();
    // 16 actors, 16 partners, 64 directed dyads
    assert_eq!(scores.lines().count(), 1 + 16 + 16 + 64);

    let o = dirt(&["summarize", &path(d, "fit/draws.csv"), "-o", &path(d, "again.csv")]);
    assert_eq!(code(&o), 0);
    assert!(d.join("again.csv").exists());
    // an impossible threshold makes --strict fail with status 2
    let o = dirt(&["summarize", &path(d, "fit/draws.csv"), "--rhat-threshold", "0.5", "--strict"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&dirt(&["check-design", &path(d, "missing.csv")])), 1);
    std::fs::write(d.join("sim.toml"), SIM).unwrap();
    let o = dirt(&["simulate", "-c", &path(d, "sim.toml"), "-o", &path(d, "x"), "--set", "bogus=1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = dirt(&["simulate", "-c", &path(d, "sim.toml"), "-o", &path(d, "x"), "--set", "hyper.rho_gamma=1.5"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&dirt(&["score", &path(d, "nofit")])), 1);
}

#[test]
fn unidentified_fit_exits_2_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = dirt(&[
        "simulate", "--set", "design.kind=\"round_robin\"", "--set", "design.n=2", "-o", &path(d, "pair"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = |extra: &[&str]| {
        let mut args = vec![
            "fit", "--data-dir", &path(d, "pair"), "-o", &path(d, "fit"), "--chains", "2", "--iterations", "200",
            "--burn-in", "100",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|s| s.to_string()));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        dirt(&args)
    };
    let o = fit(&[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("shared_actor"));
    assert_eq!(code(&fit(&["--force"])), 0);
}

#[test]
fn recover_self_test_writes_study() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("rec.toml"),
        "replications = 4\nmaster_seed = 5\nself_test = 30\n[simulation]\n[simulation.design]\nkind = \"round_robin\"\nn = 5\n",
    )
    .unwrap();
    let o = dirt(&["recover", "-c", &path(d, "rec.toml"), "-o", &path(d, "rec")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "report.txt", "plot_bias.csv", "study.json", "manifest.json", "replications/rep_0004.csv"] {
        assert!(d.join("rec").join(f).exists(), "{f}");
    }
    let o = dirt(&["recover", "--from-manifest", &path(d, "rec/manifest.json"), "-o", &path(d, "rec2")]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(d.join("rec/report.csv")).unwrap(),
        std::fs::read(d.join("rec2/report.csv")).unwrap()
    );
    // too few replications is an input error
    let o = dirt(&["recover", "-c", &path(d, "rec.toml"), "-o", &path(d, "rec3"), "--replications", "1"]);
    assert_eq!(code(&o), 1);
}
