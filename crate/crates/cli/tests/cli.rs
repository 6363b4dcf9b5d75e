use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hclab_core::PlantedGraph;
use tempfile::TempDir;

fn hclab(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hclab"))
        .args(args)
        .env("HCLAB_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_CURVE: &str = "
experiment = \"pd-curve\"
seed = 11
[params]
kappa = 0.05
b = 20
lambda_grid = [0.2, 0.6]
population_size = 1000
iterations = 8
seeds = 2
psi_rounds = 2000
";

#[test]
fn outputs_are_reproducible_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CURVE);
    let cache = dir.path().join("cache");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o1 = hclab(&["pd-curve", "--config", &cfg, "--out", a.to_str().unwrap(), "--force"], &cache);
    assert!(o1.status.success(), "{}", stderr(&o1));
    let o2 = hclab(&["pd-curve", "--config", &cfg, "--out", b.to_str().unwrap(), "--force", "--threads", "1"], &cache);
    assert!(o2.status.success(), "{}", stderr(&o2));
    let x = fs::read(a.join("pd-curve.csv")).unwrap();
    let y = fs::read(b.join("pd-curve.csv")).unwrap();
    assert_eq!(x, y);

    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("# experiment=pd-curve\n"));
    assert!(text.contains("# seed=11\n") && text.contains("# config.params.kappa=0.05\n"));
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "lambda,psucc_fr,psucc_fr_se,psucc_pl,psucc_pl_se,psi_fr,psi_fr_se,psi_pl,psi_pl_se");
    assert_eq!(data.len(), 3);
}

#[test]
fn cache_is_reused_unless_forced() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "m.toml", "[params]\nkappa = 0.01\nlambda = 0.2\nmu_grid = [0, 1, 10]\n");
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let args = ["mu-profile", "--config", &cfg, "--out", out.to_str().unwrap()];
    let first = hclab(&args, &cache);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(!stderr(&first).contains("cached"));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    let second = hclab(&args, &cache);
    assert!(second.status.success() && stderr(&second).contains("cached"));
    let mut forced = args.to_vec();
    forced.push("--force");
    let third = hclab(&forced, &cache);
    assert!(third.status.success() && !stderr(&third).contains("cached"));
    let text = fs::read_to_string(out.join("mu-profile.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "mu,psi_minus_psi0");
    assert!(rows[1].starts_with("0,0"));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "typo.toml", "seed = 2\n[params]\nkappa = 0.1\nlamda = 0.3\n");
    let o = hclab(&["generate", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let cfg = write(dir.path(), "range.toml", "[params]\nn = 100\nkappa = 1.5\nb = 2\nlambda = 0.3\n");
    let o = hclab(&["generate", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = write(dir.path(), "missing.toml", "seed = 1\n\n[params]\nkappa = 0.1\n");
    let o = hclab(&["verify-bounds", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3") && stderr(&o).contains("params.b"), "{}", stderr(&o));

    let cfg = write(dir.path(), "above.toml", "[params]\nkappa = 0.1\nb = 10\nlambda = 0.5\n");
    let o = hclab(&["verify-bounds", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert!(!out.join("verify-bounds.csv").exists());
}

#[test]
fn guards_fail_before_any_work() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "big.toml", "[params]\nn = 80\nk = 40\nkappa = 0.5\nb = 5\nlambda = 0.3\nseeds = 1\n");
    let o = hclab(&["exhaustive", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("instance too large"));
    let cfg = write(dir.path(), "dense.toml", "[params]\nn = 10\nkappa = 0.1\nb = 5\na = 40\n");
    let o = hclab(&["generate", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn generated_graph_feeds_bp_run() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let gen = write(dir.path(), "g.toml", "seed = 5\n[params]\nn = 300\nkappa = 0.1\nb = 4\nlambda = 3.0\n[output]\nfile = \"g.txt\"\n");
    let o = hclab(&["generate", "--config", &gen, "--out", out.to_str().unwrap()], &cache);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("g.txt")).unwrap();
    assert!(text.starts_with("# experiment=generate\n"));
    let g = PlantedGraph::read_from(text.as_bytes()).unwrap();
    assert_eq!(g.n(), 300);
    assert_eq!(g.seed(), 5);

    let run = write(
        dir.path(),
        "r.toml",
        "experiment = \"bp-run\"\n[params]\ngraph = \"out/g.txt\"\niterations = 5\n[output]\nfile = \"bp.csv\"\nmanifest = true\n",
    );
    let o = hclab(&["bp-run", "--config", &run, "--out", out.to_str().unwrap()], &cache);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("bp.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "seed,t,psucc,errors,shift");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("5,0,"));
    let plt = fs::read_to_string(out.join("bp.plt")).unwrap();
    assert!(plt.contains("3 psucc"));

    let clash = write(dir.path(), "clash.toml", "[params]\ngraph = \"out/g.txt\"\nkappa = 0.2\n");
    let o = hclab(&["bp-run", "--config", &clash, "--out", out.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn phase_diagram_and_bounds_reports() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "p.toml", "[params]\nkappa_grid = [0.001, 0.01, 0.1]\n");
    let o = hclab(&["phase-diagram", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("phase-diagram.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["kappa", "lambda_sp", "lambda_s", "lambda_d"]);
    for r in &rows[1..3] {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] < v[2] && v[2] < v[3], "{r:?}");
    }
    assert_eq!(rows[3][1..], ["NA", "NA", "NA"]);

    let cfg = write(
        dir.path(),
        "v.toml",
        "[params]\nkappa = 0.05\nb = 20\nlambda = 0.3\npopulation_size = 1000\niterations = 10\n",
    );
    let o = hclab(&["verify-bounds", "--config", &cfg, "--out", out.to_str().unwrap()], &cache);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("verify-bounds.csv")).unwrap();
    let row: Vec<&str> = text.lines().rfind(|l| !l.starts_with('#')).unwrap().split(',').collect();
    let x: f64 = row[1].parse().unwrap();
    assert!((x - 1.631_340_757_267_383).abs() < 1e-12);
    let ceiling: f64 = row[2].parse().unwrap();
    assert!((ceiling - (x - 1.0) / 4.0).abs() < 1e-15);
}

#[test]
fn experiment_name_must_match() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CURVE);
    let o = hclab(&["free-energy", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}
