//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N ...: PASS|FAIL` line before asserting.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use zakai_core::vandermonde_weights;
use zakai_harness::config::{parse_config, ExperimentSpec};
use zakai_harness::experiment::{run_correctors, run_ladder, LadderOutcome};
use zakai_harness::selfcheck::{check_dense_oracle, check_spectral_oracle};

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} {name}: {detail}");
}

fn spec(text: &str) -> ExperimentSpec {
    parse_config(text).expect("valid configuration")
}

fn order(out: &LadderOutcome) -> f64 {
    assert!(out.failure.is_none(), "{:?}", out.failure);
    out.order().expect("at least two usable rungs")
}

const HEAT: &str = "[problem]\nname = \"heat1d\"\n[problem.params]\nnu = 0.1\n";
const DRIFT: &str = "[problem]\nname = \"heat1d\"\n[problem.params]\ndrift = 0.5\n[scheme]\nkind = \"example2\"\n";
const TRANSPORT: &str = "[problem]\nname = \"stoch-transport\"\n[problem.params]\nbeta = 0.3\nnu = 0.05\n\
                         [run]\nseeds = [1, 2, 3, 4, 5, 6, 7, 8]\n";

#[test]
fn criterion_01_weight_identities() {
    let mut worst: f64 = 0.0;
    for base in [2, 4] {
        for k in 0..=6 {
            worst = worst.max(vandermonde_weights(k, base).unwrap().identity_residual());
        }
    }
    verdict(1, "weight identities", worst <= 1e-12, format!("worst residual {worst:.2e}"));
}

#[test]
fn criterion_02_unaccelerated_symmetric_order() {
    let start = Instant::now();
    let out = run_ladder(&spec(&format!("{HEAT}[ladder]\nh0 = 0.0625\nrungs = 4\n")), false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let o = order(&out);
    verdict(
        2,
        "unaccelerated symmetric order",
        (1.8..=2.3).contains(&o) && secs < 10.0,
        format!("order {o:.4} on h = 1/16..1/128, {secs:.2} s"),
    );
}

#[test]
fn criterion_03_unaccelerated_one_sided_order() {
    let out = run_ladder(&spec(&format!("{DRIFT}[ladder]\nrungs = 4\n")), false).unwrap();
    let o = order(&out);
    verdict(3, "unaccelerated one-sided order", (0.8..=1.3).contains(&o), format!("order {o:.4}"));
}

#[test]
fn criterion_04_accelerated_symmetric_order() {
    let out = run_ladder(&spec(&format!("{HEAT}[extrapolation]\nk = 2\n")), true).unwrap();
    let o = order(&out);
    verdict(4, "accelerated symmetric order", (3.5..=4.5).contains(&o), format!("order {o:.4}, base 4, one level"));
}

#[test]
fn criterion_05_accelerated_one_sided_order() {
    let out = run_ladder(&spec(&format!("{DRIFT}[extrapolation]\nk = 1\n")), true).unwrap();
    let o = order(&out);
    verdict(5, "accelerated one-sided order", (1.7..=2.4).contains(&o), format!("order {o:.4}, base 2, one level"));
}

#[test]
fn criterion_06_stochastic_constant_coefficient_order() {
    let plain = order(&run_ladder(&spec(TRANSPORT), false).unwrap());
    let acc = order(&run_ladder(&spec(&format!("{TRANSPORT}[extrapolation]\nk = 2\n")), true).unwrap());
    let pass = 2.0 * plain >= 3.6 && (plain - 2.0).abs() <= 0.5 && 2.0 * acc >= 7.0 && (acc - 4.0).abs() <= 0.5;
    verdict(
        6,
        "stochastic constant-coefficient order",
        pass,
        format!(
            "squared-error orders {:.3} and {:.3} (sup {plain:.3}, {acc:.3}) over 8 seeds",
            2.0 * plain,
            2.0 * acc
        ),
    );
}

#[test]
fn criterion_07_degenerate_stability() {
    let seeds: Vec<String> = (1..=16).map(|s| s.to_string()).collect();
    let text = format!(
        "[problem]\nname = \"degenerate1d\"\n[ladder]\nrungs = 3\n[run]\nseeds = [{}]\n",
        seeds.join(", ")
    );
    let out = run_ladder(&spec(&text), false).unwrap();
    let norms: Vec<f64> = out.rungs.iter().map(|r| r.solution_max_l2h).collect();
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = ratios.len() == 2 && ratios.iter().all(|r| (1.0 / 1.1..=1.1).contains(r));
    verdict(7, "degenerate stability", pass, format!("max l2h norms {norms:.4?}, ratios {ratios:.4?}"));
}

#[test]
fn criterion_08_odd_correctors_vanish() {
    let mut worst: f64 = 0.0;
    for base in [HEAT, TRANSPORT] {
        let out = run_correctors(&spec(&format!("{base}[extrapolation]\nk = 3\n"))).unwrap();
        let c = out.correctors.expect("corrector summary");
        assert!(c.symmetric);
        for r in c.rows.iter().filter(|r| r.p % 2 == 1) {
            worst = worst.max(r.ratio_to_v0);
        }
    }
    verdict(8, "odd correctors vanish", worst <= 1e-9, format!("largest |v^(odd)| / |v^(0)| = {worst:.2e}"));
}

#[test]
fn criterion_09_expansion_residual_decay() {
    let out = run_correctors(&spec(&format!("{HEAT}[ladder]\nrungs = 3\n[extrapolation]\nk = 2\n"))).unwrap();
    let o = order(&out);
    verdict(9, "expansion residual decay", o >= 3.6, format!("residual order {o:.4} with correctors up to 2"));
}

#[test]
fn criterion_10_oracle_equivalence() {
    let dense: Vec<_> = [11, 12, 13].into_iter().map(check_dense_oracle).collect();
    let spectral: Vec<_> = [21, 22, 23].into_iter().map(check_spectral_oracle).collect();
    let pass = dense.iter().chain(&spectral).all(|c| c.passed);
    let detail = dense
        .iter()
        .chain(&spectral)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(10, "oracle equivalence", pass, detail);
}

#[test]
fn criterion_11_derivative_extrapolation() {
    let out = run_ladder(&spec(&format!("{HEAT}[extrapolation]\nk = 2\nderivative = [[1]]\n")), true).unwrap();
    let o = order(&out);
    verdict(11, "derivative extrapolation", o >= 3.5, format!("order {o:.4} for delta_(h,e1)"));
}

fn run_cli(args: &[&str], config: &Path, out: &Path, threads: usize) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_zakai"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_12_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("transport.toml");
    std::fs::write(
        &config,
        "[problem]\nname = \"stoch-transport\"\n[problem.params]\nnu = 0.05\n[time]\nn = 64\n\
         [extrapolation]\nk = 2\n[run]\nseeds = [4, 5, 6]\n",
    )
    .unwrap();
    let mut same = true;
    let mut count = 0;
    for cmd in ["converge", "accelerate", "correctors", "solve"] {
        let a = tmp.path().join(format!("{cmd}-1"));
        let b = tmp.path().join(format!("{cmd}-4"));
        let (ca, cb) = (run_cli(&[cmd], &config, &a, 1), run_cli(&[cmd], &config, &b, 4));
        assert_eq!((ca, cb), (0, 0), "{cmd} exit codes");
        let (fa, fb) = (files(&a), files(&b));
        count += fa.len();
        same &= !fa.is_empty() && fa == fb;
    }
    verdict(12, "determinism", same, format!("{count} files byte-identical across 1 and 4 threads"));
}
