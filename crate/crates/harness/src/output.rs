//! Files written by each subcommand.
//!
//! | file | columns |
//! |------|---------|
//! | `report.csv` | `h,sup_error,l2h_error,pairwise_order,ls_order,expected_order,pass` |
//! | `rung_<m>.csv` | `i,t,sup_error,l2h_error,solution_l2h` |
//! | `stability.csv` | `h,solution_max_l2h,ratio` |
//! | `correctors.csv` | `p,max_sup,ratio_to_v0` |
//! | `plot.gp` | gnuplot script |
//!
//! A failed run ends `report.csv` with a row `FAILED,<message>`. Trajectories
//! from `solve` and `correctors` use the CSV or binary trajectory formats of
//! `zakai_core::io`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use zakai_core::io::{trajectory_to_csv, write_trajectory_binary};
use zakai_core::{ConvergenceReport, Trajectory};

use crate::config::OutputFormat;
use crate::experiment::LadderOutcome;

#[derive(Debug)]
pub struct OutputError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

impl std::fmt::Display for OutputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for OutputError {}

fn write(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    fs::write(path, bytes).map_err(|source| OutputError {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError {
        path: dir.to_path_buf(),
        source,
    })
}

/// `report.csv` contents, including partial rows and the failure marker.
pub fn report_csv(out: &LadderOutcome) -> String {
    let mut s = match &out.report {
        Some(r) => r.to_csv(),
        None => {
            let mut s = format!("{}\n", ConvergenceReport::CSV_HEADER);
            for r in &out.rungs {
                let _ = writeln!(s, "{:e},{:e},{:e},,,{:e},false", r.h, r.sup_error, r.l2h_error, out.band.expected);
            }
            s
        }
    };
    if let Some(msg) = &out.failure {
        let _ = writeln!(s, "FAILED,{}", msg.replace(['\n', ','], " "));
    }
    s
}

pub fn rung_csv(out: &LadderOutcome, m: usize) -> String {
    let mut s = String::from("i,t,sup_error,l2h_error,solution_l2h\n");
    for r in &out.rungs[m].rows {
        let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", r.i, r.t, r.sup_error, r.l2h_error, r.solution_l2h);
    }
    s
}

pub fn stability_csv(out: &LadderOutcome) -> String {
    let mut s = String::from("h,solution_max_l2h,ratio\n");
    for (m, r) in out.rungs.iter().enumerate() {
        let ratio = match m {
            0 => String::new(),
            _ => format!("{:e}", r.solution_max_l2h / out.rungs[m - 1].solution_max_l2h),
        };
        let _ = writeln!(s, "{:e},{:e},{ratio}", r.h, r.solution_max_l2h);
    }
    s
}

/// Log-log plot of the error ladder with a guide line of the expected slope
/// through the coarsest sup error. `None` for fewer than two rungs.
pub fn plot_script(out: &LadderOutcome) -> Option<String> {
    if out.rungs.len() < 2 {
        return None;
    }
    let p = out.band.expected;
    let first = &out.rungs[0];
    let c = first.sup_error / first.h.powf(p);
    let mut s = String::new();
    let _ = writeln!(s, "# {} error ladder", out.pipeline.name());
    s.push_str("set terminal pngcairo size 800,600\n");
    let _ = writeln!(s, "set output '{}.png'", out.pipeline.name());
    s.push_str("set logscale xy\nset xlabel 'h'\nset ylabel 'error'\nset key left top\nset grid\n");
    s.push_str("$errors << EOD\n");
    for r in &out.rungs {
        let _ = writeln!(s, "{:e} {:e} {:e}", r.h, r.sup_error, r.l2h_error);
    }
    s.push_str("EOD\n");
    let _ = writeln!(s, "guide(x) = {c:e} * x**{p:e}");
    s.push_str("plot $errors using 1:2 with linespoints title 'sup error', \\\n");
    s.push_str("     $errors using 1:3 with linespoints title 'l2h error', \\\n");
    let _ = writeln!(s, "     guide(x) with lines dashtype 2 title 'slope {p}'");
    Some(s)
}

pub fn correctors_csv(out: &LadderOutcome) -> Option<String> {
    let c = out.correctors.as_ref()?;
    let mut s = String::from("p,max_sup,ratio_to_v0\n");
    for r in &c.rows {
        let _ = writeln!(s, "{},{:e},{:e}", r.p, r.max_sup, r.ratio_to_v0);
    }
    Some(s)
}

pub fn write_trajectory(traj: &Trajectory, dir: &Path, stem: &str, format: OutputFormat) -> Result<PathBuf, OutputError> {
    let (path, bytes) = match format {
        OutputFormat::Csv => (dir.join(format!("{stem}.csv")), trajectory_to_csv(traj).into_bytes()),
        OutputFormat::Binary => {
            let mut buf = Vec::new();
            write_trajectory_binary(traj, &mut buf).expect("writing to memory");
            (dir.join(format!("{stem}.bin")), buf)
        }
    };
    write(&path, &bytes)?;
    Ok(path)
}

/// Writes every file of a ladder pipeline into `dir`.
pub fn emit_outputs(out: &LadderOutcome, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<(), OutputError> {
        let path = dir.join(name);
        write(&path, text.as_bytes())?;
        written.push(path);
        Ok(())
    };
    put("report.csv", report_csv(out))?;
    if !out.synthetic {
        for m in 0..out.rungs.len() {
            put(&format!("rung_{m}.csv"), rung_csv(out, m))?;
        }
        if !out.rungs.is_empty() {
            put("stability.csv", stability_csv(out))?;
        }
    }
    if let Some(plot) = plot_script(out) {
        put("plot.gp", plot)?;
    }
    if let Some(text) = correctors_csv(out) {
        put("correctors.csv", text)?;
    }
    if let Some(c) = &out.correctors {
        for (p, t) in c.first.correctors().iter().enumerate() {
            written.push(write_trajectory(t, dir, &format!("corrector_{p}"), format)?);
        }
    }
    Ok(written)
}

/// Writes `solve.csv` (per seed and step: `seed,i,t,sup_norm,l2h_norm`) and
/// one trajectory file per seed.
pub fn emit_solve(trajs: &[Trajectory], dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(dir)?;
    let mut summary = String::from("seed,i,t,sup_norm,l2h_norm\n");
    let mut written = Vec::new();
    for t in trajs {
        let seed = t.meta().seed.unwrap_or(0);
        for (i, f) in t.fields().iter().enumerate() {
            let n = f.norms();
            let _ = writeln!(summary, "{seed},{i},{:e},{:e},{:e}", t.time(i), n.sup, n.l2h);
        }
        written.push(write_trajectory(t, dir, &format!("trajectory_seed{seed}"), format)?);
    }
    let path = dir.join("solve.csv");
    write(&path, summary.as_bytes())?;
    written.insert(0, path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::experiment::run_ladder;

    fn synthetic(rungs: usize) -> LadderOutcome {
        let spec = parse_config(&format!(
            "[problem]\nname = \"heat1d\"\n[ladder]\nrungs = {rungs}\n[expect]\nsynthetic_order = 2.0\n"
        ))
        .unwrap();
        run_ladder(&spec, false).unwrap()
    }

    #[test]
    fn three_rungs_give_three_rows() {
        let out = synthetic(3);
        let csv = report_csv(&out);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with(",2e0,true"));
        let plot = plot_script(&out).unwrap();
        assert!(plot.contains("set logscale xy") && plot.contains("guide(x)"));
    }

    #[test]
    fn empty_or_failed_ladder_is_report_only() {
        let mut out = synthetic(2);
        out.rungs.clear();
        out.report = None;
        out.failure = Some("h = 0.0625, seed 1: singular pivot".into());
        assert!(plot_script(&out).is_none());
        assert!(!out.passed());
        let csv = report_csv(&out);
        assert_eq!(csv.lines().last().unwrap(), "FAILED,h = 0.0625  seed 1: singular pivot");

        let dir = tempfile::tempdir().unwrap();
        let files = emit_outputs(&out, dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(files.len(), 1);
    }
}
