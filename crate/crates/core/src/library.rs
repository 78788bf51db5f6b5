//! Built-in test problems on the unit torus, addressable by name.
//!
//! | name | operator | parameters (default) |
//! |------|----------|----------------------|
//! | `heat1d` | `a11 = nu`, `a01 = a10 = drift / 2` | `nu` (0.1), `drift` (0) |
//! | `degenerate1d` | `a11 = beta^2 / 2`, `b11 = beta` | `beta` (0.3) |
//! | `stoch-transport` | `a11 = beta^2 / 2 + nu`, `b11 = beta`, `b01 = gamma` | `beta` (0.3), `gamma` (0), `nu` (0) |
//! | `var-coef1d` | `a11 = 1 + amp sin(2 pi x)` | `amp` (0.5) |
//!
//! Every problem starts from `u0 = cos(2 pi m x)` with `m = mode` (1) and has
//! `f = g = 0`. The default horizon is 0.5, except 0.1 for `var-coef1d`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::coefficient::Coefficient;
use crate::error::{invalid, Result};
use crate::problem::DifferentialProblem;

pub const PROBLEM_NAMES: [&str; 4] = ["heat1d", "degenerate1d", "stoch-transport", "var-coef1d"];

/// Parameter names and defaults of a named problem, `mode` included.
pub fn problem_defaults(name: &str) -> Result<Vec<(&'static str, f64)>> {
    let mut p = match name {
        "heat1d" => vec![("nu", 0.1), ("drift", 0.0)],
        "degenerate1d" => vec![("beta", 0.3)],
        "stoch-transport" => vec![("beta", 0.3), ("gamma", 0.0), ("nu", 0.0)],
        "var-coef1d" => vec![("amp", 0.5)],
        other => {
            return Err(invalid(format!(
                "unknown problem '{other}'; known problems: {}",
                PROBLEM_NAMES.join(", ")
            )))
        }
    };
    p.push(("mode", 1.0));
    Ok(p)
}

pub fn default_horizon(name: &str) -> f64 {
    if name == "var-coef1d" {
        0.1
    } else {
        0.5
    }
}

/// Builds a named problem; unspecified parameters take their defaults and
/// `horizon = None` selects the default horizon.
pub fn named_problem(name: &str, params: &BTreeMap<String, f64>, horizon: Option<f64>) -> Result<DifferentialProblem> {
    let defaults = problem_defaults(name)?;
    for key in params.keys() {
        if !defaults.iter().any(|(k, _)| k == key) {
            return Err(invalid(format!("problem '{name}' has no parameter '{key}'")));
        }
    }
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .unwrap_or_else(|| defaults.iter().find(|d| d.0 == k).expect("known key").1)
    };
    let mode = get("mode");
    if mode.fract() != 0.0 {
        return Err(invalid(format!("mode must be an integer, got {mode}")));
    }
    let horizon = horizon.unwrap_or_else(|| default_horizon(name));
    let u0 = Coefficient::spatial(move |x| (2.0 * PI * mode * x[0]).cos());
    let base = |drivers| DifferentialProblem::new(name, 1, drivers, &[1.0], horizon);
    let p = match name {
        "heat1d" => {
            let (nu, drift) = (get("nu"), get("drift"));
            base(0)?
                .with_a(1, 1, nu)
                .with_a(0, 1, 0.5 * drift)
                .with_a(1, 0, 0.5 * drift)
        }
        "degenerate1d" => {
            let beta = get("beta");
            base(1)?.with_a(1, 1, 0.5 * beta * beta).with_b(1, 0, beta)
        }
        "stoch-transport" => {
            let (beta, gamma, nu) = (get("beta"), get("gamma"), get("nu"));
            base(1)?
                .with_a(1, 1, 0.5 * beta * beta + nu)
                .with_b(1, 0, beta)
                .with_b(0, 0, gamma)
        }
        "var-coef1d" => {
            let amp = get("amp");
            if amp.abs() >= 1.0 {
                return Err(invalid(format!("amp must satisfy |amp| < 1, got {amp}")));
            }
            base(0)?.with_a(1, 1, Coefficient::spatial(move |x| 1.0 + amp * (2.0 * PI * x[0]).sin()))
        }
        _ => unreachable!("validated by problem_defaults"),
    };
    Ok(p.with_initial(u0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{check_degenerate_parabolicity, SamplePoint};

    #[test]
    fn all_names_build_and_are_parabolic() {
        for name in PROBLEM_NAMES {
            let p = named_problem(name, &BTreeMap::new(), None).unwrap();
            let sample = vec![SamplePoint::new(0, vec![0.0]), SamplePoint::new(1, vec![0.3])];
            assert!(check_degenerate_parabolicity(&p, &sample).unwrap().passed, "{name}");
        }
    }

    #[test]
    fn degenerate_problem_has_zero_form() {
        let p = named_problem("degenerate1d", &BTreeMap::new(), None).unwrap();
        let r = check_degenerate_parabolicity(&p, &[SamplePoint::new(0, vec![0.5])]).unwrap();
        assert!(r.min_eigenvalue.abs() < 1e-12);
    }

    #[test]
    fn parameters_and_errors() {
        let mut params = BTreeMap::new();
        params.insert("drift".to_string(), 0.5);
        let p = named_problem("heat1d", &params, Some(1.0)).unwrap();
        assert_eq!(p.horizon(), 1.0);
        assert_eq!(p.a(0, 1).eval(0, &[0.0]) + p.a(1, 0).eval(0, &[0.0]), 0.5);
        assert!(named_problem("nope", &BTreeMap::new(), None).is_err());
        params.insert("beta".to_string(), 1.0);
        assert!(named_problem("heat1d", &params, None).is_err());
        assert_eq!(named_problem("var-coef1d", &BTreeMap::new(), None).unwrap().horizon(), 0.1);
    }
}
