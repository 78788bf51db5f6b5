//! Wiener increments shared by every mesh of a ladder.
//!
//! Draws are counter-addressed: the increment for step `i` and driver `rho`
//! is the `i`-th output of a ChaCha8 stream selected by `rho`, keyed by the
//! seed. Adding drivers never changes existing columns, and columns can be
//! generated in any order. Normal variates use the inverse normal CDF of
//! Wichura's AS 241 (PPND16) rational approximation, which needs only
//! arithmetic, `sqrt` and `ln`.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    steps: usize,
    drivers: usize,
    tau: f64,
    seed: u64,
    /// Row-major `steps x drivers`; row `i - 1` holds the increments of step `i`.
    xi: Vec<f64>,
}

/// I.i.d. `N(0, tau)` increments for steps `1..=n` and `d1` drivers.
pub fn sample_increments(n: usize, d1: usize, tau: f64, seed: u64) -> Result<BrownianIncrements> {
    if n == 0 {
        return Err(invalid("the number of steps must be positive"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    let sd = tau.sqrt();
    let mut xi = vec![0.0; n * d1];
    for rho in 0..d1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rho as u64);
        for i in 0..n {
            xi[i * d1 + rho] = sd * standard_normal(unit_open(rng.next_u64()));
        }
    }
    Ok(BrownianIncrements {
        steps: n,
        drivers: d1,
        tau,
        seed,
        xi,
    })
}

impl BrownianIncrements {
    /// Wraps explicit increments, e.g. for deterministic tests.
    pub fn from_matrix(steps: usize, drivers: usize, tau: f64, seed: u64, xi: Vec<f64>) -> Result<Self> {
        if steps == 0 || !(tau.is_finite() && tau > 0.0) {
            return Err(invalid("steps and tau must be positive"));
        }
        if xi.len() != steps * drivers || xi.iter().any(|v| !v.is_finite()) {
            return Err(invalid("increment matrix has the wrong size or non-finite entries"));
        }
        Ok(Self {
            steps,
            drivers,
            tau,
            seed,
            xi,
        })
    }

    /// All-zero increments.
    pub fn zeros(steps: usize, drivers: usize, tau: f64) -> Result<Self> {
        Self::from_matrix(steps, drivers, tau, 0, vec![0.0; steps * drivers])
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn drivers(&self) -> usize {
        self.drivers
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increments of step `i` (`1..=n`), one per driver.
    pub fn step(&self, i: usize) -> &[f64] {
        assert!(i >= 1 && i <= self.steps, "step {i} out of 1..={}", self.steps);
        &self.xi[(i - 1) * self.drivers..i * self.drivers]
    }

    pub fn get(&self, i: usize, rho: usize) -> f64 {
        self.step(i)[rho]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.xi
    }

    /// `W_T` per driver.
    pub fn path_sum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.drivers];
        for row in self.xi.chunks(self.drivers.max(1)).take(self.steps) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Little-endian dump: `n: u64, d1: u64, tau: f64, seed: u64`, then the
    /// `n * d1` increments row-major as `f64`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.steps as u64).to_le_bytes())?;
        w.write_all(&(self.drivers as u64).to_le_bytes())?;
        w.write_all(&self.tau.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.xi {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated increments file: {e}")))?;
            Ok(word)
        };
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let drivers = u64::from_le_bytes(next(&mut r)?) as usize;
        let tau = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let count = steps
            .checked_mul(drivers)
            .ok_or_else(|| Error::Format("increment matrix size overflows".into()))?;
        let mut xi = Vec::with_capacity(count);
        for _ in 0..count {
            xi.push(f64::from_le_bytes(next(&mut r)?));
        }
        Self::from_matrix(steps, drivers, tau, seed, xi).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Maps 64 random bits to the open interval (0, 1).
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse standard normal CDF, Wichura (1988) AS 241 PPND16; relative
/// accuracy about 1e-16 on (0, 1).
#[allow(clippy::excessive_precision)]
pub fn standard_normal(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
