//! Fourier tools on the periodic grid: transforms, spectral derivatives
//! `d_lambda^r`, and a resolution check.
//!
//! Derivatives of order at least one zero every mode that sits on the
//! Nyquist frequency of some axis, so real fields stay real.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};

/// Modes with `|k_a| > N_a / 3` on some axis count as unresolved.
pub const RESOLUTION_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct SpectralGrid {
    grid: TorusGrid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// Angular wavevectors, `len x dim`, row-major.
    wave: Vec<f64>,
    nyquist: Vec<bool>,
    high: Vec<bool>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("grid", &self.grid).finish()
    }
}

impl SpectralGrid {
    pub fn new(grid: &TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let points = grid.points().to_vec();
        let periods = grid.periods();
        let forward = points.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = points.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let d = grid.dim();
        let mut wave = Vec::with_capacity(grid.len() * d);
        let mut nyquist = Vec::with_capacity(grid.len());
        let mut high = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let multi = grid.multi_index(idx);
            let (mut nyq, mut hi) = (false, false);
            for a in 0..d {
                let n = points[a] as i64;
                let j = multi[a] as i64;
                let k = if 2 * j <= n { j } else { j - n };
                nyq |= 2 * j == n;
                hi |= 3 * k.abs() > n;
                wave.push(2.0 * PI * k as f64 / periods[a]);
            }
            nyquist.push(nyq);
            high.push(hi);
        }
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            wave,
            nyquist,
            high,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Angular wavevector of mode `idx`.
    pub fn wavevector(&self, idx: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.wave[idx * d..(idx + 1) * d]
    }

    pub fn touches_nyquist(&self, idx: usize) -> bool {
        self.nyquist[idx]
    }

    /// `kappa . lambda` for mode `idx`.
    pub fn directional_wavenumber(&self, idx: usize, lambda: &[i64]) -> f64 {
        self.wavevector(idx)
            .iter()
            .zip(lambda)
            .map(|(k, l)| k * *l as f64)
            .sum()
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let points = self.grid.points();
        let len = data.len();
        let mut stride = len;
        for (a, plan) in plans.iter().enumerate() {
            let n = points[a];
            stride /= n;
            let block = n * stride;
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, c) in line.iter_mut().enumerate() {
                        *c = data[base + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, c) in line.iter().enumerate() {
                        data[base + j * stride] = *c;
                    }
                }
            }
        }
    }

    /// Unnormalized forward DFT of a real field.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.grid.len());
        let mut data: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse DFT (normalized), keeping the real part.
    pub fn inverse(&self, mut coeffs: Vec<Complex64>) -> GridField {
        self.transform(&mut coeffs, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        GridField::from_parts(self.grid.clone(), coeffs.iter().map(|c| c.re * scale).collect())
    }

    /// Multiplies every mode by `symbol(idx)`.
    pub fn apply_symbol(&self, phi: &GridField, symbol: impl Fn(usize) -> Complex64) -> Result<GridField> {
        self.check_grid(phi)?;
        let mut c = self.forward(phi.values());
        for (idx, v) in c.iter_mut().enumerate() {
            *v *= symbol(idx);
        }
        Ok(self.inverse(c))
    }

    /// Symbol of `prod d_{lambda_t}^{r_t}` at mode `idx`, with the Nyquist rule.
    pub fn derivative_symbol(&self, idx: usize, factors: &[(&[i64], u32)]) -> Complex64 {
        let order: u32 = factors.iter().map(|f| f.1).sum();
        if order == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if self.nyquist[idx] {
            return Complex64::new(0.0, 0.0);
        }
        let mut s = Complex64::new(1.0, 0.0);
        for (lambda, r) in factors {
            let ik = Complex64::new(0.0, self.directional_wavenumber(idx, lambda));
            s *= ik.powu(*r);
        }
        s
    }

    /// `prod d_{lambda_t}^{r_t} phi`.
    pub fn derivative(&self, phi: &GridField, factors: &[(&[i64], u32)]) -> Result<GridField> {
        if factors.iter().all(|f| f.1 == 0) {
            self.check_grid(phi)?;
            return Ok(phi.clone());
        }
        self.apply_symbol(phi, |idx| self.derivative_symbol(idx, factors))
    }

    /// Fraction of the spectral energy in modes with `|k_a| > N_a / 3`.
    pub fn high_mode_fraction(&self, phi: &GridField) -> f64 {
        let c = self.forward(phi.values());
        let (mut hi, mut total) = (0.0, 0.0);
        for (idx, v) in c.iter().enumerate() {
            let e = v.norm_sqr();
            total += e;
            if self.high[idx] {
                hi += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            hi / total
        }
    }

    /// Rejects fields whose spectrum is not resolved by this grid.
    pub fn check_resolved(&self, phi: &GridField) -> Result<()> {
        let frac = self.high_mode_fraction(phi);
        if frac > RESOLUTION_TOL {
            return Err(Error::Resolution(format!(
                "{frac:.3e} of the spectral energy lies above one third of the grid modes on {:?} points",
                self.grid.points()
            )));
        }
        Ok(())
    }

    fn check_grid(&self, phi: &GridField) -> Result<()> {
        if phi.grid() != &self.grid {
            return Err(Error::GridMismatch("field is not on the spectral grid".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let g = TorusGrid::new(2, &[1.0, 2.0], &[8, 16]).unwrap();
        let sp = SpectralGrid::new(&g);
        let phi = g.sample(|x| (x[0] * 3.0).sin() + x[1] * x[0]).unwrap();
        let back = sp.inverse(sp.forward(phi.values()));
        for (a, b) in back.values().iter().zip(phi.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivatives_of_trigonometric_modes() {
        let g = TorusGrid::new(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let sp = SpectralGrid::new(&g);
        let phi = g.sample(|x| (2.0 * PI * (x[0] + 2.0 * x[1])).sin()).unwrap();
        let d = sp.derivative(&phi, &[(&[1, 1], 1)]).unwrap();
        let exact = g.sample(|x| 6.0 * PI * (2.0 * PI * (x[0] + 2.0 * x[1])).cos()).unwrap();
        assert!(d.sub(&exact).sup_norm() < 1e-10);
        let d3 = sp.derivative(&phi, &[(&[1, 0], 2), (&[0, 1], 1)]).unwrap();
        let exact = g
            .sample(|x| -2.0 * (2.0 * PI).powi(3) * (2.0 * PI * (x[0] + 2.0 * x[1])).cos())
            .unwrap();
        assert!(d3.sub(&exact).sup_norm() < 1e-8);
    }

    #[test]
    fn nyquist_mode_is_dropped() {
        let g = TorusGrid::new(1, &[1.0], &[8]).unwrap();
        let sp = SpectralGrid::new(&g);
        let phi = g.sample(|x| (8.0 * PI * x[0]).cos()).unwrap();
        assert!(sp.derivative(&phi, &[(&[1], 2)]).unwrap().sup_norm() < 1e-12);
        assert_eq!(sp.derivative(&phi, &[]).unwrap(), phi);
    }

    #[test]
    fn resolution_check() {
        let g = TorusGrid::new(1, &[1.0], &[32]).unwrap();
        let sp = SpectralGrid::new(&g);
        let smooth = g.sample(|x| (2.0 * PI * x[0]).cos()).unwrap();
        assert!(sp.check_resolved(&smooth).is_ok());
        let rough = g.sample(|x| (2.0 * PI * 14.0 * x[0]).cos()).unwrap();
        assert!(matches!(sp.check_resolved(&rough), Err(Error::Resolution(_))));
        assert!(sp.check_resolved(&GridField::zeros(&g)).is_ok());
    }
}
