//! Deterministic coefficient evaluators `c(i, x)`.

use std::fmt;
use std::sync::Arc;

use crate::grid::TorusGrid;

type TemporalFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
type SpatialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GeneralFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

/// A real coefficient depending on the time index `i` and the point `x`.
///
/// The variant records which arguments actually matter, so the solvers can
/// cache samples across time steps and pick spectral paths for coefficients
/// that are constant in space.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// Depends on the time index only.
    Temporal(TemporalFn),
    /// Depends on the point only.
    Spatial(SpatialFn),
    General(GeneralFn),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Temporal(_) => f.write_str("Temporal(..)"),
            Self::Spatial(_) => f.write_str("Spatial(..)"),
            Self::General(_) => f.write_str("General(..)"),
        }
    }
}

impl Default for Coefficient {
    fn default() -> Self {
        Self::Constant(0.0)
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Self::Constant(c)
    }
}

/// A coefficient evaluated on every point of a grid at one time index.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampled {
    Uniform(f64),
    Field(Vec<f64>),
}

impl Sampled {
    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        match self {
            Self::Uniform(c) => *c,
            Self::Field(v) => v[idx],
        }
    }

    /// Expands to one value per point.
    pub fn to_values(&self, len: usize) -> Vec<f64> {
        match self {
            Self::Uniform(c) => vec![*c; len],
            Self::Field(v) => v.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Uniform(c) => *c == 0.0,
            Self::Field(v) => v.iter().all(|c| *c == 0.0),
        }
    }
}

impl Coefficient {
    pub fn zero() -> Self {
        Self::Constant(0.0)
    }

    pub fn temporal(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        Self::Temporal(Arc::new(f))
    }

    pub fn spatial(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Spatial(Arc::new(f))
    }

    pub fn general(f: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::General(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Temporal(f) => f(i),
            Self::Spatial(f) => f(x),
            Self::General(f) => f(i, x),
        }
    }

    /// True only for the literal constant zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(c) if *c == 0.0)
    }

    pub fn is_space_constant(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::Temporal(_))
    }

    pub fn is_time_independent(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::Spatial(_))
    }

    /// The value at time `i` if the coefficient does not vary in space.
    pub fn uniform_value(&self, i: usize) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::Temporal(f) => Some(f(i)),
            _ => None,
        }
    }

    pub fn sample(&self, grid: &TorusGrid, i: usize) -> Sampled {
        if let Some(c) = self.uniform_value(i) {
            return Sampled::Uniform(c);
        }
        let mut x = vec![0.0; grid.dim()];
        Sampled::Field(
            (0..grid.len())
                .map(|idx| {
                    grid.write_coords(idx, &mut x);
                    self.eval(i, &x)
                })
                .collect(),
        )
    }

    /// Pointwise `op(self, other)`, keeping the most specific variant.
    pub fn zip_with(
        &self,
        other: &Coefficient,
        op: impl Fn(f64, f64) -> f64 + Send + Sync + Copy + 'static,
    ) -> Coefficient {
        use Coefficient::*;
        match (self, other) {
            (Constant(a), Constant(b)) => Constant(op(*a, *b)),
            _ => {
                let (a, b) = (self.clone(), other.clone());
                if self.is_space_constant() && other.is_space_constant() {
                    Coefficient::temporal(move |i| op(a.eval(i, &[]), b.eval(i, &[])))
                } else if self.is_time_independent() && other.is_time_independent() {
                    Coefficient::spatial(move |x| op(a.eval(0, x), b.eval(0, x)))
                } else {
                    Coefficient::general(move |i, x| op(a.eval(i, x), b.eval(i, x)))
                }
            }
        }
    }

    pub fn map(&self, op: impl Fn(f64) -> f64 + Send + Sync + Copy + 'static) -> Coefficient {
        self.zip_with(&Coefficient::zero(), move |a, _| op(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_report_dependence() {
        let t = Coefficient::temporal(|i| i as f64);
        let s = Coefficient::spatial(|x| x[0]);
        assert!(t.is_space_constant() && !t.is_time_independent());
        assert!(s.is_time_independent() && !s.is_space_constant());
        let sum = t.zip_with(&s, |a, b| a + b);
        assert!(matches!(sum, Coefficient::General(_)));
        assert_eq!(sum.eval(3, &[0.5]), 3.5);
        let c = Coefficient::Constant(0.3).zip_with(&Coefficient::Constant(0.2), |a, b| a + b);
        assert!(matches!(c, Coefficient::Constant(v) if (v - 0.5).abs() < 1e-15));
        assert!(Coefficient::zero().is_zero());
        assert!(!Coefficient::Constant(1e-300).is_zero());
    }

    #[test]
    fn sampling() {
        let g = TorusGrid::new(1, &[1.0], &[4]).unwrap();
        assert_eq!(Coefficient::Constant(2.0).sample(&g, 0), Sampled::Uniform(2.0));
        let s = Coefficient::spatial(|x| 2.0 * x[0]).sample(&g, 7);
        assert_eq!(s, Sampled::Field(vec![0.0, 0.5, 1.0, 1.5]));
    }
}
