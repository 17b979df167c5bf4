//! Box-constrained Nelder-Mead simplex minimizer.

use nalgebra::SVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Edge length of the initial right-angled simplex.
    pub initial_scale: f64,
    /// Converged once the simplex diameter is below this...
    pub x_tolerance: f64,
    /// ...and the spread of function values is below this.
    pub f_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_scale: 1e-5,
            x_tolerance: 1e-10,
            f_tolerance: 1e-32,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Minimum<const D: usize> {
    pub x: SVector<f64, D>,
    pub value: f64,
    pub iterations: usize,
}

/// Axis-aligned feasible region. Points outside are never evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<const D: usize> {
    pub lower: SVector<f64, D>,
    pub upper: SVector<f64, D>,
}

impl<const D: usize> Bounds<D> {
    pub fn contains(&self, x: &SVector<f64, D>) -> bool {
        (0..D).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    /// Smallest distance from `x` to any face.
    pub fn margin(&self, x: &SVector<f64, D>) -> f64 {
        (0..D)
            .map(|i| (x[i] - self.lower[i]).min(self.upper[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }
}

impl NelderMead {
    pub fn minimize<const D: usize, F>(
        &self,
        mut f: F,
        start: SVector<f64, D>,
        bounds: Option<&Bounds<D>>,
    ) -> Result<Minimum<D>>
    where
        F: FnMut(&SVector<f64, D>) -> Result<f64>,
    {
        let mut eval = |x: &SVector<f64, D>| -> Result<f64> {
            match bounds {
                Some(b) if !b.contains(x) => Ok(f64::INFINITY),
                _ => f(x),
            }
        };

        let mut simplex: Vec<(SVector<f64, D>, f64)> = Vec::with_capacity(D + 1);
        simplex.push((start, eval(&start)?));
        for i in 0..D {
            let mut x = start;
            x[i] += self.initial_scale;
            if let Some(b) = bounds {
                if !b.contains(&x) {
                    x[i] -= 2.0 * self.initial_scale;
                }
            }
            simplex.push((x, eval(&x)?));
        }

        for iteration in 0..self.max_iterations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if self.converged(&simplex) {
                return Ok(Minimum {
                    x: simplex[0].0,
                    value: simplex[0].1,
                    iterations: iteration,
                });
            }

            let centroid = simplex[..D]
                .iter()
                .fold(SVector::<f64, D>::zeros(), |acc, (x, _)| acc + x)
                / D as f64;
            let (worst, f_worst) = simplex[D];
            let f_best = simplex[0].1;
            let f_second = simplex[D - 1].1;

            let xr = centroid + (centroid - worst) * self.reflection;
            let fr = eval(&xr)?;
            if fr < f_best {
                let xe = centroid + (xr - centroid) * self.expansion;
                let fe = eval(&xe)?;
                simplex[D] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < f_second {
                simplex[D] = (xr, fr);
                continue;
            }
            // Contraction: outside if the reflection improved on the worst.
            let (xc, fc, accept) = if fr < f_worst {
                let xc = centroid + (xr - centroid) * self.contraction;
                let fc = eval(&xc)?;
                (xc, fc, fc <= fr)
            } else {
                let xc = centroid + (worst - centroid) * self.contraction;
                let fc = eval(&xc)?;
                (xc, fc, fc < f_worst)
            };
            if accept {
                simplex[D] = (xc, fc);
                continue;
            }
            let best = simplex[0].0;
            for vertex in simplex.iter_mut().skip(1) {
                let x = best + (vertex.0 - best) * self.shrink;
                *vertex = (x, eval(&x)?);
            }
        }
        Err(Error::NonConvergence {
            iterations: self.max_iterations,
        })
    }

    fn converged<const D: usize>(&self, simplex: &[(SVector<f64, D>, f64)]) -> bool {
        let spread = simplex[D].1 - simplex[0].1;
        if !(spread < self.f_tolerance) {
            return false;
        }
        let mut diameter: f64 = 0.0;
        for i in 0..simplex.len() {
            for j in i + 1..simplex.len() {
                diameter = diameter.max((simplex[i].0 - simplex[j].0).norm());
            }
        }
        diameter < self.x_tolerance
    }
}
