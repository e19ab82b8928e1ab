//! Derivative-free minimization used by the calibrator.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this distance of the best one.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { initial_step: 0.3, max_evals: 600, f_tol: 1e-10, x_tol: 1e-5 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

/// Nelder–Mead with box constraints enforced by projecting trial points.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], bounds: &[(f64, f64)], opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 || bounds.len() != n {
        return Err(Error::InvalidInput("optimizer needs one bound per parameter".into()));
    }
    let clamp = |x: &mut Vec<f64>| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let (lo, hi) = bounds[i];
        v[i] = if v[i] + opts.initial_step <= hi { v[i] + opts.initial_step } else { (v[i] - opts.initial_step).max(lo) };
        simplex.push(v);
    }
    let mut fv = Vec::with_capacity(n + 1);
    for v in &simplex {
        fv.push(eval(v, &mut evals)?);
    }
    let mut trace = Vec::new();
    let mut converged = false;

    while evals < opts.max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();
        trace.push(fv[0]);

        let spread = fv[n] - fv[0];
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= opts.f_tol * (1.0 + fv[0].abs()) && size <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect();
            clamp(&mut p);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals)?;
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
            continue;
        }
        if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < fv[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals)?;
            (xc, fc.min(f64::INFINITY))
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals)?;
            (xc, fc)
        };
        if fc < fv[n].min(fr) {
            simplex[n] = xc;
            fv[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            let mut p: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
            clamp(&mut p);
            fv[i] = eval(&p, &mut evals)?;
            simplex[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    Ok(Minimum { x: simplex[best].clone(), f: fv[best], evals, converged, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let f = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opts = NelderMeadOptions { max_evals: 5000, f_tol: 1e-14, x_tol: 1e-8, ..Default::default() };
        let m = nelder_mead(f, &[-1.2, 1.0], &[(-5.0, 5.0), (-5.0, 5.0)], &opts).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Ok((x[0] - 3.0).powi(2));
        let m = nelder_mead(f, &[0.0], &[(-1.0, 1.0)], &NelderMeadOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }
}
