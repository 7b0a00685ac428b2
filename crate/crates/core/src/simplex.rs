//! Nelder–Mead downhill simplex.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop when `|f_worst - f_best| <= f_tol_rel · |f_best| + f_tol_abs`.
    pub f_tol_rel: f64,
    pub f_tol_abs: f64,
    /// Stop when every vertex lies within `x_tol` of the best one (per coordinate).
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol_rel: 1e-13,
            f_tol_abs: 1e-300,
            x_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0` with an initial simplex spanned by `steps`
/// along each coordinate. Non-finite objective values are treated as `+∞`.
pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if steps[i] != 0.0 { steps[i] } else { 1e-4 };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();

    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let (fbest, fworst) = (vals[0], vals[n]);
        let spread_ok = (fworst - fbest).abs() <= opts.f_tol_rel * fbest.abs() + opts.f_tol_abs;
        let size_ok = pts[1..].iter().all(|p| {
            p.iter().zip(&pts[0]).all(|(a, b)| (a - b).abs() <= opts.x_tol * (1.0 + b.abs()))
        });
        if spread_ok && size_ok {
            converged = true;
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }

        let along = |coef: f64, out: &mut Vec<f64>, worst: &[f64], centroid: &[f64]| {
            for j in 0..n {
                out[j] = centroid[j] + coef * (worst[j] - centroid[j]);
            }
        };

        along(-alpha, &mut trial, &pts[n], &centroid);
        let fr = eval(&trial, &mut evals);
        if fr < vals[0] {
            let reflected = trial.clone();
            along(-gamma, &mut trial, &pts[n], &centroid);
            let fe = eval(&trial, &mut evals);
            if fe < fr {
                pts[n].copy_from_slice(&trial);
                vals[n] = fe;
            } else {
                pts[n] = reflected;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n].copy_from_slice(&trial);
            vals[n] = fr;
            continue;
        }
        // Contraction, outside if the reflection beat the worst point.
        let (coef, bound) = if fr < vals[n] { (-rho, fr) } else { (rho, vals[n]) };
        along(coef, &mut trial, &pts[n], &centroid);
        let fc = eval(&trial, &mut evals);
        if fc < bound {
            pts[n].copy_from_slice(&trial);
            vals[n] = fc;
            continue;
        }
        let best = pts[0].clone();
        for i in 1..=n {
            for j in 0..n {
                pts[i][j] = best[j] + shrink * (pts[i][j] - best[j]);
            }
            vals[i] = eval(&pts[i], &mut evals);
        }
    }

    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult {
        x: pts[best].clone(),
        f: vals[best],
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &[0.1, 0.1], &SimplexOptions::default());
        assert!(r.converged);
        assert_close!(r.x[0], 1.0, 1e-6);
        assert_close!(r.x[1], 1.0, 1e-6);
    }

    #[test]
    fn quadratic_bowl_in_five_dimensions() {
        let target = [1.0, -2.0, 0.5, 3.0, 0.0];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i as f64 + 1.0) * (a - b).powi(2))
                .sum::<f64>()
        };
        let r = minimize(f, &[0.0; 5], &[0.5; 5], &SimplexOptions::default());
        for (a, b) in r.x.iter().zip(&target) {
            assert_close!(*a, *b, 1e-6);
        }
    }

    #[test]
    fn eval_budget_is_respected() {
        let opts = SimplexOptions { max_evals: 30, ..Default::default() };
        let r = minimize(|x: &[f64]| x[0].powi(2) + x[1].powi(2), &[5.0, 5.0], &[1.0, 1.0], &opts);
        assert!(!r.converged);
        assert!(r.evals <= 30 + 3);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let r = minimize(f, &[0.5], &[0.2], &SimplexOptions::default());
        assert_close!(r.x[0], 1.0, 1e-6);
    }
}
