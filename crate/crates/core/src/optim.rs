//! Derivative-free minimization used by the likelihood fits.

/// Nelder-Mead simplex search with restarts.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below `ftol * (|f_best| + 1e-12)`.
    pub ftol: f64,
    /// Initial simplex edge per coordinate.
    pub step: Vec<f64>,
    pub restarts: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn new(dim: usize) -> Self {
        Self {
            max_iter: 2000,
            ftol: 1e-9,
            step: vec![0.1; dim],
            restarts: 2,
        }
    }

    pub fn with_step(mut self, step: Vec<f64>) -> Self {
        self.step = step;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_ftol(mut self, ftol: f64) -> Self {
        self.ftol = ftol;
        self
    }

    /// Minimize `f` from `x0`. Non-finite values are treated as `+inf`.
    ///
    /// After the simplex collapses the search restarts from the best point
    /// with a fresh simplex; it stops once a restart no longer improves the
    /// value beyond the tolerance. `iterations` counts simplex updates across
    /// all restarts and is capped at `max_iter`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let mut best = x0.to_vec();
        let mut best_val = eval(&best);
        let mut total_iter = 0;
        let mut converged = false;
        for round in 0..=self.restarts {
            let budget = self.max_iter.saturating_sub(total_iter);
            if budget == 0 {
                break;
            }
            let (x, v, it, ok) = self.run(&mut eval, &best, best_val, budget);
            total_iter += it;
            let improved = best_val - v > self.ftol * (best_val.abs() + 1e-12);
            if v <= best_val {
                best = x;
                best_val = v;
            }
            converged = ok;
            if !ok || (round > 0 && !improved) {
                break;
            }
        }
        Minimum {
            x: best,
            value: best_val,
            iterations: total_iter,
            converged,
        }
    }

    fn run<F>(&self, f: &mut F, x0: &[f64], f0: f64, budget: usize) -> (Vec<f64>, f64, usize, bool)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        values.push(f0);
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step.get(i).copied().unwrap_or(0.1);
            values.push(f(&x));
            simplex.push(x);
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut order: Vec<usize> = (0..=n).collect();
        for it in 0..budget {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let (ib, iw, isw) = (order[0], order[n], order[n - 1]);
            let fb = values[ib];
            if (values[iw] - fb).abs() <= self.ftol * (fb.abs() + 1e-12) && fb.is_finite() {
                return (simplex[ib].clone(), fb, it, true);
            }

            let mut centroid = vec![0.0; n];
            for &i in &order[..n] {
                for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += v / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[iw])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let fr = f(&xr);
            if fr < fb {
                let xe = along(gamma);
                let fe = f(&xe);
                if fe < fr {
                    simplex[iw] = xe;
                    values[iw] = fe;
                } else {
                    simplex[iw] = xr;
                    values[iw] = fr;
                }
            } else if fr < values[isw] {
                simplex[iw] = xr;
                values[iw] = fr;
            } else {
                let (xc, fc) = if fr < values[iw] {
                    let xc = along(rho);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-rho);
                    let fc = f(&xc);
                    (xc, fc)
                };
                if fc < values[iw].min(fr) {
                    simplex[iw] = xc;
                    values[iw] = fc;
                } else {
                    let xb = simplex[ib].clone();
                    for &i in &order[1..] {
                        let shrunk: Vec<f64> = xb
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, x)| b + sigma * (x - b))
                            .collect();
                        values[i] = f(&shrunk);
                        simplex[i] = shrunk;
                    }
                }
            }
        }
        let ib = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap_or(0);
        (simplex[ib].clone(), values[ib], budget, false)
    }
}

/// Central-difference gradient norm, used as a fit diagnostic.
pub fn gradient_norm<F>(mut f: F, x: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut sq = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let g = (up - down) / (2.0 * h);
        sq += g * g;
    }
    sq.sqrt()
}
