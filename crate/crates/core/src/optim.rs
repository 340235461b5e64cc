//! Derivative-free simplex minimization.

use crate::scalar::Scalar;

/// Nelder-Mead settings.
#[derive(Debug, Clone)]
pub struct NelderMead<T> {
    /// Iteration budget shared across restarts.
    pub max_iter: usize,
    /// Convergence when `f_worst - f_best <= ftol · max(|f_best|, 1e-12)`.
    pub ftol: T,
    /// Offset of the initial vertices along each axis.
    pub initial_step: Vec<T>,
    /// Number of restarts from the reported minimum once converged.
    pub restarts: usize,
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl<T: Scalar> NelderMead<T> {
    pub fn new(dim: usize) -> Self {
        NelderMead {
            max_iter: 2000,
            ftol: T::lit(1e-8),
            initial_step: vec![T::lit(0.1); dim],
            restarts: 1,
        }
    }

    pub fn with_step(mut self, step: Vec<T>) -> Self {
        self.initial_step = step;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_ftol(mut self, ftol: T) -> Self {
        self.ftol = ftol;
        self
    }

    /// Minimizes `f` from `x0`. Non-finite function values count as `+∞`.
    pub fn minimize<F>(&self, mut f: F, x0: &[T]) -> Minimum<T>
    where
        F: FnMut(&[T]) -> T,
    {
        let mut eval = |x: &[T], count: &mut usize| {
            *count += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                T::infinity()
            }
        };
        let mut evaluations = 0;
        let mut iterations = 0;
        let mut start = x0.to_vec();
        let mut best: Option<(Vec<T>, T)> = None;
        let mut converged = false;
        for attempt in 0..=self.restarts {
            let budget = self.max_iter.saturating_sub(iterations);
            if budget == 0 {
                break;
            }
            let (x, fx, iters, ok) = self.run(&mut eval, &start, budget, &mut evaluations);
            iterations += iters;
            let improved = match &best {
                None => true,
                Some((_, fb)) => fx < *fb,
            };
            let material = match &best {
                None => true,
                Some((_, fb)) => (*fb - fx) > self.ftol * fx.abs().max(T::lit(1e-12)),
            };
            if improved {
                best = Some((x.clone(), fx));
            }
            converged = ok;
            if !ok || (attempt > 0 && !material) {
                break;
            }
            start = x;
        }
        let (x, value) = best.expect("at least one simplex run");
        Minimum {
            x,
            value,
            iterations,
            evaluations,
            converged,
        }
    }

    fn run<E>(&self, eval: &mut E, x0: &[T], budget: usize, count: &mut usize) -> (Vec<T>, T, usize, bool)
    where
        E: FnMut(&[T], &mut usize) -> T,
    {
        let n = x0.len();
        let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
        let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0, count)));
        for i in 0..n {
            let mut x = x0.to_vec();
            let step = self.initial_step.get(i).copied().unwrap_or(T::lit(0.1));
            x[i] = x[i] + step;
            let fx = eval(&x, count);
            simplex.push((x, fx));
        }
        let order = |s: &mut Vec<(Vec<T>, T)>| {
            s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        };
        order(&mut simplex);
        let mut iter = 0;
        while iter < budget {
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            if f_best.is_finite()
                && f_worst.is_finite()
                && f_worst - f_best <= self.ftol * f_best.abs().max(T::lit(1e-12))
            {
                return (simplex[0].0.clone(), f_best, iter, true);
            }
            iter += 1;

            let mut centroid = vec![T::zero(); n];
            for (x, _) in &simplex[..n] {
                for (c, &v) in centroid.iter_mut().zip(x) {
                    *c = *c + v;
                }
            }
            let nn = T::from_usize_lossy(n);
            centroid.iter_mut().for_each(|c| *c = *c / nn);
            let along = |t: T, worst: &[T]| -> Vec<T> {
                centroid
                    .iter()
                    .zip(worst)
                    .map(|(&c, &w)| c + t * (c - w))
                    .collect()
            };

            let worst = simplex[n].0.clone();
            let xr = along(alpha, &worst);
            let fr = eval(&xr, count);
            if fr < simplex[0].1 {
                let xe = along(gamma, &worst);
                let fe = eval(&xe, count);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(rho, &worst);
                    let fc = eval(&xc, count);
                    (xc, fc)
                } else {
                    let xc = along(-rho, &worst);
                    let fc = eval(&xc, count);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        let x: Vec<T> = best
                            .iter()
                            .zip(&vertex.0)
                            .map(|(&b, &v)| b + sigma * (v - b))
                            .collect();
                        let fx = eval(&x, count);
                        *vertex = (x, fx);
                    }
                }
            }
            order(&mut simplex);
        }
        (simplex[0].0.clone(), simplex[0].1, iter, false)
    }
}
