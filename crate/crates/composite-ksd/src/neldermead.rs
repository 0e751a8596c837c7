//! Deterministic Nelder–Mead simplex minimization with box constraints.
//!
//! Standard coefficients (reflection 1, expansion 2, contraction 0.5,
//! shrink 0.5). Every proposed point is clamped into the box. The initial
//! simplex perturbs each coordinate by `0.1·(1 + |x_i|)`, flipping the sign
//! when the step would leave the box. Vertex ordering breaks f-value ties
//! lexicographically on the parameter vector, so runs are reproducible down
//! to the bit.

use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when every vertex is within this ∞-distance of the best vertex
    /// and the f-spread is below it as well.
    pub tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: DVector<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for i in 0..a.len() {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Minimize `f` inside `[lower, upper]`, starting from `x0` (assumed inside).
pub fn minimize(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let dim = x0.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut start = x0.clone();
    clamp(&mut start, lower, upper);
    simplex.push((start.clone(), f(&start)));
    for i in 0..dim {
        let mut v = start.clone();
        let step = 0.1 * (1.0 + v[i].abs());
        if v[i] + step <= upper[i] {
            v[i] += step;
        } else {
            v[i] -= step;
        }
        clamp(&mut v, lower, upper);
        let fv = f(&v);
        simplex.push((v, fv));
    }

    let order = |s: &mut Vec<(DVector<f64>, f64)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| {
            if lex_less(&a.0, &b.0) {
                std::cmp::Ordering::Less
            } else if lex_less(&b.0, &a.0) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        }))
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        order(&mut simplex);
        let spread = simplex[dim].1 - simplex[0].1;
        let mut diam = 0.0f64;
        for v in simplex.iter().skip(1) {
            for i in 0..dim {
                diam = diam.max((v.0[i] - simplex[0].0[i]).abs());
            }
        }
        if spread.abs() <= opts.tolerance && diam <= opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        // centroid of all but the worst vertex
        let mut centroid = DVector::zeros(dim);
        for v in simplex.iter().take(dim) {
            centroid += &v.0;
        }
        centroid /= dim as f64;
        let worst = simplex[dim].clone();

        let mut reflected = &centroid + (&centroid - &worst.0);
        clamp(&mut reflected, lower, upper);
        let fr = f(&reflected);

        if fr < simplex[0].1 {
            // try expanding
            let mut expanded = &centroid + (&reflected - &centroid) * 2.0;
            clamp(&mut expanded, lower, upper);
            let fe = f(&expanded);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            // contract toward the better of worst/reflected
            let (base, fb) = if fr < worst.1 {
                (reflected.clone(), fr)
            } else {
                (worst.0.clone(), worst.1)
            };
            let mut contracted = &centroid + (&base - &centroid) * 0.5;
            clamp(&mut contracted, lower, upper);
            let fc = f(&contracted);
            if fc < fb {
                simplex[dim] = (contracted, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut shrunk = &best + (&v.0 - &best) * 0.5;
                    clamp(&mut shrunk, lower, upper);
                    let fs = f(&shrunk);
                    *v = (shrunk, fs);
                }
            }
        }
    }
    order(&mut simplex);
    NelderMeadResult {
        x: simplex[0].0.clone(),
        fx: simplex[0].1,
        iterations,
        converged,
    }
}
