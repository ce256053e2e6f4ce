//! Nelder-Mead simplex minimizer for small, smooth problems.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when the spread of objective values over the simplex is below this.
    pub f_abs_tol: f64,
    /// ...and every vertex lies within this relative distance of the best one.
    pub x_rel_tol: f64,
    /// Initial simplex edge, relative to each coordinate (absolute when the
    /// coordinate is zero).
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iterations: 2000,
            f_abs_tol: 1e-10,
            x_rel_tol: 1e-8,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

pub fn minimize<F>(f: F, start: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i] != 0.0 {
            opts.initial_step * v[i].abs()
        } else {
            opts.initial_step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut second = vec![0.0; n];

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let best = &simplex[0];
        let x_ok = simplex[1..].iter().all(|v| {
            v.iter()
                .zip(best)
                .all(|(a, b)| (a - b).abs() <= opts.x_rel_tol * b.abs().max(1.0))
        });
        if spread.abs() < opts.f_abs_tol && x_ok {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64, out: &mut Vec<f64>| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&worst) {
                *o = c + t * (c - w);
            }
        };

        along(REFLECT, &mut trial);
        let fr = eval(&trial);
        if fr < values[0] {
            along(EXPAND, &mut second);
            let fe = eval(&second);
            if fe < fr {
                simplex[n].copy_from_slice(&second);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        // outside contraction when the reflection beat the worst point
        let (t, reference) = if fr < values[n] {
            (CONTRACT, fr)
        } else {
            (-CONTRACT, values[n])
        };
        along(t, &mut second);
        let fc = eval(&second);
        if fc < reference {
            simplex[n].copy_from_slice(&second);
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for (v, val) in simplex.iter_mut().zip(values.iter_mut()).skip(1) {
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + SHRINK * (*x - b);
            }
            *val = eval(v);
        }
    }

    Minimum {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        converged,
    }
}
