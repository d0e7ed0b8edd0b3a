//! Bounded derivative-free simplex (Nelder-Mead) minimizer.
//!
//! Deterministic: a fixed initial simplex, no restarts, box bounds
//! enforced by clamping every candidate point.

#[derive(Debug, Clone)]
pub(crate) struct NelderMeadOptions {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_evals: usize,
    /// Stop when the simplex's function-value spread falls below this.
    pub f_tol: f64,
    /// Initial simplex step as a fraction of each box width.
    pub step_fraction: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimize `f` from `x0` within the box. Infeasible objective values are
/// reported by the callback as +inf and handled like any bad vertex.
pub(crate) fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const BETA: f64 = 0.5; // contraction
    const DELTA: f64 = 0.5; // shrink

    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp(&mut start, &opts.lower, &opts.upper);
    simplex.push(start.clone());
    for i in 0..dim {
        let mut v = start.clone();
        let step = opts.step_fraction * (opts.upper[i] - opts.lower[i]);
        // step inward if the boundary is in the way
        v[i] = if v[i] + step <= opts.upper[i] {
            v[i] + step
        } else {
            v[i] - step
        };
        clamp(&mut v, &opts.lower, &opts.upper);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    while evals < opts.max_evals {
        // order vertices best..worst
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = values[worst] - values[best];
        if spread.abs() <= opts.f_tol && values[best].is_finite() {
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for k in 0..dim {
                centroid[k] += simplex[i][k] / dim as f64;
            }
        }

        let mut reflected = vec![0.0; dim];
        for k in 0..dim {
            reflected[k] = centroid[k] + ALPHA * (centroid[k] - simplex[worst][k]);
        }
        clamp(&mut reflected, &opts.lower, &opts.upper);
        let f_r = eval(&reflected, &mut evals);

        if f_r < values[best] {
            let mut expanded = vec![0.0; dim];
            for k in 0..dim {
                expanded[k] = centroid[k] + GAMMA * (reflected[k] - centroid[k]);
            }
            clamp(&mut expanded, &opts.lower, &opts.upper);
            let f_e = eval(&expanded, &mut evals);
            if f_e < f_r {
                simplex[worst] = expanded;
                values[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_r;
            }
        } else if f_r < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_r;
        } else {
            // contract toward the better of worst/reflected
            let (anchor, f_anchor) = if f_r < values[worst] {
                (reflected.clone(), f_r)
            } else {
                (simplex[worst].clone(), values[worst])
            };
            let mut contracted = vec![0.0; dim];
            for k in 0..dim {
                contracted[k] = centroid[k] + BETA * (anchor[k] - centroid[k]);
            }
            clamp(&mut contracted, &opts.lower, &opts.upper);
            let f_c = eval(&contracted, &mut evals);
            if f_c < f_anchor {
                simplex[worst] = contracted;
                values[worst] = f_c;
            } else {
                // shrink toward the best vertex
                for &i in order.iter().skip(1) {
                    for k in 0..dim {
                        simplex[i][k] =
                            simplex[best][k] + DELTA * (simplex[i][k] - simplex[best][k]);
                    }
                    let v = simplex[i].clone();
                    values[i] = eval(&v, &mut evals);
                }
            }
        }
    }

    let (best, &f_best) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        f: f_best,
        evals,
        converged: f_best.is_finite(),
    }
}
