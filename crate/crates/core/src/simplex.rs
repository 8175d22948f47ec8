//! Nelder–Mead downhill simplex with the classical coefficients.
//!
//! Deterministic: vertices are ordered with a stable sort, so a newly
//! accepted vertex ranks after existing vertices of equal value.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Converged once every vertex lies within this distance (max-norm) of the best one.
    pub diameter_tol: f64,
    pub max_evaluations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-10,
            max_evaluations: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome<const K: usize> {
    pub x: [f64; K],
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Builds the starting simplex: `x0` plus one vertex per coordinate,
/// offset by 5% of that coordinate (or 0.00025 when it is zero).
pub fn initial_simplex<const K: usize>(x0: [f64; K]) -> Vec<[f64; K]> {
    let mut vertices = vec![x0];
    for j in 0..K {
        let mut v = x0;
        v[j] = if x0[j] != 0.0 { x0[j] * 1.05 } else { 0.00025 };
        vertices.push(v);
    }
    vertices
}

fn diameter<const K: usize>(vertices: &[([f64; K], f64)]) -> f64 {
    let best = vertices[0].0;
    vertices[1..]
        .iter()
        .flat_map(|(v, _)| v.iter().zip(best.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

fn affine<const K: usize>(origin: &[f64; K], toward: &[f64; K], t: f64) -> [f64; K] {
    let mut out = [0.0; K];
    for j in 0..K {
        out[j] = origin[j] + t * (toward[j] - origin[j]);
    }
    out
}

/// Minimizes `f` starting from `start` (K + 1 vertices). Non-finite
/// objective values are treated as +infinity.
pub fn minimize<const K: usize, F>(
    mut f: F,
    start: Vec<[f64; K]>,
    opts: SimplexOptions,
) -> SimplexOutcome<K>
where
    F: FnMut(&[f64; K]) -> f64,
{
    assert_eq!(start.len(), K + 1, "simplex needs K + 1 vertices");
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64; K], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut vertices: Vec<([f64; K], f64)> = start
        .into_iter()
        .map(|x| {
            let v = eval(&x, &mut evaluations);
            (x, v)
        })
        .collect();

    loop {
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&vertices) < opts.diameter_tol {
            return SimplexOutcome {
                x: vertices[0].0,
                value: vertices[0].1,
                evaluations,
                converged: true,
            };
        }
        if evaluations >= opts.max_evaluations {
            return SimplexOutcome {
                x: vertices[0].0,
                value: vertices[0].1,
                evaluations,
                converged: false,
            };
        }

        let mut centroid = [0.0; K];
        for (v, _) in &vertices[..K] {
            for j in 0..K {
                centroid[j] += v[j] / K as f64;
            }
        }
        let (worst, f_worst) = vertices[K];
        let f_best = vertices[0].1;
        let f_second = vertices[K - 1].1;

        let reflected = affine(&centroid, &worst, -REFLECT);
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected < f_best {
            let expanded = affine(&centroid, &worst, -REFLECT * EXPAND);
            let f_expanded = eval(&expanded, &mut evaluations);
            vertices[K] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < f_second {
            vertices[K] = (reflected, f_reflected);
            continue;
        }

        let accepted = if f_reflected < f_worst {
            let outside = affine(&centroid, &worst, -REFLECT * CONTRACT);
            let f_outside = eval(&outside, &mut evaluations);
            (f_outside <= f_reflected).then_some((outside, f_outside))
        } else {
            let inside = affine(&centroid, &worst, CONTRACT);
            let f_inside = eval(&inside, &mut evaluations);
            (f_inside < f_worst).then_some((inside, f_inside))
        };
        match accepted {
            Some(v) => vertices[K] = v,
            None => {
                let best = vertices[0].0;
                for vertex in vertices.iter_mut().skip(1) {
                    let x = affine(&best, &vertex.0, SHRINK);
                    let v = eval(&x, &mut evaluations);
                    *vertex = (x, v);
                }
            }
        }
    }
}
