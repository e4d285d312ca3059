//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use kvar::feeder::{FeederTopology, Line};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random radial feeder with `n` non-root buses and shuffled labels. About
/// two thirds of the buses get an inverter.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> FeederTopology {
    let mut labels: Vec<usize> = (1..=n).collect();
    labels.shuffle(rng);
    let mut placed = vec![0usize];
    let mut lines = Vec::new();
    for &bus in &labels {
        let parent = placed[rng.random_range(0..placed.len())];
        let (from, to) = if rng.random_bool(0.5) { (parent, bus) } else { (bus, parent) };
        lines.push(Line {
            from,
            to,
            r: rng.random_range(0.005..0.3),
            x: rng.random_range(0.005..0.3),
        });
        placed.push(bus);
    }
    lines.shuffle(rng);
    let ratings = (0..n)
        .map(|_| if rng.random_bool(0.67) { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    FeederTopology::new(lines, ratings, 1.0).expect("random tree is valid")
}

/// Line indices on the path from the root to each bus, found by walking
/// the undirected line list.
pub fn root_paths(lines: &[Line], n: usize) -> Vec<BTreeSet<usize>> {
    let mut paths: Vec<Option<BTreeSet<usize>>> = vec![None; n + 1];
    paths[0] = Some(BTreeSet::new());
    let mut changed = true;
    while changed {
        changed = false;
        for (k, l) in lines.iter().enumerate() {
            for (a, b) in [(l.from, l.to), (l.to, l.from)] {
                if paths[a].is_some() && paths[b].is_none() {
                    let mut p = paths[a].clone().unwrap();
                    p.insert(k);
                    paths[b] = Some(p);
                    changed = true;
                }
            }
        }
    }
    paths.into_iter().map(|p| p.expect("connected")).collect()
}

/// `R` and `X` by explicit intersection of root-path line sets.
pub fn brute_force_sensitivities(lines: &[Line], n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let paths = root_paths(lines, n);
    let mut r = DMatrix::zeros(n, n);
    let mut x = DMatrix::zeros(n, n);
    for m in 1..=n {
        for k in 1..=n {
            for &l in paths[m].intersection(&paths[k]) {
                r[(m - 1, k - 1)] += lines[l].r;
                x[(m - 1, k - 1)] += lines[l].x;
            }
        }
    }
    (r, x)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Accelerated projected gradient (FISTA with restarts) for
/// `min ½xᵀPx + cᵀx` over the box `[lb, ub]`.
pub fn projected_gradient(p: &DMatrix<f64>, c: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>, iters: usize) -> DVector<f64> {
    let lip = SymmetricEigen::new(p.clone()).eigenvalues.max().max(1e-300);
    let proj = |v: DVector<f64>| DVector::from_fn(v.len(), |i, _| v[i].clamp(lb[i], ub[i]));
    let f = |v: &DVector<f64>| 0.5 * v.dot(&(p * v)) + c.dot(v);
    let mut x = proj(DVector::zeros(c.len()));
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = p * &z + c;
        let next = proj(&z - grad / lip);
        if f(&next) > f(&x) {
            // restart momentum
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    x
}

/// Net injection of each bus's subtree, by depth-first enumeration.
pub fn subtree_sum(lines: &[Line], n: usize, values: &[f64], root: usize) -> f64 {
    let paths = root_paths(lines, n);
    (1..=n)
        .filter(|&b| b == root || paths[b].is_superset(&paths[root]) && paths[b].len() > paths[root].len())
        .map(|b| values[b - 1])
        .sum()
}
