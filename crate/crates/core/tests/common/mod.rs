#![allow(dead_code)]

use rand::Rng;

/// Ancestors of `set` (inclusive) by repeated parent expansion.
pub fn ancestors(n: usize, edges: &[(usize, usize)], set: &[usize]) -> Vec<bool> {
    let mut an = vec![false; n];
    let mut stack: Vec<usize> = set.to_vec();
    while let Some(v) = stack.pop() {
        if an[v] {
            continue;
        }
        an[v] = true;
        stack.extend(edges.iter().filter(|&&(_, c)| c == v).map(|&(p, _)| p));
    }
    an
}

fn adjacent(edges: &[(usize, usize)], u: usize, v: usize) -> bool {
    edges.iter().any(|&(p, c)| (p == u && c == v) || (p == v && c == u))
}

fn is_collider(edges: &[(usize, usize)], prev: usize, mid: usize, next: usize) -> bool {
    edges.contains(&(prev, mid)) && edges.contains(&(next, mid))
}

/// Whether the simple path is blocked by `c`: an endpoint in `c`, a collider
/// outside an(c), or a non-collider inside `c`.
fn blocked(edges: &[(usize, usize)], path: &[usize], in_c: &[bool], an_c: &[bool]) -> bool {
    if in_c[path[0]] || in_c[*path.last().unwrap()] {
        return true;
    }
    path.windows(3).any(|w| {
        if is_collider(edges, w[0], w[1], w[2]) {
            !an_c[w[1]]
        } else {
            in_c[w[1]]
        }
    })
}

fn all_paths_blocked(
    n: usize,
    edges: &[(usize, usize)],
    path: &mut Vec<usize>,
    targets: &[bool],
    in_c: &[bool],
    an_c: &[bool],
) -> bool {
    let last = *path.last().unwrap();
    if path.len() > 1 && targets[last] {
        return blocked(edges, path, in_c, an_c);
    }
    for next in 0..n {
        if path.contains(&next) || !adjacent(edges, last, next) {
            continue;
        }
        path.push(next);
        let ok = all_paths_blocked(n, edges, path, targets, in_c, an_c);
        path.pop();
        if !ok {
            return false;
        }
    }
    true
}

/// d-separation of `a` and `b` given `c` by enumerating every simple path.
pub fn brute_force_dsep(n: usize, edges: &[(usize, usize)], a: &[usize], b: &[usize], c: &[usize]) -> bool {
    let mut in_c = vec![false; n];
    for &v in c {
        in_c[v] = true;
    }
    let an_c = ancestors(n, edges, c);
    let mut targets = vec![false; n];
    for &v in b {
        targets[v] = true;
    }
    a.iter().all(|&s| {
        let mut path = vec![s];
        all_paths_blocked(n, edges, &mut path, &targets, &in_c, &an_c)
    })
}

/// Random DAG on `n` nodes: random order, each forward pair joined with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((order[i], order[j]));
            }
        }
    }
    edges
}

/// All subsets of `pool`.
pub fn subsets(pool: &[usize]) -> Vec<Vec<usize>> {
    (0..1u32 << pool.len())
        .map(|mask| pool.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect())
        .collect()
}

/// Sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One-sided 99% binomial upper limit on the count of events with probability `p` in `n` trials.
pub fn binomial_upper_99(n: usize, p: f64) -> f64 {
    n as f64 * p + 2.326 * (n as f64 * p * (1.0 - p)).sqrt()
}
