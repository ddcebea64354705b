//! Progressive-edge-growth construction of column-regular parity-check
//! matrices.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::encode::systematic_order;
use super::ParityCheckMatrix;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 16;

/// Builds an `(n - k) × n` matrix with every column of weight `column_weight`
/// and row weights as equal as the degree budget allows.
///
/// Edges are placed greedily so that each new edge closes the longest
/// possible cycle. The columns of the result are ordered so that the last
/// `n - k` columns form an invertible block, i.e. the first `k` code bits
/// are systematic.
pub fn construct_regular_ldpc<R: Rng + ?Sized>(
    n: usize,
    rate: f64,
    column_weight: usize,
    rng: &mut R,
) -> Result<ParityCheckMatrix> {
    if n == 0 || !(0.0..1.0).contains(&rate) || rate == 0.0 {
        return Err(Error::Code(format!("need n > 0 and 0 < rate < 1, got n={n}, rate={rate}")));
    }
    let k_real = n as f64 * rate;
    let k = k_real.round() as usize;
    if (k_real - k as f64).abs() > 1e-9 || k == 0 || k >= n {
        return Err(Error::Code(format!("n·rate = {k_real} is not a usable integer")));
    }
    let m = n - k;
    if column_weight < 2 || column_weight > m {
        return Err(Error::Code(format!(
            "column weight {column_weight} infeasible with {m} checks"
        )));
    }
    let max_row = (n * column_weight).div_ceil(m);
    if max_row > n {
        return Err(Error::Code("row weight exceeds block length".into()));
    }

    for attempt in 0..MAX_ATTEMPTS {
        let rows = match peg_rows(n, m, column_weight, max_row, rng) {
            Some(rows) => rows,
            None => continue,
        };
        let pcm = ParityCheckMatrix::from_rows(n, rows)?;
        match systematic_order(&pcm) {
            Some(order) => return pcm.permute_columns(&order),
            None => log::debug!("PEG attempt {attempt} rank deficient, retrying"),
        }
    }
    Err(Error::Code(format!(
        "no full-rank ({n}, {k}) matrix with column weight {column_weight} after {MAX_ATTEMPTS} attempts"
    )))
}

fn peg_rows<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    dv: usize,
    max_row: usize,
    rng: &mut R,
) -> Option<Vec<Vec<usize>>> {
    let mut var_adj: Vec<Vec<usize>> = vec![Vec::with_capacity(dv); n];
    let mut check_adj: Vec<Vec<usize>> = vec![Vec::with_capacity(max_row); m];

    for v in 0..n {
        for _ in 0..dv {
            let dist = check_distances(v, m, &var_adj, &check_adj);
            let open: Vec<usize> = (0..m)
                .filter(|&c| check_adj[c].len() < max_row && !var_adj[v].contains(&c))
                .collect();
            let far = open.iter().map(|&c| dist[c]).max()?;
            let mut candidates: Vec<usize> = open.into_iter().filter(|&c| dist[c] == far).collect();
            let min_deg = candidates.iter().map(|&c| check_adj[c].len()).min()?;
            candidates.retain(|&c| check_adj[c].len() == min_deg);
            let &c = candidates.choose(rng)?;
            var_adj[v].push(c);
            check_adj[c].push(v);
        }
    }
    Some(check_adj)
}

/// Breadth-first depth of every check from `v`; `usize::MAX` if unreachable.
fn check_distances(v: usize, m: usize, var_adj: &[Vec<usize>], check_adj: &[Vec<usize>]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; m];
    let mut var_seen = vec![false; var_adj.len()];
    var_seen[v] = true;
    let mut frontier = vec![v];
    let mut depth = 0;
    while !frontier.is_empty() {
        let mut new_checks = Vec::new();
        for &u in &frontier {
            for &c in &var_adj[u] {
                if dist[c] == usize::MAX {
                    dist[c] = depth;
                    new_checks.push(c);
                }
            }
        }
        frontier.clear();
        for &c in &new_checks {
            for &u in &check_adj[c] {
                if !var_seen[u] {
                    var_seen[u] = true;
                    frontier.push(u);
                }
            }
        }
        depth += 1;
    }
    dist
}
