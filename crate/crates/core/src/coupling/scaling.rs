//! Block proportional scaling: the kernel behind every linear I-projection.
//!
//! A table of `blocks × rows × cols` cells (index `(b * rows + r) * cols + c`)
//! is rescaled until its (block, row) sums match `row_target` and its
//! (block, col) sums match `col_target`. Each half-step is the exact
//! I-projection onto one linear family, so cycling converges to the
//! I-projection onto their intersection.

pub(crate) struct Layout {
    pub blocks: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Layout {
    #[inline]
    fn idx(&self, b: usize, r: usize, c: usize) -> usize {
        (b * self.rows + r) * self.cols + c
    }
}

pub(crate) struct Scaled {
    pub table: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Whether some table supported on `support` has the requested sums.
///
/// Runs one max-flow per block: source → rows (capacity row target) →
/// cols (through supported cells) → sink (capacity col target).
pub(crate) fn support_feasible(
    layout: &Layout,
    support: &[f64],
    row_target: &[f64],
    col_target: &[f64],
) -> bool {
    for b in 0..layout.blocks {
        let rt = &row_target[b * layout.rows..(b + 1) * layout.rows];
        let ct = &col_target[b * layout.cols..(b + 1) * layout.cols];
        let (rs, cs): (f64, f64) = (rt.iter().sum(), ct.iter().sum());
        if (rs - cs).abs() > 1e-10 {
            return false;
        }
        let edges: Vec<(usize, usize)> = (0..layout.rows)
            .flat_map(|r| (0..layout.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| support[layout.idx(b, r, c)] > 0.0 && rt[r] > 0.0 && ct[c] > 0.0)
            .collect();
        let flow = max_flow(layout.rows, layout.cols, &edges, rt, ct);
        if flow < rs - 1e-12 * (1.0 + rs) {
            return false;
        }
    }
    true
}

/// Bipartite max-flow with unbounded middle edges (Edmonds-Karp on a dense graph).
fn max_flow(rows: usize, cols: usize, edges: &[(usize, usize)], rt: &[f64], ct: &[f64]) -> f64 {
    let n = rows + cols + 2;
    let (s, t) = (n - 2, n - 1);
    let mut cap = vec![vec![0.0f64; n]; n];
    for r in 0..rows {
        cap[s][r] = rt[r];
    }
    for c in 0..cols {
        cap[rows + c][t] = ct[c];
    }
    for &(r, c) in edges {
        cap[r][rows + c] = f64::INFINITY;
    }
    let eps = 1e-15;
    let mut total = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            if v == t {
                break;
            }
            for w in 0..n {
                if prev[w] == usize::MAX && cap[v][w] > eps {
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        if prev[t] == usize::MAX {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}

/// Masks `reference` to the cells that can carry mass.
pub(crate) fn masked_start(
    layout: &Layout,
    reference: &[f64],
    row_target: &[f64],
    col_target: &[f64],
) -> Vec<f64> {
    let mut table = reference.to_vec();
    for b in 0..layout.blocks {
        for r in 0..layout.rows {
            for c in 0..layout.cols {
                if row_target[b * layout.rows + r] <= 0.0 || col_target[b * layout.cols + c] <= 0.0
                {
                    table[layout.idx(b, r, c)] = 0.0;
                }
            }
        }
    }
    table
}

/// Cycles row then column scaling starting from `start`.
///
/// On return the column sums are exact and `residual` is the largest row-sum
/// violation. `observe` sees the table after every full cycle.
pub(crate) fn scale(
    layout: &Layout,
    start: Vec<f64>,
    row_target: &[f64],
    col_target: &[f64],
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[f64]),
) -> Scaled {
    let mut table = start;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut col_sums = vec![0.0; layout.cols];
    while iterations < max_iter {
        iterations += 1;
        for b in 0..layout.blocks {
            for r in 0..layout.rows {
                let base = layout.idx(b, r, 0);
                let row = &mut table[base..base + layout.cols];
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    let f = row_target[b * layout.rows + r] / s;
                    row.iter_mut().for_each(|v| *v *= f);
                }
            }
        }
        for b in 0..layout.blocks {
            col_sums.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..layout.rows {
                let base = layout.idx(b, r, 0);
                for (acc, v) in col_sums.iter_mut().zip(&table[base..base + layout.cols]) {
                    *acc += v;
                }
            }
            for r in 0..layout.rows {
                let base = layout.idx(b, r, 0);
                for (c, v) in table[base..base + layout.cols].iter_mut().enumerate() {
                    if col_sums[c] > 0.0 {
                        *v *= col_target[b * layout.cols + c] / col_sums[c];
                    }
                }
            }
        }
        residual = 0.0;
        for b in 0..layout.blocks {
            for r in 0..layout.rows {
                let base = layout.idx(b, r, 0);
                let s: f64 = table[base..base + layout.cols].iter().sum();
                residual = f64::max(residual, (s - row_target[b * layout.rows + r]).abs());
            }
        }
        observe(&table);
        if residual <= tol {
            return Scaled {
                table,
                iterations,
                residual,
                converged: true,
            };
        }
    }
    Scaled {
        table,
        iterations,
        residual,
        converged: false,
    }
}
