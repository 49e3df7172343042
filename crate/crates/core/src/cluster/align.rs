/// Contingency table: `table[a][b]` counts samples labelled `a` in `new` and `b` in `prev`.
pub fn overlap(prev: &[usize], new: &[usize], k: usize) -> Vec<Vec<f64>> {
    assert_eq!(prev.len(), new.len(), "labelings must have equal length");
    let mut table = vec![vec![0.0; k]; k];
    for (&p, &n) in prev.iter().zip(new) {
        table[n][p] += 1.0;
    }
    table
}

/// Maximum-weight perfect matching on a square matrix (Hungarian algorithm).
/// Returns `assignment[row] = column`.
pub fn hungarian_max(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let max = weights
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    // potentials-based shortest augmenting path on costs max - w, 1-based
    let cost = |i: usize, j: usize| max - weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Relabelling `mapping[new_id] = old_id` that maximises agreement with `prev`.
pub fn align_labels(prev: &[usize], new: &[usize], k: usize) -> Vec<usize> {
    hungarian_max(&overlap(prev, new, k))
}

/// Exhaustive search over all `k!` relabellings; returns the best agreement count.
pub fn brute_force_alignment(prev: &[usize], new: &[usize], k: usize) -> usize {
    let table = overlap(prev, new, k);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0.0f64;
    permute(&mut perm, 0, &mut |p| {
        let score: f64 = p.iter().enumerate().map(|(a, &b)| table[a][b]).sum();
        best = best.max(score);
    });
    best as usize
}

fn permute(v: &mut [usize], start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}
