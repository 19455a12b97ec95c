//! Small numeric primitives shared across the crate: dense linear solves,
//! polynomial evaluation, isotonic regression, low-discrepancy sequences,
//! binomial coefficients and an exact min-cost assignment solver.

/// Evaluate a polynomial with coefficients ordered constant-first (Horner).
pub fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// SplitMix64 step; the seed-mixing primitive for per-entry RNG streams.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Solve `a * x = b` in place via Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Least-squares polynomial fit of the given degree via normal equations.
/// Returns coefficients constant-first; `None` if the system is singular
/// (e.g. all x identical and degree >= 1).
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    assert_eq!(xs.len(), ys.len());
    let m = degree + 1;
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut pow = vec![1.0; m];
        for k in 1..m {
            pow[k] = pow[k - 1] * x;
        }
        for i in 0..m {
            atb[i] += pow[i] * y;
            for j in 0..m {
                ata[i][j] += pow[i] * pow[j];
            }
        }
    }
    solve_dense(ata, atb)
}

/// Pool-adjacent-violators: the L2 projection of `ys` onto non-decreasing
/// sequences. Input must already be ordered by the independent variable.
pub fn isotonic_non_decreasing(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for &y in ys {
        level.push(y);
        weight.push(1.0);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l1, w1) = (level.pop().unwrap(), weight.pop().unwrap());
            let (l0, w0) = (level.pop().unwrap(), weight.pop().unwrap());
            level.push((l0 * w0 + l1 * w1) / (w0 + w1));
            weight.push(w0 + w1);
        }
    }
    let mut out = Vec::with_capacity(n);
    for (&l, &w) in level.iter().zip(&weight) {
        for _ in 0..w as usize {
            out.push(l);
        }
    }
    out
}

/// Radical-inverse Halton sequence value for index `i` in the given base.
pub fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// ln C(m, n); 0 when n == 0 or n == m, -inf when n > m.
pub fn ln_binomial(m: u64, n: u64) -> f64 {
    if n > m {
        return f64::NEG_INFINITY;
    }
    let n = n.min(m - n);
    (0..n)
        .map(|i| (((m - i) as f64) / ((i + 1) as f64)).ln())
        .sum()
}

/// Exact C(m, n) in u128, or `None` on overflow.
pub fn binomial_exact(m: u64, n: u64) -> Option<u128> {
    if n > m {
        return Some(0);
    }
    let n = n.min(m - n);
    let mut acc: u128 = 1;
    for i in 0..n {
        acc = acc.checked_mul((m - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// algorithm with potentials, O(n^3)). Returns (column of each row, cost).
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    assert!(cost.iter().all(|row| row.len() == n));
    const INF: f64 = f64::INFINITY;
    // 1-indexed potentials; way[j] remembers the augmenting path.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // row matched to column j
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
            total += cost[matched_row[j] - 1][j - 1];
        }
    }
    (assignment, total)
}
