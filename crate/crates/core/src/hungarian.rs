//! Rectangular linear assignment (rows <= columns) by shortest augmenting
//! paths with potentials. Forbidden cells carry `f64::INFINITY`.

/// Minimum-cost assignment of every row to a distinct column, or `None`
/// when no finite-cost perfect assignment of the rows exists. Ties go to
/// the lowest column index.
pub fn solve(cost: &[Vec<f64>]) -> Option<Vec<usize>> {
    let n = cost.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let m = cost[0].len();
    if m < n || cost.iter().any(|r| r.len() != m) {
        return None;
    }
    let big = {
        let finite = cost.iter().flatten().filter(|x| x.is_finite());
        let span = finite.fold(0.0f64, |a, &x| a.max(x.abs()));
        (span + 1.0) * (n as f64 + 1.0) * 4.0
    };
    let c = |i: usize, j: usize| {
        let x = cost[i][j];
        if x.is_finite() {
            x
        } else {
            big
        }
    };

    // 1-based rows/cols; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out.iter().enumerate().all(|(i, &j)| cost[i][j].is_finite()).then_some(out)
}

/// Maximum-weight assignment.
pub fn solve_max(weight: &[Vec<f64>]) -> Option<Vec<usize>> {
    let cost: Vec<Vec<f64>> = weight
        .iter()
        .map(|r| r.iter().map(|&w| if w.is_finite() { -w } else { f64::INFINITY }).collect())
        .collect();
    solve(&cost)
}
