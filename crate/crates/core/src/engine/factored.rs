//! Closed-form counting for the unconstrained joint family: support worlds
//! map independently, so counts only depend on how many cells take each
//! label.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::problem::Problem;
use crate::error::{invalid, Result};

pub(crate) struct FactoredCounts {
    pub optimal_pairs: BigUint,
    pub admissible: BigUint,
    pub rs_admissible: BigUint,
}

pub(crate) fn applicable(p: &Problem) -> bool {
    p.joint && p.supervised.is_none() && p.comps.len() == 1
}

fn binomials(n: usize) -> Vec<Vec<BigUint>> {
    let mut c = vec![vec![BigUint::zero(); n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = BigUint::one();
        for j in 1..=i {
            c[i][j] = &c[i - 1][j - 1] + &c[i - 1][j];
        }
    }
    c
}

fn falling(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    (n - k + 1..=n).fold(BigUint::one(), |acc, x| acc * x)
}

fn pow(base: usize, e: usize) -> BigUint {
    BigUint::from(base).pow(e as u32)
}

/// `surj[s][m]`: number of maps from an `s`-set onto an `m`-set.
fn surjections(n: usize) -> Vec<Vec<BigUint>> {
    let mut s = vec![vec![BigUint::zero(); n + 1]; n + 1];
    s[0][0] = BigUint::one();
    for i in 1..=n {
        for m in 1..=i {
            // place element i in an existing block or open a new one
            s[i][m] = &s[i - 1][m] * m + &s[i - 1][m - 1] * m;
        }
    }
    s
}

pub(crate) fn count(p: &Problem) -> Result<FactoredCounts> {
    if !applicable(p) {
        return invalid("factored counting needs a joint family without supervision or extra tasks");
    }
    let comp = &p.comps[0];
    let labels = comp.labels as usize;
    let n = p.n_cells;

    let mut s_y = vec![0usize; labels];
    for row in &p.world_labels {
        s_y[row[0].unwrap() as usize] += 1;
    }
    let mut pinned_y = vec![0usize; labels];
    for y in comp.pinned.iter().flatten() {
        pinned_y[*y as usize] += 1;
    }
    let mut k_y = vec![0usize; labels];
    for &y in &comp.knowledge {
        k_y[y as usize] += 1;
    }
    let unpinned = n - comp.pinned_count;
    let supp = p.support.len();
    let c = binomials(n.max(supp));
    let surj = surjections(supp);
    let recon = p.reconstruction;

    // redundant: every unpinned cell receives exactly one label
    let mut dp = vec![BigUint::zero(); unpinned + 1];
    dp[0] = BigUint::one();
    for y in 0..labels {
        let mut next = vec![BigUint::zero(); unpinned + 1];
        for used in 0..=unpinned {
            if dp[used].is_zero() {
                continue;
            }
            for take in 0..=unpinned - used {
                let cells = take + pinned_y[y];
                let w = if recon { falling(cells, s_y[y]) } else { pow(cells, s_y[y]) };
                if w.is_zero() {
                    continue;
                }
                next[used + take] += &dp[used] * &c[unpinned - used][take] * w;
            }
        }
        dp = next;
    }
    let redundant = dp[unpinned].clone();

    // non-redundant: choose the exact image set of each label's worlds
    let mut dp = vec![BigUint::zero(); unpinned + 1];
    dp[0] = BigUint::one();
    for y in 0..labels {
        let s = s_y[y];
        let mut next = vec![BigUint::zero(); unpinned + 1];
        for used in 0..=unpinned {
            if dp[used].is_zero() {
                continue;
            }
            for b in 0..=(unpinned - used).min(s) {
                let mut ways = BigUint::zero();
                for a in 0..=pinned_y[y].min(s) {
                    let m = a + b;
                    if m > s || (s > 0 && m == 0) {
                        continue;
                    }
                    let onto = if recon {
                        if m == s {
                            falling(s, s)
                        } else {
                            BigUint::zero()
                        }
                    } else {
                        surj[s][m].clone()
                    };
                    ways += &c[pinned_y[y]][a] * onto;
                }
                if ways.is_zero() {
                    continue;
                }
                next[used + b] += &dp[used] * &c[unpinned - used][b] * ways;
            }
        }
        dp = next;
    }
    let nonredundant: BigUint = dp.iter().sum();

    let mut rs = BigUint::one();
    for y in 0..labels {
        rs *= if recon { falling(k_y[y], s_y[y]) } else { pow(k_y[y], s_y[y]) };
    }

    let mult = p.irrelevant_multiplier();
    Ok(FactoredCounts {
        optimal_pairs: redundant * &mult,
        admissible: nonredundant * &mult,
        rs_admissible: rs * mult,
    })
}
