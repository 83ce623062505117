//! Small permutation helpers shared by the witness machinery.

/// Advances `v` to the next permutation in lexicographic order. Returns
/// `false` (leaving `v` sorted ascending) after the last one.
pub(crate) fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// All permutations `pi` of `0..k` with `key(pi[i]) == key(i)` for every
/// `i`, in lexicographic order. Positions listed in `fixed` map to
/// themselves.
pub(crate) fn class_preserving_permutations(keys: &[u32], fixed: &[bool]) -> Vec<Vec<usize>> {
    let k = keys.len();
    let mut out = Vec::new();
    let mut cur = vec![usize::MAX; k];
    let mut used = vec![false; k];
    fn rec(
        pos: usize,
        keys: &[u32],
        fixed: &[bool],
        cur: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if pos == keys.len() {
            out.push(cur.clone());
            return;
        }
        for cand in 0..keys.len() {
            if used[cand] || keys[cand] != keys[pos] {
                continue;
            }
            if (fixed[pos] || fixed[cand]) && cand != pos {
                continue;
            }
            used[cand] = true;
            cur[pos] = cand;
            rec(pos + 1, keys, fixed, cur, used, out);
            used[cand] = false;
        }
    }
    rec(0, keys, fixed, &mut cur, &mut used, &mut out);
    out
}
