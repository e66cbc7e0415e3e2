"""Search rational orthonormal frames for the skew and symmetric direction sets.

Candidate k-lines are the coordinate axes (scale 1) and the twelve lines of
(1,2,2)/3 type (scale 3).  For a fixed line the admissible k̄ are the integer
vectors of the same length orthogonal to k.  The skew generators only depend
on the signed axial vector k̄ × k̄̄ = ±k, so the skew search runs over lines
and signs.  Base coefficients maximize the smallest coefficient (linear
program); the printed radius is the certified radius before the 0.9 factor.

Run with ``python3 -u scripts/find_direction_sets.py``; results were frozen
into ``mhdstage.geometry``.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def lines():
    out = [(1, v) for v in np.eye(3, dtype=int)]
    seen = set()
    for v in itertools.product((1, 2, -1, -2), repeat=3):
        if sorted(map(abs, v)) != [1, 2, 2]:
            continue
        v = np.array(v)
        if v[np.nonzero(v)[0][0]] < 0:
            v = -v
        if tuple(v) not in seen:
            seen.add(tuple(v))
            out.append((3, v))
    return out


def completions(n, k):
    """Integer vectors kb with |kb| = n orthogonal to k, one per sign pair."""
    res = []
    for v in itertools.product(range(-n, n + 1), repeat=3):
        v = np.array(v)
        if v @ v == n * n and v @ k == 0 and not any(np.array_equal(v, -w) for w in res):
            res.append(v)
    return res


def best_base(gens, target):
    n = gens.shape[1]
    c_obj = np.zeros(n + 1)
    c_obj[-1] = -1.0
    a_eq = np.hstack([gens, np.zeros((gens.shape[0], 1))])
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    res = linprog(c_obj, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=target,
                  bounds=[(0, None)] * n + [(None, None)], method="highs")
    if not res.success:
        return None, -1.0
    return res.x[:n], res.x[-1]


def radius(gens, base):
    rows = np.linalg.norm(np.linalg.pinv(gens), axis=1)
    return np.min((base - 0.1 * base.min()) / rows)


def skew_matrix(axis):
    a = axis / np.linalg.norm(axis)
    return np.array([[0, a[2], -a[1]], [-a[2], 0, a[0]], [a[1], -a[0], 0]]).ravel()


def search_skew(ls):
    best = None
    for combo in itertools.combinations(range(len(ls)), 4):
        for signs in itertools.product((1, -1), repeat=3):
            signs = (1,) + signs
            axes = [s * ls[i][1] / ls[i][0] for s, i in zip(signs, combo)]
            mat = np.array(axes).T
            if np.linalg.matrix_rank(mat) < 3:
                continue
            ns = np.linalg.svd(mat)[2][-1]
            if not (np.all(ns > 1e-9) or np.all(ns < -1e-9)):
                continue
            gens = np.array([skew_matrix(a) for a in axes]).T
            base = np.abs(ns) / np.abs(ns).max()
            r = radius(gens, base)
            if best is None or r > best[0] + 1e-12:
                best = (r, combo, signs, base)
    return best


def search_sym(ls, rest):
    comps = {i: completions(*ls[i]) for i in rest}
    best = None
    for sub in itertools.combinations(rest, 7):
        for choice in itertools.product(*[comps[i] for i in sub]):
            kbs = [c / ls[i][0] for c, i in zip(choice, sub)]
            gens = np.array([np.outer(v, v).ravel() for v in kbs]).T
            if np.linalg.matrix_rank(gens) < 6:
                continue
            base, t = best_base(gens, np.eye(3).ravel())
            if base is None or t <= 1e-6:
                continue
            r = radius(gens, base)
            if best is None or r > best[0] + 1e-12:
                best = (r, sub, choice, base)
                print("  sym candidate", r, flush=True)
    return best


def main():
    ls = lines()
    r, combo, signs, base = search_skew(ls)
    print("skew radius", r)
    for i, s, c in zip(combo, signs, base):
        print(" ", ls[i][0], ls[i][1], s, c)
    rest = [i for i in range(len(ls)) if i not in combo]
    r, sub, choice, base = search_sym(ls, rest)
    print("sym radius", r)
    for i, c, b in zip(sub, choice, base):
        print(" ", ls[i][0], ls[i][1], c, b)


if __name__ == "__main__":
    main()
