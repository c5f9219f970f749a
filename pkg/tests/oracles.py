"""Independent numerical oracles used by unit and acceptance tests.

Penalty formulas are written out here rather than imported, so a wrong
closed form in the package cannot agree with itself.
"""
import numpy as np

GRID_HALF_WIDTH = 6.0
COARSE_POINTS = 20001
REFINE_POINTS = 4001
CANDIDATES = 5


def penalty_fn(kind, params):
    if kind == "l1":
        lam = params["lam"]
        return lambda y: lam * np.abs(y)
    if kind == "alasso":
        lam, w = params["lam"], params["w"]
        return lambda y: lam * w * np.abs(y)
    if kind == "scad":
        s, r = params["sigma"], params["rho"]

        def scad(y):
            a = np.abs(y)
            out = np.full_like(a, s * s * (r + 1) / 2)
            lo = a <= s
            mid = (a > s) & (a < r * s)
            out[lo] = s * a[lo]
            out[mid] = (-a[mid] ** 2 + 2 * r * s * a[mid] - s * s) / (2 * (r - 1))
            return out
        return scad
    if kind == "cad":
        lam, rho = params["lam"], params["rho"]
        return lambda y: lam * np.minimum(np.abs(y), rho)
    raise ValueError(kind)


def grid_prox(pen, z, alpha, lo=-GRID_HALF_WIDTH, hi=GRID_HALF_WIDTH, specials=()):
    """Brute-force argmin over [lo, hi] of pen(y) + (y − z)²/(2α).

    A uniform grid locates the best few local minima, each of which is then
    refined on a grid 5000× finer; kink locations passed in ``specials``
    are always evaluated exactly.
    """
    def obj(y):
        return pen(y) + (y - z) ** 2 / (2 * alpha)

    special = np.array([s for s in (0.0, z, lo, hi, *specials) if lo <= s <= hi], dtype=float)
    grid = np.unique(np.r_[np.linspace(lo, hi, COARSE_POINTS), special])
    f = obj(grid)
    interior = np.r_[True, f[1:] <= f[:-1]] & np.r_[f[:-1] <= f[1:], True]
    idx = np.flatnonzero(interior)
    idx = idx[np.argsort(f[idx], kind="stable")[:CANDIDATES]]
    best_y, best_f = grid[idx[0]], f[idx[0]]
    h = (hi - lo) / (COARSE_POINTS - 1)
    for i in idx:
        a, b = max(lo, grid[i] - 2 * h), min(hi, grid[i] + 2 * h)
        fine = np.r_[np.linspace(a, b, REFINE_POINTS), special[(special >= a) & (special <= b)]]
        ff = obj(fine)
        j = int(np.argmin(ff))
        if ff[j] < best_f:
            best_y, best_f = fine[j], ff[j]
    return float(best_y), float(best_f)


def kinks(kind, params):
    if kind == "scad":
        s, r = params["sigma"], params["rho"]
        return (s, -s, r * s, -r * s)
    if kind == "cad":
        return (params["rho"], -params["rho"])
    return ()


def random_case(rng, kind):
    """One random (penalty params, z, α, upper) draw used by the oracle suites."""
    z = float(rng.uniform(-5, 5))
    alpha = float(rng.uniform(1e-3, 2.0))
    if kind == "l1":
        params = {"lam": float(rng.uniform(0, 2))}
    elif kind == "alasso":
        params = {"lam": float(rng.uniform(0, 2)), "w": float(rng.uniform(0, 3))}
    elif kind == "scad":
        params = {"sigma": float(rng.uniform(0.1, 2)), "rho": float(rng.uniform(1.1, 5))}
    else:
        params = {"lam": float(rng.uniform(0, 2)), "rho": float(rng.uniform(0.1, 3))}
    upper = float(rng.uniform(0.5, 6.0)) if rng.uniform() < 0.7 else np.inf
    return params, z, alpha, upper


def make_penalty(kind, params):
    from mixedsel.regularizers import CAD, L1, SCAD, ALasso
    if kind == "l1":
        return L1(params["lam"])
    if kind == "alasso":
        return ALasso(params["lam"], params["w"])
    if kind == "scad":
        return SCAD(params["sigma"], params["rho"])
    return CAD(params["lam"], params["rho"])


def check_prox_case(kind, params, z, alpha, upper, boxed):
    """Returns (arg_error, obj_error) of the package prox against the grid oracle."""
    pen = penalty_fn(kind, params)
    impl = make_penalty(kind, params)
    if boxed:
        hi = min(upper, GRID_HALF_WIDTH)
        y_star, f_star = grid_prox(pen, z, alpha, 0.0, hi, kinks(kind, params))
        y = float(impl.prox_boxed(z, alpha, upper))
    else:
        y_star, f_star = grid_prox(pen, z, alpha, specials=kinks(kind, params))
        y = float(impl.prox(z, alpha))
    f = float(pen(np.array([y]))[0] + (y - z) ** 2 / (2 * alpha))
    return abs(y - y_star), abs(f - f_star)
