"""Freezes reference values for the core integration tests.

Every expected value here is computed independently of the Rust code: dense
numpy algebra, exact rational arithmetic, arbitrary-precision root finding or a
conic solver. Inputs are drawn from a fixed numpy seed and written next to the
results, so the Rust tests only read numbers.

    python3 tools/oracles/make_fixtures.py crates/core/tests/fixtures
"""

import json
import sys
from fractions import Fraction
from pathlib import Path

import cvxpy as cp
import mpmath
import numpy as np

RNG = np.random.default_rng(20240611)


def mat(a):
    return [[float(x) for x in row] for row in np.atleast_2d(a)]


def vec(a):
    return [float(x) for x in np.ravel(a)]


def psd(p, scale):
    g = RNG.normal(size=(p, p))
    return scale * (g @ g.T / p + 0.1 * np.eye(p))


def risk_model(n, p):
    return {
        "beta": RNG.normal(size=(n, p)),
        "factor_cov": psd(p, 1e-4),
        "specific_var": RNG.uniform(1e-4, 4e-4, size=n),
    }


def dense_sigma(r):
    return r["beta"] @ r["factor_cov"] @ r["beta"].T + np.diag(r["specific_var"])


def risk_json(r):
    return {
        "beta": mat(r["beta"]),
        "factor_cov": mat(r["factor_cov"]),
        "specific_var": vec(r["specific_var"]),
    }


def exposures(n, m):
    a = RNG.normal(size=(m, n))
    half = RNG.uniform(0.05, 0.2, size=m)
    return a, -half, half


def risk_matvec():
    r = risk_model(5, 2)
    v = RNG.normal(size=5)
    return {"risk": risk_json(r), "v": vec(v), "expected": vec(dense_sigma(r) @ v)}


def single_instance(n, m, d):
    r = risk_model(n, 2)
    a, lo, hi = exposures(n, m)
    w0 = RNG.uniform(-0.2, 0.2, size=n)
    return {
        "gmv": 1e7,
        "alpha": RNG.normal(scale=1e-3, size=n),
        "risk": r,
        "spread": RNG.uniform(1e-4, 1e-3, size=n),
        "impact": RNG.uniform(1e-3, 1e-2, size=n),
        "exponent": d,
        "lambda1": 1e-6,
        "lambda2": 0.5,
        "lambda3": 0.5,
        "a": a,
        "lower": lo,
        "upper": hi,
        "w0": w0,
    }


def instance_json(inst):
    out = {}
    for k, v in inst.items():
        if k == "risk":
            out[k] = risk_json(v)
        elif isinstance(v, np.ndarray):
            out[k] = mat(v) if v.ndim == 2 else vec(v)
        else:
            out[k] = v
    return out


def single_objective_terms(inst, w):
    u = w - inst["w0"]
    rc = inst["lambda1"] * inst["gmv"]
    ret = float(inst["alpha"] @ w)
    risk = rc * float(w @ dense_sigma(inst["risk"]) @ w)
    spread = inst["lambda2"] * float(inst["spread"] @ np.abs(u))
    impact = inst["lambda3"] * float(inst["impact"] @ np.abs(u) ** inst["exponent"])
    return ret, risk, spread, impact


def objective_single():
    inst = single_instance(4, 2, 1.5)
    w = RNG.uniform(-0.2, 0.2, size=4)
    ret, risk, spread, impact = single_objective_terms(inst, w)
    normalized = ret - risk - spread - impact
    return {
        "instance": instance_json(inst),
        "w": vec(w),
        "normalized": normalized,
        "objective": inst["gmv"] * normalized,
    }


def multi_instance(n, horizon, m, d):
    inst = single_instance(n, m, d)
    inst["alpha_t"] = RNG.normal(scale=1e-3, size=(horizon, n))
    inst["spread_t"] = RNG.uniform(1e-4, 1e-3, size=(horizon, n))
    inst["impact_t"] = RNG.uniform(1e-3, 1e-2, size=(horizon, n))
    inst["w_terminal"] = RNG.uniform(-0.1, 0.1, size=n)
    inst["horizon"] = horizon
    feasible_terminal(inst)
    for k in ("alpha", "spread", "impact"):
        del inst[k]
    return inst


def feasible_terminal(inst):
    # The terminal portfolio is data and must sit strictly inside every slab.
    aw = inst["a"] @ inst["w_terminal"]
    room = min((u / x if x > 0 else l / x) for x, l, u in zip(aw, inst["lower"], inst["upper"]) if x != 0)
    if room < 1.0:
        inst["w_terminal"] = 0.5 * room * inst["w_terminal"]


def multi_normalized(inst, traj):
    horizon = inst["horizon"]
    sigma = dense_sigma(inst["risk"])
    rc = inst["lambda1"] * inst["gmv"]
    d = inst["exponent"]
    path = [inst["w0"]] + list(traj) + [inst["w_terminal"]]
    total = 0.0
    for t in range(1, horizon + 1):
        w, prev = path[t], path[t - 1]
        u = np.abs(w - prev)
        term = float(inst["alpha_t"][t - 1] @ w)
        if t < horizon:
            dev = w - inst["w_terminal"]
            term -= rc * float(dev @ sigma @ dev)
        term -= inst["lambda2"] * float(inst["spread_t"][t - 1] @ u)
        term -= inst["lambda3"] * float(inst["impact_t"][t - 1] @ u ** d)
        total += term
    return total


def objective_multi():
    inst = multi_instance(3, 4, 2, 1.5)
    traj = RNG.uniform(-0.2, 0.2, size=(3, 3))
    normalized = multi_normalized(inst, traj)
    return {
        "instance": instance_json(inst),
        "trajectory": mat(traj),
        "normalized": normalized,
        "objective": inst["gmv"] * normalized,
    }


def violations():
    a, lo, hi = exposures(6, 4)
    w = RNG.uniform(-0.4, 0.4, size=6)
    aw = a @ w
    exposure = max(0.0, max(max(l - x, x - u) for x, l, u in zip(aw, lo, hi)))
    budget = max(0.0, float(np.sum(np.abs(w))) - 1.0)
    return {
        "a": mat(a),
        "lower": vec(lo),
        "upper": vec(hi),
        "w": vec(w),
        "exposure_violation": exposure,
        "budget_violation": budget,
    }


def prox_scalar():
    # argmin (y − 2)²/2 + 0.1|y| + 0.5|y|^1.5; the minimizer is positive, so
    # it solves y − 2 + 0.1 + 0.75·y^0.5 = 0.
    mpmath.mp.dps = 50
    root = mpmath.findroot(lambda y: y - 2 + mpmath.mpf("0.1") + mpmath.mpf("0.75") * mpmath.sqrt(y), 1.0)
    return {"x": 2.0, "anchor": 0.0, "tau": 1.0, "c1": 0.1, "c2": 0.5, "exponent": 1.5, "expected": float(root)}


def panel(t, n, p, noise):
    f = RNG.normal(scale=0.01, size=(t, p))
    beta = RNG.normal(size=(n, p))
    r = f @ beta.T + noise * RNG.normal(size=(t, n))
    return f, r


def loadings():
    f, r = panel(120, 5, 3, 0.005)
    beta = np.linalg.solve(f.T @ f, f.T @ r).T
    return {"factor_returns": mat(f), "stock_returns": mat(r), "expected_beta": mat(beta)}


def two_pass_cov(x):
    # Exact rational arithmetic, rounded once at the end.
    rows = [[Fraction(v) for v in row] for row in x]
    t, p = len(rows), len(rows[0])
    mean = [sum(r[j] for r in rows) / t for j in range(p)]
    return [
        [float(sum((r[a] - mean[a]) * (r[b] - mean[b]) for r in rows) / (t - 1)) for b in range(p)]
        for a in range(p)
    ]


def factor_cov():
    f = RNG.normal(scale=0.01, size=(50, 4)) + 0.002
    return {"factor_returns": mat(f), "expected": two_pass_cov(f)}


def specific_variance():
    f, r = panel(80, 5, 3, 0.01)
    beta = RNG.normal(size=(5, 3))
    resid = r - f @ beta.T
    expected = [max(float(np.var(resid[:, i], ddof=1)), 1e-12) for i in range(5)]
    return {"factor_returns": mat(f), "stock_returns": mat(r), "beta": mat(beta), "expected": expected}


def profile():
    horizon = 10

    def eta(t):
        x = Fraction(t, horizon) - Fraction(1, 2)
        return Fraction(1, 2) + 2 * x * x

    total = sum(eta(k) for k in range(1, horizon))
    return {"horizon": horizon, "expected": [float(eta(t) / total) for t in range(1, horizon + 1)]}


def cvx_cost(inst, u, spread, impact):
    return inst["lambda2"] * spread @ cp.abs(u) + inst["lambda3"] * impact @ cp.power(cp.abs(u), inst["exponent"])


def cvx_feasible(inst, w):
    return [cp.norm1(w) <= 1, inst["a"] @ w >= inst["lower"], inst["a"] @ w <= inst["upper"]]


def sqrt_sigma(inst):
    return np.linalg.cholesky(dense_sigma(inst["risk"])).T


def cvx_single():
    inst = single_instance(2, 1, 1.5)
    inst["alpha"] = RNG.normal(scale=2e-3, size=2)
    inst["lower"] = np.array([-0.3])
    inst["upper"] = np.array([0.3])
    w = cp.Variable(2)
    rc = inst["lambda1"] * inst["gmv"]
    chol = sqrt_sigma(inst)
    obj = inst["alpha"] @ w - rc * cp.sum_squares(chol @ w) - cvx_cost(inst, w - inst["w0"], inst["spread"], inst["impact"])
    prob = cp.Problem(cp.Maximize(1e4 * obj), cvx_feasible(inst, w))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    ret, risk, spread, impact = single_objective_terms(inst, w.value)
    return {"instance": instance_json(inst), "w": vec(w.value), "normalized": ret - risk - spread - impact}


def cvx_multi():
    inst = multi_instance(2, 3, 1, 1.5)
    inst["alpha_t"] = RNG.normal(scale=2e-3, size=(3, 2))
    inst["lower"] = np.array([-0.3])
    inst["upper"] = np.array([0.3])
    feasible_terminal(inst)
    horizon = inst["horizon"]
    rc = inst["lambda1"] * inst["gmv"]
    chol = sqrt_sigma(inst)
    ws = [cp.Variable(2) for _ in range(horizon - 1)]
    path = [inst["w0"]] + ws + [inst["w_terminal"]]
    obj = 0
    cons = []
    for t in range(1, horizon + 1):
        w = path[t]
        obj += inst["alpha_t"][t - 1] @ w
        if t < horizon:
            obj -= rc * cp.sum_squares(chol @ (w - inst["w_terminal"]))
            cons += cvx_feasible(inst, w)
        obj -= cvx_cost(inst, w - path[t - 1], inst["spread_t"][t - 1], inst["impact_t"][t - 1])
    prob = cp.Problem(cp.Maximize(1e4 * obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    traj = np.array([w.value for w in ws])
    return {"instance": instance_json(inst), "trajectory": mat(traj), "normalized": multi_normalized(inst, traj)}


FIXTURES = {
    "risk_matvec": risk_matvec,
    "objective_single": objective_single,
    "objective_multi": objective_multi,
    "violations": violations,
    "prox_scalar": prox_scalar,
    "loadings": loadings,
    "factor_cov": factor_cov,
    "specific_variance": specific_variance,
    "profile": profile,
    "cvx_single": cvx_single,
    "cvx_multi": cvx_multi,
}


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
    out.mkdir(parents=True, exist_ok=True)
    for name, build in FIXTURES.items():
        (out / f"{name}.json").write_text(json.dumps(build(), indent=1) + "\n")
        print(f"wrote {name}.json")


if __name__ == "__main__":
    main()
