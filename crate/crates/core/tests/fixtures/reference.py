"""Independent high-precision reference values for the transforms and basic functions.

Evaluates every formula with mpmath at 40 significant digits, starting from the
exact binary64 inputs, and writes `reference.json` next to this script.  The Rust
tests read that file; regenerate with `python3 reference.py`.
"""
import json
import os

import numpy as np
from mpmath import mp, mpf, log, sin, cos, exp, sqrt, pi, e, nint, fabs

mp.dps = 40
BETA = mpf("0.2")
ALPHA = mpf(10)


def sign(v):
    return (v > 0) - (v < 0)


def osz(z):
    out = []
    for v in z:
        v = mpf(v)
        if v == 0:
            out.append(mpf(0))
            continue
        zh = log(fabs(v))
        c1, c2 = (mpf(10), mpf("7.9")) if v > 0 else (mpf("5.5"), mpf("3.1"))
        out.append(sign(v) * exp(zh + mpf("0.049") * (sin(c1 * zh) + sin(c2 * zh))))
    return out


def frac(i, d):
    return mpf(0) if d == 1 else mpf(i) / (d - 1)


def asy(z, beta=BETA):
    d = len(z)
    return [mpf(v) ** (1 + beta * frac(i, d) * sqrt(mpf(v))) if v > 0 else mpf(v)
            for i, v in enumerate(z)]


def lam(z, alpha=ALPHA):
    d = len(z)
    return [alpha ** (frac(i, d) / 2) * mpf(v) for i, v in enumerate(z)]


def katsuura(z):
    d = len(z)
    prod = mpf(1)
    for i, v in enumerate(z):
        s = mpf(0)
        for j in range(1, 33):
            t = mpf(2) ** j * mpf(v)
            # round half away from zero
            r = sign(t) * mp.floor(fabs(t) + mpf("0.5"))
            s += fabs(t - r) / mpf(2) ** j
        prod *= (1 + (i + 1) * s) ** (mpf(10) / mpf(d) ** mpf("1.2"))
    return prod - 1


def basic(fid, z):
    z = [mpf(v) for v in z]
    d = len(z)
    if fid == 1:
        return sum(v * v for v in z)
    if fid == 2:
        return sum(mpf(10) ** (6 * frac(i, d)) * v * v for i, v in enumerate(z))
    if fid == 3:
        return sum(v * v - 10 * cos(2 * pi * v) + 10 for v in z)
    if fid == 4:
        return (-20 * exp(-mpf("0.2") * sqrt(sum(v * v for v in z) / d))
                - exp(sum(cos(2 * pi * v) for v in z) / d) + 20 + e)
    if fid == 5:
        acc, tot = mpf(0), mpf(0)
        for v in z:
            acc += v
            tot += acc * acc
        return tot
    if fid == 6:
        return katsuura(z)
    if fid == 7:
        return sum(100 * v * v + v ** 4 if v > 0 else v * v + 100 * v ** 4 for v in z)
    raise ValueError(fid)


CHAINS = {1: "oal", 2: "o", 3: "oal", 4: "oal", 5: "oa", 6: "oal", 7: "oal"}


def subproblem(fid, shift, perm, rot, x):
    y = [mpf(x[p]) - mpf(shift[p]) for p in perm]
    if rot is not None:
        n = len(y)
        y = [sum(mpf(rot[i][j]) * y[j] for j in range(n)) for i in range(n)]
    if "o" in CHAINS[fid]:
        y = osz(y)
    if "a" in CHAINS[fid]:
        y = asy(y)
    if "l" in CHAINS[fid]:
        y = lam(y)
    return basic(fid, y)


def f(v):
    return float(v)


def main():
    rng = np.random.default_rng(20240601)
    out = {"osz": [], "asy": [], "lambda": [], "basic": [], "subproblem": []}
    for _ in range(50):
        d = int(rng.integers(1, 9))
        z = [float(v) for v in rng.uniform(-6, 6, d)]
        out["osz"].append({"z": z, "expected": [f(v) for v in osz(z)]})
        z = [float(v) for v in rng.uniform(-3, 6, d)]
        out["asy"].append({"z": z, "expected": [f(v) for v in asy(z)]})
        z = [float(v) for v in rng.uniform(-10, 10, d)]
        out["lambda"].append({"z": z, "expected": [f(v) for v in lam(z)]})
    for fid in range(1, 8):
        for _ in range(50):
            d = int(rng.integers(1, 11))
            z = [float(v) for v in rng.uniform(-4, 4, d)]
            out["basic"].append({"function": fid, "z": z, "expected": f(basic(fid, z))})
    for fid in range(1, 8):
        for k in range(6):
            d = int(rng.integers(2, 8))
            shift = [float(v) for v in rng.uniform(-2, 2, d)]
            perm = [int(v) for v in rng.permutation(d)]
            rot = None
            if k % 2 == 1:
                q, r = np.linalg.qr(rng.standard_normal((d, d)))
                q = q * np.sign(np.diag(r))
                rot = [[float(v) for v in row] for row in q]
            x = [float(v) for v in rng.uniform(-3, 3, d)]
            out["subproblem"].append({"function": fid, "shift": shift, "permutation": perm,
                                      "rotation": rot, "x": x,
                                      "expected": f(subproblem(fid, shift, perm, rot, x))})
    out["subproblem"].append({"function": 1, "shift": [0.0, 0.0], "permutation": [0, 1],
                              "rotation": None, "x": [3.0, 4.0],
                              "expected": f(subproblem(1, [0, 0], [0, 1], None, [3.0, 4.0]))})
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "reference.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
