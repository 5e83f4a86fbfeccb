"""Independent reference for the cubic ground state  R'' + (2/r) R' - R + R^3 = 0.

Fixed-step Taylor integration of arbitrary order (coefficient recursion, no
library ODE solver) plus bisection on the central value.  Shares no code with
the package.  Run as a script to regenerate ``fixtures/cubic_oracle.json``.
"""

import json
import math
from pathlib import Path

ORDER = 24
STEP = 0.05
R_END = 30.0
FIXTURE = Path(__file__).with_name("fixtures") / "cubic_oracle.json"


def _cube(u):
    n = len(u)
    sq = [sum(u[i] * u[k - i] for i in range(k + 1)) for k in range(n)]
    return [sum(sq[i] * u[k - i] for i in range(k + 1)) for k in range(n)]


def taylor_step(r0, u0, p0, order=ORDER):
    """Taylor coefficients of (u, p = u') in s = r - r0."""
    u = [u0]
    p = [p0]
    for k in range(order):
        g = [a - b for a, b in zip(u, _cube(u))]
        gm1 = g[k - 1] if k >= 1 else 0.0
        if r0 == 0.0:
            # (k + 3) p_{k+1} = g_k, from  r p' + 2 p = r g  at the origin
            p_next = g[k] / (k + 3)
        else:
            p_next = (r0 * g[k] + gm1 - (k + 2) * p[k]) / (r0 * (k + 1))
        u.append(p[k] / (k + 1))
        p.append(p_next)
    return u, p


def _horner(c, s):
    acc = 0.0
    for a in reversed(c):
        acc = acc * s + a
    return acc


def shoot(q0, step=STEP, r_end=R_END):
    """Integrate outward; return ('cross'|'turn'|'end', r, samples)."""
    r, u, p = 0.0, q0, 0.0
    samples = []
    while r < r_end:
        cu, cp = taylor_step(r, u, p)
        samples.append((r, cu))
        u, p = _horner(cu, step), _horner(cp, step)
        r += step
        if u < 0:
            return "cross", r, samples
        if p > 0:
            return "turn", r, samples
    return "end", r, samples


def central_value(lo=3.0, hi=6.0, iters=70):
    assert shoot(lo)[0] == "turn" and shoot(hi)[0] == "cross"
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if shoot(mid)[0] == "cross":
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def l2_squared(q0, step=STEP):
    """4 pi int r^2 R^2 dr, integrating each Taylor polynomial exactly up to the exit point."""
    _, _, samples = shoot(q0)
    total = 0.0
    for r0, cu in samples:
        sq = [sum(cu[i] * cu[k - i] for i in range(k + 1)) for k in range(len(cu))]
        # (r0 + s)^2 sq(s) = sum_k sq_k (r0^2 s^k + 2 r0 s^{k+1} + s^{k+2})
        for k, a in enumerate(sq):
            total += a * (r0 * r0 * step ** (k + 1) / (k + 1) + 2 * r0 * step ** (k + 2) / (k + 2)
                          + step ** (k + 3) / (k + 3))
    return 4.0 * math.pi * total


def compute():
    q0 = central_value()
    return {"equation": "R'' + (2/r) R' - R + R^3 = 0 (omega = 1, cubic only)",
            "method": f"Taylor order {ORDER}, step {STEP}, bisection on R(0)",
            "omega": 1.0, "q0": q0, "l2_sq": l2_squared(q0)}


if __name__ == "__main__":
    data = compute()
    FIXTURE.parent.mkdir(exist_ok=True)
    FIXTURE.write_text(json.dumps(data, indent=2) + "\n")
    print(json.dumps(data, indent=2))
