"""Method of Moving Asymptotes for a single constraint.

Separable convex subproblems are built from the current gradients with
moving lower/upper asymptotes and solved in the dual: the one dual variable
of the volume constraint is located by safeguarded bisection. Asymptote
bookkeeping uses the usual oscillation test with contraction/expansion
factors 0.7 / 1.2, initial offset 0.5 of the variable range and offsets
bounded to [0.01, 10] times the range.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError

_TINY = 1e-12  # symmetric curvature floor; keeps zero-gradient variables put


class Mma:
    """Stateful single-constraint MMA update for box-bounded variables."""

    def __init__(self, n: int, lower: float = 0.0, upper: float = 1.0):
        self.n = n
        self.lower = lower
        self.upper = upper
        self.range = upper - lower
        self.iter = 0
        self.low = None
        self.upp = None
        self.x_prev = None
        self.x_prev2 = None
        self.dual = 0.0

    def _asymptotes(self, x):
        if self.iter < 2:
            off = 0.5 * self.range
            low = x - off
            upp = x + off
        else:
            osc = (x - self.x_prev) * (self.x_prev - self.x_prev2)
            factor = np.where(osc < 0.0, 0.7, np.where(osc > 0.0, 1.2, 1.0))
            low = x - factor * (self.x_prev - self.low)
            upp = x + factor * (self.upp - self.x_prev)
            low = np.clip(low, x - 10.0 * self.range, x - 0.01 * self.range)
            upp = np.clip(upp, x + 0.01 * self.range, x + 10.0 * self.range)
        return low, upp

    def update(self, x, dfdx, gval, dgdx, move_limit: float):
        """One subproblem solve; returns the new design.

        ``gval``/``dgdx`` are the constraint value and gradient at ``x``
        (constraint feasible when <= 0). The step honors the move limit and
        the box bounds exactly.
        """
        x = np.asarray(x, float)
        dfdx = np.asarray(dfdx, float)
        dgdx = np.asarray(dgdx, float)
        if not (np.all(np.isfinite(dfdx)) and np.all(np.isfinite(dgdx)) and np.isfinite(gval)):
            raise SolverError("MMA got non-finite gradients")

        low, upp = self._asymptotes(x)
        alpha = np.maximum.reduce([np.full_like(x, self.lower), x - move_limit,
                                   0.9 * low + 0.1 * x])
        beta = np.minimum.reduce([np.full_like(x, self.upper), x + move_limit,
                                  0.9 * upp + 0.1 * x])

        ux = upp - x
        xl = x - low
        p0 = ux**2 * (np.maximum(dfdx, 0.0) + _TINY)
        q0 = xl**2 * (np.maximum(-dfdx, 0.0) + _TINY)
        p1 = ux**2 * np.maximum(dgdx, 0.0)
        q1 = xl**2 * np.maximum(-dgdx, 0.0)
        # shift so the approximate constraint matches gval at x
        b1 = float(np.sum(p1 / ux + q1 / xl) - gval)

        def x_of(lam):
            P = p0 + lam * p1
            Q = q0 + lam * q1
            sp = np.sqrt(P)
            sq = np.sqrt(Q)
            return np.clip((sp * low + sq * upp) / (sp + sq), alpha, beta)

        def gapprox(xv):
            return float(np.sum(p1 / (upp - xv) + q1 / (xv - low)) - b1)

        lam = 0.0
        if gapprox(x_of(0.0)) > 0.0:
            lam_cap = 1e12
            lo, hi = 0.0, 1.0
            while gapprox(x_of(hi)) > 0.0 and hi < lam_cap:
                lo = hi
                hi *= 2.0
            if gapprox(x_of(hi)) > 0.0:
                # constraint unreachable inside the trust region (e.g. a badly
                # infeasible start under the move limit): take the step that
                # minimizes it and let the next iterations work it off
                lam = hi
            else:
                while hi - lo > 1e-10 * (1.0 + hi):
                    mid = 0.5 * (lo + hi)
                    if gapprox(x_of(mid)) > 0.0:
                        lo = mid
                    else:
                        hi = mid
                lam = hi
        x_new = x_of(lam)
        if not np.all(np.isfinite(x_new)):
            raise SolverError(f"MMA dual produced a non-finite design at lam={lam:.3e}")

        self.dual = lam
        self.low, self.upp = low, upp
        self.x_prev2 = self.x_prev if self.x_prev is not None else x.copy()
        self.x_prev = x.copy()
        self.iter += 1
        return x_new
