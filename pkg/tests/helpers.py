"""Independent checks shared by several test modules."""

import numpy as np
from scipy.integrate import cumulative_simpson


def tail_integral(f, t):
    """``int_t^T f ds`` at every node, by cumulative Simpson."""
    run = cumulative_simpson(f, x=t, initial=0.0)
    return run[-1] - run


def _break_nodes(market, t):
    """Interior node indices where a piecewise coefficient jumps."""
    out = set()
    for coef in (market.drift, market.vol):
        for bp in getattr(coef, "breakpoints", ())[1:]:
            k = int(np.argmin(np.abs(t - bp)))
            if abs(t[k] - bp) > 1e-12 or k in (0, len(t) - 1):
                raise ValueError("breakpoints must sit on interior nodes")
            out.add(k)
    return sorted(out)


def fbsde_residual(traj, market, agents):
    """Sup-norm defect of the integral equilibrium equation for every agent.

    ``q_t = -(beta/b) Q_T + int_t^T (-lambda sigma^2 Q + (mu + a sum_{j != i} q^j) / 2) / b ds``

    The integral runs piece by piece between coefficient jumps, with
    one-sided coefficient values at each piece's ends.
    """
    t = traj.grid.nodes
    cuts = [0] + _break_nodes(market, t) + [len(t) - 1]
    worst = 0.0
    for i, ag in enumerate(agents):
        others = np.delete(traj.q, i, axis=0).sum(axis=0)
        beta = ag.alpha - market.a / 2
        tail = np.zeros_like(t)
        acc = 0.0
        for lo, hi in reversed(list(zip(cuts[:-1], cuts[1:]))):
            s = t[lo:hi + 1]
            mu = np.broadcast_to(market.mu(s), s.shape).astype(float)
            s2 = np.broadcast_to(market.sigma2(s), s.shape).astype(float)
            mu[0] = market.mu_limit(s[0], "right")
            s2[0] = market.sigma2_limit(s[0], "right")
            f = (-ag.lam * s2 * traj.Q[i, lo:hi + 1]
                 + 0.5 * (mu + market.a * others[lo:hi + 1])) / market.b
            tail[lo:hi + 1] = tail_integral(f, s) + acc
            acc = tail[lo]
        rhs = -(beta / market.b) * traj.Q[i, -1] + tail
        worst = max(worst, float(np.max(np.abs(traj.q[i] - rhs))))
    return worst
