"""Damped Newton iteration shared by the background and self-duality solves."""

from __future__ import annotations

MIN_STEP = 2.0**-10


class NewtonDiverged(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def damped_newton(u0, step, resnorm, tol, max_iter=60, min_step=MIN_STEP):
    """Newton with residual-sup-norm backtracking (step halving).

    ``step(u)`` returns the Newton increment, ``resnorm(u)`` the monitored
    residual norm.  Accepted steps strictly decrease the norm; below
    ``min_step`` the iteration is declared divergent.  Returns
    (u, history, iterations).
    """
    u = u0.copy()
    r0 = resnorm(u)
    history = [r0]
    for it in range(max_iter):
        if history[-1] <= tol:
            return u, history, it
        d = step(u)
        s = 1.0
        while True:
            r_new = resnorm(u + s * d)
            if r_new < history[-1]:
                break
            s *= 0.5
            if s < min_step:
                raise NewtonDiverged(
                    f"newton stalled at residual {history[-1]:.3e} (iteration {it})", history
                )
        u = u + s * d
        history.append(r_new)
    if history[-1] <= tol:
        return u, history, max_iter
    raise NewtonDiverged(f"newton did not reach {tol:.1e} in {max_iter} iterations", history)
