"""Random OU systems shared by the property tests and the acceptance suite."""

import numpy as np

from hypoctrl.phase_space import OUSystem, kalman_analysis


def random_stable_hypoelliptic(rng, n):
    while True:
        r = rng.integers(1, n + 1)
        Rq = rng.standard_normal((n, r)) if r < n else rng.standard_normal((n, n))
        Q = Rq @ Rq.T
        if rng.random() < 0.5 and n > 1:
            Q = np.zeros((n, n))
            Q[-1, -1] = 1.0 + rng.random()
        Q /= np.linalg.eigvalsh(Q)[-1]  # k0 is invariant under Q -> sQ
        B = rng.standard_normal((n, n))
        B -= (np.linalg.eigvals(B).real.max() + 0.2 + rng.random()) * np.eye(n)
        sys = OUSystem(Q, B)
        if not (sys.stable_flag and kalman_analysis(sys).rank == n):
            continue
        # keep the draw away from the hypoellipticity boundary, where the
        # rank decisions of both sides become tolerance-dependent
        X = np.linalg.solve(np.kron(np.eye(n), B) + np.kron(B, np.eye(n)), -Q.ravel()).reshape(n, n)
        if np.linalg.cond(X) < 1e4:
            return sys
