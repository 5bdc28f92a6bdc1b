"""Cross-check of the OU semigroup against the Hermite propagation of its conjugate.

With ``T v = sqrt(rho) v`` and ``L`` the Weyl operator of the conjugated
symbol, ``e^{tP} f0 = e^{-t Tr(B)/2} T^{-1} e^{-tL} T f0``. The left side is
computed on the grid with the Gaussian convolution formula, the right side
in the Hermite basis; errors are measured in the discrete L^2(rho) norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hermite import HermiteTruncation, assemble_weyl, coefficients_from_grid, grid_from_coefficients
from .ou import GridFunction, kolmogorov_apply
from .phase_space import OUSystem, weighted_conjugation_symbols


@dataclass
class ConjugationCheck:
    times: list[float]
    error: list[float]  # ||e^{tP} f0 - conjugated propagation||_{L^2(rho)}
    reference_norm: list[float]
    N: int

    def rows(self):
        for t, e, r in zip(self.times, self.error, self.reference_norm):
            yield [t, e, r]

    header = ["t", "error_l2_rho", "reference_norm_l2_rho"]


def conjugation_identity_check(sys: OUSystem, f0: GridFunction, times: Sequence[float], N: int = 60) -> ConjugationCheck:
    cj = weighted_conjugation_symbols(sys)
    sq = np.sqrt(cj.rho_params.density(f0.points())).reshape(f0.values.shape)
    trunc = HermiteTruncation(sys.n, N)
    op = assemble_weyl(cj.L_symbol, trunc)
    c0 = coefficients_from_grid(trunc, f0.axes, sq * f0.values)
    trB = float(np.trace(sys.B))
    errs, refs = [], []
    for t in times:
        ref = kolmogorov_apply(sys, f0, t).values
        h = grid_from_coefficients(trunc, f0.axes, op.propagate(c0, t))
        # compare sqrt(rho) * (both sides): the 1/sqrt(rho) never gets evaluated in the tails
        diff = np.exp(-0.5 * t * trB) * h - sq * ref
        errs.append(float(np.sqrt(f0.cell * np.sum(np.abs(diff) ** 2))))
        refs.append(float(np.sqrt(f0.cell * np.sum(np.abs(sq * ref) ** 2))))
    return ConjugationCheck([float(t) for t in times], errs, refs, N)
