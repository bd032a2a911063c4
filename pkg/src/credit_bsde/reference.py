"""Published strategy tables, kept only for side-by-side comparison.

Nothing in the solver reads these values.  Every block shares the market
b0 = 0.02, sigma0 = 0.1, b1 = 0.01, sigma1 = 0.2, p = 1, T = 1 with equal
jumps gamma1 = gamma2 = gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

GAMMAS = (-0.5, -0.1, 0.0, 0.5, 1.0)


@dataclass(frozen=True)
class ReferenceBlock:
    label: str
    a1: float
    a2: float
    beta: float
    rho: float
    survival_corr: float
    pi1: tuple
    pi2: tuple
    merton: float
    gammas: tuple = GAMMAS


TABLE1 = (
    ReferenceBlock("a1=0.01 a2=0.1 beta=2", 0.01, 0.1, 2.0, 0.0, 0.2936,
                   (0.462, 1.659, 1.892, 2.621, 2.832),
                   (-1.047, -0.709, -0.498, 0.623, 1.168), 2.0),
    ReferenceBlock("a1=0.1 a2=0.1 beta=2", 0.1, 0.1, 2.0, 0.0, 0.5736,
                   (-0.353, -0.210, -0.147, 0.556, 2.0),
                   (-0.353, -0.210, -0.147, 0.556, 2.0), 2.0),
    ReferenceBlock("a1=0.3 a2=0.1 beta=2", 0.3, 0.1, 2.0, 0.0, 0.4555,
                   (-1.723, -1.719, -1.647, -0.697, 1.293),
                   (-0.132, 0.453, 0.521, 1.121, 2.707), 2.0),
)

TABLE2 = (
    ReferenceBlock("rho=0 beta=1", 0.01, 0.1, 1.0, 0.0, 0.0,
                   (0.228, 0.942, 1.099, 1.966, 2.459),
                   (-0.867, -0.452, -0.278, 0.856, 1.541), 2.0),
    ReferenceBlock("rho=0 beta=2", 0.01, 0.1, 2.0, 0.0, 0.2936,
                   (0.462, 1.659, 1.892, 2.621, 2.832),
                   (-1.047, -0.709, -0.498, 0.623, 1.168), 2.0),
    ReferenceBlock("rho=0.3 beta=1", 0.01, 0.1, 1.0, 0.3, 0.0,
                   (0.492, 1.081, 1.188, 1.715, 2.025),
                   (-0.959, -0.504, -0.348, 0.519, 1.052), 1.539),
    ReferenceBlock("rho=0.3 beta=2", 0.01, 0.1, 2.0, 0.3, 0.2936,
                   (0.863, 1.939, 2.077, 2.399, 2.450),
                   (-1.235, -0.817, -0.626, 0.216, 0.627), 1.539),
)

# survival correlation quoted for a1 = a2 = 0.01, beta = 2
SYMMETRIC_SMALL_SURVIVAL_CORR = 0.5846

TABLES = {1: TABLE1, 2: TABLE2}
