"""Solvability verdicts for a gallery of first-order symbols.

Each symbol is checked twice: by the oscillation and small-divisor conditions on
every mode up to the cutoff, and by the geometric test for homogeneous symbols
(sign changes and connected sublevel sets of b).
"""

import numpy as np

from tubesolve.conditions import check_conditions
from tubesolve.homogeneous import corollary_verdict
from tubesolve.spectral import CircleGrid, FrequencyBox
from tubesolve.symbol import HomogeneousSymbol, evaluate

GOLDEN = (np.sqrt(5) - 1) / 2

GALLERY = {
    "i sin t": lambda t: 1j * np.sin(t),
    "i cos 2t": lambda t: 1j * np.cos(2 * t),
    "golden + i(1 + cos t / 2)": lambda t: GOLDEN + 1j * (1 + 0.5 * np.cos(t)),
    "golden + i cos t": lambda t: GOLDEN + 1j * np.cos(t),
    "i(sin t + 0.8 sin 2t)": lambda t: 1j * (np.sin(t) + 0.8 * np.sin(2 * t)),
}


def main():
    K, g = 64, CircleGrid(2048)
    box = FrequencyBox(1, K)
    print(f"{'symbol':30s} {'conditions':>10s} {'geometric':>10s} {'sup D':>8s}")
    for name, profile in GALLERY.items():
        spec = HomogeneousSymbol.isotropic(1, profile)
        rep = check_conditions(evaluate(spec, g, box), 1, K)
        cor = corollary_verdict(spec, g, box)
        print(f"{name:30s} {str(rep.solvable):>10s} {str(cor.solvable):>10s} {rep.supD:8.3g}")
        for reason in rep.reasons:
            print(f"{'':32s}{reason}")


if __name__ == "__main__":
    main()
