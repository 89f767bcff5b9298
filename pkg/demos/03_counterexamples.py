"""Forge right-hand sides that are smooth but whose solutions are not.

For i cos 2t the resonant condition fails and a beta witness exists; for
golden + i cos t the non-resonant condition fails and an alpha witness exists.
The forged f decays fast in |xi| while u stays of size |xi|^-m.
"""

import numpy as np

from tubesolve.counterexample import forge_alpha, forge_beta, verify_forged
from tubesolve.spectral import CircleGrid, FrequencyBox
from tubesolve.symbol import SeparableSymbol, evaluate

GOLDEN = (np.sqrt(5) - 1) / 2


def main():
    g, box = CircleGrid(1024), FrequencyBox(1, 32)
    cases = [
        ("i cos 2t", lambda t: 1j * np.cos(2 * t), forge_beta),
        ("golden + i cos t", lambda t: GOLDEN + 1j * np.cos(t), forge_alpha),
    ]
    for name, profile, forge in cases:
        ps = evaluate(SeparableSymbol(1, profile), g, box)
        forged = forge(ps, box, 1)
        rep = verify_forged(forged, ps)
        print(f"{name} ({forged.tag}): bounds hold {rep.all_hold}, in closure {rep.closure_member}")
        print(f"  decay of f {rep.f_decay.exponent:.1f}, decay of u {rep.u_decay.exponent:.2f}")
        for m in forged.modes:
            print(f"  xi={m.xi}: measured {m.measured:.3e} >= target {m.target:.3e}")


if __name__ == "__main__":
    main()
