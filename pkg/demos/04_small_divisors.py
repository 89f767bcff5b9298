"""A small-divisor counterexample on a tabulated symbol.

Planting means a0 |xi| within (1 + |xi|)^-k / 2 of an integer on |xi| = 2^k breaks
the Diophantine condition. The forged f is smooth, yet |u(t_k)| equals the bump
integral on every planted mode.
"""

from tubesolve.conditions import check_conditions
from tubesolve.counterexample import forge_dc, planted_dc_table, verify_forged
from tubesolve.spectral import CircleGrid, FrequencyBox
from tubesolve.symbol import TabulatedSymbol, evaluate


def main():
    g, box = CircleGrid(1024), FrequencyBox(1, 32)
    ps = evaluate(TabulatedSymbol(1, g, box, planted_dc_table(g, box, range(1, 6))), g, box, eps_z=1e-14)
    rep = check_conditions(ps, 1, 32)
    print(f"verdict: solvable={rep.solvable}")
    for reason in rep.reasons:
        print(f"  {reason}")
    forged = forge_dc(ps, box, sequence=[(k, (2**k,)) for k in range(1, 6)])
    check = verify_forged(forged, ps)
    print(f"forged: identity holds {check.all_hold}, decay of f {check.f_decay.exponent:.1f}, "
          f"decay of u {check.u_decay.exponent:.2f}")
    for m in forged.modes:
        print(f"  xi={m.xi}: |u(t_k)| {m.measured:.6f}, bump integral {m.target:.6f}")


if __name__ == "__main__":
    main()
