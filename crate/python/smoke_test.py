#!/usr/bin/env python3
"""Smoke test for the Python bindings.

Builds the extension with cargo if needed, stages it as an importable
module, and exercises the main operations end to end.

Run from the repository root:  python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def stage_module() -> Path:
    so = ROOT / "target" / "debug" / "libmicrolam.so"
    if not so.exists():
        subprocess.run(
            ["cargo", "build", "-p", "microlam-py"], cwd=ROOT, check=True
        )
    staged = ROOT / "python" / "microlam.so"
    if not staged.exists() or so.stat().st_mtime > staged.stat().st_mtime:
        shutil.copy2(so, staged)
    return staged.parent


def main() -> int:
    sys.path.insert(0, str(stage_module()))
    import microlam as ml

    # Exact exponent balance.
    assert ml.balance_exponent(1) == (2, 3)
    assert ml.balance_exponent(2) == (4, 5)

    # Wave cone of the divergence: S1 - A1 is compatible with direction e1,
    # A2 - A1 is not.
    wells, aux = ml.t3_wells()
    s1_minus_a1 = [[aux[0][i][j] - wells[0][i][j] for j in range(3)] for i in range(3)]
    member, residual, direction = ml.wave_cone("div", s1_minus_a1)
    assert member and abs(abs(direction[0]) - 1.0) < 1e-10, (member, direction)
    a2_minus_a1 = [[wells[1][i][j] - wells[0][i][j] for j in range(3)] for i in range(3)]
    member, residual, _ = ml.wave_cone("div", a2_minus_a1)
    assert not member and residual > 0.4

    # Lamination space dimensions and constant rank.
    basis = ml.lamination_space("div", s1_minus_a1)
    assert len(basis) == 1
    constant, lo, hi = ml.constant_rank("div")
    assert constant and lo == hi == 3

    # Curl-curl symbol on 2 alpha e2 (x) e2 is 2 alpha xi_1^2.
    alpha = 0.37
    state = [[0.0, 0.0], [0.0, 2.0 * alpha]]
    for xi in ([0.3, -1.2], [1.0, 0.45]):
        sym = ml.symbol("curlcurl2", xi)
        applied = (
            sym[0][0] * state[0][0]
            + sym[0][1] * state[0][1]
            + sym[0][2] * state[1][0]
            + sym[0][3] * state[1][1]
        )
        assert abs(applied - 2.0 * alpha * xi[0] ** 2) < 1e-13

    # Hull membership and decomposition.
    s3 = aux[2]
    assert ml.hull_contains(s3)
    assert not ml.hull_contains([[2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]])
    desc, recompose_error = ml.hull_split(s3)
    assert recompose_error < 1e-14, desc

    # Diagonal-entry relations map well triples exactly.
    assert abs(ml.diagonal_relation(1, 2, -0.5) - 2.0 / 3.0) < 1e-15
    assert ml.diagonal_relation(1, 2, 0.0) == 0.0

    # Exact rigidity: three constants for the rigid set, more for the pair.
    assert ml.rigidity_count(2, "t3") == 3
    assert ml.rigidity_count(2, "pair") > 2

    # A tiny branching sequence scales like eps^(2/3).
    eps_list, totals = [], []
    for k in range(4):
        eps = 10.0 ** (-2.0 - 0.5 * k)
        n = max(2, round(eps ** (-1.0 / 3.0)))
        elastic, surface, total, jump_ok = ml.branching_energies(n, eps)
        assert jump_ok
        eps_list.append(eps)
        totals.append(total)
    amplitude, rate, r2 = ml.scaling_fit(eps_list, totals, "algebraic")
    assert 0.5 < rate < 0.8, rate
    assert r2 > 0.99, r2

    # Iterated laminate energies are positive and the schedule is admissible.
    elastic, surface, scales = ml.t3_energies(2, 0.2)
    assert elastic > 0 and surface > 0
    assert scales[1] < 0.5 * scales[0]

    print("python bindings: all smoke checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
