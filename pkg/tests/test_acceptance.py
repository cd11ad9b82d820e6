"""One test per acceptance criterion, at the stated tolerances and runtimes."""

import math
import os
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla

from cnumber.coherent import disc_grid, identity_residual
from cnumber.fock import build_basis
from cnumber.model import (EnsembleParams, default_model, delta_bound, delta_closed_form,
                           full_hamiltonian, make_model, reduce_lower, reduce_upper,
                           zero_mode_plan)
from cnumber.ensemble import xi_full
from cnumber.symbols import lower_symbol, symbol_reorder
from cnumber.verify import (PASS, check_concentration, check_condensate, check_maxz,
                            check_peak, check_pressure_collapse, check_sandwich, check_shift,
                            default_instance, volume_family)

LENGTHS = (4, 8, 16, 32)
GRID4 = [EnsembleParams(b, mu, lam) for b in (0.5, 1.0, 2.0) for mu in (-1.0, -0.5)
         for lam in (0.0, 0.1)]


@pytest.fixture
def criterion(record_property):
    def mark(num, text):
        record_property("criterion", (num, text))
        print(f"criterion {num}: {text}")
    return mark


def z_points():
    k = np.arange(20)
    return np.sqrt(10.0 * (k + 0.5) / 20) * np.exp(2j * np.pi * 0.618034 * k)


def test_c01_symbol_tables(criterion):
    criterion(1, "lower and upper symbols of the six zero-mode monomials, exact")
    t0 = time.perf_counter()
    upper = {(1, 0): {(1, 0): 1}, (0, 1): {(0, 1): 1}, (1, 1): {(1, 1): 1, (0, 0): -1},
             (2, 0): {(2, 0): 1}, (0, 2): {(0, 2): 1},
             (2, 2): {(2, 2): 1, (1, 1): -4, (0, 0): 2}}
    for mn, terms in upper.items():
        assert symbol_reorder(*mn).terms == terms
        assert lower_symbol(*mn).terms == {mn: 1}
    assert str(symbol_reorder(1, 1)) == "|z|^2 + -1"
    assert str(symbol_reorder(2, 2)) == "|z|^4 + -4*|z|^2 + 2"
    assert time.perf_counter() - t0 < 1.0


def test_c02_delta_identity(criterion):
    criterion(2, "upper minus lower reduction equals the closed-form correction to 1e-12")
    t0 = time.perf_counter()
    inst = default_instance()
    s = inst.spec
    rest = inst.basis.without([s.zero_mode])
    worst = 0.0
    for p in (EnsembleParams(1.0, -0.5), EnsembleParams(1.0, -1.0, 0.1)):
        for z in z_points():
            plan = zero_mode_plan(s, z)
            d = (reduce_upper(s, p, plan, rest) - reduce_lower(s, p, plan, rest)).toarray()
            ref = delta_closed_form(s, p, z, rest).toarray()
            worst = max(worst, np.max(np.abs(d - ref)) / np.max(np.abs(ref)))
    print(f"  max relative deviation {worst:.2e}")
    assert worst <= 1e-12
    assert time.perf_counter() - t0 < 10.0


def test_c03_delta_bound(criterion):
    criterion(3, "|<delta>| <= 2 phi (N'+1/2)/V + |mu| on every basis state")
    t0 = time.perf_counter()
    inst = default_instance()
    s = inst.spec
    rest = inst.basis.without([s.zero_mode])
    nrest = rest.states.sum(axis=1)
    violations = 0
    for mu in (-1.0, -0.5, 0.0, 0.5):
        p = EnsembleParams(1.0, mu)
        for z in z_points():
            diag = np.real(np.diag(delta_closed_form(s, p, z, rest).toarray()))
            plan = zero_mode_plan(s, z)
            bound = np.array([delta_bound(plan, p, s, abs(z) ** 2 + n) for n in nrest])
            violations += int(np.sum(np.abs(diag) > bound))
    assert violations == 0
    assert time.perf_counter() - t0 < 10.0


_pointwise_time = [0.0]


def test_c04_sandwich(criterion):
    criterion(4, "sandwich on the default model grid, budget < 1e-6, upper-lower < 5 beta")
    t0 = time.perf_counter()
    inst = default_instance()
    for p in GRID4:
        r = check_sandwich(inst, p)
        print(f"  beta={p.beta} mu={p.mu} lam={p.lam}: gaps {r.payload['gap_lower']:.4f} "
              f"{r.payload['gap_upper']:.4f} budget {r.budget.total:.1e}")
        assert r.verdict == PASS
        assert r.payload["gap_lower"] >= -r.budget.total
        assert r.payload["gap_upper"] >= -r.budget.total
        assert r.budget.total < 1e-6
        assert r.payload["upper_minus_lower"] < 5 * p.beta
    _pointwise_time[0] += time.perf_counter() - t0
    assert _pointwise_time[0] < 300


def test_c05_shift_maxz_peak(criterion):
    criterion(5, "shift, max-z and peak bounds PASS on the criterion-4 grid")
    t0 = time.perf_counter()
    inst = default_instance()
    for p in GRID4:
        for check in (check_shift, check_maxz, check_peak):
            r = check(inst, p)
            assert r.verdict == PASS, (check.__name__, p, r.raw_gap, r.budget.total)
    _pointwise_time[0] += time.perf_counter() - t0
    assert _pointwise_time[0] < 300


def test_c06_pressure_collapse(criterion):
    criterion(6, "pressure spread non-increasing, s(8V0)/s(V0) <= 0.25 (free and interacting)")
    t0 = time.perf_counter()
    p = EnsembleParams(1.0, -0.5)
    free = volume_family(LENGTHS, (2, 6, 2), g=0.0, phi=0.0)
    for lam in (0.0, 0.1):
        r = check_pressure_collapse(free, EnsembleParams(1.0, -0.5, lam), closed_form=True)
        print(f"  free lam={lam}: ratio {r.payload['spread_ratio']:.4f}")
        assert r.verdict == PASS and r.payload["spread_ratio"] <= 0.25
    inter = volume_family(LENGTHS, (2, 6, 2))
    r = check_pressure_collapse(inter, p)
    spreads = [row["spread"] for row in r.payload["family"]]
    print(f"  interacting spreads {np.round(spreads, 5).tolist()} ratio "
          f"{r.payload['spread_ratio']:.4f}")
    assert r.verdict == PASS
    assert all(a >= b for a, b in zip(spreads, spreads[1:]))
    assert r.payload["spread_ratio"] <= 0.25
    assert time.perf_counter() - t0 < 600


def test_c07_condensate(criterion):
    criterion(7, "Cauchy-Schwarz margin, n0 monotone in lambda, spread shrinking with V")
    t0 = time.perf_counter()
    fam = volume_family(LENGTHS, (1, 16, 1))
    r = check_condensate(fam, EnsembleParams(1.0, -0.5), [0.05, 0.1, 0.2, 0.4])
    print(f"  spreads by V {np.round(r.payload['spread_by_volume'], 5).tolist()}")
    assert r.verdict == PASS
    assert r.payload["cs_margin"] >= 0
    assert r.payload["n0_monotone_margin"] > 0
    s = r.payload["spread_by_volume"]
    assert all(a > b for a, b in zip(s, s[1:]))
    assert time.perf_counter() - t0 < 600


def test_c08_concentration(criterion):
    criterion(8, "scaled variances of W and W'' decrease with V; means within one std")
    t0 = time.perf_counter()
    fam = volume_family(LENGTHS, (1, 16, 1))
    r = check_concentration(fam, EnsembleParams(1.0, -0.5, 0.2))
    rows = r.payload["rows"]
    for row in rows:
        print(f"  V={row['V']:g} var W {row['var_full']:.4f} var W'' {row['var_upper']:.4f}")
    assert r.verdict == PASS
    for key in ("var_full", "var_upper"):
        v = [row[key] for row in rows]
        assert all(a > b for a, b in zip(v, v[1:]))
    assert min(r.payload["mean_agreement_margin"]) > 0
    assert time.perf_counter() - t0 < 600


def test_c09_oracles(criterion):
    criterion(9, "xi_full vs dense expm to 1e-10 (dim <= 200); identity residual < 1e-8")
    t0 = time.perf_counter()
    cases = [(make_model(), (3, 6, 3)), (make_model(6.0, g=0.7, sigma=0.3), (4, 7, 4)),
             (make_model(4.0, ((0,), (1,)), g=1.0), (9, 9)),
             (make_model(4.0, ((-1,), (0,), (1,)), g=0.0, phi=0.0), (4, 9, 3))]
    for spec, caps in cases:
        b = build_basis(spec.modes, caps)
        assert b.dim <= 200
        for p in (EnsembleParams(0.5, -1.0), EnsembleParams(1.0, -0.5, 0.1),
                  EnsembleParams(2.0, 0.2, -0.3)):
            H = full_hamiltonian(spec, p, b).toarray()
            ref = math.log(np.trace(sla.expm(-p.beta * H)).real)
            got = xi_full(spec, p, b).log_value
            assert abs(got - ref) <= 1e-10 * abs(ref)
    res = identity_residual(20, disc_grid(60.0))
    print(f"  identity residual {res:.2e}")
    assert res < 1e-8
    assert time.perf_counter() - t0 < 60


def test_c10_determinism(criterion, tmp_path):
    criterion(10, "two consecutive runs give byte-identical report files")
    cfg = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"
    outs = []
    for i in range(2):
        out = tmp_path / "out"
        env = dict(os.environ, CNUMBER_CACHE_DIR=str(tmp_path / f"cache{i}"))
        subprocess.run([sys.executable, "-m", "cnumber.cli", "run", "--config", str(cfg),
                        "--out", str(out)], check=True, env=env, capture_output=True)
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())
                     if p.suffix in (".csv", ".json") and p.name != "manifest.json"})
        shutil.rmtree(out)
    assert outs[0].keys() == outs[1].keys() and len(outs[0]) == 8
    assert outs[0] == outs[1]
