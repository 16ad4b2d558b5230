"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -v -s tests/test_acceptance.py`` or directly with
``python3 tests/test_acceptance.py``.  Each check returns ``(ok, detail)``;
the detail line records the measured quantities next to their thresholds.
"""

from __future__ import annotations

import copy
import math
import sys
import time
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from haarfact import (IndexUniverse, OmegaCoefficients, OmegaOperator, PipelineConfig,  # noqa: E402
                      StageFailure, build_AB_almost, build_AB_hat, build_omega_basis,
                      certified_column_bound, full_factor, lift_system, omega_norm,
                      randomize_faithful, reduce_positive_diagonal, run_verify)
from haarfact.dyadic import intervals_up_to  # noqa: E402
from haarfact.generate import generate_operator  # noqa: E402
from haarfact.linalg import HaarOperator  # noqa: E402
from haarfact.norms import base_norm  # noqa: E402
from haarfact.omega import component_condexp_sum, conditional_expectation  # noqa: E402
from haarfact.pipeline import (concentration_statistics, formulas, max_stable_count,  # noqa: E402
                               select_stable_frequencies, stabilize_component)
from haarfact.stepfunc import StepFunction  # noqa: E402

SPACES = [f"lp:{p}:{mode}" for p in (1, 2, 4) for mode in ("constant", "independent")]
RELATIVE = 1e-9


def ratio(y: OmegaCoefficients, x: OmegaCoefficients, space: str, bases) -> float:
    return (omega_norm(y, bases[y.n_max], space).value
            / omega_norm(x, bases[x.n_max], space).value)


def lifted_random_system(seed: int, depth: int, m: int = 1):
    """Randomized systems of depth ``0..depth`` on frequencies ``m..m+n`` in components ``n+m+1``."""
    systems = [randomize_faithful(n, m, seed=(seed, n)) for n in range(depth + 1)]
    return lift_system(systems, [n + m + 1 for n in range(depth + 1)], depth + m + 1)


# criteria -------------------------------------------------------------------------------

def criterion_1():
    failures = []
    for seed in range(20):
        depth = seed % 3
        omega = lifted_random_system(seed, depth, m=1)
        A, B = build_AB_hat(omega)
        if not A @ B == OmegaOperator.identity(depth):
            failures.append(seed)
    return not failures, f"20 systems (n_max <= 4), exact AB = I; failing seeds {failures}"


def criterion_2():
    rng = np.random.default_rng(2)
    bases = {n: build_omega_basis(n) for n in range(4)}
    worst_iso, worst_contraction = 0.0, 0.0
    for trial in range(50):
        omega = lifted_random_system(100 + trial % 5, 1, m=1)
        A, B = build_AB_hat(omega, "float")
        x = OmegaCoefficients(rng.standard_normal(4), 1, "float")
        z = OmegaCoefficients(rng.standard_normal(len(A.domain)), A.domain.n_max, "float")
        for space in SPACES:
            worst_iso = max(worst_iso, abs(ratio(B.apply(x), x, space, bases) - 1))
            worst_contraction = max(worst_contraction, ratio(A.apply(z), z, space, bases))
            # B x is extremal: A B x = x and ||B x|| = ||x||
            worst_contraction = max(worst_contraction,
                                    ratio(A.apply(B.apply(x)), B.apply(x), space, bases))
    ok = worst_iso <= RELATIVE and worst_contraction <= 1 + RELATIVE
    return ok, (f"max |‖Bx‖/‖x‖ - 1| = {worst_iso:.2e}, max ‖Ax‖/‖x‖ = {worst_contraction:.12f} "
                f"over 50 vectors x {len(SPACES)} spaces")


def criterion_3():
    eta = F(1, 10)
    delta = F(1, 2)
    bases = {n: build_omega_basis(n) for n in range(5)}
    spaces = ["lp:1:independent", "lp:2:constant", "lp:2:independent"]
    rng = np.random.default_rng(3)
    worst_b, worst_a, gaps, exact = 0.0, 0.0, [], True
    for seed in range(1, 6):
        pattern = np.random.default_rng(seed)
        values = [delta if pattern.random() < 0.7 else -delta for _ in IndexUniverse(4)]
        T = OmegaOperator.diagonal(values, 4)
        stage = reduce_positive_diagonal(T, delta, eta, PipelineConfig())
        gaps.append(stage.certificate.details["mu"])
        A, B = build_AB_almost(stage.system, eta)
        exact &= A @ B == OmegaOperator.identity(A.codomain.n_max)
        Af, Bf = A.to_float(), B.to_float()
        for _ in range(6):
            x = OmegaCoefficients(rng.standard_normal(len(B.domain)), B.domain.n_max, "float")
            z = OmegaCoefficients(rng.standard_normal(len(A.domain)), 4, "float")
            for space in spaces:
                worst_b = max(worst_b, ratio(Bf.apply(x), x, space, bases))
                worst_a = max(worst_a, ratio(Af.apply(z), z, space, bases))
    ok = exact and worst_b <= 1 + RELATIVE and worst_a <= (4 + float(eta)) * (1 + RELATIVE)
    return ok, (f"AB = I exact: {exact}; max ‖Bx‖/‖x‖ = {worst_b:.12f} (<= 1); "
                f"max ‖Ax‖/‖x‖ = {worst_a:.6f} (<= 4.1); support measures mu {gaps}")


def criterion_4():
    rng = np.random.default_rng(4)
    worst = 0.0
    for space in ("lp:1", "lp:2", "lp:4"):
        for _ in range(100):
            f = StepFunction(rng.standard_normal(64), "float")
            labels = rng.integers(0, int(rng.integers(1, 17)), size=64)
            g = conditional_expectation(f, labels)
            worst = max(worst, base_norm(g, space).value / base_norm(f, space).value)
    basis = build_omega_basis(2)
    mismatches = 0
    for _ in range(100):
        values = [F(int(rng.integers(-6, 7)), int(rng.integers(1, 5))) for _ in range(11)]
        x = OmegaCoefficients(values, 2)
        algebras = []
        for n in range(int(rng.integers(1, 4))):
            atoms = basis.atom_labels(n)
            merge = rng.integers(0, int(rng.integers(1, 2 ** (n + 1) + 1)), size=int(atoms.max()) + 1)
            algebras.append(merge[atoms])
        joint = component_condexp_sum(x, algebras, basis, check=False).values.tolist()
        f = basis.synthesize(x).values.tolist()
        separate = [oracles.conditional_average(f, a.tolist()) for a in algebras]
        mismatches += joint != [sum(v) for v in zip(*separate)]
    ok = worst <= 1 + RELATIVE and mismatches == 0
    return ok, (f"max ‖Ef‖/‖f‖ = {worst:.12f} over 300 pairs; "
                f"sum identity mismatches {mismatches}/100")


def criterion_5():
    rng = np.random.default_rng(5)
    eta = 0.1
    n_max = 3
    universe = IndexUniverse(n_max)
    bases = {n_max: build_omega_basis(n_max)}
    limits = np.array([eta / (8 * 4 ** i.component) for i in universe])
    worst_bound, worst_ratio = 0.0, 0.0
    for trial in range(50):
        space = SPACES[trial % len(SPACES)]
        D = OmegaOperator.diagonal((rng.uniform(-1, 1, len(universe)) * limits).tolist(), n_max)
        worst_bound = max(worst_bound, certified_column_bound(D, space) / eta)
        for _ in range(4):
            x = OmegaCoefficients(rng.standard_normal(len(universe)), n_max, "float")
            worst_ratio = max(worst_ratio, ratio(D.apply(x), x, space, bases) / eta)
    worst_zero_one = 0.0
    for seed in range(50):
        P = generate_operator("multiplier", n_max, seed).to_float()
        space = SPACES[seed % len(SPACES)]
        for _ in range(4):
            x = OmegaCoefficients(rng.standard_normal(len(universe)), n_max, "float")
            worst_zero_one = max(worst_zero_one, ratio(P.apply(x), x, space, bases))
    ok = worst_bound <= 1 and worst_ratio <= 1 + RELATIVE and worst_zero_one <= 1 + RELATIVE
    return ok, (f"max bound/eta = {worst_bound:.4f}, max sampled ratio/eta = {worst_ratio:.4f}, "
                f"max 0-1 multiplier ratio = {worst_zero_one:.12f}")


def criterion_6():
    rng = np.random.default_rng(6)
    eta = F(1, 2)
    feasible = infeasible = mismatches = violations = 0
    for _ in range(100):
        n = int(rng.integers(0, 3))
        depth = int(rng.integers(1, 6))
        centers = [F(int(v), 8) for v in rng.integers(-8, 9, size=3)]
        alphas = [centers[int(rng.integers(0, 3))] + F(int(rng.integers(-2, 3)), 16)
                  for _ in range(depth + 1)]
        alphas = [min(max(a, F(-1)), F(1)) for a in alphas]
        xi = F(int(rng.integers(0, 4)), 32)
        diagonal = {}
        for level in range(depth + 1):
            cells = intervals_up_to(level)[(1 << level) - 1:]
            for pos, K in enumerate(cells):
                # symmetric perturbations keep each level average at alpha
                shift = xi if (pos % 2 == 0) else -xi
                diagonal[K] = alphas[level] + (shift if len(cells) > 1 else 0)
        subsets = oracles.anchored_subsets(alphas, eta, n + 1)
        choice = select_stable_frequencies(alphas, eta, n)
        largest = max((size for size in range(1, depth + 2)
                        if oracles.anchored_subsets(alphas, eta, size)), default=0)
        mismatches += (choice is None) != (not subsets)
        mismatches += max_stable_count(alphas, eta) != largest
        if subsets:
            feasible += 1
            mismatches += choice != subsets[0]
            result = stabilize_component(diagonal, alphas, eta, n)
            violations += sum(abs(v - result.c) > eta + xi for v in result.averaged.values())
        else:
            infeasible += 1
            try:
                stabilize_component(diagonal, alphas, eta, n)
                mismatches += 1
            except StageFailure:
                pass
    ok = mismatches == 0 and violations == 0
    return ok, (f"{feasible} feasible / {infeasible} infeasible cases; oracle mismatches "
                f"{mismatches}; |d - c| > eta + xi violations {violations}")


def criterion_7():
    lines, ok = [], True
    for m in (6, 8, 10):
        depth = m + 1
        size = (1 << (depth + 1)) - 1
        rng = np.random.default_rng(m)
        matrix = np.zeros((size, size))
        live = slice((1 << m) - 1, size)
        block = rng.standard_normal((size - (1 << m) + 1,) * 2) / math.sqrt(size)
        matrix[live, live] = block
        report = concentration_statistics(HaarOperator(matrix, depth, "float"), 1, m, 2000,
                                          seed=7)
        data = report.to_json()
        this = report.mean_within(4.0) and report.variance_within(1.1)
        ok &= this
        lines.append(f"m={m}: |mean| {data['max_abs_mean']:.2e}, var {data['max_variance']:.2e} "
                     f"<= {1.1 * data['variance_bound']:.2e}")
    return ok, "; ".join(lines)


def criterion_8():
    T = generate_operator("diagonal", 4, 11)
    config = PipelineConfig(space="lp:1:independent", eta=0.05, delta=0.6)
    cert = full_factor(T, config)
    report = run_verify(cert.to_json(), T.to_json(), samples=200, seed=0)
    values = report.values
    estimate = values.get("norm_product_estimate", math.inf)
    residual = values.get("max_basis_residual", math.inf)
    ok = (report.ok and cert.branch == "T" and float(cert.scalar) >= 0.55
          and residual <= 1e-6 and estimate <= 2.0)
    return ok, (f"branch {cert.branch}, c = {cert.scalar}, depth {cert.depth}, verify "
                f"{'ok' if report.ok else report.clause}, residual {residual:.1e}, "
                f"‖L‖‖R‖ estimate {estimate:.4f}, bound {cert.neumann_bound:.4f}")


def criterion_9():
    results = {}
    for name, T, branch in (("T=0", OmegaOperator.zeros(3), "I-T"),
                            ("T=I", OmegaOperator.identity(3), "T")):
        cert = full_factor(T, PipelineConfig())
        results[name] = (cert.branch == branch and cert.scalar == 1
                         and cert.certified_error == 0,
                         f"{name}: branch {cert.branch}, c = {cert.scalar}, "
                         f"error {cert.certified_error}")
    return all(r[0] for r in results.values()), "; ".join(r[1] for r in results.values())


def _first_entry(operator_json):
    column = next(iter(operator_json["columns"].values()))
    return column, next(iter(column))


def _bump_entry(data, key):
    column, row = _first_entry(data[key])
    column[row] = str(F(column[row]) + F(1, 1000))


def _mutations():
    def scalar(d): d["scalar"] = str(F(d["scalar"]) + F(1, 100))
    def chain_scalar(d): d["chain_scalar"] = str(F(d["chain_scalar"]) - F(1, 100))
    def digest(d): d["operator_digest"] = "0" * 64
    def stage_digest(d): d["stages"][0]["input_digest"] = "f" * 64
    def l_entry(d): _bump_entry(d, "L")
    def r_entry(d): _bump_entry(d, "R")
    def a_entry(d): _bump_entry(d, "A")
    def stage_output(d): _bump_entry(d["stages"][-1], "output")
    def branch(d): d["branch"] = "I-T" if d["branch"] == "T" else "T"
    def neumann(d): d["bounds"]["neumann"] = d["bounds"]["neumann"] * 0.9
    return [scalar, chain_scalar, digest, stage_digest, l_entry, r_entry, a_entry,
            stage_output, branch, neumann]


def criterion_10():
    T = generate_operator("diagonal", 2, 7)
    cert = full_factor(T, PipelineConfig(eta=0.05, delta=0.6)).to_json()
    baseline = run_verify(cert, T.to_json())
    caught = []
    for mutate in _mutations():
        tampered = copy.deepcopy(cert)
        mutate(tampered)
        report = run_verify(tampered, T.to_json())
        caught.append((mutate.__name__, report.clause if not report.ok else None))
    missed = [name for name, clause in caught if clause is None]
    ok = baseline.ok and not missed
    return ok, (f"untampered verifies: {baseline.ok}; caught "
                + ", ".join(f"{n}->{c}" for n, c in caught if c) + f"; missed {missed}")


def criterion_formulas():
    cases = [(formulas(2, 1, F(1, 2))["N0"], 67), (formulas(3, 1, F(1, 4))["N1"], 25),
             (formulas(2, 1, F(1, 2))["N2"], 80)]
    return all(a == b for a, b in cases), ", ".join(f"{a} (expected {b})" for a, b in cases)


CRITERIA = [
    ("1 exact factor identity", criterion_1, 60),
    ("2 isometry and contraction", criterion_2, 300),
    ("3 almost-faithful bounds", criterion_3, 300),
    ("4 conditional expectations", criterion_4, 120),
    ("5 diagonal and 0-1 multiplier bounds", criterion_5, 180),
    ("6 pigeonhole stabilization", criterion_6, 120),
    ("7 concentration diagnostics", criterion_7, 600),
    ("8 end-to-end large diagonal", criterion_8, 900),
    ("9 primary branch logic", criterion_9, 60),
    ("10 certificate tampering", criterion_10, 60),
    ("formula values", criterion_formulas, 10),
]


def evaluate(check, budget):
    start = time.perf_counter()
    ok, detail = check()
    elapsed = time.perf_counter() - start
    ok = ok and elapsed <= budget
    return ok, f"{detail} [{elapsed:.1f}s, budget {budget}s]"


@pytest.mark.parametrize("name,check,budget", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(name, check, budget, capsys):
    ok, detail = evaluate(check, budget)
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {name}: {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for name, check, budget in CRITERIA:
        ok, detail = evaluate(check, budget)
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} criterion {name}: {detail}", flush=True)
    sys.exit(1 if failed else 0)
