"""Independent re-check of a factorization certificate.

Only the certificate and operator files are read; every bound is recomputed
from the matrices they contain.  Nothing here imports the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import VerificationMismatch
from .linalg import OmegaOperator, decode_scalar
from .norms import ExpectationStrategy, SpaceSpec, certified_column_bound, operator_norm_lower

FLOAT_TOLERANCE = 1e-9
RELATIVE_SLACK = 1e-9


@dataclass
class VerifyReport:
    ok: bool
    clause: str | None = None
    detail: str = ""
    checks: list[str] = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"ok": self.ok, "clause": self.clause, "detail": self.detail,
                "checks": self.checks, "values": self.values}


class _Checker:
    def __init__(self, mode: str):
        self.mode = mode
        self.checks: list[str] = []
        self.values: dict = {}

    def require(self, condition: bool, clause: str, detail: str = "") -> None:
        if not condition:
            raise VerificationMismatch(clause, detail)
        if clause not in self.checks:
            self.checks.append(clause)

    def same(self, left: OmegaOperator, right: OmegaOperator, clause: str,
             scale: float = 1.0) -> None:
        if left.domain != right.domain or left.codomain != right.codomain:
            raise VerificationMismatch(clause, "universes differ")
        if left.mode == "rational" and right.mode == "rational":
            self.require(left == right, clause, "entries differ")
            return
        gap = float(np.max(np.abs(left.float_matrix() - right.float_matrix()), initial=0.0))
        self.require(gap <= FLOAT_TOLERANCE * max(scale, 1.0), clause, f"max deviation {gap:.3e}")


def _identity(n_max: int, mode: str) -> OmegaOperator:
    return OmegaOperator.identity(n_max, mode)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= RELATIVE_SLACK * max(abs(a), abs(b), 1e-300)


def _not_above(value: float, bound: float) -> bool:
    return value <= bound * (1 + RELATIVE_SLACK) + 1e-15


def _verify(cert: dict, op_data: dict, samples: int, seed: int, check: _Checker) -> None:
    check.require(cert.get("format") == "haarfact-certificate/1", "format",
                  str(cert.get("format")))
    T = OmegaOperator.from_json(op_data)
    check.require(T.digest() == cert["operator_digest"], "digest mismatch",
                  "the certificate was issued for a different operator")
    mode = cert["mode"]
    check.require(T.mode == mode, "mode mismatch", f"operator is {T.mode}, certificate {mode}")
    config = cert["config"]
    space = SpaceSpec.parse(config["space"])
    strategy = ExpectationStrategy(**config.get("strategy", {}))
    method = config.get("column_method", "exact")
    bound_of = lambda S: certified_column_bound(S, space, strategy, method)  # noqa: E731

    # stage chain
    S = T
    total_sign = 1
    constant, error = 1.0, 0.0
    A_total = B_total = None
    for i, stage in enumerate(cert["stages"]):
        name = f"stage {i} ({stage['name']})"
        A = OmegaOperator.from_json(stage["A"])
        B = OmegaOperator.from_json(stage["B"])
        out = OmegaOperator.from_json(stage["output"])
        sign = int(stage["sign"])
        check.require(sign in (1, -1), "stage sign", name)
        check.require(S.digest() == stage["input_digest"], "stage input digest", name)
        check.require(A.domain == S.codomain and B.codomain == S.domain, "stage shape", name)
        check.same(A @ B, _identity(A.codomain.n_max, mode), "projectional")
        left = A @ (_identity(S.domain.n_max, mode) - S) @ B
        right = _identity(A.codomain.n_max, mode) - A @ S @ B
        check.same(left, right, "complement identity")
        conjugated = A @ S @ B
        if sign == -1:
            conjugated = -conjugated
        residual = bound_of(conjugated - out)
        check.require(_not_above(residual, float(stage["certified"])), "stage residual",
                      f"{name}: recomputed {residual:.6e} > recorded {stage['certified']:.6e}")
        if not stage.get("degraded", False):
            check.require(_not_above(float(stage["certified"]), float(stage["claimed"])),
                          "stage claim", name)
        envelope = float(stage["constant"]) * bound_of(S) + float(stage["certified"])
        diagonal = np.abs(out.float_matrix().diagonal()) if out.is_square else np.zeros(0)
        check.require(bool(np.all(diagonal <= envelope * (1 + RELATIVE_SLACK))),
                      "diagonal bound", name)
        error = float(stage["certified"]) + float(stage["constant"]) * error
        constant *= float(stage["constant"])
        total_sign *= sign
        A_total = A if A_total is None else A @ A_total
        B_total = B if B_total is None else B_total @ B
        S = out

    chain = cert["chain"]
    check.require(_close(constant, float(chain["constant"])), "chain arithmetic", "constant")
    check.require(_close(error, float(chain["error"])) or error == float(chain["error"]),
                  "chain arithmetic", "error")
    certified_error = min(float(chain["error"]), float(chain["direct_error"]))
    check.require(certified_error == float(chain["certified_error"]), "chain arithmetic",
                  "certified error is not the smaller bound")

    A_cert = OmegaOperator.from_json(cert["A"])
    B_cert = OmegaOperator.from_json(cert["B"])
    check.same(A_total, A_cert, "composite mismatch")
    check.same(B_total, B_cert, "composite mismatch")

    # scalar consistency
    check.require(S.is_square and S.is_diagonal(), "scalar mismatch", "final stage is not diagonal")
    entries = set(S.diagonal_values().tolist())
    check.require(len(entries) == 1, "scalar mismatch", "final stage is not scalar")
    final = entries.pop()
    chain_scalar = decode_scalar(cert["chain_scalar"], mode)
    check.require(chain_scalar == total_sign * final, "scalar mismatch",
                  f"chain scalar {chain_scalar} vs stage output {total_sign * final}")
    scalar = decode_scalar(cert["scalar"], mode)
    branch = cert["branch"]
    check.require(branch in ("T", "I-T"), "branch", branch)
    expected = chain_scalar if branch == "T" else 1 - chain_scalar
    check.require(scalar == expected, "scalar mismatch", f"{scalar} != {expected}")

    # final operator of the chosen branch
    F = T if branch == "T" else _identity(T.domain.n_max, mode) - T
    M = A_cert @ F @ B_cert
    depth = M.domain.n_max
    direct = bound_of(M - _identity(depth, mode) * scalar)
    check.require(_not_above(direct, float(chain["direct_error"])), "certified error",
                  f"recomputed {direct:.6e} > recorded {chain['direct_error']:.6e}")
    c = abs(float(scalar))
    check.require(c > 0 and certified_error / c < 1, "spectral condition",
                  f"error {certified_error} against scalar {c}")

    L = OmegaOperator.from_json(cert["L"])
    R = OmegaOperator.from_json(cert["R"])
    check.same(R, B_cert, "R mismatch")
    check.require(L.domain == T.codomain and L.codomain == M.codomain, "L mismatch", "shape")
    check.same(M @ L, A_cert, "L mismatch", scale=float(np.abs(A_cert.float_matrix()).max()))

    product = L @ F @ R
    size = len(product.domain)
    worst = 0.0
    for j in range(size):
        column = product.column(j).to_float().values
        column[j] -= 1.0
        worst = max(worst, float(np.max(np.abs(column), initial=0.0)))
    limit = 0.0 if mode == "rational" else FLOAT_TOLERANCE
    check.require(worst <= limit, "LTR residual", f"max basis residual {worst:.3e}")
    check.values["max_basis_residual"] = worst

    neumann = constant / c / (1 - certified_error / c)
    check.require(_close(neumann, float(cert["bounds"]["neumann"])), "neumann bound",
                  f"{neumann} vs {cert['bounds']['neumann']}")
    check.values.update({"scalar": float(scalar), "certified_error": certified_error,
                         "neumann_bound": neumann, "depth": depth, "branch": branch})
    if samples > 0:
        estimate = (operator_norm_lower(L, space, seed, samples, strategy=strategy)
                    * operator_norm_lower(R, space, seed + 1, samples, strategy=strategy))
        check.values["norm_product_estimate"] = estimate
        check.require(_not_above(estimate, neumann), "norm bound",
                      f"estimate {estimate:.6f} exceeds {neumann:.6f}")


def run_verify(cert: dict, op_data: dict, samples: int = 0, seed: int = 0) -> VerifyReport:
    """Re-check every clause of ``cert`` against the operator file contents.

    Returns a report whose ``clause`` names the first failing check.
    """
    check = _Checker(cert.get("mode", "float"))
    try:
        _verify(cert, op_data, samples, seed, check)
    except VerificationMismatch as exc:
        return VerifyReport(False, exc.clause, exc.detail, check.checks, check.values)
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        return VerifyReport(False, "malformed certificate", f"{type(exc).__name__}: {exc}",
                            check.checks, check.values)
    return VerifyReport(True, None, "", check.checks, check.values)


__all__ = ["VerifyReport", "run_verify"]
