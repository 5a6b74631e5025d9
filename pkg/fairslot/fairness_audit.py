"""
Fairness auditors.

Each auditor compares two allocations (one per user) and returns a record
with the measured deviation, the bound it should respect, and a witness
(the indices that realise the measurement), so a failing check can be
replayed by hand.  Lambda is always passed in; auditors never recompute it.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .core import AuctionInstance, Family, MechanismConfig, effective_values, lambda_of, stability_bound
from .errors import DimensionMismatch, InvalidConfig, InvalidH, NonPositiveAlpha
from .position import AllocationMatrix, generalized_allocate

logger = logging.getLogger(__name__)

AUDIT_TOL = 1e-9
DEFINITIONS = ("weak", "ordered", "tv", "hetero", "kunit")

MatrixLike = Union[AllocationMatrix, NDArray[np.float64], Sequence[Sequence[float]]]


@dataclass(frozen=True)
class AuditRecord:
    metric: str
    measured: float
    bound: float
    satisfied: bool
    witness: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric,
            "measured": self.measured,
            "bound": self.bound,
            "satisfied": self.satisfied,
            "witness": self.witness,
        }


@dataclass(frozen=True)
class FairnessReport:
    lambda_effective: float
    lambda_values: float
    records: List[AuditRecord]

    @property
    def satisfied(self) -> bool:
        return all(r.satisfied for r in self.records)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "lambda_effective": self.lambda_effective,
            "lambda_values": self.lambda_values,
            "satisfied": self.satisfied,
            "records": [r.to_dict() for r in self.records],
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "definition": r.metric,
                "witness": json.dumps(r.witness, sort_keys=True),
                "measured": r.measured,
                "bound": r.bound,
                "satisfied": r.satisfied,
            }
            for r in self.records
        ]
        return pd.DataFrame(rows, columns=["definition", "witness", "measured", "bound", "satisfied"])


def _as_matrix(m: MatrixLike) -> NDArray[np.float64]:
    if isinstance(m, AllocationMatrix):
        return np.asarray(m.m, dtype=float)
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected an advertisers x slots matrix, got shape {arr.shape}")
    return arr


def _pair(m: MatrixLike, m_prime: MatrixLike):
    a, b = _as_matrix(m), _as_matrix(m_prime)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def _record(metric: str, measured: float, bound: float, witness: Dict[str, Any], tol: float) -> AuditRecord:
    measured = float(measured)
    return AuditRecord(metric, measured, float(bound), bool(measured <= bound + tol), witness)


def kunit_tv_bound(lam: float, ell: float, k: int = 1) -> float:
    """
    Subset bound for k-unit PA.

    One unit is a distribution whose entries move by at most lambda^ell each
    way, giving (lambda^ell - 1) / (lambda^ell + 1).  With k > 1 the caps
    break that argument.  The water level still moves by at most lambda^ell,
    so every a_i moves by a factor of at most lambda^(2 ell); applied to a / k
    this gives k (lambda^(2 ell) - 1) / (lambda^(2 ell) + 1).
    """
    if k <= 0:
        return 0.0
    if np.isinf(lam):
        return float(k)
    p = lam ** ell if k == 1 else lam ** (2.0 * ell)
    return float(k * (p - 1.0) / (p + 1.0))


# -------------------------
# Matrix definitions
# -------------------------

def weak_vs_audit(m: MatrixLike, m_prime: MatrixLike, lam: float, ell: float, tol: float = AUDIT_TOL) -> AuditRecord:
    """max |M_ij - M'_ij| against 2 f(lambda)."""
    a, b = _pair(m, m_prime)
    bound = 2.0 * stability_bound(lam, ell)
    if a.size == 0:
        return _record("weak", 0.0, bound, {}, tol)
    diff = np.abs(a - b)
    i, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return _record("weak", diff[i, j], bound, {"i": int(i), "j": int(j)}, tol)


def ordered_vs_audit(
    m: MatrixLike,
    m_prime: MatrixLike,
    i: int,
    h: Union[str, Sequence[float]],
    lam: float,
    ell: float,
    tol: float = AUDIT_TOL,
) -> AuditRecord:
    """
    Salience-weighted deviation |sum_j h_j (M_ij - M'_ij)| against f(lambda).

    ``h="worst"`` takes the maximum over prefix indicators h = (1,..,1,0,..,0),
    i.e. max_p |a^(p)_i - a'^(p)_i|, which dominates every admissible h.
    """
    a, b = _pair(m, m_prime)
    n, k = a.shape
    if not 0 <= i < n:
        raise DimensionMismatch(f"advertiser {i} outside [0, {n})")
    bound = stability_bound(lam, ell)
    delta = a[i] - b[i]

    if isinstance(h, str):
        if h != "worst":
            raise InvalidH(f"unknown weight sentinel {h!r}")
        if k == 0:
            return _record("ordered", 0.0, bound, {"i": i, "p": 0}, tol)
        prefix = np.abs(np.cumsum(delta))
        p = int(np.argmax(prefix))
        return _record("ordered", prefix[p], bound, {"i": i, "p": p + 1}, tol)

    h = np.asarray(h, dtype=float)
    if h.shape != (k,):
        raise InvalidH(f"h must have {k} entries")
    if np.any(h < 0) or np.any(h > 1) or np.any(np.diff(h) > 0):
        raise InvalidH("h must be non-increasing within [0, 1]")
    return _record("ordered", abs(float(h @ delta)), bound, {"i": i, "h": h.tolist()}, tol)


def tv_vs_audit(
    m: MatrixLike,
    m_prime: MatrixLike,
    lam: float,
    ell: float,
    bound_kind: str = "matrix",
    tol: float = AUDIT_TOL,
    k: int = 1,
) -> List[AuditRecord]:
    """
    Per-column subset deviation max_S |sum_{s in S} (M_sj - M'_sj)|.

    The maximising subset is either every advertiser whose share grew or
    every advertiser whose share shrank.  ``bound_kind`` picks the constant:
    ``"matrix"`` is 2 f(lambda), ``"kunit"`` is ``kunit_tv_bound`` for ``k`` units.
    """
    a, b = _pair(m, m_prime)
    if bound_kind == "matrix":
        bound = 2.0 * stability_bound(lam, ell)
    elif bound_kind == "kunit":
        bound = kunit_tv_bound(lam, ell, k)
    else:
        raise InvalidConfig(f"unknown bound kind {bound_kind!r}")

    records = []
    for j in range(a.shape[1]):
        delta = a[:, j] - b[:, j]
        gain = float(np.sum(delta[delta > 0]))
        loss = float(-np.sum(delta[delta < 0]))
        if gain >= loss:
            subset, measured, sign = np.nonzero(delta > 0)[0], gain, "+"
        else:
            subset, measured, sign = np.nonzero(delta < 0)[0], loss, "-"
        witness = {"column": j, "subset": subset.tolist(), "sign": sign}
        records.append(_record("tv", measured, bound, witness, tol))
    return records


def heterogeneous_pref_audit(
    m: MatrixLike,
    m_prime: MatrixLike,
    alpha: Sequence[float],
    alpha_prime: Sequence[float],
    lambda_values: float,
    ell: float,
    tol: float = AUDIT_TOL,
) -> AuditRecord:
    """
    Prefix dominance under the alpha/alpha' ordering.

    With advertisers ordered by alpha_t/alpha'_t non-increasing, every prefix
    of i advertisers and every j must satisfy
    sum_{t<=i} sum_{s<=j} M_ts >= sum_{t<=i} sum_{s<=j} M'_ts - i f(lambda).
    Ties in the ratio admit any order, so inside a tie group advertisers are
    taken in the order that hurts most (ascending by their own prefix
    difference).  ``measured`` is the largest deficit per prefix advertiser.
    """
    a, b = _pair(m, m_prime)
    alpha = np.asarray(alpha, dtype=float)
    alpha_prime = np.asarray(alpha_prime, dtype=float)
    n, k = a.shape
    if alpha.shape != (n,) or alpha_prime.shape != (n,):
        raise DimensionMismatch("alpha vectors must have one entry per advertiser")
    if np.any(alpha <= 0) or np.any(alpha_prime <= 0):
        raise NonPositiveAlpha("alpha entries must be positive")

    bound = stability_bound(lambda_values, ell)
    if k == 0 or n == 0:
        return _record("hetero", 0.0, bound, {}, tol)

    ratio = alpha / alpha_prime
    levels = np.unique(ratio)[::-1]
    group = np.searchsorted(-levels, -ratio)  # 0 for the largest ratio
    col_prefix = np.cumsum(a - b, axis=1)  # D[t, j] = sum_{s<=j} (M - M')

    best = -np.inf
    witness: Dict[str, Any] = {}
    sizes = np.arange(1, n + 1)
    for j in range(k):
        d = col_prefix[:, j]
        order = np.lexsort((np.arange(n), d, group))
        deficit = -np.cumsum(d[order]) / sizes
        i = int(np.argmax(deficit))
        if deficit[i] > best:
            best = float(deficit[i])
            witness = {"prefix": i + 1, "column": j, "order": order[: i + 1].tolist()}
    return _record("hetero", best, bound, witness, tol)


def replay_hetero(m: MatrixLike, m_prime: MatrixLike, witness: Dict[str, Any]) -> float:
    """Recompute a heterogeneous-preference measurement from its witness."""
    a, b = _pair(m, m_prime)
    j, order = witness["column"], witness["order"]
    diff = np.cumsum(b - a, axis=1)[order, j]
    return float(np.sum(diff) / len(order))


# -------------------------
# k-unit definitions
# -------------------------

def kunit_vs_audit(a: Sequence[float], a_prime: Sequence[float], lam: float, ell: float, tol: float = AUDIT_TOL) -> AuditRecord:
    """Per-advertiser |a_i - a'_i| against f(lambda)."""
    a, b = np.asarray(a, dtype=float), np.asarray(a_prime, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"lengths {a.shape} and {b.shape} differ")
    bound = stability_bound(lam, ell)
    if a.size == 0:
        return _record("kunit_vs", 0.0, bound, {}, tol)
    diff = np.abs(a - b)
    i = int(np.argmax(diff))
    return _record("kunit_vs", diff[i], bound, {"i": i}, tol)


def kunit_tv_audit(a: Sequence[float], a_prime: Sequence[float], lam: float, ell: float, tol: float = AUDIT_TOL) -> AuditRecord:
    """Subset deviation of two k-unit PA vectors; k is read off the total of ``a``."""
    a, b = np.asarray(a, dtype=float), np.asarray(a_prime, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"lengths {a.shape} and {b.shape} differ")
    k = int(round(float(a.sum())))
    (record,) = tv_vs_audit(a[:, None], b[:, None], lam, ell, bound_kind="kunit", tol=tol, k=k)
    return AuditRecord("kunit_tv", record.measured, record.bound, record.satisfied, record.witness)


# -------------------------
# Pair runner
# -------------------------

def audit_pair(
    inst_a: AuctionInstance,
    inst_b: AuctionInstance,
    config: MechanismConfig,
    definitions: Iterable[str] = ("weak", "ordered", "tv", "hetero"),
    tol: float = AUDIT_TOL,
    lam: Optional[float] = None,
) -> FairnessReport:
    """
    Run the mechanism on both instances and audit the requested definitions.

    Lambda is measured from the pair (effective values for the matrix and
    k-unit definitions, raw values for the heterogeneous one) unless ``lam``
    supplies a value to check against instead.
    """
    if (inst_a.n, inst_a.k) != (inst_b.n, inst_b.k):
        raise DimensionMismatch(f"instances have (n, k) = {(inst_a.n, inst_a.k)} and {(inst_b.n, inst_b.k)}")
    definitions = list(dict.fromkeys(definitions))
    unknown = [d for d in definitions if d not in DEFINITIONS]
    if unknown:
        raise InvalidConfig(f"unknown audit definitions {unknown}")

    lam_eff = lambda_of(effective_values(inst_a), effective_values(inst_b))
    lam_val = lambda_of(inst_a.values, inst_b.values)
    if lam is not None:
        lam_eff = lam_val = float(lam)
    m_a = generalized_allocate(inst_a, config)
    m_b = generalized_allocate(inst_b, config)
    ell = config.ell

    records: List[AuditRecord] = []
    for definition in definitions:
        if definition == "weak":
            records.append(weak_vs_audit(m_a, m_b, lam_eff, ell, tol))
        elif definition == "ordered":
            records.extend(ordered_vs_audit(m_a, m_b, i, "worst", lam_eff, ell, tol) for i in range(inst_a.n))
        elif definition == "tv":
            records.extend(tv_vs_audit(m_a, m_b, lam_eff, ell, "matrix", tol))
        elif definition == "hetero":
            records.append(heterogeneous_pref_audit(m_a, m_b, inst_a.alpha, inst_b.alpha, lam_val, ell, tol))
        elif definition == "kunit":
            top_a, top_b = m_a.cumulative[-1], m_b.cumulative[-1]
            records.append(kunit_vs_audit(top_a, top_b, lam_eff, ell, tol))
            if config.family is Family.PA:
                records.append(kunit_tv_audit(top_a, top_b, lam_eff, ell, tol))

    report = FairnessReport(lambda_effective=lam_eff, lambda_values=lam_val, records=records)
    failed = [r.metric for r in records if not r.satisfied]
    if failed:
        logger.warning("audit found %d violations (%s)", len(failed), ", ".join(sorted(set(failed))))
    return report
