"""
Truthful per-impression payments.

Holding the other bids fixed, advertiser i's cumulative allocation a^(j)_i is
a piecewise rational function of its own bid v.  With u = (alpha_i v)^ell,
each piece is

    IPA:  a = 1 - y / (1 + x u)      (i.e. 1 - g y / (g + x), g = u^-1)
    PA:   a = y u / (u + x)          (i.e. g y / (g + x),     g = u)

where x and y come from the linear segment of the other advertisers' water
level that the bid lands on.  The click curve x_i(v) is a fixed combination of
these, and the payment is v x_i(v) - integral_0^v x_i(z) dz.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad

from .core import AuctionInstance, Family, MechanismConfig, effective_values, with_values
from .errors import AdvertiserOutOfRange, IntegrationFailed, InvalidConfig, NegativeValueQuery, SlotOutOfRange
from .kunit import cap_level
from .position import click_probabilities, generalized_allocate

logger = logging.getLogger(__name__)

QUAD_EPSREL = 1e-10
QUAD_CHUNK = 1.0
CONSISTENCY_TOL = 1e-7
SAMPLED_POINTS = 4001


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class Rational:
    x: float
    y: float


PieceForm = Union[Zero, Rational]


@dataclass(frozen=True)
class CurvePiece:
    v_lo: float
    v_hi: float
    form: PieceForm


@dataclass(frozen=True)
class CurveContext:
    i: int
    j: int
    alpha: float
    ell: float
    family: Family


def _form_values(form: PieceForm, v, alpha: float, ell: float, family: Family):
    v = np.asarray(v, dtype=float)
    if isinstance(form, Zero):
        return np.zeros_like(v)
    u = np.power(alpha * v, ell)
    if family is Family.IPA:
        return 1.0 - form.y / (1.0 + form.x * u)
    if form.x == 0:
        return np.full_like(v, form.y)
    return form.y * u / (u + form.x)


def _locate(v_los: NDArray[np.float64], v) -> NDArray[np.int64]:
    return np.clip(np.searchsorted(v_los, v, side="right") - 1, 0, len(v_los) - 1)


@dataclass(frozen=True)
class AllocationCurve:
    pieces: Tuple[CurvePiece, ...]
    context: CurveContext

    @property
    def rational_pieces(self) -> int:
        return sum(1 for p in self.pieces if isinstance(p.form, Rational))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        flat = np.atleast_1d(v)
        out = np.zeros_like(flat)
        idx = _locate(np.array([p.v_lo for p in self.pieces]), flat)
        ctx = self.context
        for n_piece, piece in enumerate(self.pieces):
            mask = (idx == n_piece) & (flat > 0)
            if np.any(mask):
                out[mask] = _form_values(piece.form, flat[mask], ctx.alpha, ctx.ell, ctx.family)
        out = np.clip(out, 0.0, 1.0)
        return out.reshape(v.shape) if v.ndim else float(out[0])


@dataclass(frozen=True)
class ClickPiece:
    v_lo: float
    v_hi: float
    # (weight, form) pairs; the piece is sum of weight * form
    terms: Tuple[Tuple[float, Rational], ...]


@dataclass(frozen=True)
class ClickAllocationCurve:
    pieces: Tuple[ClickPiece, ...]
    i: int
    alpha: float
    ell: float
    family: Family

    @property
    def rational_pieces(self) -> int:
        return sum(1 for p in self.pieces if p.terms)

    def _piece_values(self, piece: ClickPiece, v):
        total = np.zeros_like(np.asarray(v, dtype=float))
        for weight, form in piece.terms:
            total = total + weight * _form_values(form, v, self.alpha, self.ell, self.family)
        return total

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        flat = np.atleast_1d(v)
        out = np.zeros_like(flat)
        idx = _locate(np.array([p.v_lo for p in self.pieces]), flat)
        for n_piece, piece in enumerate(self.pieces):
            mask = (idx == n_piece) & (flat > 0)
            if np.any(mask) and piece.terms:
                out[mask] = self._piece_values(piece, flat[mask])
        out = np.maximum(out, 0.0)
        return out.reshape(v.shape) if v.ndim else float(out[0])


class PaymentQuote(NamedTuple):
    payment: float
    allocation: float


@dataclass(frozen=True)
class PaymentRecord:
    advertiser: int
    allocation: float
    payment: float
    pieces: int
    method: str
    per_click_price: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "advertiser": self.advertiser,
            "allocation": self.allocation,
            "payment": self.payment,
            "pieces": self.pieces,
            "method": self.method,
            "per_click_price": self.per_click_price,
        }


# -------------------------
# Curve construction
# -------------------------

def _full_form(family: Family) -> Rational:
    # a = 1 for every positive bid
    return Rational(x=0.0, y=0.0) if family is Family.IPA else Rational(x=0.0, y=1.0)


def allocation_curve(
    inst: AuctionInstance,
    i: int,
    j: int,
    ell: float,
    family: Union[Family, str] = Family.IPA,
) -> AllocationCurve:
    """
    Piecewise rational curve v -> a^(j)_i(v) with the other bids held fixed.

    The others' total R(t) = sum_{i' != i} min(1, t g(vhat_i')) is piecewise
    linear in the level t with breakpoints at 1/g(vhat_i').  On a segment
    with R = c + x t the mechanism equation gives y = target - c, where the
    target is n - j for IPA and j for PA.  Each segment's t-range maps to a
    bid range through v = g^-1(y/t - x) / alpha_i.

    Args:
        inst: validated instance.
        i: advertiser index.
        j: cumulative slot count, 1 <= j <= k.
        ell: smoothing exponent.
        family: IPA or PA.

    Returns:
        AllocationCurve: pieces covering [0, inf), at most n of them rational.
    """
    config = MechanismConfig(family, ell)
    family = config.family
    n, k = inst.n, inst.k
    if not 0 <= i < n:
        raise AdvertiserOutOfRange(f"advertiser {i} outside [0, {n})")
    if not 1 <= j <= k:
        raise SlotOutOfRange(f"slot count {j} outside [1, {k}]")

    alpha = float(inst.alpha[i])
    context = CurveContext(i=i, j=j, alpha=alpha, ell=config.ell, family=family)
    others = np.delete(effective_values(inst), i)
    positive = others[others > 0]
    z = others.shape[0] - positive.shape[0]

    if family is Family.IPA:
        target = n - j
        full = z >= target
    else:
        target = j
        full = positive.shape[0] <= j - 1
        z = 0  # zero-valued others contribute nothing under PA
    if full:
        return AllocationCurve(pieces=(CurvePiece(0.0, np.inf, _full_form(family)),), context=context)

    w = config.g(positive)
    breaks = 1.0 / w

    def others_total(t: float) -> float:
        return z + float(np.sum(np.minimum(1.0, t * w)))

    def level(r: float) -> float:
        return 0.0 if r <= z else cap_level(w, r - z)

    lo, hi = level(target - 1), level(target)
    interior = np.unique(breaks[(breaks > lo) & (breaks < hi)])
    ts = np.concatenate([[lo], interior, [hi]])

    # own g at each level point; lo and hi are pinned exactly
    gs = np.empty_like(ts)
    gs[0] = np.inf if lo == 0 else 1.0 / lo
    gs[-1] = 0.0
    for m in range(1, len(ts) - 1):
        gs[m] = (target - others_total(ts[m])) / ts[m]
    vs = np.asarray(config.g_inverse(gs), dtype=float) / alpha

    pieces: List[CurvePiece] = []
    for m in range(len(ts) - 1):
        mid = 0.5 * (ts[m] + ts[m + 1])
        unsat = breaks > mid
        c = z + int(np.count_nonzero(~unsat))
        form = Rational(x=float(np.sum(w[unsat])), y=float(target - c))
        v_a, v_b = sorted((float(vs[m]), float(vs[m + 1])))
        if v_b > v_a:
            pieces.append(CurvePiece(v_a, v_b, form))

    if family is Family.IPA:
        v_thr = float(vs[0])
        if v_thr > 0:
            pieces.append(CurvePiece(0.0, v_thr, Zero()))
    elif lo > 0:
        pieces.append(CurvePiece(float(vs[0]), np.inf, _full_form(family)))

    pieces.sort(key=lambda p: p.v_lo)
    logger.debug("allocation_curve(i=%d, j=%d): %d pieces", i, j, len(pieces))
    return AllocationCurve(pieces=tuple(pieces), context=context)


def click_allocation_curve(
    inst: AuctionInstance,
    i: int,
    ell: float,
    family: Union[Family, str] = Family.IPA,
) -> ClickAllocationCurve:
    """x_i(v) = alpha_i * sum_j (beta_j - beta_{j+1}) a^(j)_i(v), beta_{k+1} = 0."""
    config = MechanismConfig(family, ell)
    if not 0 <= i < inst.n:
        raise AdvertiserOutOfRange(f"advertiser {i} outside [0, {inst.n})")
    alpha = float(inst.alpha[i])

    beta = np.append(inst.beta, 0.0)
    weights = alpha * (beta[:-1] - beta[1:])
    curves = [
        (float(weights[j - 1]), allocation_curve(inst, i, j, config.ell, config.family))
        for j in range(1, inst.k + 1)
        if weights[j - 1] > 0
    ]

    cuts = {0.0, np.inf}
    for _, curve in curves:
        for piece in curve.pieces:
            cuts.update((piece.v_lo, piece.v_hi))
    cuts = sorted(cuts)

    pieces = []
    for v_lo, v_hi in zip(cuts[:-1], cuts[1:]):
        inside = v_lo + 1.0 if np.isinf(v_hi) else 0.5 * (v_lo + v_hi)
        terms = []
        for weight, curve in curves:
            piece = curve.pieces[int(_locate(np.array([p.v_lo for p in curve.pieces]), inside))]
            if isinstance(piece.form, Rational):
                terms.append((weight, piece.form))
        pieces.append(ClickPiece(float(v_lo), float(v_hi), tuple(terms)))

    return ClickAllocationCurve(
        pieces=tuple(pieces), i=i, alpha=alpha, ell=config.ell, family=config.family
    )


# -------------------------
# Integration
# -------------------------

def _closed_form_integral(curve: ClickAllocationCurve, piece: ClickPiece, z1: float, z2: float) -> float:
    # ell = 1 antiderivatives of each rational term
    a = curve.alpha
    total = 0.0
    dz = z2 - z1
    for weight, form in piece.terms:
        x, y = form.x, form.y
        if curve.family is Family.IPA:
            if x == 0:
                part = (1.0 - y) * dz
            else:
                part = dz - (y / (x * a)) * (np.log1p(x * a * z2) - np.log1p(x * a * z1))
        else:
            if x == 0:
                part = y * dz
            else:
                part = y * (dz - (x / a) * np.log((a * z2 + x) / (a * z1 + x)))
        total += weight * part
    return float(total)


def _tail_integral(w1: float, w2: float, ell: float) -> float:
    """
    integral_{w1}^{w2} dw / (1 + w^ell), the shape shared by every piece.

    [0, 1] is integrated in w.  Above 1 the integrand is integrated in
    s = ln w over chunks of width QUAD_CHUNK, where it is smooth whatever
    the length of the piece.
    """
    if w2 <= w1:
        return 0.0
    total = 0.0
    if w1 < 1.0:
        total += _quad_checked(lambda w: 1.0 / (1.0 + w ** ell), w1, min(w2, 1.0))
    if w2 > 1.0:
        s_lo, s_hi = np.log(max(w1, 1.0)), np.log(w2)
        edges = np.linspace(s_lo, s_hi, max(1, int(np.ceil((s_hi - s_lo) / QUAD_CHUNK))) + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            total += _quad_checked(lambda s: np.exp(s - np.logaddexp(0.0, ell * s)), a, b)
    return total


def _quad_checked(func, a: float, b: float) -> float:
    result = quad(func, a, b, epsabs=0.0, epsrel=QUAD_EPSREL * 1e-2, limit=200, full_output=1)
    value, abserr = float(result[0]), float(result[1])
    if abserr > QUAD_EPSREL * abs(value) + 1e-300:
        raise IntegrationFailed(f"quadrature on [{a}, {b}] reached error {abserr:.3g} for value {value:.17g}")
    return value


def _quadrature_integral(curve: ClickAllocationCurve, piece: ClickPiece, z1: float, z2: float) -> float:
    # each term is a constant minus a rescaled 1 / (1 + w^ell)
    a, ell = curve.alpha, curve.ell
    total = 0.0
    dz = z2 - z1
    for weight, form in piece.terms:
        x, y = form.x, form.y
        if curve.family is Family.IPA:
            if x == 0:
                part = (1.0 - y) * dz
            else:
                scale = a * x ** (1.0 / ell)
                part = dz - (y / scale) * _tail_integral(scale * z1, scale * z2, ell)
        else:
            if x == 0:
                part = y * dz
            else:
                scale = a / x ** (1.0 / ell)
                part = y * (dz - _tail_integral(scale * z1, scale * z2, ell) / scale)
        total += weight * part
    return float(total)


def _default_method(ell: float) -> Method:
    return Method.CLOSED_FORM if ell == 1.0 else Method.QUADRATURE


def curve_integral(curve: ClickAllocationCurve, v: float, method: Optional[str] = None) -> float:
    """integral_0^v x_i(z) dz, piece by piece."""
    method = method or _default_method(curve.ell)
    if method == Method.CLOSED_FORM and curve.ell != 1.0:
        raise InvalidConfig("the closed-form integral needs ell = 1")
    integrate = _closed_form_integral if method == Method.CLOSED_FORM else _quadrature_integral
    total = 0.0
    for piece in curve.pieces:
        if piece.v_lo >= v:
            break
        if piece.terms:
            total += integrate(curve, piece, piece.v_lo, min(piece.v_hi, v))
    return total


def myerson_payment(curve: ClickAllocationCurve, v_i: float, method: Optional[str] = None) -> PaymentQuote:
    """
    Myerson payment p = v x(v) - integral_0^v x(z) dz.

    Uses the exact antiderivative when ell = 1 and adaptive quadrature
    (relative tolerance 1e-10, checked against the reported error) otherwise.  The payment is clamped to
    [0, v x(v)].
    """
    if v_i < 0:
        raise NegativeValueQuery(f"bid {v_i} is negative")
    if v_i == 0:
        return PaymentQuote(0.0, 0.0)
    allocation = float(curve(v_i))
    payment = v_i * allocation - curve_integral(curve, v_i, method)
    return PaymentQuote(float(min(max(payment, 0.0), v_i * allocation)), allocation)


def per_click_price(payment: float, allocation: float) -> Optional[float]:
    return payment / allocation if allocation > 1e-12 else None


# -------------------------
# Reports
# -------------------------

def _sampled_payment(inst: AuctionInstance, i: int, config: MechanismConfig, points: int = SAMPLED_POINTS) -> PaymentQuote:
    v = float(inst.values[i])
    grid = np.linspace(0.0, v, points)
    xs = np.empty_like(grid)
    for n_point, z in enumerate(grid):
        bids = np.array(inst.values, dtype=float)
        bids[i] = z
        shifted = with_values(inst, bids)
        xs[n_point] = click_probabilities(shifted, generalized_allocate(shifted, config))[i]
    xs[0] = 0.0
    allocation = float(xs[-1])
    payment = v * allocation - float(np.trapezoid(xs, grid))
    return PaymentQuote(float(min(max(payment, 0.0), v * allocation)), allocation)


def payment_report(
    inst: AuctionInstance,
    config: MechanismConfig,
    advertiser: Optional[int] = None,
) -> List[PaymentRecord]:
    """Allocation, payment and method for one advertiser or all of them."""
    if advertiser is not None and not 0 <= advertiser < inst.n:
        raise AdvertiserOutOfRange(f"advertiser {advertiser} outside [0, {inst.n})")
    targets = range(inst.n) if advertiser is None else [advertiser]
    expected = click_probabilities(inst, generalized_allocate(inst, config))

    records = []
    for i in targets:
        v = float(inst.values[i])
        curve = click_allocation_curve(inst, i, config.ell, config.family)
        method = _default_method(config.ell)
        quote = myerson_payment(curve, v)
        if v > 0 and abs(quote.allocation - expected[i]) > CONSISTENCY_TOL:
            logger.warning(
                "advertiser %d: curve gives %.12g but mechanism gives %.12g; falling back to sampling",
                i, quote.allocation, expected[i],
            )
            quote = _sampled_payment(inst, i, config)
            method = Method.SAMPLED
        records.append(
            PaymentRecord(
                advertiser=i,
                allocation=quote.allocation,
                payment=quote.payment,
                pieces=curve.rational_pieces,
                method=Method(method).value,
                per_click_price=per_click_price(quote.payment, quote.allocation),
            )
        )
    return records
