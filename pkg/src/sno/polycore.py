"""Deterministic polynomial-spectral kernel.

A sampled signal is decomposed by least-squares polynomial regression on a
Vandermonde matrix built over a grid rescaled to [-1, 1], moved into the
factorial-scaled coefficient space (entry n becomes n! * c_n), and mapped
back by the inverse scaling plus Horner evaluation.  All operations here are
pure functions of their inputs; the only shared state is the fit-operator
cache, which is lock-guarded.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGrid,
    DegreeTooHigh,
    ExtrapolationOutOfRange,
    IllConditioned,
    ShapeMismatch,
    Underdetermined,
)

# 20! = 2432902008176640000 is the largest factorial exactly representable
# as a float64 integer; beyond that the scaling loses integer exactness.
MAX_DEGREE = 20

# Horner evaluation tolerates 5% extrapolation beyond [-1, 1] so refined
# grids that share a span with the training grid stay evaluable.
EXTRAPOLATION_MARGIN = 1.05

COND_LIMIT = 1e12

_FACTORIALS = np.ones(MAX_DEGREE + 1)
for _k in range(1, MAX_DEGREE + 1):
    _FACTORIALS[_k] = _FACTORIALS[_k - 1] * _k


def factorials(degree: int) -> np.ndarray:
    """Vector [0!, 1!, ..., degree!] in float64 (exact for degree <= 20)."""
    if degree > MAX_DEGREE:
        raise DegreeTooHigh(f"degree {degree} exceeds cap {MAX_DEGREE}")
    return _FACTORIALS[: degree + 1].copy()


@dataclass(frozen=True)
class Grid:
    """Ordered sample locations in task units."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.shape[0] < 2:
            raise ValueError("grid needs at least 2 points in a 1-d array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def content_hash(self, degree: int) -> str:
        h = hashlib.sha256(self.points.tobytes())
        h.update(str(int(degree)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class DomainMap:
    """Affine map sending a raw interval [lo, hi] onto [-1, 1].

    scale/shift are the affine coefficients (z = scale*t + shift); apply()
    uses the anchored form 2*(t-lo)/(hi-lo) - 1 so the endpoints land on
    -1 and +1 exactly in floating point.
    """

    scale: float
    shift: float
    lo: float
    hi: float

    def apply(self, t):
        return 2.0 * (np.asarray(t, dtype=np.float64) - self.lo) / (self.hi - self.lo) - 1.0

    def invert(self, z):
        return self.lo + (np.asarray(z, dtype=np.float64) + 1.0) * (self.hi - self.lo) / 2.0


@dataclass(frozen=True)
class PolyCoeffs:
    """Monomial coefficients a_0..a_d on the normalized [-1, 1] domain."""

    degree: int
    coeffs: np.ndarray
    domain_map: DomainMap

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (self.degree + 1,):
            raise ShapeMismatch(f"expected {self.degree + 1} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True)
class SumuduSpectrum:
    """Factorial-scaled coefficients: entry n holds n! * c_n."""

    degree: int
    scaled_coeffs: np.ndarray
    domain_map: DomainMap

    def __post_init__(self):
        s = np.asarray(self.scaled_coeffs, dtype=np.float64)
        if s.shape != (self.degree + 1,):
            raise ShapeMismatch(f"expected {self.degree + 1} entries, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("spectrum entries must be finite")
        object.__setattr__(self, "scaled_coeffs", s)


@dataclass(frozen=True)
class SampledSignal:
    """A function observed on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n,):
            raise ShapeMismatch(f"{v.shape[0] if v.ndim == 1 else v.shape} values on a {self.grid.n}-point grid")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FitOperator:
    """Precomputed least-squares solve for one (grid, degree) pair.

    pinv is the Moore-Penrose pseudoinverse of the Vandermonde matrix;
    applying it to sampled values yields normalized-domain coefficients.
    Resolution-dependent but batch- and epoch-invariant, so it is built
    once per (grid, degree) and cached.
    """

    grid_id: str
    pinv: np.ndarray          # (d+1, n)
    vandermonde: np.ndarray   # (n, d+1)
    degree: int
    domain_map: DomainMap

    @property
    def n(self) -> int:
        return self.vandermonde.shape[0]


def rescale_domain(grid: Grid) -> DomainMap:
    """Affine map sending grid.min -> -1 and grid.max -> +1."""
    lo = float(grid.points[0])
    hi = float(grid.points[-1])
    span = hi - lo
    if span <= 0 or not np.isfinite(span):
        raise DegenerateGrid(f"grid span [{lo}, {hi}] admits no rescaling")
    return DomainMap(scale=2.0 / span, shift=-(hi + lo) / span, lo=lo, hi=hi)


def build_vandermonde(grid: Grid, degree: int, domain_map: DomainMap) -> np.ndarray:
    """n x (degree+1) matrix of monomial powers of the normalized locations."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if degree > MAX_DEGREE:
        raise DegreeTooHigh(f"degree {degree} exceeds cap {MAX_DEGREE}")
    if grid.n < degree + 1:
        raise Underdetermined(f"{grid.n} points cannot determine degree {degree}")
    z = domain_map.apply(grid.points)
    return np.power(z[:, None], np.arange(degree + 1)[None, :])


# rows per tall-skinny QR block; one block plus workspace stays cache-resident
# so the factorization streams the matrix once regardless of n
_QR_BLOCK = 4096


def compute_fit_operator(vandermonde: np.ndarray, grid_id: str = "",
                         domain_map: DomainMap | None = None) -> FitOperator:
    """Pseudoinverse of a Vandermonde matrix by rank-revealing factorization.

    Blockwise tall-skinny QR (cost linear in n at fixed degree), then an SVD
    of the small combined triangular factor for the rank-revealing part.
    Never forms (V^T V)^-1 explicitly; a condition estimate above 1e12 is
    rejected rather than silently regularized.
    """
    V = np.asarray(vandermonde, dtype=np.float64)
    n, cols = V.shape
    if n < cols:
        raise Underdetermined(f"{n} rows for {cols} coefficients")
    if n <= 2 * _QR_BLOCK:
        Q, R = np.linalg.qr(V, mode="reduced")
        u, s, vt = np.linalg.svd(R)
        _check_condition(s)
        pinv = ((vt.T / s) @ u.T) @ Q.T
    else:
        nb = (n + _QR_BLOCK - 1) // _QR_BLOCK
        Qs, Rs = [], []
        for i in range(nb):
            Qi, Ri = np.linalg.qr(V[i * _QR_BLOCK : (i + 1) * _QR_BLOCK], mode="reduced")
            Qs.append(Qi)
            Rs.append(Ri)
        Qc, R = np.linalg.qr(np.vstack(Rs), mode="reduced")
        u, s, vt = np.linalg.svd(R)
        _check_condition(s)
        r_pinv = (vt.T / s) @ u.T
        pinv = np.empty((cols, n))
        for i in range(nb):
            combine = Qc[i * cols : (i + 1) * cols]
            pinv[:, i * _QR_BLOCK : (i + 1) * _QR_BLOCK] = (r_pinv @ combine.T) @ Qs[i].T
    if domain_map is None:
        domain_map = DomainMap(scale=1.0, shift=0.0, lo=-1.0, hi=1.0)
    return FitOperator(grid_id=grid_id, pinv=pinv, vandermonde=V,
                       degree=cols - 1, domain_map=domain_map)


def _check_condition(s: np.ndarray):
    if s[-1] <= 0 or s[0] / s[-1] > COND_LIMIT:
        cond = np.inf if s[-1] <= 0 else s[0] / s[-1]
        raise IllConditioned(f"condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")


_FITOP_CACHE: dict[str, FitOperator] = {}
_FITOP_LOCK = threading.Lock()


def fit_operator(grid: Grid, degree: int) -> FitOperator:
    """Cached rescale + Vandermonde + pseudoinverse for (grid, degree)."""
    key = grid.content_hash(degree)
    with _FITOP_LOCK:
        op = _FITOP_CACHE.get(key)
        if op is None:
            dmap = rescale_domain(grid)
            V = build_vandermonde(grid, degree, dmap)
            op = compute_fit_operator(V, grid_id=key, domain_map=dmap)
            _FITOP_CACHE[key] = op
    return op


def clear_fit_cache():
    with _FITOP_LOCK:
        _FITOP_CACHE.clear()


def fit_poly(signal, fitop: FitOperator) -> PolyCoeffs:
    """Least-squares polynomial coefficients of a sampled signal.

    Accepts a SampledSignal or a bare 1-d value array of matching length.
    """
    values = signal.values if isinstance(signal, SampledSignal) else np.asarray(signal, dtype=np.float64)
    if values.shape != (fitop.n,):
        raise ShapeMismatch(f"signal of length {values.shape} against a {fitop.n}-point operator")
    return PolyCoeffs(degree=fitop.degree, coeffs=fitop.pinv @ values,
                      domain_map=fitop.domain_map)


def sumudu_forward(p: PolyCoeffs) -> SumuduSpectrum:
    """Scale coefficient n by n! (exact iterative factorials)."""
    if p.degree > MAX_DEGREE:
        raise DegreeTooHigh(f"degree {p.degree} exceeds cap {MAX_DEGREE}")
    return SumuduSpectrum(degree=p.degree,
                          scaled_coeffs=p.coeffs * _FACTORIALS[: p.degree + 1],
                          domain_map=p.domain_map)


def sumudu_inverse(s: SumuduSpectrum) -> PolyCoeffs:
    """Divide entry n by n!; exact inverse of sumudu_forward up to rounding."""
    return PolyCoeffs(degree=s.degree,
                      coeffs=s.scaled_coeffs / _FACTORIALS[: s.degree + 1],
                      domain_map=s.domain_map)


def horner_eval(p: PolyCoeffs, grid: Grid) -> SampledSignal:
    """Evaluate the polynomial on a grid by Horner's scheme.

    Grid points must map into [-1.05, 1.05] under the polynomial's domain
    map; anything further out is extrapolation we refuse to do.
    """
    z = p.domain_map.apply(grid.points)
    zmax = np.max(np.abs(z))
    if zmax > EXTRAPOLATION_MARGIN:
        raise ExtrapolationOutOfRange(
            f"normalized point at {zmax:.4f} exceeds margin {EXTRAPOLATION_MARGIN}")
    acc = np.full_like(z, p.coeffs[p.degree])
    for k in range(p.degree - 1, -1, -1):
        acc = acc * z + p.coeffs[k]
    return SampledSignal(grid=grid, values=acc)
