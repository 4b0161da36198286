"""Group arithmetic on G = N x R+ for N = R^m and N = H^1.

Base coordinates are numpy arrays whose last axis has length ``spec.dim``
(m for the abelian base, 3 for the Heisenberg coordinates (q, p, tau)).
Array functions broadcast over leading axes; the point-level API wraps
them for single :class:`GroupPoint` values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GroupSpec",
    "GroupPoint",
    "VerticalField",
    "base_mul",
    "base_inv",
    "dilate",
    "norm_N",
    "dist_N",
    "flow_base",
    "group_mul",
    "group_inv",
    "identity",
    "exp_tZ",
    "flow_coordinates",
    "from_flow_coordinates",
    "psi_t",
    "arccosh1p",
    "dist_G",
    "dist_Z",
    "dist_G_array",
    "dist_Z_array",
    "to_flow_array",
    "from_flow_array",
    "sp2_matrix",
    "sp2_decode",
    "sp2_algebra",
]


@dataclass(frozen=True)
class GroupSpec:
    """Ambient group: ``base_kind`` is "abelian" (with ``m``) or "heisenberg"."""

    base_kind: str
    m: int = 1

    def __post_init__(self):
        if self.base_kind not in ("abelian", "heisenberg"):
            raise ValueError(f"unknown base kind {self.base_kind!r}")
        if self.base_kind == "abelian" and (int(self.m) != self.m or self.m < 1):
            raise ValueError("abelian base needs a positive integer m")
        if self.base_kind == "heisenberg":
            object.__setattr__(self, "m", 3)

    @classmethod
    def abelian(cls, m: int) -> "GroupSpec":
        return cls("abelian", int(m))

    @classmethod
    def heisenberg(cls) -> "GroupSpec":
        return cls("heisenberg", 3)

    @property
    def is_heisenberg(self) -> bool:
        return self.base_kind == "heisenberg"

    @property
    def dim(self) -> int:
        """Number of base coordinates."""
        return 3 if self.is_heisenberg else self.m

    @property
    def homogeneous_dimension(self) -> int:
        return 4 if self.is_heisenberg else self.m

    @property
    def beta_dim(self) -> int:
        """Number of first-layer directions."""
        return 2 if self.is_heisenberg else self.m

    def describe(self) -> str:
        return "heisenberg" if self.is_heisenberg else f"abelian:m={self.m}"

    @classmethod
    def parse(cls, text: str) -> "GroupSpec":
        """Parse "heisenberg", "abelian:m=2" or "abelian:2"."""
        text = text.strip().lower()
        if text in ("heisenberg", "h1"):
            return cls.heisenberg()
        if text.startswith("abelian"):
            rest = text[len("abelian"):].lstrip(":")
            if rest.startswith("m="):
                rest = rest[2:]
            return cls.abelian(int(rest) if rest else 1)
        raise ValueError(f"cannot parse group {text!r}")


def _as_base(n, spec: GroupSpec) -> np.ndarray:
    arr = np.asarray(n, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] != spec.dim:
        raise ValueError(
            f"base coordinates of length {spec.dim} expected for {spec.describe()}, "
            f"got shape {arr.shape}"
        )
    return arr


@dataclass(frozen=True)
class GroupPoint:
    """An element (n, a) of G with a > 0."""

    n: tuple
    a: float

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(float(v) for v in np.ravel(self.n)))
        a = float(self.a)
        if not a > 0 or not math.isfinite(a):
            raise ValueError(f"vertical coordinate must be positive, got {a}")
        object.__setattr__(self, "a", a)

    @property
    def n_array(self) -> np.ndarray:
        return np.array(self.n, dtype=np.float64)

    def check(self, spec: GroupSpec) -> "GroupPoint":
        if len(self.n) != spec.dim:
            raise ValueError(
                f"point has {len(self.n)} base coordinates, {spec.describe()} needs {spec.dim}"
            )
        return self


def identity(spec: GroupSpec) -> GroupPoint:
    return GroupPoint(np.zeros(spec.dim), 1.0)


@dataclass(frozen=True)
class VerticalField:
    """Z = X_0 + sum beta_i X_i with first-layer coefficients ``beta``.

    For the Heisenberg base, beta[0] multiplies X_alpha (the p direction)
    and beta[1] multiplies X_{alpha+beta} (the q direction).
    """

    spec: GroupSpec
    beta: tuple = field(default=())

    def __post_init__(self):
        b = tuple(float(v) for v in np.ravel(self.beta)) if len(np.ravel(self.beta)) else ()
        if not b:
            b = (0.0,) * self.spec.beta_dim
        if len(b) != self.spec.beta_dim:
            raise ValueError(
                f"beta needs {self.spec.beta_dim} coefficients for {self.spec.describe()}"
            )
        object.__setattr__(self, "beta", b)

    @property
    def norm(self) -> float:
        return math.sqrt(1.0 + sum(v * v for v in self.beta))

    @property
    def direction(self) -> np.ndarray:
        """Base vector v with n(t) = (e^t - 1) v."""
        b = np.array(self.beta)
        if self.spec.is_heisenberg:
            return np.array([b[1], b[0], 0.0])
        return b

    @property
    def is_vertical(self) -> bool:
        return all(v == 0.0 for v in self.beta)


# base group -------------------------------------------------------------

def base_mul(spec: GroupSpec, n, m) -> np.ndarray:
    n = _as_base(n, spec)
    m = _as_base(m, spec)
    if not spec.is_heisenberg:
        return n + m
    q, p, t = n[..., 0], n[..., 1], n[..., 2]
    q2, p2, t2 = m[..., 0], m[..., 1], m[..., 2]
    return np.stack([q + q2, p + p2, t + t2 - 0.5 * (q * p2 - p * q2)], axis=-1)


def base_inv(spec: GroupSpec, n) -> np.ndarray:
    return -_as_base(n, spec)


def dilate(spec: GroupSpec, a, n) -> np.ndarray:
    """D_a(n): scale layer j by a**j."""
    n = _as_base(n, spec)
    a = np.asarray(a, dtype=np.float64)
    if np.any(a <= 0):
        raise ValueError("dilation factor must be positive")
    a = a[..., None]
    out = a * n
    if spec.is_heisenberg:
        out[..., 2] = out[..., 2] * a[..., 0]
    return out


def norm_N(spec: GroupSpec, n) -> np.ndarray:
    """Euclidean norm (abelian) or Koranyi norm (Heisenberg)."""
    n = _as_base(n, spec)
    if not spec.is_heisenberg:
        return np.sqrt(np.sum(n * n, axis=-1))
    s = n[..., 0] ** 2 + n[..., 1] ** 2
    return (s * s / 16.0 + n[..., 2] ** 2) ** 0.25


def dist_N(spec: GroupSpec, n, m) -> np.ndarray:
    """Left-invariant distance |n^{-1} m|."""
    return norm_N(spec, base_mul(spec, base_inv(spec, n), m))


def flow_base(Z: VerticalField, t) -> np.ndarray:
    """n(t), the base component of exp(tZ)."""
    t = np.asarray(t, dtype=np.float64)
    return np.expm1(t)[..., None] * Z.direction


# points -----------------------------------------------------------------

def group_mul(x: GroupPoint, y: GroupPoint, spec: GroupSpec) -> GroupPoint:
    """(n, a)(n', a') = (n D_a(n'), a a')."""
    x.check(spec)
    y.check(spec)
    n = base_mul(spec, x.n_array, dilate(spec, x.a, y.n_array))
    return GroupPoint(n, x.a * y.a)


def group_inv(x: GroupPoint, spec: GroupSpec) -> GroupPoint:
    """(n, a)^{-1} = (D_{1/a}(n^{-1}), 1/a)."""
    x.check(spec)
    return GroupPoint(dilate(spec, 1.0 / x.a, base_inv(spec, x.n_array)), 1.0 / x.a)


def exp_tZ(Z: VerticalField, t: float, spec: GroupSpec | None = None) -> GroupPoint:
    """exp(tZ) = (n(t), e^t)."""
    return GroupPoint(flow_base(Z, t), math.exp(t))


def to_flow_array(Z: VerticalField, n, a):
    """Array form of :func:`flow_coordinates`: returns (n n(log a)^{-1}, log a)."""
    spec = Z.spec
    t = np.log(np.asarray(a, dtype=np.float64))
    return base_mul(spec, n, base_inv(spec, flow_base(Z, t))), t


def from_flow_array(Z: VerticalField, n, t):
    """Inverse of :func:`to_flow_array`: (n,1) exp(tZ) = (n n(t), e^t)."""
    t = np.asarray(t, dtype=np.float64)
    return base_mul(Z.spec, n, flow_base(Z, t)), np.exp(t)


def flow_coordinates(x: GroupPoint, Z: VerticalField):
    """The unique (n, t) with (n, 1) exp(tZ) = x."""
    x.check(Z.spec)
    n, t = to_flow_array(Z, x.n_array, x.a)
    return n, float(t)


def from_flow_coordinates(n, t: float, Z: VerticalField) -> GroupPoint:
    m, a = from_flow_array(Z, n, t)
    return GroupPoint(m, float(a))


def psi_t(t, n, Z: VerticalField) -> np.ndarray:
    """psi_t(n) = n(t) D_{e^t}(n) n(t)^{-1}."""
    spec = Z.spec
    nt = flow_base(Z, t)
    inner = base_mul(spec, nt, dilate(spec, np.exp(t), n))
    return base_mul(spec, inner, base_inv(spec, nt))


# distances --------------------------------------------------------------

def arccosh1p(w):
    """arccosh(1 + w) for w >= 0 without cancellation near w = 0."""
    w = np.maximum(np.asarray(w, dtype=np.float64), 0.0)
    return np.log1p(w + np.sqrt(w * (w + 2.0)))


def _cosh_excess(spec, n, a, m, b):
    # cosh d_G - 1 = 2 sinh^2(log(a/b)/2) + d_N^2 / (2ab)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    half = 0.5 * (np.log(a) - np.log(b))
    dn = dist_N(spec, n, m)
    return 2.0 * np.sinh(half) ** 2 + dn * dn / (2.0 * a * b)


def dist_G_array(spec: GroupSpec, n, a, m, b) -> np.ndarray:
    """d_G((n, a), (m, b)) from the closed cosh formula."""
    return arccosh1p(_cosh_excess(spec, n, a, m, b))


def dist_Z_array(Z: VerticalField, n, a, m, b) -> np.ndarray:
    """d_Z for points given in group coordinates."""
    n1, _ = to_flow_array(Z, n, a)
    m1, _ = to_flow_array(Z, m, b)
    return dist_G_array(Z.spec, n1, a, m1, b)


def dist_G(x: GroupPoint, y: GroupPoint, spec: GroupSpec) -> float:
    x.check(spec)
    y.check(spec)
    return float(dist_G_array(spec, x.n_array, x.a, y.n_array, y.a))


def dist_Z(x: GroupPoint, y: GroupPoint, Z: VerticalField) -> float:
    x.check(Z.spec)
    y.check(Z.spec)
    return float(dist_Z_array(Z, x.n_array, x.a, y.n_array, y.a))


# Sp(2, R) realisation of the extended Heisenberg group --------------------

def sp2_matrix(q: float, p: float, tau: float, a: float) -> np.ndarray:
    """g(q, p, tau; a) = n(q, p, tau) A_a^{-1} as a 4x4 matrix."""
    return np.array(
        [
            [1.0 / a, 0.0, 0.0, 0.0],
            [p / a, 1.0, 0.0, 0.0],
            [tau / a, -q / 2.0, a, -p],
            [-q / (2.0 * a), 0.0, 0.0, 1.0],
        ]
    )


def sp2_decode(g: np.ndarray):
    """Recover (q, p, tau, a) from a matrix of the form :func:`sp2_matrix`."""
    a = 1.0 / g[0, 0]
    return -2.0 * g[3, 0] * a, g[1, 0] * a, g[2, 0] * a, a


def sp2_algebra():
    """Matrices H_{1,0}, X_alpha, X_{alpha+beta}, X_{2alpha+beta}."""
    H = np.diag([-1.0, 0.0, 1.0, 0.0])
    Xa = np.zeros((4, 4))
    Xa[1, 0] = 1.0
    Xa[2, 3] = -1.0
    Xab = np.zeros((4, 4))
    Xab[2, 1] = -0.5
    Xab[3, 0] = -0.5
    X2ab = np.zeros((4, 4))
    X2ab[2, 0] = 1.0
    return H, Xa, Xab, X2ab
