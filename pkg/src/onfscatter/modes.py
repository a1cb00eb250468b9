"""
Exact vector modes of a two-layer step-index cylinder.

The guide is a homogeneous rod of index ``n_core`` and radius ``a`` in an
infinite medium of index ``n_clad``.  On a nanofiber waist the rod is the
silica cladding and the outer medium is air; the original core is ignored.

Conventions
-----------
* SI units throughout (radii and wavelengths in metres).
* Fields vary as ``exp(i(beta z - omega t))``.  Magnetic fields are returned
  scaled by the vacuum impedance (``H~ = Z0 H``) so that both E and H~ carry
  the same units, and "unit power" means ``1/2 Re int (E x H~*) . z dA = 1``.
* Gauge: transverse fields are real and ``E_z`` is imaginary.  The sign is
  fixed so that the leading transverse component (``E_r`` for HE/EH/TM,
  ``E_phi`` for TE) is positive at ``r = a/2`` in the reference orientation
  (``phi = 0`` for even parity, ``phi = pi/(2 nu)`` for odd).
* Parity: even modes have ``E_z ~ cos(nu phi)``; odd modes are the even
  pattern rotated by ``pi/(2 nu)``.  With this choice HE21 even has a
  transverse pattern ``x cos(phi) - y sin(phi)`` and HE21 odd
  ``x sin(phi) + y cos(phi)`` close to the axis.

Radial order ``m`` counts roots of a given family from ``n_eff = n_core``
downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import jn_zeros, jv, jvp, kve

from .errors import BelowCutoffError, DomainError, NoCutoffError, RootCountError

#: First zero of J0, the TE0m/TM0m (and LP11) cutoff V-number.
J0_FIRST_ZERO = 2.404825557695773

SCAN_POINTS = 2000
EDGE_EPS = 1e-9  # keep n_eff this far inside (n_clad, n_core)

_FAMILIES = ("HE", "EH", "TE", "TM")
_PARITIES = ("even", "odd", "none")


@dataclass(frozen=True)
class FiberSpec:
    """Material and wavelength description, independent of radius.

    ``core_clad_ratio`` is only used by :func:`core_escape_radius`.
    """

    n_core: float = 1.45
    n_clad: float = 1.0
    wavelength: float = 795e-9
    core_clad_ratio: float = 1.8 / 25.0

    def __post_init__(self):
        if not self.n_core > self.n_clad >= 1.0:
            raise DomainError(f"need n_core > n_clad >= 1, got {self.n_core}, {self.n_clad}")
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        if not 0 < self.core_clad_ratio <= 1:
            raise DomainError("core_clad_ratio must lie in (0, 1]")

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def na(self) -> float:
        return math.sqrt(self.n_core**2 - self.n_clad**2)

    def with_index(self, n_core: float) -> "FiberSpec":
        return FiberSpec(n_core, self.n_clad, self.wavelength, self.core_clad_ratio)

    def to_dict(self) -> dict:
        return {
            "n_core": self.n_core,
            "n_clad": self.n_clad,
            "wavelength_nm": self.wavelength * 1e9,
            "core_clad_ratio": self.core_clad_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FiberSpec":
        return cls(
            n_core=float(d.get("n_core", 1.45)),
            n_clad=float(d.get("n_clad", 1.0)),
            wavelength=float(d.get("wavelength_nm", 795.0)) * 1e-9,
            core_clad_ratio=float(d.get("core_clad_ratio", 1.8 / 25.0)),
        )


GLASS_AIR_795 = FiberSpec()

# Unmodified SM1500: 1.8 um core radius, 25 um cladding radius, V = 3.8 at 795 nm.
_SM1500_NA = 3.8 * 795e-9 / (2 * math.pi * 1.8e-6)
SM1500 = FiberSpec(
    n_core=math.sqrt(1.45**2 + _SM1500_NA**2),
    n_clad=1.45,
    wavelength=795e-9,
    core_clad_ratio=1.8 / 25.0,
)


@dataclass(frozen=True, order=True)
class ModeId:
    family: str
    nu: int
    m: int
    parity: str = "none"

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown mode family {self.family!r}")
        if self.parity not in _PARITIES:
            raise DomainError(f"unknown parity {self.parity!r}")
        if self.m < 1:
            raise DomainError("radial order m must be >= 1")
        if self.family in ("TE", "TM"):
            if self.nu != 0 or self.parity != "none":
                raise DomainError(f"{self.family} modes need nu = 0 and no parity")
        elif self.nu < 1 or self.parity == "none":
            raise DomainError(f"{self.family} modes need nu >= 1 and even/odd parity")

    @property
    def is_hybrid(self) -> bool:
        return self.family in ("HE", "EH")

    @property
    def mode_class(self):
        """Argument for :func:`characteristic_fn`: 'TE', 'TM' or the integer nu."""
        return self.nu if self.is_hybrid else self.family

    @property
    def label(self) -> str:
        """Name without parity, e.g. ``HE21``; shared by degenerate partners."""
        return f"{self.family}{self.nu}{self.m}"

    def with_parity(self, parity: str) -> "ModeId":
        return ModeId(self.family, self.nu, self.m, parity)

    def __str__(self) -> str:
        suffix = {"even": "e", "odd": "o", "none": ""}[self.parity]
        return f"{self.family}{self.nu}{self.m}{suffix}"

    @classmethod
    def parse(cls, text: str) -> "ModeId":
        """Parse names like ``HE21e``, ``HE11o``, ``TM01``.

        Single-digit azimuthal and radial orders are assumed when no separator
        is given; ``HE_12_1_e`` style is accepted for larger orders.
        """
        s = text.strip()
        fam = s[:2].upper()
        rest = s[2:].strip("_")
        parity = "none"
        if rest and rest[-1] in "eo":
            parity = "even" if rest[-1] == "e" else "odd"
            rest = rest[:-1].strip("_")
        if "_" in rest:
            nu_s, m_s = rest.split("_", 1)
        elif len(rest) == 2:
            nu_s, m_s = rest[0], rest[1]
        else:
            raise DomainError(f"cannot parse mode name {text!r}")
        try:
            nu, m = int(nu_s), int(m_s)
        except ValueError as exc:
            raise DomainError(f"cannot parse mode name {text!r}") from exc
        if fam in ("HE", "EH") and parity == "none":
            parity = "even"
        return cls(fam, nu, m, parity)


HE11e = ModeId("HE", 1, 1, "even")
HE11o = ModeId("HE", 1, 1, "odd")
TE01 = ModeId("TE", 0, 1)
TM01 = ModeId("TM", 0, 1)
HE21e = ModeId("HE", 2, 1, "even")
HE21o = ModeId("HE", 2, 1, "odd")


def v_number(fiber: FiberSpec, a: float) -> float:
    """Normalized frequency ``a k sqrt(n_core^2 - n_clad^2)``."""
    if np.any(np.asarray(a) < 0):
        raise DomainError("radius must be non-negative")
    return a * fiber.k * fiber.na


# ---------------------------------------------------------------------------
# characteristic equations


def _uw(fiber, a, n_eff):
    ak = a * fiber.k
    u = ak * np.sqrt(fiber.n_core**2 - n_eff**2)
    w = ak * np.sqrt(n_eff**2 - fiber.n_clad**2)
    return u, w


def _kprime_ratio(nu, w):
    """K'_nu(w) / (w K_nu(w)), overflow-safe."""
    return -(kve(nu - 1, w) + kve(nu + 1, w)) / (2.0 * w * kve(nu, w))


def _char_raw(fiber, a, mode_class, n_eff):
    n_eff = np.asarray(n_eff, dtype=float)
    u, w = _uw(fiber, a, n_eff)
    if mode_class == "TE":
        return jv(1, u) / u + jv(0, u) * kve(1, w) / (w * kve(0, w))
    if mode_class == "TM":
        return (
            fiber.n_core**2 * jv(1, u) / u
            + fiber.n_clad**2 * jv(0, u) * kve(1, w) / (w * kve(0, w))
        )
    nu = int(mode_class)
    r = (fiber.n_clad / fiber.n_core) ** 2
    J = jv(nu, u)
    Jp = jvp(nu, u)
    Kq = _kprime_ratio(nu, w)
    C = nu**2 * (n_eff / fiber.n_core) ** 2 * (1 / u**2 + 1 / w**2) ** 2
    return (Jp / u + J * Kq) * (Jp / u + r * J * Kq) - C * J**2


def characteristic_fn(fiber: FiberSpec, a: float, mode_class, n_eff):
    """Residual of the exact eigenvalue equation for one mode class.

    ``mode_class`` is ``"TE"``, ``"TM"`` or a hybrid azimuthal order
    ``nu >= 1`` (HE and EH roots of that order).  The textbook forms are
    multiplied through by ``J0(u)`` (TE/TM) or ``J_nu(u)^2`` (hybrid) so the
    residual has no poles and is continuous across the whole bracket; the
    roots are unchanged.
    """
    n_eff = np.asarray(n_eff, dtype=float)
    if np.any(n_eff <= fiber.n_clad) or np.any(n_eff >= fiber.n_core):
        raise DomainError("n_eff must lie strictly between n_clad and n_core")
    if mode_class not in ("TE", "TM") and not (isinstance(mode_class, (int, np.integer)) and mode_class >= 1):
        raise DomainError(f"bad mode class {mode_class!r}")
    out = _char_raw(fiber, a, mode_class, n_eff)
    return float(out) if out.ndim == 0 else out


def _hybrid_branch(fiber, a, nu, n_eff):
    """'HE' or 'EH' for a root of the hybrid equation."""
    u, w = _uw(fiber, a, n_eff)
    r = (fiber.n_clad / fiber.n_core) ** 2
    X = jvp(nu, u) / (u * jv(nu, u))
    Kq = _kprime_ratio(nu, w)
    C = nu**2 * (n_eff / fiber.n_core) ** 2 * (1 / u**2 + 1 / w**2) ** 2
    root = np.sqrt(Kq**2 * (1 - r) ** 2 / 4 + C)
    x_he = -Kq * (1 + r) / 2 - root
    x_eh = -Kq * (1 + r) / 2 + root
    return np.where(np.abs(X - x_he) <= np.abs(X - x_eh), "HE", "EH")


def _u_bound(mode: ModeId) -> float:
    """Upper bound on u for roots 1..m of the mode's family."""
    return float(jn_zeros(mode.nu + 1, mode.m)[-1]) + 0.5


def _scan_roots(fiber, a, mode: ModeId, points=SCAN_POINTS):
    """All roots of the mode's class with u below the family bound, in
    descending n_eff, each tagged with its family."""
    ak = a * fiber.k
    n1, n2 = fiber.n_core, fiber.n_clad
    u_min = ak * math.sqrt(n1**2 - (n1 - EDGE_EPS) ** 2)
    u_max = ak * math.sqrt(n1**2 - (n2 + EDGE_EPS) ** 2)
    u_hi = min(u_max, _u_bound(mode))
    if u_hi <= u_min:
        return []
    u_grid = np.linspace(u_min, u_hi, points)
    n_grid = np.sqrt(n1**2 - (u_grid / ak) ** 2)
    f = _char_raw(fiber, a, mode.mode_class, n_grid)
    found = []
    sgn = np.sign(f)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    for i in idx:
        hi, lo = n_grid[i], n_grid[i + 1]
        if i + 1 == points - 1 and abs(f[-1]) < 1e-9 * np.max(np.abs(f)):
            continue  # sign flip at the bracket edge is round-off, not a root
        root = brentq(
            lambda x: float(_char_raw(fiber, a, mode.mode_class, x)),
            lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200,
        )
        fam = mode.family if not mode.is_hybrid else str(_hybrid_branch(fiber, a, mode.nu, root))
        found.append((root, fam))
    # exact zeros on grid nodes
    for i in np.nonzero(f == 0)[0]:
        fam = mode.family if not mode.is_hybrid else str(_hybrid_branch(fiber, a, mode.nu, n_grid[i]))
        found.append((float(n_grid[i]), fam))
    found.sort(key=lambda t: -t[0])
    return found


# ---------------------------------------------------------------------------
# cutoffs


@lru_cache(maxsize=256)
def _he_cutoff_roots(nu: int, ratio: float, count: int):
    """Positive roots of (ratio + 1) J_{nu-1}(V) = V/(nu-1) J_nu(V), nu >= 2."""
    g = lambda v: (ratio + 1) * jv(nu - 1, v) - v / (nu - 1) * jv(nu, v)
    hi = float(jn_zeros(nu, count + 1)[-1]) + 5.0
    grid = np.linspace(1e-6, hi, 20000)
    vals = g(grid)
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(g, grid[i], grid[i + 1], xtol=1e-15))
        if len(roots) == count:
            break
    return tuple(roots)


def cutoff_v(fiber: FiberSpec, mode: ModeId) -> float:
    """Cutoff V-number of a mode; ``0.0`` for HE11."""
    if mode.family in ("TE", "TM"):
        return float(jn_zeros(0, mode.m)[-1])
    if mode.family == "EH":
        return float(jn_zeros(mode.nu, mode.m)[-1])
    if mode.nu == 1:
        return 0.0 if mode.m == 1 else float(jn_zeros(1, mode.m - 1)[-1])
    ratio = (fiber.n_core / fiber.n_clad) ** 2
    return _he_cutoff_roots(mode.nu, ratio, mode.m)[mode.m - 1]


def cutoff_radius(fiber: FiberSpec, mode: ModeId) -> float:
    """Radius below which the mode is no longer guided."""
    vc = cutoff_v(fiber, mode)
    if vc == 0.0:
        raise NoCutoffError(f"{mode} is guided at every radius")
    return vc / (fiber.k * fiber.na)


def is_guided(fiber: FiberSpec, mode: ModeId, a: float) -> bool:
    return v_number(fiber, a) > cutoff_v(fiber, mode)


# ---------------------------------------------------------------------------
# fields

_CORE_NODES = np.polynomial.legendre.leggauss(64)
_CLAD_NODES = np.polynomial.legendre.leggauss(128)


def _radial_parts(family, nu, u, w, a, beta, k, n1, n2, A, B, r):
    """Radial factors (Er, Ep, Ez, Hr, Hp, Hz) of the canonical pattern.

    Azimuthal factors: Er, Ez, Hp carry ``ce(phi)``; Ep, Hr, Hz carry
    ``ch(phi)`` (see :func:`_azimuth`).  All arguments broadcast.
    """
    r = np.asarray(r, dtype=float)
    x = r / a
    core = x <= 1.0
    xc = np.where(core, x, 1.0)
    xo = np.where(core, 1.0, x)
    if nu == 0:
        jm, jp = -jv(1, u * xc), jv(1, u * xc)
        km, kp = kve(1, w * xo), kve(1, w * xo)
    else:
        jm, jp = jv(nu - 1, u * xc), jv(nu + 1, u * xc)
        km, kp = kve(nu - 1, w * xo), kve(nu + 1, w * xo)
    jn_u = jv(nu, u)
    kn_w = kve(nu, w)
    decay = np.exp(-w * (xo - 1.0))
    # R, D = R', P = nu R / r in each region
    R_core = jv(nu, u * xc) / jn_u
    D_core = (u / (2 * a)) * (jm - jp) / jn_u
    P_core = (u / (2 * a)) * (jm + jp) / jn_u
    R_clad = kve(nu, w * xo) * decay / kn_w
    D_clad = -(w / (2 * a)) * (km + kp) * decay / kn_w
    P_clad = (w / (2 * a)) * (kp - km) * decay / kn_w
    R = np.where(core, R_core, R_clad)
    D = np.where(core, D_core, D_clad)
    P = np.where(core, P_core, P_clad)
    kap2 = np.where(core, (u / a) ** 2, -((w / a) ** 2))
    nsq = np.where(core, n1**2, n2**2)
    ik = 1j / kap2
    Er = ik * (beta * A * D + k * B * P)
    Ep = -ik * (beta * A * P + k * B * D)
    Ez = A * R
    Hr = ik * (beta * B * D + k * nsq * A * P)
    Hp = ik * (beta * B * P + k * nsq * A * D)
    Hz = B * R
    return Er, Ep, Ez, Hr, Hp, Hz


def _azimuth(family, nu, parity, phi):
    """(ce, ch) azimuthal factors."""
    phi = np.asarray(phi, dtype=float)
    if family == "TM":
        return np.ones_like(phi), np.zeros_like(phi)
    if family == "TE":
        return np.zeros_like(phi), np.ones_like(phi)
    if parity == "even":
        return np.cos(nu * phi), np.sin(nu * phi)
    return np.sin(nu * phi), -np.cos(nu * phi)


def _azimuth_norms(family):
    """(int ce^2 dphi, int ch^2 dphi)."""
    if family == "TM":
        return 2 * np.pi, 0.0
    if family == "TE":
        return 0.0, 2 * np.pi
    return np.pi, np.pi


def _raw_amplitudes(family, nu, u, w, beta, k):
    """Unnormalized (A, B) with real transverse fields."""
    if family == "TE":
        return np.zeros_like(u) + 0j, np.ones_like(u) * 1j
    if family == "TM":
        return -1j * np.ones_like(u), np.zeros_like(u) + 0j
    jr = jvp(nu, u) / (u * jv(nu, u))
    s = nu * (1 / u**2 + 1 / w**2) / (jr + _kprime_ratio(nu, w))
    A = -1j * np.ones_like(u)
    B = -(beta / k) * s * A
    return A, B


def _power(family, nu, u, w, a, beta, k, n1, n2, A, B):
    """Axial power ``1/2 Re int (E x H~*).z dA`` by Gauss-Legendre quadrature.

    Core: nodes on ``r in [0, a]``.  Exterior: ``r = a e^s`` with
    ``s in [0, ln(1 + 60/w)]``, which follows both the algebraic near-cutoff
    tail and the exponential decay far from cutoff.
    """
    u, w, a, beta = (np.asarray(v, dtype=float)[..., None] for v in (u, w, a, beta))
    A = np.asarray(A)[..., None]
    B = np.asarray(B)[..., None]
    Ie, Ih = _azimuth_norms(family)

    def density(r):
        Er, Ep, _, Hr, Hp, _ = _radial_parts(family, nu, u, w, a, beta, k, n1, n2, A, B, r)
        return 0.5 * np.real(Ie * Er * np.conj(Hp) - Ih * Ep * np.conj(Hr))

    xg, wg = _CORE_NODES
    x = 0.5 * (xg + 1.0)
    r = a * x
    p_core = np.sum(density(r) * r * a * 0.5 * wg, axis=-1)
    sg, ws = _CLAD_NODES
    smax = np.log1p(60.0 / w)
    s = 0.5 * (sg + 1.0) * smax
    r = a * np.exp(s)
    # evaluate strictly outside the interface
    r = np.where(r <= a, a * (1 + 1e-15), r)
    p_clad = np.sum(density(r) * r * r * 0.5 * smax * ws, axis=-1)
    return p_core + p_clad


def _normalized_amplitudes(family, nu, parity, u, w, a, beta, k, n1, n2):
    A, B = _raw_amplitudes(family, nu, np.asarray(u, float), np.asarray(w, float), np.asarray(beta, float), k)
    p = _power(family, nu, u, w, a, beta, k, n1, n2, A, B)
    scale = 1.0 / np.sqrt(p)
    A = A * scale
    B = B * scale
    # sign gauge: leading transverse component positive at r = a/2
    Er, Ep, *_ = _radial_parts(family, nu, u, w, a, beta, k, n1, n2, A, B, 0.5 * np.asarray(a))
    ref = np.real(Ep) if family == "TE" else np.real(Er)
    sign = np.where(ref < 0, -1.0, 1.0)
    return A * sign, B * sign


@dataclass(frozen=True)
class ModeSolution:
    """Solved mode at one radius.

    ``A`` and ``B`` are the normalized amplitudes of ``E_z`` and ``H~_z``;
    inside the rod the radial dependence is ``J_nu(u r/a)/J_nu(u)`` and
    outside ``K_nu(w r/a)/K_nu(w)``.
    """

    mode: ModeId
    fiber: FiberSpec
    a: float
    n_eff: float
    u: float
    w: float
    A: complex
    B: complex

    @property
    def beta(self) -> float:
        return self.n_eff * self.fiber.k

    @property
    def v(self) -> float:
        return v_number(self.fiber, self.a)

    @property
    def field_coeffs(self) -> dict:
        """Amplitudes of the Bessel expansions in each region."""
        nu = self.mode.nu
        jn_u = jv(nu, self.u)
        kn_w = kve(nu, self.w) * np.exp(-self.w)
        return {
            "Ez_core": self.A / jn_u,
            "Hz_core": self.B / jn_u,
            "Ez_clad": self.A / kn_w,
            "Hz_clad": self.B / kn_w,
        }

    def residual(self) -> float:
        return float(_char_raw(self.fiber, self.a, self.mode.mode_class, self.n_eff))

    def _parts(self, r):
        f = self.fiber
        return _radial_parts(
            self.mode.family, self.mode.nu, self.u, self.w, self.a, self.beta,
            f.k, f.n_core, f.n_clad, self.A, self.B, r,
        )

    def fields(self, r, phi):
        """Cylindrical (E_r, E_phi, E_z) and (H~_r, H~_phi, H~_z) arrays."""
        Er, Ep, Ez, Hr, Hp, Hz = self._parts(r)
        ce, ch = _azimuth(self.mode.family, self.mode.nu, self.mode.parity, phi)
        E = np.stack(np.broadcast_arrays(Er * ce, Ep * ch, Ez * ce))
        H = np.stack(np.broadcast_arrays(Hr * ch, Hp * ce, Hz * ch))
        return E, H


def mode_solution_from_neff(fiber: FiberSpec, a: float, mode: ModeId, n_eff: float) -> ModeSolution:
    """Build a normalized solution from an already-known effective index."""
    u, w = _uw(fiber, a, n_eff)
    A, B = _normalized_amplitudes(
        mode.family, mode.nu, mode.parity, u, w, a, n_eff * fiber.k,
        fiber.k, fiber.n_core, fiber.n_clad,
    )
    return ModeSolution(mode, fiber, float(a), float(n_eff), float(u), float(w), complex(A), complex(B))


def solve_neff(fiber: FiberSpec, a: float, mode: ModeId, points: int = SCAN_POINTS) -> float:
    """Effective index of ``mode`` at radius ``a`` (no field normalization)."""
    if not a > 0:
        raise DomainError("radius must be positive")
    v = v_number(fiber, a)
    vc = cutoff_v(fiber, mode)
    if v <= vc:
        raise BelowCutoffError(mode, a, v, vc)
    roots = [n for n, fam in _scan_roots(fiber, a, mode, points) if fam == mode.family]
    if len(roots) < mode.m:
        raise RootCountError(
            f"found {len(roots)} {mode.family}{mode.nu}x roots at a = {a * 1e9:.4f} nm, need m = {mode.m}"
        )
    return roots[mode.m - 1]


def solve_mode(fiber: FiberSpec, a: float, mode: ModeId) -> ModeSolution:
    """Solve the exact dispersion relation and normalize the fields."""
    return mode_solution_from_neff(fiber, a, mode, solve_neff(fiber, a, mode))


def list_guided_modes(fiber: FiberSpec, a: float) -> list[ModeId]:
    """Guided modes at radius ``a`` in descending effective index."""
    if not a > 0:
        raise DomainError("radius must be positive")
    v = v_number(fiber, a)
    found = []
    nu = 0
    while True:
        added = False
        if nu == 0:
            for fam in ("TE", "TM"):
                m = 1
                while cutoff_v(fiber, ModeId(fam, 0, m)) < v:
                    found.append(ModeId(fam, 0, m))
                    m += 1
                    added = True
        else:
            for fam in ("HE", "EH"):
                m = 1
                while cutoff_v(fiber, ModeId(fam, nu, m, "even")) < v:
                    found.append(ModeId(fam, nu, m, "even"))
                    found.append(ModeId(fam, nu, m, "odd"))
                    m += 1
                    added = True
        if not added and nu > 0:
            break
        nu += 1
    keyed = []
    cache = {}
    for mode in found:
        key = (mode.family, mode.nu, mode.m)
        if key not in cache:
            cache[key] = solve_neff(fiber, a, mode)
        keyed.append((-cache[key], mode.family, mode.nu, mode.m, mode.parity != "even", mode))
    keyed.sort()
    return [t[-1] for t in keyed]


def field_profile(sol: ModeSolution, r, phi):
    """Electric field of a solved mode.

    Returns ``(E_cyl, E_cart)``, each with leading axis of length 3:
    ``(E_r, E_phi, E_z)`` and ``(E_x, E_y, E_z)``.
    """
    if np.any(np.asarray(r) < 0):
        raise DomainError("r must be non-negative")
    E, _ = sol.fields(r, phi)
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    Ex = E[0] * c - E[1] * s
    Ey = E[0] * s + E[1] * c
    return E, np.stack([Ex, Ey, E[2]])


def surface_intensity(sol: ModeSolution) -> float:
    """Circumferential mean of ``|E|^2`` just inside the surface, unit power."""
    Er, Ep, Ez, *_ = sol._parts(sol.a)
    Ie, Ih = _azimuth_norms(sol.mode.family)
    total = Ie * (abs(Er) ** 2 + abs(Ez) ** 2) + Ih * abs(Ep) ** 2
    return float(total / (2 * np.pi))


def core_escape_radius(fiber: FiberSpec) -> float:
    """Cladding radius at which the core-guided LP11 family leaves the core.

    ``fiber`` describes the unmodified core/cladding pair (e.g. :data:`SM1500`).
    The core reaches LP11 cutoff (core V = 2.4048) and the cladding radius
    follows from the fixed core/cladding ratio.  This is a closed-form upper
    bound on the gradual 1/e escape point seen in the taper.
    """
    core_radius = J0_FIRST_ZERO / (fiber.k * fiber.na)
    return core_radius / fiber.core_clad_ratio
