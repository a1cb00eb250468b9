"""
Adiabatic propagation of a modal superposition along a taper and synthesis
of polarization-resolved Rayleigh-scattering traces.

Each mode keeps its amplitude and accumulates the phase ``int beta(a(z)) dz``;
a mode whose cutoff radius is reached is dropped at that coordinate and its
power is recorded as lost.  The camera looks along y, so a dipole driven by
the local field radiates toward it only through its x and z components.
The detected power in a channel is

    P(z) = sum_ij c_i(z) c_j(z)* W_ij(a(z))

where ``W_ij = bulk * int_glass E_p,i E_p,j* dA + surface * a oint E_p,i E_p,j*(a-) dphi``
and ``E_p`` is the x component (transverse), z component (longitudinal) or
both (total).  In the field gauge of :mod:`onfscatter.modes` ``W`` is real.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.ndimage import gaussian_filter1d

from . import modes as M
from .errors import BelowCutoffError, CutoffCrossedError, DataError, DomainError, RootCountError
from .modes import FiberSpec, ModeId

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
TABLE_POINTS = 2000
WEIGHT_POINTS = 600
DEFAULT_A_MAX = 62.5e-6
HE11_V_MIN = 1.0
CHANNELS = ("longitudinal", "transverse", "total")


# ---------------------------------------------------------------------------
# beta(a) tables


class BetaTable:
    """Cubic interpolant of ``n_eff(a)`` for one mode family.

    Nodes are log-spaced in ``a - a_c`` (``a_c`` = cutoff radius, 0 for HE11),
    which concentrates samples where ``n_eff`` bends near cutoff.  Nodes come
    from a few dozen direct solves; the rest are refined from a spline guess
    with a narrow bracket and vectorized bisection.
    """

    def __init__(self, fiber: FiberSpec, mode: ModeId, a_max: float = DEFAULT_A_MAX, points: int = TABLE_POINTS):
        self.fiber = fiber
        self.mode = mode.with_parity("even") if mode.is_hybrid else mode
        vc = M.cutoff_v(fiber, self.mode)
        kna = fiber.k * fiber.na
        self.a_cut = vc / kna
        if vc == 0.0:
            a_lo = HE11_V_MIN / kna
        else:
            a_lo = self._lowest_solvable()
        if a_max <= a_lo:
            raise DomainError(f"table range empty for {self.mode}")
        self.a_lo = a_lo
        self.a_hi = a_max
        xs = np.linspace(math.log(a_lo - self.a_cut), math.log(a_max - self.a_cut), points)
        a = self.a_cut + np.exp(xs)
        a[0], a[-1] = a_lo, a_max
        n = self._solve_many(a, xs)
        self.x = xs
        self.a_nodes = a
        self.n_nodes = n
        self._spline = CubicSpline(xs, n)

    def _lowest_solvable(self) -> float:
        for k in range(9, 2, -1):
            a = self.a_cut * (1 + 10.0**-k)
            try:
                n = M.solve_neff(self.fiber, a, self.mode)
            except (RootCountError, BelowCutoffError):
                continue
            if n - self.fiber.n_clad > 10 * M.EDGE_EPS:
                return a
        raise RootCountError(f"cannot resolve {self.mode} near cutoff")

    def _solve_many(self, a, xs):
        f = self.fiber
        coarse_idx = np.unique(np.linspace(0, a.size - 1, 60).round().astype(int))
        n_coarse = np.array([M.solve_neff(f, a[i], self.mode) for i in coarse_idx])
        ak = a * f.k
        u_coarse = ak[coarse_idx] * np.sqrt(f.n_core**2 - n_coarse**2)
        u_guess = CubicSpline(xs[coarse_idx], u_coarse)(xs)

        u_min = ak * math.sqrt(f.n_core**2 - (f.n_core - M.EDGE_EPS) ** 2)
        u_max = ak * np.sqrt(f.n_core**2 - (f.n_clad + M.EDGE_EPS) ** 2)
        offs = np.linspace(-1.0, 1.0, 9) * 0.05
        ug = np.clip(u_guess[:, None] + offs[None, :], u_min[:, None], u_max[:, None])
        ng = np.sqrt(f.n_core**2 - (ug / ak[:, None]) ** 2)
        fv = M._char_raw(f, ak[:, None] / f.k, self.mode.mode_class, ng)
        sc = np.sign(fv[:, :-1]) * np.sign(fv[:, 1:]) < 0
        ok = sc.sum(axis=1) == 1
        j = np.argmax(sc, axis=1)
        rows = np.arange(a.size)
        hi = ng[rows, j]
        lo = ng[rows, j + 1]
        f_hi = fv[rows, j]
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            fm = M._char_raw(f, a, self.mode.mode_class, mid)
            same = np.sign(fm) == np.sign(f_hi)
            hi = np.where(same, mid, hi)
            f_hi = np.where(same, fm, f_hi)
            lo = np.where(same, lo, mid)
            if np.all(np.abs(hi - lo) < 2e-16):
                break
        n = 0.5 * (lo + hi)
        if self.mode.is_hybrid:
            fam = M._hybrid_branch(f, a, self.mode.nu, n)
            ok &= fam == self.mode.family
        n[coarse_idx] = n_coarse
        ok[coarse_idx] = True
        for i in np.nonzero(~ok)[0]:
            n[i] = M.solve_neff(f, a[i], self.mode)
        return n

    def _x(self, a):
        a = np.asarray(a, dtype=float)
        return np.log(np.clip(a, self.a_lo, self.a_hi) - self.a_cut)

    def guided(self, a):
        return np.asarray(a) > self.a_cut

    def n_eff(self, a):
        """Effective index; NaN at or below cutoff.  Radii in ``(a_c, a_lo)``
        use the value at ``a_lo``."""
        a = np.asarray(a, dtype=float)
        if np.any(a > self.a_hi * (1 + 1e-12)):
            raise DomainError(f"radius above table range ({self.a_hi * 1e6:.3f} um)")
        out = self._spline(self._x(a))
        out = np.where(a > self.a_cut, out, np.nan)
        return float(out) if out.ndim == 0 else out

    def beta(self, a):
        return self.n_eff(a) * self.fiber.k


def beta_table(fiber: FiberSpec, mode: ModeId, a_max: float = DEFAULT_A_MAX) -> BetaTable:
    """Shared, read-only table for a mode family (parity ignored)."""
    key = mode.with_parity("even") if mode.is_hybrid else mode
    return _beta_table(fiber, key, a_max)


@lru_cache(maxsize=64)
def _beta_table(fiber, mode, a_max):
    return BetaTable(fiber, mode, a_max)


# ---------------------------------------------------------------------------
# scattering weights


_GL_GLASS = np.polynomial.legendre.leggauss(64)
_NPHI = 64


def _mode_parts(fiber, mode, a, n_eff):
    """Radial factors (Er, Ep, Ez) at GL nodes inside the glass and at r = a-,
    for arrays of radii; plus the azimuthal factors on a phi grid."""
    k = fiber.k
    a = np.asarray(a, dtype=float)
    beta = n_eff * k
    u, w = M._uw(fiber, a, n_eff)
    A, B = M._normalized_amplitudes(
        mode.family, mode.nu, mode.parity, u, w, a, beta, k, fiber.n_core, fiber.n_clad
    )
    xg, _ = _GL_GLASS
    x = 0.5 * (xg + 1.0)
    r = a[:, None] * np.append(x, 1.0)[None, :]
    Er, Ep, Ez, *_ = M._radial_parts(
        mode.family, mode.nu, u[:, None], w[:, None], a[:, None], beta[:, None], k,
        fiber.n_core, fiber.n_clad, A[:, None], B[:, None], r,
    )
    return np.real(Er), np.real(Ep), Ez


def _phi_grid():
    return np.arange(_NPHI) * (2 * np.pi / _NPHI)


def _cart_components(mode, parts, phi):
    """x and z field components on (radius, node, phi)."""
    Er, Ep, Ez = parts
    ce, ch = M._azimuth(mode.family, mode.nu, mode.parity, phi)
    c, s = np.cos(phi), np.sin(phi)
    ex = Er[..., None] * (ce * c)[None, None, :] - Ep[..., None] * (ch * s)[None, None, :]
    ez = Ez[..., None] * ce[None, None, :]
    return ex, ez


@dataclass
class WeightTable:
    """Pair weights ``W_ij`` for x and z components, bulk and surface parts,
    as splines in ``log(a - a_c)`` where ``a_c`` is the larger cutoff."""

    a_cut: float
    a_lo: float
    a_hi: float
    splines: dict

    def eval(self, a, bulk: float, surface: float):
        """(W_x, W_z) at radii ``a``; zero where the pair is not guided."""
        a = np.asarray(a, dtype=float)
        x = np.log(np.clip(a, self.a_lo, self.a_hi) - self.a_cut)
        guided = a > self.a_cut
        wx = bulk * self.splines["xb"](x) + surface * self.splines["xs"](x)
        wz = bulk * self.splines["zb"](x) + surface * self.splines["zs"](x)
        return np.where(guided, wx, 0.0), np.where(guided, wz, 0.0)


def pair_weights_direct(fiber, mode_i, mode_j, a, n_i, n_j):
    """Direct evaluation of the four weight parts at radii ``a``.

    Returns dict with keys xb, xs, zb, zs (bulk and surface, x and z).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n_i = np.broadcast_to(np.asarray(n_i, dtype=float), a.shape)
    n_j = np.broadcast_to(np.asarray(n_j, dtype=float), a.shape)
    phi = _phi_grid()
    dphi = 2 * np.pi / _NPHI
    pi_ = _mode_parts(fiber, mode_i, a, n_i)
    pj = pi_ if (mode_i == mode_j) else _mode_parts(fiber, mode_j, a, n_j)
    exi, ezi = _cart_components(mode_i, pi_, phi)
    exj, ezj = _cart_components(mode_j, pj, phi)
    xx = np.real(np.sum(exi * np.conj(exj), axis=-1)) * dphi
    zz = np.real(np.sum(ezi * np.conj(ezj), axis=-1)) * dphi
    _, wg = _GL_GLASS
    xg = 0.5 * (_GL_GLASS[0] + 1.0)
    rad = (a[:, None] ** 2) * (xg * 0.5 * wg)[None, :]
    return {
        "xb": np.sum(xx[:, :-1] * rad, axis=1),
        "zb": np.sum(zz[:, :-1] * rad, axis=1),
        "xs": xx[:, -1] * a,
        "zs": zz[:, -1] * a,
    }


@lru_cache(maxsize=256)
def weight_table(fiber: FiberSpec, mode_i: ModeId, mode_j: ModeId, a_max: float = DEFAULT_A_MAX) -> WeightTable:
    ti = beta_table(fiber, mode_i, a_max)
    tj = beta_table(fiber, mode_j, a_max)
    if ti.a_cut >= tj.a_cut:
        a_cut, a_lo = ti.a_cut, ti.a_lo
    else:
        a_cut, a_lo = tj.a_cut, tj.a_lo
    a_lo = max(a_lo, ti.a_lo, tj.a_lo)
    xs = np.linspace(math.log(a_lo - a_cut), math.log(a_max - a_cut), WEIGHT_POINTS)
    a = a_cut + np.exp(xs)
    a[0], a[-1] = a_lo, a_max
    parts = pair_weights_direct(fiber, mode_i, mode_j, a, ti.n_eff(a), tj.n_eff(a))
    splines = {key: CubicSpline(xs, val) for key, val in parts.items()}
    return WeightTable(a_cut, a_lo, a_max, splines)


@lru_cache(maxsize=16)
def default_surface_coeff(fiber: FiberSpec, bulk: float = 1.0) -> float:
    """Surface coefficient giving surface/bulk = 10 at a = 360 nm for an
    equal HE21e + TM01 launch (mean level, total channel)."""
    a = np.array([360e-9])
    pairs = [(M.HE21e, M.HE21e), (M.TM01, M.TM01)]
    bulk_sum = surf_sum = 0.0
    for mi, mj in pairs:
        n = M.solve_neff(fiber, a[0], mi)
        w = pair_weights_direct(fiber, mi, mj, a, n, n)
        bulk_sum += w["xb"][0] + w["zb"][0]
        surf_sum += w["xs"][0] + w["zs"][0]
    return 10.0 * bulk * bulk_sum / surf_sum


# ---------------------------------------------------------------------------
# states


@dataclass
class ModalState:
    basis: tuple
    amplitudes: np.ndarray

    def __post_init__(self):
        self.basis = tuple(ModeId.parse(b) if isinstance(b, str) else b for b in self.basis)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (len(self.basis),):
            raise DomainError("one amplitude per basis mode required")
        if len(set(self.basis)) != len(self.basis):
            raise DomainError("basis modes must be distinct")

    @classmethod
    def launch(cls, basis, amplitudes) -> "ModalState":
        """Normalized launch state (unit total power)."""
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise DomainError("launch amplitudes are all zero")
        return cls(tuple(basis), amps / norm)

    @classmethod
    def equal(cls, *modes, phase: float = 0.0) -> "ModalState":
        amps = np.ones(len(modes), dtype=complex)
        if len(modes) > 1:
            amps[1] = np.exp(1j * phase)
        return cls.launch(modes, amps)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def to_dict(self) -> dict:
        return {
            "basis": [str(m) for m in self.basis],
            "amplitudes": [[float(c.real), float(c.imag)] for c in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, d: dict, normalize: bool = True) -> "ModalState":
        try:
            basis = [ModeId.parse(s) for s in d["basis"]]
            amps = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in d["amplitudes"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad launch state: {exc}") from exc
        return cls.launch(basis, amps) if normalize else cls(tuple(basis), np.array(amps))


@dataclass(frozen=True)
class Ejection:
    mode: ModeId
    z: float
    lost_power: float


@dataclass(frozen=True)
class ScatterChannel:
    """Analyzer behind a camera looking along y (never sees E_y)."""

    analyzer: str = "total"
    view: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.analyzer not in CHANNELS:
            raise DomainError(f"unknown analyzer {self.analyzer!r}")

    @property
    def components(self) -> tuple:
        return {"transverse": ("x",), "longitudinal": ("z",), "total": ("x", "z")}[self.analyzer]


@dataclass
class NoiseModel:
    """Multiplicative Gaussian noise plus a positive additive floor.

    The floor is ``floor * |g|`` with ``g`` standard normal, scaled to the
    mean noiseless total power on the waist so every channel sees the same
    background.
    """

    sigma: float = 0.05
    floor: float = 0.01
    seed: int = 0

    def apply(self, p, channel_index: int, ref_level: float):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(channel_index,))
        rng = np.random.Generator(np.random.Philox(ss))
        g = rng.standard_normal((2, p.size))
        out = p * (1.0 + self.sigma * g[0]) + self.floor * ref_level * np.abs(g[1])
        return np.clip(out, 0.0, None)


@dataclass
class RsTrace:
    z: np.ndarray
    p_long: np.ndarray
    p_trans: np.ndarray
    p_total: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    def channel(self, name: str) -> np.ndarray:
        return {"longitudinal": self.p_long, "transverse": self.p_trans, "total": self.p_total}[name]

    def section(self, z0: float, z1: float) -> "RsTrace":
        sel = (self.z >= z0 - 1e-12) & (self.z <= z1 + 1e-12)
        return RsTrace(self.z[sel], self.p_long[sel], self.p_trans[sel], self.p_total[sel], dict(self.metadata))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("z_mm,p_long,p_trans,p_total\n")
        data = np.column_stack([self.z * 1e3, self.p_long, self.p_trans, self.p_total])
        np.savetxt(buf, data, delimiter=",", fmt="%.17g")
        return buf.getvalue()

    def metadata_json(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "RsTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["z_mm", "p_long", "p_trans", "p_total"]:
            raise DataError("trace CSV must start with header z_mm,p_long,p_trans,p_total")
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise DataError(f"bad trace CSV value: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 4 or data.shape[0] < 16:
            raise DataError("trace CSV needs 4 columns and at least 16 rows")
        if not np.all(np.isfinite(data)):
            raise DataError("trace CSV contains non-finite values")
        z = data[:, 0] * 1e-3
        dz = np.diff(z)
        if np.any(dz <= 0) or np.max(np.abs(dz - dz.mean())) > 1e-6 * dz.mean():
            raise DataError("trace z grid must be uniform and increasing")
        return cls(z, data[:, 1], data[:, 2], data[:, 3], metadata or {})


# ---------------------------------------------------------------------------
# propagation


_GL4 = np.polynomial.legendre.leggauss(4)


class Propagator:
    """Adiabatic propagation of modes of ``basis`` along ``profile``."""

    def __init__(self, fiber: FiberSpec, profile, basis, a_max: float | None = None):
        self.fiber = fiber
        self.profile = profile
        self.basis = tuple(ModeId.parse(b) if isinstance(b, str) else b for b in basis)
        top = float(np.max(profile.radius_at(np.linspace(0, profile.length, 201))))
        self.a_max = max(DEFAULT_A_MAX, top * 1.001) if a_max is None else a_max
        self.tables = [beta_table(fiber, m, self.a_max) for m in self.basis]
        self.ejections = [self._ejection_z(t) for t in self.tables]

    def _ejection_z(self, table: BetaTable):
        """First z at which the radius reaches the mode's cutoff, or None."""
        p = self.profile
        if table.a_cut <= 0 or p.a_min > table.a_cut:
            return None
        if hasattr(p, "a_h"):
            return p.find_z_for_radius(table.a_cut, "input")
        z = np.linspace(0.0, p.length, 200001)
        a = p.radius_at(z)
        i = int(np.argmax(a <= table.a_cut))
        if i == 0:
            return 0.0
        return brentq(lambda zz: p.radius_at(zz) - table.a_cut, z[i - 1], z[i], xtol=1e-12)

    def _beta_z(self, idx: int, z):
        return self.tables[idx].beta(self.profile.radius_at(z))

    def accumulated_phase(self, mode, z: float, z0: float = 0.0) -> float:
        """``int_{z0}^{z} beta(a(z')) dz'`` by adaptive quadrature."""
        idx = self._index(mode)
        if not (0 <= z0 <= z <= self.profile.length + 1e-15):
            raise DomainError("need 0 <= z0 <= z <= profile length")
        ze = self.ejections[idx]
        if ze is not None and z > ze:
            raise CutoffCrossedError(self.basis[idx], ze)
        pts = [b for b in self.profile.breakpoints if z0 < b < z]
        f = lambda zz: float(self._beta_z(idx, zz))
        total = 0.0
        edges = [z0] + pts + [z]
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = quad(f, lo, hi, epsrel=1e-10, epsabs=0.0, limit=500)
            total += val
        return total

    def _index(self, mode) -> int:
        mode = ModeId.parse(mode) if isinstance(mode, str) else mode
        try:
            return self.basis.index(mode)
        except ValueError as exc:
            raise DomainError(f"{mode} is not in the propagation basis") from exc

    def phases(self, z, max_step: float = 2e-6) -> np.ndarray:
        """Cumulative phases on an increasing grid starting at z[0].

        Each interval is split into pieces no longer than ``max_step`` and
        integrated with 4-point Gauss-Legendre.  Shape (modes, len(z));
        NaN past each mode's ejection point.
        """
        z = np.asarray(z, dtype=float)
        if z.size < 2:
            return np.zeros((len(self.basis), z.size))
        nsub = np.maximum(1, np.ceil(np.diff(z) / max_step).astype(int))
        if np.all(nsub == 1):
            fine, pick = z, np.arange(z.size)
        else:
            pick = np.concatenate([[0], np.cumsum(nsub)])
            seg = np.repeat(np.arange(z.size - 1), nsub)
            k = np.arange(seg.size) - pick[seg]
            fine = np.append(z[seg] + (k / nsub[seg]) * np.diff(z)[seg], z[-1])
        xg, wg = _GL4
        lo, hi = fine[:-1], fine[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        zq = mid[:, None] + half[:, None] * xg[None, :]
        aq = self.profile.radius_at(zq)
        out = np.empty((len(self.basis), z.size))
        for i, t in enumerate(self.tables):
            ze = self.ejections[i]
            if ze is None:
                b = t.beta(aq)
            else:
                b = np.nan_to_num(t.beta(np.where(zq <= ze, aq, t.a_hi)))
                b = np.where(zq <= ze, b, 0.0)
            cum = np.concatenate([[0.0], np.cumsum(np.sum(b * wg[None, :], axis=1) * half)])
            out[i] = cum[pick]
            if ze is not None:
                out[i, z > ze] = np.nan
        return out

    def amplitudes(self, launch: ModalState, z, z_ref: float = 0.0) -> np.ndarray:
        """Amplitudes c_i(z), shape (modes, len(z)); launch phases refer to ``z_ref``."""
        launch = self._align(launch)
        z = np.asarray(z, dtype=float)
        grid = np.unique(np.concatenate([[0.0, z_ref], z]))
        ph = self.phases(grid)
        ref = ph[:, np.searchsorted(grid, z_ref)]
        ph_z = ph[:, np.searchsorted(grid, z)]
        c = launch.amplitudes[:, None] * np.exp(1j * (ph_z - ref[:, None]))
        return np.where(np.isnan(ph_z), 0.0, c)

    def _align(self, launch: ModalState) -> ModalState:
        if launch.basis == self.basis:
            return launch
        amps = np.zeros(len(self.basis), dtype=complex)
        for m, c in zip(launch.basis, launch.amplitudes):
            amps[self._index(m)] = c
        return ModalState(self.basis, amps)

    def propagate(self, launch: ModalState, z: float, z_ref: float = 0.0):
        """State at ``z`` and the ejections that occurred on ``[0, z]``."""
        if not (0 <= z <= self.profile.length):
            raise DomainError("z outside profile")
        launch = self._align(launch)
        c = self.amplitudes(launch, np.array([z]), z_ref)[:, 0]
        lost = [
            Ejection(m, ze, float(abs(c0) ** 2))
            for m, ze, c0 in zip(self.basis, self.ejections, launch.amplitudes)
            if ze is not None and ze <= z and abs(c0) > 0
        ]
        return ModalState(self.basis, c), lost

    def local_fields(self, launch: ModalState, z: float, r, phi, z_ref: float = 0.0):
        """Coherent Cartesian field sum at (r, phi) on the cross-section at z."""
        state, _ = self.propagate(launch, z, z_ref)
        a = self.profile.radius_at(z)
        total = 0.0
        for m, t, c in zip(self.basis, self.tables, state.amplitudes):
            if c == 0:
                continue
            sol = M.mode_solution_from_neff(self.fiber, a, m, float(t.n_eff(a)))
            _, cart = M.field_profile(sol, r, phi)
            total = total + c * cart
        return total

    def weights(self, a, bulk: float, surface: float):
        """W_x and W_z matrices at radii a: shape (n, n, len(a))."""
        a = np.asarray(a, dtype=float)
        n = len(self.basis)
        wx = np.zeros((n, n) + a.shape)
        wz = np.zeros((n, n) + a.shape)
        for i in range(n):
            for j in range(i, n):
                tab = weight_table(self.fiber, self.basis[i], self.basis[j], self.a_max)
                x, zc = tab.eval(a, bulk, surface)
                wx[i, j] = wx[j, i] = x
                wz[i, j] = wz[j, i] = zc
        return wx, wz

    def channel_powers(self, c, a, bulk: float, surface: float):
        """(p_x, p_z) from amplitudes c (modes, N) at radii a (N)."""
        wx, wz = self.weights(a, bulk, surface)
        px = np.real(np.einsum("in,ijn,jn->n", c, wx, np.conj(c)))
        pz = np.real(np.einsum("in,ijn,jn->n", c, wz, np.conj(c)))
        return px, pz


def synthesize_rs_trace(
    fiber: FiberSpec,
    profile,
    launch: ModalState,
    dz: float = 1e-6,
    bulk_coeff: float = 1.0,
    surface_coeff: float | None = None,
    psf_fwhm: float = 2.5e-6,
    noise: NoiseModel | None = None,
    z_range: tuple | None = None,
    z_ref: float = 0.0,
    propagator: Propagator | None = None,
) -> RsTrace:
    """Polarization-resolved scattering trace on a uniform z grid.

    ``z_range`` restricts the output window (default: whole profile);
    ``z_ref`` is where the launch phases apply.
    """
    if not dz > 0:
        raise DomainError("dz must be positive")
    if surface_coeff is None:
        surface_coeff = default_surface_coeff(fiber, bulk_coeff)
    prop = propagator or Propagator(fiber, profile, launch.basis)
    z0, z1 = (0.0, profile.length) if z_range is None else z_range
    if not (0 <= z0 < z1 <= profile.length + 1e-12):
        raise DomainError("bad z range")
    n = int(math.floor((z1 - z0) / dz + 1e-9)) + 1
    z = z0 + np.arange(n) * dz
    c = prop.amplitudes(launch, z, z_ref)
    a = profile.radius_at(z)
    px, pz = prop.channel_powers(c, a, bulk_coeff, surface_coeff)
    px = np.clip(px, 0.0, None)
    pz = np.clip(pz, 0.0, None)
    if psf_fwhm > 0:
        sig = psf_fwhm * FWHM_TO_SIGMA / dz
        px = gaussian_filter1d(px, sig, mode="nearest")
        pz = gaussian_filter1d(pz, sig, mode="nearest")
    pt = px + pz
    if noise is not None:
        ws, we = profile.waist_span
        sel = (z >= ws) & (z <= we)
        ref = float(np.mean(pt[sel])) if np.any(sel) else float(np.mean(pt))
        pz = noise.apply(pz, 0, ref)
        px = noise.apply(px, 1, ref)
        pt = noise.apply(pt, 2, ref)
    meta = {
        "profile": profile.to_dict() if hasattr(profile, "to_dict") else {"tabulated": True},
        "launch": prop._align(launch).to_dict(),
        "fiber": fiber.to_dict(),
        "dz_um": dz * 1e6,
        "bulk_coeff": bulk_coeff,
        "surface_coeff": surface_coeff,
        "psf_fwhm_um": psf_fwhm * 1e6,
        "noise": None if noise is None else {"sigma": noise.sigma, "floor": noise.floor, "seed": noise.seed},
        "z_ref_mm": z_ref * 1e3,
        "ejections": [
            {"mode": str(m), "z_mm": ze * 1e3}
            for m, ze in zip(prop.basis, prop.ejections)
            if ze is not None
        ],
    }
    return RsTrace(z, pz, px, pt, meta)
