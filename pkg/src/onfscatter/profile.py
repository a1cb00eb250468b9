"""
Axial radius profiles a(z) of a tapered fiber.

Two implementations share one duck-typed interface (``length``,
``radius_at``, ``slope_at``, ``waist_span``, ``z_center``, ``a_min``,
``breakpoints``, ``find_z_for_radius``):

* :class:`TaperProfile` -- analytic linear taper, exponential neck, uniform
  waist, mirrored output.  z = 0 is the start of the input linear taper.
* :class:`TabulatedProfile` -- shape-preserving interpolation of a sampled
  (z, a) table, e.g. the output of pulling software.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DataError, DomainError, GeometryError

NECK_FLOOR = 0.01e-9  # neck ends when a - a_w would drop below this
MAX_OMEGA = 5e-3


@dataclass(frozen=True)
class Segment:
    z_start: float
    z_end: float
    shape: str  # "linear", "exponential", "waist"


@dataclass(frozen=True)
class TaperProfile:
    """Symmetric taper: linear, exponential neck, waist, neck, linear.

    The neck is ``a = a_w + A (exp(-s/l) - e_T)`` with ``A = l tan(omega)``
    and ``e_T = NECK_FLOOR / A``.  The offset ``e_T`` makes the neck reach
    ``a_w`` exactly after ``l ln(A / NECK_FLOOR)``, and the linear section
    hands off at ``a_h = a_w + A - NECK_FLOOR`` with matching slope.
    """

    a0: float = 62.5e-6
    omega: float = 1e-3
    a_w: float = 360e-9
    L_w: float = 5e-3
    neck_scale: float = 2e-3
    segments: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.a0 > self.a_w > 0):
            raise GeometryError("need a0 > a_w > 0")
        if not (0 < self.omega <= MAX_OMEGA):
            raise GeometryError(f"taper angle must lie in (0, {MAX_OMEGA * 1e3:g} mrad]")
        if self.L_w < 0:
            raise GeometryError("waist length must be non-negative")
        if not self.neck_scale > 0:
            raise GeometryError("neck_scale must be positive")
        if self.amp <= NECK_FLOOR:
            raise GeometryError("neck_scale * tan(omega) is below the neck truncation floor")
        if self.a_h >= self.a0:
            raise GeometryError(
                f"handoff radius {self.a_h * 1e9:.2f} nm is not below a0 = {self.a0 * 1e9:.2f} nm"
            )
        z1, z2, z3, z4, z5 = self._joints
        segs = (
            Segment(0.0, z1, "linear"),
            Segment(z1, z2, "exponential"),
            Segment(z2, z3, "waist"),
            Segment(z3, z4, "exponential"),
            Segment(z4, z5, "linear"),
        )
        object.__setattr__(self, "segments", segs)

    # -- derived geometry
    @property
    def tan_omega(self) -> float:
        return math.tan(self.omega)

    @property
    def amp(self) -> float:
        return self.neck_scale * self.tan_omega

    @property
    def e_t(self) -> float:
        return NECK_FLOOR / self.amp

    @property
    def a_h(self) -> float:
        return self.a_w + self.amp - NECK_FLOOR

    @property
    def linear_length(self) -> float:
        return (self.a0 - self.a_h) / self.tan_omega

    @property
    def neck_length(self) -> float:
        return self.neck_scale * math.log(self.amp / NECK_FLOOR)

    @property
    def _joints(self):
        z1 = self.linear_length
        z2 = z1 + self.neck_length
        z3 = z2 + self.L_w
        z4 = z3 + self.neck_length
        return z1, z2, z3, z4, z4 + z1

    @property
    def length(self) -> float:
        return self._joints[-1]

    @property
    def z_center(self) -> float:
        return 0.5 * self.length

    @property
    def waist_span(self) -> tuple[float, float]:
        z1, z2, z3, *_ = self._joints
        return z2, z3

    @property
    def a_min(self) -> float:
        return self.a_w

    @property
    def breakpoints(self) -> list[float]:
        return list(self._joints[:-1])

    def with_waist(self, a_w: float) -> "TaperProfile":
        return TaperProfile(self.a0, self.omega, a_w, self.L_w, self.neck_scale)

    # -- evaluation
    def _half(self, s):
        """Radius and slope (d a / d s) at distance s from the nearer end."""
        z1, z2 = self._joints[:2]
        t = self.tan_omega
        lin = s < z1
        neck = (~lin) & (s < z2)
        e = np.exp(-(np.clip(s, z1, z2) - z1) / self.neck_scale)
        a = np.where(lin, self.a0 - t * s, np.where(neck, self.a_w + self.amp * (e - self.e_t), self.a_w))
        da = np.where(lin, -t, np.where(neck, -t * e, 0.0))
        return a, da

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        L = self.length
        tol = 1e-12 * L
        if np.any(z < -tol) or np.any(z > L + tol):
            raise DomainError(f"z outside [0, {L * 1e3:.6f} mm]")
        return np.clip(z, 0.0, L)

    def radius_at(self, z):
        z = self._check(z)
        out_side = z > self.z_center
        s = np.where(out_side, self.length - z, z)
        a, _ = self._half(s)
        return float(a) if a.ndim == 0 else a

    def slope_at(self, z):
        z = self._check(z)
        out_side = z > self.z_center
        s = np.where(out_side, self.length - z, z)
        _, da = self._half(s)
        da = np.where(out_side, -da, da)
        return float(da) if da.ndim == 0 else da

    def find_z_for_radius(self, a: float, side: str = "input") -> float:
        """z where the radius equals ``a`` on the input or output half.

        ``a = a_w`` returns the waist boundary on that side.
        """
        if side not in ("input", "output"):
            raise DomainError("side must be 'input' or 'output'")
        if not (self.a_w <= a <= self.a0):
            raise DomainError(f"radius {a * 1e9:.3f} nm outside [{self.a_w * 1e9:.3f}, {self.a0 * 1e9:.3f}] nm")
        z1, z2 = self._joints[:2]
        if a >= self.a_h:
            s = (self.a0 - a) / self.tan_omega
        elif a > self.a_w:
            s = z1 - self.neck_scale * math.log((a - self.a_w) / self.amp + self.e_t)
        else:
            s = z2
        return s if side == "input" else self.length - s

    # -- serialization
    def to_dict(self) -> dict:
        return {
            "a0_um": self.a0 * 1e6,
            "omega_mrad": self.omega * 1e3,
            "aw_nm": self.a_w * 1e9,
            "Lw_mm": self.L_w * 1e3,
            "neck_mm": self.neck_scale * 1e3,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaperProfile":
        try:
            return cls(
                a0=float(d.get("a0_um", 62.5)) * 1e-6,
                omega=float(d["omega_mrad"]) * 1e-3,
                a_w=float(d["aw_nm"]) * 1e-9,
                L_w=float(d["Lw_mm"]) * 1e-3,
                neck_scale=float(d.get("neck_mm", 2.0)) * 1e-3,
            )
        except KeyError as exc:
            raise GeometryError(f"profile descriptor missing {exc.args[0]!r}") from exc

    def to_csv(self, pitch: float) -> str:
        return profile_to_csv(self, pitch)


class TabulatedProfile:
    """Profile interpolated (PCHIP) from a sampled table.

    The waist is either given explicitly or taken as the longest flat run
    (``|da/dz| < flat_slope``) around the thinnest point.
    """

    def __init__(self, z, a, waist_span=None, flat_slope=1e-5):
        z = np.asarray(z, dtype=float)
        a = np.asarray(a, dtype=float)
        if z.ndim != 1 or z.shape != a.shape or z.size < 4:
            raise DataError("need matching 1-D z and a arrays with at least 4 samples")
        if not np.all(np.isfinite(z)) or not np.all(np.isfinite(a)):
            raise DataError("profile table contains non-finite values")
        if np.any(np.diff(z) <= 0):
            raise DataError("z must be strictly increasing")
        if np.any(a <= 0):
            raise DataError("radii must be positive")
        self._z0 = z[0]
        self.z = z - z[0]
        self.a = a
        self._interp = PchipInterpolator(self.z, a, extrapolate=False)
        self._deriv = self._interp.derivative()
        self.length = float(self.z[-1])
        i_min = int(np.argmin(a))
        self.a_min = float(a[i_min])
        if waist_span is None:
            slope = np.abs(self._deriv(self.z))
            flat = slope < flat_slope
            lo = hi = i_min
            while lo > 0 and flat[lo - 1]:
                lo -= 1
            while hi < z.size - 1 and flat[hi + 1]:
                hi += 1
            waist_span = (float(self.z[lo]), float(self.z[hi]))
        else:
            waist_span = (float(waist_span[0]), float(waist_span[1]))
        self.waist_span = waist_span
        self.z_center = 0.5 * (waist_span[0] + waist_span[1])
        self.breakpoints = [waist_span[0], waist_span[1]]

    @property
    def a_w(self) -> float:
        return self.a_min

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        tol = 1e-12 * self.length
        if np.any(z < -tol) or np.any(z > self.length + tol):
            raise DomainError(f"z outside [0, {self.length * 1e3:.6f} mm]")
        return np.clip(z, 0.0, self.length)

    def radius_at(self, z):
        out = self._interp(self._check(z))
        return float(out) if np.ndim(out) == 0 else out

    def slope_at(self, z):
        out = self._deriv(self._check(z))
        return float(out) if np.ndim(out) == 0 else out

    def find_z_for_radius(self, a: float, side: str = "input") -> float:
        if side not in ("input", "output"):
            raise DomainError("side must be 'input' or 'output'")
        if side == "input":
            zs, as_ = self.z[self.z <= self.waist_span[0]], self.a[self.z <= self.waist_span[0]]
        else:
            zs, as_ = self.z[self.z >= self.waist_span[1]], self.a[self.z >= self.waist_span[1]]
        lo, hi = float(np.min(as_)), float(np.max(as_))
        if not (lo <= a <= hi):
            raise DomainError(f"radius {a * 1e9:.3f} nm not reached on the {side} side")
        f = lambda zz: self.radius_at(zz) - a
        idx = np.nonzero(np.sign(as_[:-1] - a) != np.sign(as_[1:] - a))[0]
        if idx.size == 0:
            return float(zs[int(np.argmin(np.abs(as_ - a)))])
        i = idx[0] if side == "input" else idx[-1]
        if f(zs[i]) == 0:
            return float(zs[i])
        return brentq(f, zs[i], zs[i + 1], xtol=1e-12)

    @classmethod
    def from_profile(cls, profile, pitch: float, ramp: float = 0.0):
        """Sample another profile; optionally add a linear radius ramp
        (``ramp`` in m/m) along the waist, carried as an offset onward."""
        n = int(round(profile.length / pitch)) + 1
        z = np.linspace(0.0, profile.length, n)
        a = profile.radius_at(z)
        ws, we = profile.waist_span
        if ramp:
            a = a + ramp * np.clip(z - ws, 0.0, we - ws)
        return cls(z, a, waist_span=(ws, we))

    def to_csv(self, pitch: float) -> str:
        return profile_to_csv(self, pitch)


def profile_to_csv(profile, pitch: float) -> str:
    if not pitch > 0:
        raise DomainError("pitch must be positive")
    n = int(math.floor(profile.length / pitch + 1e-9)) + 1
    z = np.arange(n) * pitch
    if z[-1] < profile.length:
        z = np.append(z, profile.length)
    a = profile.radius_at(z)
    buf = io.StringIO()
    buf.write("z_mm,a_nm\n")
    for zi, ai in zip(z, a):
        buf.write(f"{zi * 1e3:.17g},{ai * 1e9:.17g}\n")
    return buf.getvalue()


def profile_from_csv(text: str, waist_span=None) -> TabulatedProfile:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty profile CSV")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["z_mm", "a_nm"]:
        raise DataError(f"expected header z_mm,a_nm, got {','.join(header)}")
    try:
        data = np.array([[float(x) for x in r[:2]] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise DataError(f"bad profile CSV row: {exc}") from exc
    if data.ndim != 2 or data.shape[0] < 4:
        raise DataError("profile CSV needs at least 4 rows")
    return TabulatedProfile(data[:, 0] * 1e-3, data[:, 1] * 1e-9, waist_span=waist_span)


def constant_profile(a: float, length: float) -> TabulatedProfile:
    """Uniform cylinder of radius ``a``; the whole length is waist."""
    z = np.linspace(0.0, length, 5)
    return TabulatedProfile(z, np.full(5, a), waist_span=(0.0, length))
