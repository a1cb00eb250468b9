"""
Half-wave-plate action on the four LP11-family vector modes.

Near the launch plane each mode is approximated by its free-space lobe
pattern: a 2x2 array ``F[pol, lobe]`` with ``pol`` in (x, y) and ``lobe`` in
(cos phi, sin phi).  A wave plate acts on the polarization index only, so
the induced 4x4 matrix is ``M_kl = tr(B_k^T J B_l) / 2``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import modes as M
from .errors import DomainError
from .propagation import ModalState, NoiseModel, Propagator, synthesize_rs_trace
from .spectral import _beat_tab

BASIS = (M.TM01, M.TE01, M.HE21e, M.HE21o)

LOBES = np.array(
    [
        [[1.0, 0.0], [0.0, 1.0]],  # TM01: radial
        [[0.0, -1.0], [1.0, 0.0]],  # TE01: azimuthal
        [[1.0, 0.0], [0.0, -1.0]],  # HE21 even
        [[0.0, 1.0], [1.0, 0.0]],  # HE21 odd
    ]
)


def jones_hwp(alpha: float) -> np.ndarray:
    c, s = math.cos(2 * alpha), math.sin(2 * alpha)
    return np.array([[c, s], [s, -c]])


def hwp_matrix(alpha: float) -> np.ndarray:
    """4x4 matrix of a half-wave plate at fast-axis angle ``alpha`` (rad),
    basis order (TM01, TE01, HE21e, HE21o)."""
    J = jones_hwp(alpha)
    return 0.5 * np.einsum("kpl,pq,mql->km", LOBES, J, LOBES)


@dataclass
class LaunchState:
    """Amplitudes over (TM01, TE01, HE21e, HE21o) plus an optional LP01
    Jones vector (x, y) that rides along as HE11 even/odd."""

    amplitudes: np.ndarray
    lp01: np.ndarray | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (4,):
            raise DomainError("launch state needs four amplitudes")
        if self.lp01 is not None:
            self.lp01 = np.asarray(self.lp01, dtype=complex)
            if self.lp01.shape != (2,):
                raise DomainError("LP01 passenger must be a 2-component Jones vector")

    @property
    def norm(self) -> float:
        extra = 0.0 if self.lp01 is None else float(np.sum(np.abs(self.lp01) ** 2))
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)) + extra)

    def normalized(self) -> "LaunchState":
        n = self.norm
        if n == 0:
            raise DomainError("launch state is zero")
        return LaunchState(self.amplitudes / n, None if self.lp01 is None else self.lp01 / n)

    @classmethod
    def pair(cls, first, second, phase: float = 0.0) -> "LaunchState":
        v = np.zeros(4, dtype=complex)
        v[BASIS.index(first)] = 1.0
        v[BASIS.index(second)] = np.exp(1j * phase)
        return cls(v / math.sqrt(2.0))

    def apply(self, matrix: np.ndarray, jones: np.ndarray | None = None) -> "LaunchState":
        lp = self.lp01 if (self.lp01 is None or jones is None) else jones @ self.lp01
        return LaunchState(matrix @ self.amplitudes, lp)

    def after_hwp(self, alpha: float) -> "LaunchState":
        return self.apply(hwp_matrix(alpha), jones_hwp(alpha))

    def to_modal_state(self) -> ModalState:
        basis = list(BASIS)
        amps = list(self.amplitudes)
        if self.lp01 is not None:
            basis += [M.HE11e, M.HE11o]
            amps += list(self.lp01)
        return ModalState(tuple(basis), np.array(amps))

    def to_dict(self) -> dict:
        d = {"basis": [str(m) for m in BASIS], "amplitudes": [[c.real, c.imag] for c in self.amplitudes]}
        if self.lp01 is not None:
            d["lp01"] = [[c.real, c.imag] for c in self.lp01]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LaunchState":
        amps = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in d["amplitudes"]]
        names = d.get("basis", [str(m) for m in BASIS])
        v = np.zeros(4, dtype=complex)
        for name, c in zip(names, amps):
            v[BASIS.index(M.ModeId.parse(name))] = c
        lp = d.get("lp01")
        if lp is not None:
            lp = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in lp]
        return cls(v, lp).normalized()


def pair_powers(state) -> tuple[float, float]:
    """Interference weights of the TM-pair (TM01, HE21e) and TE-pair
    (TE01, HE21o); an equal two-mode superposition gives 1."""
    c = state.amplitudes if isinstance(state, LaunchState) else np.asarray(state)
    return 2 * abs(c[0]) * abs(c[2]), 2 * abs(c[1]) * abs(c[3])


@dataclass
class HwpScan:
    alphas: np.ndarray  # rad
    freqs: np.ndarray  # 1/m
    spectra: np.ndarray  # (len(freqs), len(alphas))
    f_tm: float
    f_te: float
    band_tm: np.ndarray
    band_te: np.ndarray
    channel: str

    def fit(self):
        """Least-squares ``p cos^2 2a`` and ``q sin^2 2a`` amplitudes and
        residuals (rms / max band)."""
        c2 = np.cos(2 * self.alphas) ** 2
        s2 = np.sin(2 * self.alphas) ** 2
        out = {}
        for name, band, basis in (("tm", self.band_tm, c2), ("te", self.band_te, s2)):
            den = float(basis @ basis)
            p = float(basis @ band) / den if den else 0.0
            scale = max(float(np.max(np.abs(band))), 1e-300)
            out[name] = (p, float(np.sqrt(np.mean((band - p * basis) ** 2))) / scale)
        return out


def _band(x, dz, f):
    x = x - x.mean()
    w = np.hanning(x.size)
    n = np.arange(x.size)
    return float(abs(np.sum(x * w * np.exp(-2j * np.pi * f * n * dz))))


def hwp_scan(fiber, profile, base: LaunchState, alphas, channel: str = "transverse", transfer=None,
             threads: int = 1, dz: float = 1e-6, psf_fwhm: float = 2.5e-6, noise: NoiseModel | None = None,
             pad: int = 4, surface_coeff: float | None = None) -> HwpScan:
    """Waist spectra for each wave-plate angle.

    ``transfer`` is an optional 4x4 unitary between the plate and the waist
    (identity for a straight fiber).
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise DomainError("angle grid is empty")
    T = np.eye(4) if transfer is None else np.asarray(transfer, dtype=complex)
    if T.shape != (4, 4) or not np.allclose(T.conj().T @ T, np.eye(4), atol=1e-9):
        raise DomainError("transfer must be a 4x4 unitary")
    basis = base.to_modal_state().basis
    prop = Propagator(fiber, profile, basis)
    a_w = profile.a_min
    f_tm = float(_beat_tab(fiber, (M.HE21e, M.TM01), a_w))
    f_te = float(_beat_tab(fiber, (M.HE21o, M.TE01), a_w))

    def one(alpha):
        st = base.after_hwp(alpha).apply(T)
        tr = synthesize_rs_trace(
            fiber, profile, st.to_modal_state(), dz=dz, psf_fwhm=psf_fwhm, noise=noise,
            z_range=profile.waist_span, propagator=prop, surface_coeff=surface_coeff,
        )
        x = tr.channel(channel)
        xm = x - x.mean()
        spec = np.abs(np.fft.rfft(xm * np.hanning(x.size), n=pad * x.size))
        return spec, _band(x, tr.dz, f_tm), _band(x, tr.dz, f_te), tr.dz, x.size

    # warm the shared tables before fanning out
    one(float(alphas[0]))
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as ex:
        results = list(ex.map(one, alphas))
    spectra = np.stack([r[0] for r in results], axis=1)
    dz_, n = results[0][3], results[0][4]
    freqs = np.fft.rfftfreq(pad * n, dz_)
    return HwpScan(
        alphas, freqs, spectra, f_tm, f_te,
        np.array([r[1] for r in results]), np.array([r[2] for r in results]), channel,
    )
