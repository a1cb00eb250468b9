"""Independent reference checks with frozen values.

The textbook characteristic equations are re-implemented here in mpmath
(30 digits) and solved by plain bisection; nothing is shared with the
package's pole-free residuals or u-space scan.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from scipy.special import jv, jvp, kv, kvp

from onfscatter import modes as M
from onfscatter.profile import TaperProfile
from onfscatter.propagation import Propagator, FWHM_TO_SIGMA
from onfscatter.spectral import BOXCAR_FWHM

mp.mp.dps = 30
LAM = mp.mpf("795e-9")
K0 = 2 * mp.pi / LAM
N1 = mp.mpf("1.45")
N2 = mp.mpf(1)

# brute-force mpmath scan (3000 n_eff points, 110 bisections), frozen
FROZEN_NEFF = {
    (450e-9, "TE"): 1.19206882938455,
    (450e-9, "TM"): 1.14802463836548,
    (450e-9, 1): 1.3356912379406,
    (450e-9, 2): 1.14703159923936,
    (360e-9, "TE"): 1.09197939965585,
    (360e-9, "TM"): 1.05524409151398,
    (360e-9, 1): 1.2844604662218,
    (360e-9, 2): 1.02937694506865,
}
MODE_OF = {"TE": M.TE01, "TM": M.TM01, 1: M.HE11e, 2: M.HE21e}


def _uw(a, n):
    return a * K0 * mp.sqrt(N1**2 - n**2), a * K0 * mp.sqrt(n**2 - N2**2)


def _textbook(kind, a, n):
    u, w = _uw(a, n)
    if kind == "TE":
        return mp.besselj(1, u) / (u * mp.besselj(0, u)) + mp.besselk(1, w) / (w * mp.besselk(0, w))
    if kind == "TM":
        return N1**2 * mp.besselj(1, u) / (u * mp.besselj(0, u)) + N2**2 * mp.besselk(1, w) / (w * mp.besselk(0, w))
    nu = kind
    x = mp.besselj(nu, u, derivative=1) / (u * mp.besselj(nu, u))
    y = mp.diff(lambda t: mp.besselk(nu, t), w) / (w * mp.besselk(nu, w))
    return (x + y) * (x + (N2 / N1) ** 2 * y) - nu**2 * (n / N1) ** 2 * (1 / u**2 + 1 / w**2) ** 2


def _bisect(fn, lo, hi, iters=60):
    flo = fn(lo)
    assert mp.sign(flo) != mp.sign(fn(hi))
    for _ in range(iters):
        mid = (lo + hi) / 2
        fm = fn(mid)
        if mp.sign(fm) == mp.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2


@pytest.mark.parametrize("key", sorted(FROZEN_NEFF, key=str))
def test_neff_against_textbook_equation(fiber, key):
    a, kind = key
    ref = FROZEN_NEFF[key]
    am = mp.mpf(a)
    root = _bisect(lambda n: _textbook(kind, am, n), mp.mpf(ref) - mp.mpf("1e-9"), mp.mpf(ref) + mp.mpf("1e-9"))
    assert float(root) == pytest.approx(ref, abs=2e-14)
    assert M.solve_neff(fiber, a, MODE_OF[kind]) == pytest.approx(float(root), abs=1e-11)


@pytest.mark.parametrize(
    "nu,x",
    [(0, 0.1), (0, 2.404825557695773), (0, 7.3), (1, 0.5), (1, 3.8317), (1, 12.0), (2, 1.0), (2, 5.1356),
     (3, 0.2), (3, 9.9)],
)
def test_bessel_j_against_mpmath(nu, x):
    assert jv(nu, x) == pytest.approx(float(mp.besselj(nu, x)), abs=1e-12)
    assert jvp(nu, x) == pytest.approx(float(mp.besselj(nu, x, derivative=1)), abs=1e-12)


@pytest.mark.parametrize("nu,x", [(0, 0.05), (0, 1.0), (1, 0.3), (1, 4.0), (2, 2.0), (2, 20.0), (3, 0.7), (3, 8.0),
                                  (1, 30.0), (0, 45.0)])
def test_bessel_k_against_mpmath(nu, x):
    ref = float(mp.besselk(nu, x))
    assert kv(nu, x) == pytest.approx(ref, rel=1e-12)
    assert kvp(nu, x) == pytest.approx(float(-(mp.besselk(nu - 1, x) + mp.besselk(nu + 1, x)) / 2), rel=1e-12)


def test_te_cutoff_is_first_j0_zero(fiber):
    # 200 bisections of J0 on [2, 3]
    z = _bisect(lambda x: mp.besselj(0, x), mp.mpf(2), mp.mpf(3), iters=200)
    assert float(z) == pytest.approx(2.404825557695773, abs=1e-15)
    assert M.cutoff_v(fiber, M.TE01) == pytest.approx(float(z), abs=1e-12)


def test_he21_cutoff_against_mpmath(fiber):
    eps = N1**2 / N2**2
    vc = _bisect(lambda v: (eps + 1) * mp.besselj(1, v) - v * mp.besselj(2, v), mp.mpf("2.5"), mp.mpf("3.2"), iters=200)
    assert float(vc) == pytest.approx(2.76081, abs=1e-5)
    assert M.cutoff_v(fiber, M.HE21e) == pytest.approx(float(vc), abs=1e-10)
    a_c = float(vc) * 795e-9 / (2 * math.pi * 1.05)
    assert M.cutoff_radius(fiber, M.HE21e) == pytest.approx(a_c, rel=1e-10)
    assert a_c == pytest.approx(332.69e-9, abs=0.01e-9)


def test_phase_against_direct_solve_sum(fiber):
    """Midpoint sum of direct-solve beta (no table) on a 10 um grid."""
    prof = TaperProfile(a_w=400e-9, L_w=1e-3, omega=3e-3, neck_scale=0.5e-3)
    prop = Propagator(fiber, prof, [M.TE01, M.HE11e])
    z0, z1 = prof.waist_span[0] - 1e-3, prof.waist_span[1] + 0.5e-3
    h = (z1 - z0) / 250
    zm = z0 + h * (np.arange(250) + 0.5)
    ref = h * sum(M.solve_mode(fiber, float(a), M.TE01).beta for a in prof.radius_at(zm))
    assert prop.accumulated_phase(M.TE01, z1, z0) == pytest.approx(ref, rel=1e-6)


def test_gaussian_mtf_closed_form(fiber):
    from scipy.ndimage import gaussian_filter1d

    dz = 1e-6
    fwhm = 2.5e-6
    sigma = fwhm * FWHM_TO_SIGMA
    z = np.arange(8192) * dz
    for f in (24.5e3, 75.6e3, 150e3):
        f_bin = round(f * z.size * dz) / (z.size * dz)
        x = np.cos(2 * np.pi * f_bin * z)
        y = gaussian_filter1d(x, sigma / dz, mode="wrap", truncate=8.0)
        gain = np.max(np.abs(np.fft.rfft(y))) / np.max(np.abs(np.fft.rfft(x)))
        assert gain == pytest.approx(math.exp(-2 * (math.pi * sigma * f_bin) ** 2), rel=1e-3)


def test_boxcar_fwhm_constant():
    # |sinc(x)|^2 = 1/2 at x = 0.442946470689452
    x = _bisect(lambda t: (mp.sin(mp.pi * t) / (mp.pi * t)) ** 2 - mp.mpf("0.5"), mp.mpf("0.3"), mp.mpf("0.6"), iters=200)
    assert BOXCAR_FWHM == pytest.approx(2 * float(x), abs=1e-14)


def test_windowed_cosine_dft():
    n, dz = 4096, 1e-6
    f0 = 37.25e3
    x = np.cos(2 * np.pi * f0 * np.arange(n) * dz)
    spec = np.abs(np.fft.rfft(x * np.hanning(n), 8 * n))
    f = np.fft.rfftfreq(8 * n, dz)
    assert abs(f[np.argmax(spec)] - f0) < 1 / (8 * n * dz)
