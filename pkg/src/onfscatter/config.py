"""Run configuration: JSON loading, defaults, hashing and object builders.

Units at this boundary are the plotting units: nm for radii, mm for z,
um for sampling pitch and blur, mm^-1 for spatial frequency, degrees for
wave-plate angles.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import DataError, DomainError
from .modes import FiberSpec
from .profile import TaperProfile, profile_from_csv
from .propagation import ModalState, NoiseModel

DEFAULTS = {
    "fiber": {"n_core": 1.45, "n_clad": 1.0, "wavelength_nm": 795.0, "core_clad_ratio": 1.8 / 25.0},
    "profile": {"a0_um": 62.5, "omega_mrad": 1.0, "aw_nm": 360.0, "Lw_mm": 5.0, "neck_mm": 2.0},
    "launch": {"basis": ["HE21e", "TM01"], "amplitudes": [[1.0, 0.0], [1.0, 0.0]]},
    "synthesis": {
        "dz_um": 1.0,
        "bulk_coeff": 1.0,
        "surface_coeff": None,
        "psf_fwhm_um": 2.5,
        "noise": {"sigma": 0.05, "floor": 0.01},
        "z_range_mm": None,
    },
    "analysis": {
        "window_mm": 0.5,
        "hop_mm": None,
        "delta_n": 0.005,
        "channel": "transverse",
        "pair": None,
        "a_guess_nm": None,
        "snr": 5.0,
    },
    "hwp": {"alpha_deg": [0.0, 90.0, 2.0], "channel": "transverse"},
    "seed": 0,
}


class ConfigError(DomainError):
    """Invalid or inconsistent run configuration (exit code 2)."""


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        user = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    cfg = _merge(cfg, user)
    prof = cfg["profile"]
    if "csv" in prof:
        csv_path = Path(prof["csv"])
        if not csv_path.is_absolute():
            csv_path = p.parent / csv_path
        if not csv_path.is_file():
            raise ConfigError(f"profile CSV {csv_path} not found")
        prof["csv"] = str(csv_path)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def build_fiber(cfg: dict) -> FiberSpec:
    try:
        return FiberSpec.from_dict(cfg["fiber"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad fiber section: {exc}") from exc


def build_profile(cfg: dict):
    prof = cfg["profile"]
    if "csv" in prof:
        waist = prof.get("waist_mm")
        span = None if waist is None else (waist[0] * 1e-3, waist[1] * 1e-3)
        try:
            text = Path(prof["csv"]).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read profile CSV: {exc}") from exc
        return profile_from_csv(text, span)
    try:
        return TaperProfile.from_dict(prof)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"bad profile section: {exc}") from exc


def profile_factory(cfg: dict):
    """a_w -> profile with the configured shape, for pair identification."""
    prof = cfg["profile"]
    if "csv" in prof:
        return None
    base = TaperProfile.from_dict(prof)
    return base.with_waist


def build_launch(cfg: dict) -> ModalState:
    try:
        return ModalState.from_dict(cfg["launch"])
    except DataError as exc:
        raise ConfigError(str(exc)) from exc


def build_noise(cfg: dict, seed: int):
    n = cfg["synthesis"].get("noise")
    if not n:
        return None
    return NoiseModel(sigma=float(n.get("sigma", 0.05)), floor=float(n.get("floor", 0.01)), seed=int(seed))
