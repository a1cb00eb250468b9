"""Vector modes, taper propagation and Rayleigh-scattering diagnostics for
optical nanofibers."""

from .modes import (
    GLASS_AIR_795,
    SM1500,
    FiberSpec,
    ModeId,
    ModeSolution,
    core_escape_radius,
    cutoff_radius,
    cutoff_v,
    field_profile,
    list_guided_modes,
    solve_mode,
    surface_intensity,
    v_number,
)
from .profile import TabulatedProfile, TaperProfile
from .propagation import ModalState, NoiseModel, Propagator, RsTrace, synthesize_rs_trace
from .spectral import identify_pair, invert_radius, pair_beat_frequency, spectrogram, waist_peak
from .modecontrol import LaunchState, hwp_matrix, hwp_scan, pair_powers

__version__ = "0.1.0"
