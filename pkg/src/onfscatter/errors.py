"""Exception hierarchy shared by all onfscatter modules."""

from __future__ import annotations


class OnfError(Exception):
    """Base class for every error raised by onfscatter."""


class DomainError(OnfError, ValueError):
    """An argument lies outside the domain of the operation."""


class BelowCutoffError(OnfError):
    """The requested mode is not guided at this radius."""

    def __init__(self, mode, a, v=None, v_cutoff=None):
        self.mode = mode
        self.a = a
        self.v = v
        self.v_cutoff = v_cutoff
        msg = f"{mode} is below cutoff at a = {a * 1e9:.3f} nm"
        if v is not None and v_cutoff is not None:
            msg += f" (V = {v:.5f} <= V_c = {v_cutoff:.5f})"
        super().__init__(msg)


class RootCountError(OnfError):
    """The bracket scan found fewer roots than the requested radial order."""


class NoCutoffError(OnfError):
    """The mode is guided at every radius (HE11)."""


class GeometryError(OnfError, ValueError):
    """Inconsistent taper geometry."""


class CutoffCrossedError(OnfError):
    """A mode reached cutoff before the requested propagation distance."""

    def __init__(self, mode, z):
        self.mode = mode
        self.z = z
        super().__init__(f"{mode} reaches cutoff at z = {z * 1e3:.6f} mm")


class NoBeatDetectedError(OnfError):
    """No spectral peak exceeded the SNR threshold."""


class AmbiguousPairError(OnfError):
    """Two candidate mode pairs explain a ridge about equally well."""

    def __init__(self, candidates):
        self.candidates = candidates
        desc = ", ".join(f"{p[0]}:{p[1]} (residual {r:.4g})" for p, r in candidates)
        super().__init__(f"ambiguous mode pair: {desc}")


class InversionError(OnfError):
    """The beat frequency cannot be produced by the pair in the search range."""


class BracketError(InversionError):
    """The radius bracket is not monotonic for the requested pair."""


class DataError(OnfError, ValueError):
    """Malformed input data (CSV/JSON)."""
