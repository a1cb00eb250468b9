"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 analysis failure (no peak, ambiguous pair, inversion failure).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import modes as M
from . import svg
from .config import (
    ConfigError,
    build_fiber,
    build_launch,
    build_noise,
    build_profile,
    config_hash,
    load_config,
    profile_factory,
)
from .errors import (
    AmbiguousPairError,
    DataError,
    DomainError,
    InversionError,
    NoBeatDetectedError,
    OnfError,
)
from .modecontrol import LaunchState, hwp_scan
from .propagation import RsTrace, synthesize_rs_trace
from .spectral import (
    BOXCAR_FWHM,
    BeatPeak,
    beat_curve,
    identify_pair,
    invert_radius,
    pair_name,
    parse_pair,
    ridge_from_trace,
    spectrogram,
    waist_peaks,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ANALYSIS = 0, 2, 3, 4


class UsageError(ConfigError):
    pass


class Run:
    """Output directory plus the hash stamped on every artifact."""

    def __init__(self, out: str, cfg: dict):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.hash = config_hash(cfg)

    def write(self, name: str, text: str, meta: dict | None = None):
        (self.out / name).write_text(text)
        if name.endswith(".csv"):
            side = {"config_sha256": self.hash, "seed": self.cfg.get("seed")}
            if meta:
                side.update(meta)
            (self.out / (name[:-4] + ".json")).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    def write_json(self, name: str, payload: dict):
        payload = dict(payload)
        payload["config_sha256"] = self.hash
        payload["seed"] = self.cfg.get("seed")
        (self.out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_svg(self, name: str, text: str):
        (self.out / name).write_text(text)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join("" if (isinstance(v, float) and not np.isfinite(v)) else (f"{v:.17g}" if isinstance(v, float) else str(v)) for v in r))
    return "\n".join(lines) + "\n"


def _range(spec, name):
    if spec is None:
        return None
    start, stop, n = float(spec[0]), float(spec[1]), int(float(spec[2]))
    if n < 1 or stop < start or (n > 1 and stop == start) or start < 0:
        raise UsageError(f"empty or invalid {name} range")
    return np.linspace(start, stop, n)


# ---------------------------------------------------------------------------
# subcommands


def cmd_dispersion(args, cfg, run):
    fiber = build_fiber(cfg)
    kna = fiber.k * fiber.na
    if args.a_nm is not None and args.v is not None:
        raise UsageError("give either --a-nm or --v, not both")
    if args.v is not None:
        v = _range(args.v, "V")
        a = v / kna
    else:
        a = _range(args.a_nm or [100, 1000, 181], "radius") * 1e-9
        v = a * kna
    if np.any(a <= 0):
        raise UsageError("radii must be positive")
    modes = [m for m in M.list_guided_modes(fiber, float(a[-1])) if m.parity != "odd"]
    cols = {m: np.full(a.size, np.nan) for m in modes}
    for i, ai in enumerate(a):
        for m in modes:
            if M.is_guided(fiber, m, ai):
                try:
                    cols[m][i] = M.solve_neff(fiber, ai, m)
                except OnfError:
                    pass
    header = ["a_nm", "V"] + [m.label for m in modes]
    rows = [[float(a[i] * 1e9), float(v[i])] + [float(cols[m][i]) for m in modes] for i in range(a.size)]
    run.write("dispersion.csv", _csv(header, rows), {"fiber": fiber.to_dict()})
    series = [(v, cols[m], m.label) for m in modes]
    run.write_svg(
        "dispersion.svg",
        svg.line_plot(series, "V  (a = V / %.4g nm^-1)" % (kna * 1e-9), "n_eff", "Effective index", run.hash),
    )
    return 0


def cmd_cutoffs(args, cfg, run):
    fiber = M.SM1500 if args.preset == "sm1500" else build_fiber(cfg)
    v_max = args.v_max
    rows = []
    for fam, nu_range in (("TE", [0]), ("TM", [0]), ("HE", range(1, 8)), ("EH", range(1, 8))):
        for nu in nu_range:
            for m in range(1, 6):
                mode = M.ModeId(fam, nu, m, "none" if fam in ("TE", "TM") else "even")
                vc = M.cutoff_v(fiber, mode)
                if vc > v_max:
                    break
                rows.append([mode.label, float(vc), float(vc / (fiber.k * fiber.na) * 1e9)])
    rows.sort(key=lambda r: (r[1], r[0]))
    run.write("cutoffs.csv", _csv(["mode", "V_c", "a_c_nm"], rows), {"fiber": fiber.to_dict()})
    esc = M.core_escape_radius(fiber)
    run.write_json("core_escape.json", {"core_escape_um": esc * 1e6, "fiber": fiber.to_dict()})
    for r in rows:
        print(f"{r[0]:6s}  V_c = {r[1]:.6f}  a_c = {r[2]:.3f} nm")
    print(f"core escape cladding radius: {esc * 1e6:.3f} um")
    return 0


def cmd_profile(args, cfg, run):
    prof = build_profile(cfg)
    pitch = args.pitch_um * 1e-6
    text = prof.to_csv(pitch)
    meta = {"profile": prof.to_dict()} if hasattr(prof, "to_dict") else {}
    run.write("profile.csv", text, meta)
    if hasattr(prof, "to_dict"):
        run.write_json("profile.json", prof.to_dict())
    z = np.linspace(0, prof.length, 4001)
    run.write_svg(
        "profile.svg",
        svg.line_plot([(z * 1e3, prof.radius_at(z) * 1e6, "a(z)")], "z (mm)", "radius (um)", "Taper profile", run.hash,
                      markers=[b * 1e3 for b in prof.breakpoints]),
    )
    return 0


def cmd_beat(args, cfg, run):
    fiber = build_fiber(cfg)
    prof = build_profile(cfg)
    pair = parse_pair(args.pair or cfg["analysis"].get("pair") or "HE21e:TM01")
    bc = beat_curve(fiber, pair, prof, n=args.points)
    rows = [[float(bc.z[i] * 1e3), float(bc.a[i] * 1e9), float(bc.freq[i] * 1e-3)] for i in range(bc.z.size)]
    run.write("beat.csv", _csv(["z_mm", "a_nm", "beat_per_mm"], rows),
              {"pair": pair_name(pair), "cutoff_z_mm": [z * 1e3 for z in bc.cutoff_z], "truncated": bc.truncated})
    run.write_svg("beat_z.svg", svg.line_plot([(bc.z * 1e3, bc.freq * 1e-3, pair_name(pair))], "z (mm)",
                                              "1/z_b (mm^-1)", "Beat frequency vs position", run.hash,
                                              markers=[z * 1e3 for z in bc.cutoff_z]))
    half = bc.z <= prof.z_center
    run.write_svg("beat_a.svg", svg.line_plot([(bc.a[half] * 1e9, bc.freq[half] * 1e-3, pair_name(pair))], "a (nm)",
                                              "1/z_b (mm^-1)", "Beat frequency vs radius", run.hash))
    if bc.truncated:
        print(f"{pair_name(pair)} truncated at cutoff, z = " + ", ".join(f"{z * 1e3:.4f}" for z in bc.cutoff_z) + " mm")
    return 0


def cmd_synth(args, cfg, run):
    fiber = build_fiber(cfg)
    prof = build_profile(cfg)
    launch = build_launch(cfg)
    syn = cfg["synthesis"]
    zr = syn.get("z_range_mm")
    trace = synthesize_rs_trace(
        fiber, prof, launch,
        dz=float(syn["dz_um"]) * 1e-6,
        bulk_coeff=float(syn["bulk_coeff"]),
        surface_coeff=None if syn.get("surface_coeff") is None else float(syn["surface_coeff"]),
        psf_fwhm=float(syn["psf_fwhm_um"]) * 1e-6,
        noise=build_noise(cfg, cfg["seed"]),
        z_range=None if zr is None else (zr[0] * 1e-3, zr[1] * 1e-3),
    )
    meta = dict(trace.metadata)
    meta["waist_mm"] = [prof.waist_span[0] * 1e3, prof.waist_span[1] * 1e3]
    meta["z_center_mm"] = prof.z_center * 1e3
    run.write("trace.csv", trace.to_csv(), meta)
    run.write_svg("trace.svg", svg.line_plot(
        [(trace.z * 1e3, trace.p_trans, "transverse"), (trace.z * 1e3, trace.p_long, "longitudinal")],
        "z (mm)", "RS power (arb.)", "Synthetic scattering trace", run.hash))
    return 0


def _load_trace(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"trace file {path} not found")
    text = p.read_text()
    side = p.with_suffix(".json")
    meta = {}
    if side.is_file():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"trace sidecar is not valid JSON: {exc}") from exc
    return RsTrace.from_csv(text, meta)


def cmd_analyze(args, cfg, run):
    fiber = build_fiber(cfg)
    prof = build_profile(cfg)
    an = cfg["analysis"]
    trace = _load_trace(args.trace)
    channel = args.channel or an["channel"]
    waist = (
        (args.waist_mm[0] * 1e-3, args.waist_mm[1] * 1e-3) if args.waist_mm
        else tuple(w * 1e-3 for w in trace.metadata["waist_mm"]) if "waist_mm" in trace.metadata
        else prof.waist_span
    )
    window = float(an["window_mm"]) * 1e-3
    hop = None if an.get("hop_mm") is None else float(an["hop_mm"]) * 1e-3
    spec = spectrogram(trace, window, hop, channel)
    rows = [[float(f * 1e-3)] + [float(v) for v in spec.magnitude[i]] for i, f in enumerate(spec.freqs)]
    run.write("spectrogram.csv", _csv(["freq_per_mm"] + [f"z{j}" for j in range(spec.z_centers.size)], rows),
              {"z_centers_mm": (spec.z_centers * 1e3).tolist(), "window_mm": spec.window_length * 1e3,
               "hop_mm": spec.hop * 1e3, "channel": channel})
    keep = spec.freqs <= min(spec.freqs[-1], 200e3)
    run.write_svg("spectrogram.svg", svg.heatmap(spec.magnitude[keep], spec.z_centers * 1e3, spec.freqs[keep] * 1e-3,
                                                 "z (mm)", "1/z_b (mm^-1)", "Spectrogram", run.hash))
    peaks = waist_peaks(trace, waist, channel, snr_min=float(an.get("snr", 5.0)))
    pair_text = args.pair or an.get("pair")
    ident = None
    if pair_text:
        pair = parse_pair(pair_text)
    else:
        factory = profile_factory(cfg)
        if factory is None:
            raise UsageError("pair identification needs an analytic profile; pass --pair")
        zc = 0.5 * (waist[0] + waist[1])
        s, ridge, _ = ridge_from_trace(trace, _Centered(prof, zc, waist), channel, window, hop)
        ident = identify_pair(s, ridge, fiber, factory)
        pair = ident.pair
    guess = an.get("a_guess_nm")
    a_guess = guess * 1e-9 if guess is not None else (ident.a_w if ident else None)
    est = invert_radius(peaks[0], pair, fiber, float(an["delta_n"]), a_guess=a_guess)
    out = est.to_dict()
    out["peak"] = peaks[0].to_dict()
    out["peaks"] = [p.to_dict() for p in peaks]
    if ident is not None:
        out["identification"] = {
            "ratio": ident.ratio,
            "fits": [{"pair": pair_name(f.pair), "aw_nm": f.a_w * 1e9, "residual_per_mm": f.residual * 1e-3} for f in ident.fits],
        }
    run.write_json("radius.json", out)
    print(f"pair {pair_name(pair)}: a_w = {est.a_w * 1e9:.2f} nm "
          f"(index {est.sigma_index * 1e9:.2f}, stat {est.sigma_stat * 1e9:.3f}, uniformity {est.uniformity_bound * 1e9:.3f} nm)")
    return 0


class _Centered:
    """View of a profile whose waist centre is taken from the trace."""

    def __init__(self, prof, zc, waist):
        self._p = prof
        self.z_center = zc
        self.waist_span = waist

    def __getattr__(self, name):
        return getattr(self._p, name)


def cmd_hwpscan(args, cfg, run):
    fiber = build_fiber(cfg)
    prof = build_profile(cfg)
    h = cfg["hwp"]
    a0, a1, step = (args.alpha_deg or h["alpha_deg"])
    if step <= 0 or a1 < a0:
        raise UsageError("bad angle grid")
    alphas = np.radians(np.arange(a0, a1 + 0.5 * step, step))
    base = LaunchState.from_dict(h["base"]) if "base" in h else LaunchState.pair(M.TM01, M.HE21e)
    syn = cfg["synthesis"]
    channel = args.channel or h["channel"]
    scan = hwp_scan(fiber, prof, base, alphas, channel=channel, threads=args.threads,
                    dz=float(syn["dz_um"]) * 1e-6, psf_fwhm=float(syn["psf_fwhm_um"]) * 1e-6,
                    noise=build_noise(cfg, cfg["seed"]))
    deg = np.round(np.degrees(alphas), 9)
    rows = [[float(f * 1e-3)] + [float(v) for v in scan.spectra[i]] for i, f in enumerate(scan.freqs)]
    run.write("hwpscan.csv", _csv(["freq_per_mm"] + [f"a{d:g}" for d in deg], rows), {"alpha_deg": deg.tolist(), "channel": channel})
    rows = [[float(deg[i]), float(scan.band_tm[i]), float(scan.band_te[i])] for i in range(deg.size)]
    fit = scan.fit()
    run.write("bands.csv", _csv(["alpha_deg", "band_tm", "band_te"], rows),
              {"f_tm_per_mm": scan.f_tm * 1e-3, "f_te_per_mm": scan.f_te * 1e-3,
               "fit_tm": list(fit["tm"]), "fit_te": list(fit["te"])})
    keep = scan.freqs <= 150e3
    run.write_svg("hwpscan.svg", svg.heatmap(scan.spectra[keep], deg, scan.freqs[keep] * 1e-3, "HWP angle (deg)",
                                             "1/z_b (mm^-1)", "Wave-plate scan", run.hash))
    run.write_svg("bands.svg", svg.line_plot([(deg, scan.band_tm, "TM pair"), (deg, scan.band_te, "TE pair")],
                                             "HWP angle (deg)", "band amplitude", "Band powers", run.hash))
    return 0


def cmd_fit_radius(args, cfg, run):
    fiber = build_fiber(cfg)
    pair = parse_pair(args.pair or cfg["analysis"].get("pair") or "HE21e:TM01")
    length = args.waist_length_mm * 1e-3
    tl = BOXCAR_FWHM / length
    fwhm = args.fwhm_per_mm * 1e3 if args.fwhm_per_mm is not None else tl
    unc = args.center_uncertainty_per_mm * 1e3 if args.center_uncertainty_per_mm is not None else 0.0
    peak = BeatPeak(args.center_per_mm * 1e3, fwhm, float("inf"), unc, tl, length)
    guess = args.a_guess_nm * 1e-9 if args.a_guess_nm is not None else None
    est = invert_radius(peak, pair, fiber, args.delta_n if args.delta_n is not None else float(cfg["analysis"]["delta_n"]),
                        a_guess=guess)
    run.write_json("radius.json", est.to_dict())
    d = est.to_dict()
    print(f"a_w = {d['aw_nm']:.2f} nm, sigma_index = {d['sigma_index_nm']:.2f} nm, "
          f"uniformity = {d['uniformity_nm']:.3f} nm (raw {d['uniformity_raw_nm']:.3f} nm)")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onfscatter", description="Nanofiber mode and scattering toolkit")
    ap.add_argument("--config", help="run configuration JSON")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, help="noise seed (overrides config)")
    ap.add_argument("--threads", type=int, default=1, help="worker cap")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("dispersion", help="n_eff curves")
    p.add_argument("--a-nm", nargs=3, type=float, metavar=("START", "STOP", "N"))
    p.add_argument("--v", nargs=3, type=float, metavar=("START", "STOP", "N"))
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("cutoffs", help="mode cutoffs and core escape radius")
    p.add_argument("--v-max", type=float, default=8.0)
    p.add_argument("--preset", choices=["config", "sm1500"], default="config")
    p.set_defaults(func=cmd_cutoffs)

    p = sub.add_parser("profile", help="tabulate the taper profile")
    p.add_argument("--pitch-um", type=float, default=10.0)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("beat", help="beat frequency along the profile")
    p.add_argument("--pair")
    p.add_argument("--points", type=int, default=4001)
    p.set_defaults(func=cmd_beat)

    p = sub.add_parser("synth", help="synthesize a scattering trace")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="spectrogram, waist peak and radius")
    p.add_argument("trace", help="trace CSV written by synth")
    p.add_argument("--pair")
    p.add_argument("--channel", choices=["transverse", "longitudinal", "total"])
    p.add_argument("--waist-mm", nargs=2, type=float)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("hwpscan", help="half-wave-plate angle scan")
    p.add_argument("--alpha-deg", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
    p.add_argument("--channel", choices=["transverse", "longitudinal", "total"])
    p.set_defaults(func=cmd_hwpscan)

    p = sub.add_parser("fit-radius", help="invert a measured beat peak")
    p.add_argument("--center-per-mm", type=float, required=True)
    p.add_argument("--fwhm-per-mm", type=float)
    p.add_argument("--center-uncertainty-per-mm", type=float)
    p.add_argument("--waist-length-mm", type=float, default=5.0)
    p.add_argument("--pair")
    p.add_argument("--delta-n", type=float)
    p.add_argument("--a-guess-nm", type=float)
    p.set_defaults(func=cmd_fit_radius)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise UsageError("seed must be non-negative")
            cfg["seed"] = args.seed
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        run = Run(args.out, cfg)
        return args.func(args, cfg, run)
    except (NoBeatDetectedError, AmbiguousPairError, InversionError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DomainError, OnfError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
