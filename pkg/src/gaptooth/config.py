"""Run configuration: a single TOML file per experiment, flags may override.

Schema (all tables optional unless a command needs them):

    [profile]
    values = [1.0, 2.0]        # kappa_1..kappa_K, or instead:
    kappa0 = 1.0               # base diffusivity with
    eta = [0.1, -0.1]          # dimensionless variations
    h = 1.0                    # microscale spacing

    [geometry]
    n = 6                      # patch half-width (sites)
    b = 3                      # buffer half-width (sites)
    N = 16                     # macroscale ratio H/h (defaults to 2n+2)

    [coupling]
    gamma = 1.0
    cutoff = 2

    [experiment]               # free-form per-command parameters
    phases = [0.3926990816987241]
    patches = 8
    duration = 64.0
    macro_step = 0.5
    wavelengths = 1            # sinusoid periods across the domain
    modes = ["fig3", "fig4"]
    K_min = 2
    K_max = 12
    n_min = 4
    n_max = 12

    [output]
    dir = "out"                # GAPTOOTH_OUTDIR environment overrides
    seed = 12345
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .lattice import DiffusivityProfile, VariationProfile
from .patch import CouplingSpec, PatchGeometry

OUTDIR_ENV = "GAPTOOTH_OUTDIR"


class ConfigError(ValueError):
    """A configuration value failed validation; the message names the key."""


@dataclass
class RunConfig:
    profile: DiffusivityProfile | None
    variation: VariationProfile | None
    h: float
    geometry: PatchGeometry | None
    coupling: CouplingSpec
    experiment: dict
    output_dir: str
    seed: int
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        canon = repr(sorted(_flatten(self.raw))).encode()
        return hashlib.sha256(canon).hexdigest()[:12]

    def require_profile(self) -> DiffusivityProfile:
        if self.profile is None:
            raise ConfigError("missing [profile] section (key: profile.values)")
        return self.profile

    def require_geometry(self) -> PatchGeometry:
        if self.geometry is None:
            raise ConfigError("missing [geometry] section (keys: geometry.n, geometry.b)")
        return self.geometry


def _flatten(tree: dict, prefix: str = ""):
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield (name, repr(value))


def _build(raw: dict, overrides: dict | None = None) -> RunConfig:
    raw = dict(raw)
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        raw.setdefault(section, {})
        raw[section] = dict(raw[section])
        raw[section][key] = value

    prof_tbl = raw.get("profile", {})
    h = float(prof_tbl.get("h", 1.0))
    if h <= 0:
        raise ConfigError("profile.h must be positive")
    profile = None
    variation = None
    try:
        if "values" in prof_tbl:
            profile = DiffusivityProfile(tuple(float(v) for v in prof_tbl["values"]))
        elif "eta" in prof_tbl:
            variation = VariationProfile(
                float(prof_tbl.get("kappa0", 1.0)),
                tuple(float(e) for e in prof_tbl["eta"]),
            )
            profile = variation.profile()
    except ValueError as exc:
        raise ConfigError(f"profile.values/eta invalid: {exc}") from exc

    geometry = None
    geo_tbl = raw.get("geometry", {})
    if geo_tbl:
        try:
            geometry = PatchGeometry(
                n=int(geo_tbl["n"]),
                b=int(geo_tbl["b"]),
                h=h,
                macro_ratio=int(geo_tbl.get("N", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"geometry.{exc.args[0]} is required") from exc
        except ValueError as exc:
            raise ConfigError(f"geometry invalid: {exc}") from exc

    cpl_tbl = raw.get("coupling", {})
    try:
        coupling = CouplingSpec(
            gamma=float(cpl_tbl.get("gamma", 1.0)),
            cutoff=int(cpl_tbl.get("cutoff", 2)),
        )
    except ValueError as exc:
        raise ConfigError(f"coupling invalid: {exc}") from exc

    out_tbl = raw.get("output", {})
    output_dir = os.environ.get(OUTDIR_ENV) or str(out_tbl.get("dir", "out"))
    seed = int(out_tbl.get("seed", 12345))
    return RunConfig(
        profile=profile,
        variation=variation,
        h=h,
        geometry=geometry,
        coupling=coupling,
        experiment=dict(raw.get("experiment", {})),
        output_dir=output_dir,
        seed=seed,
        raw=raw,
    )


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Parse a TOML run configuration; CLI flag overrides win over file keys."""
    raw: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    return _build(raw, overrides)
