"""Sectioned key-value run configuration in IO units.

Numeric keys carry their unit as a suffix (``tau_r_ps``, ``power_uW``,
``n_tr_cm3``, ``s_cm_per_s``); values are converted to SI here and nowhere
else. Two presets ship with the package: ``passivated`` and
``unpassivated``.
"""

from __future__ import annotations

import configparser
import difflib
import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import units
from .dynamics import IntegratorConfig, Method
from .model import GainKind, GainModel, LaserParams, ParameterError, PumpDrive, PumpKind
from .surface import SurfaceParams


class ConfigError(ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


# key -> (unit suffix or None for dimensionless, kind)
_LASER_KEYS = {
    "tau_r_ps": "ps", "tau_pc_nr_ps": "ps", "tau_p_ps": "ps", "q_factor": None,
    "f_cav": None, "f_pc": None, "gamma_conf": None, "eta": None,
    "tau_ef_ps": "ps", "tau_er_ps": "ps", "tau_enr_ps": "ps",
    "v_a_um3": "um3", "v_mode_um3": "um3", "v_mode_lambda_n3": None, "n_index": None,
    "lambda_nm": "nm", "n_tr_cm3": "cm3", "gain_kind": str, "g0_per_s": "per_s",
    "n_floor_cm3": "cm3",
}
_LASER_REQUIRED = ("tau_r_ps", "tau_pc_nr_ps", "f_cav", "f_pc", "gamma_conf", "eta",
                   "tau_ef_ps", "lambda_nm", "n_tr_cm3", "v_a_um3", "g0_per_s")
_PUMP_KEYS = {"kind": str, "power_uW": "uW", "pulse_fwhm_ps": "ps", "rep_period_ns": "ns",
              "pulse_delay_ps": "ps"}
_SURFACE_KEYS = {"d_cm2_per_s": "cm2_per_s", "s_cm_per_s": "cm_per_s", "radius_nm": "nm",
                 "lattice_nm": "nm", "temperature_K": "K", "m_eff_ratio": None}
_INTEGRATOR_KEYS = {"rel_tol": None, "abs_tol_cm3": "cm3", "max_step_ps": "ps", "method": str}
_FIT_KEYS = {"model": str, "region": str, "observable": str, "free": str,
             "t_end_ps": "ps", "dt_ps": "ps", "noise_rel": None, "irf_fwhm_ps": "ps",
             "n_decay": int, "rise": str, "max_iter": int,
             "tau_bulk_ps": "ps", "tau_pc_ps": "ps", "tau_cav_ps": "ps"}
_RUN_KEYS = {"label": str, "seed": int}

SECTIONS = {"run": _RUN_KEYS, "laser": _LASER_KEYS, "pump": _PUMP_KEYS,
            "surface": _SURFACE_KEYS, "integrator": _INTEGRATOR_KEYS, "fit": _FIT_KEYS}

PRESETS = ("passivated", "unpassivated")


@dataclass(frozen=True)
class FitSettings:
    model: str = "rate"
    region: str = "mirror"
    observable: str = "pl"
    free: tuple = ("tau_ef", "tau_pc_nr")
    t_end: float = 300e-12
    dt: float = 0.5e-12
    noise_rel: float = 0.05
    irf_fwhm: float = 0.0
    n_decay: int = 1
    rise: bool = True
    max_iter: int = 200
    tau_bulk: float | None = None
    tau_pc: float | None = None
    tau_cav: float | None = None


@dataclass(frozen=True)
class RunConfig:
    laser: LaserParams
    pump: PumpDrive
    surface: SurfaceParams
    integrator: IntegratorConfig
    fit: FitSettings
    label: str = ""
    seed: int = 0
    digest: str = ""
    values: dict = field(default_factory=dict)  # raw IO-unit values by "section.key"


def _locate(text, section, key):
    """(line, column) of ``key`` inside ``[section]``, 1-based, or (None, None)."""
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            continue
        if current == section:
            m = re.match(r"(\s*)(" + re.escape(key) + r")\s*[=:]", raw)
            if m:
                return i, len(m.group(1)) + 1
    return None, None


def _section_line(text, section):
    for i, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == f"[{section}]":
            return i
    return None


def _convert(text, section, key, raw, kind):
    line, col = _locate(text, section, key)
    if kind is str:
        return raw.strip()
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}", line, col)
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}", line, col)
    if math.isnan(value):
        raise ConfigError(f"[{section}] {key}: NaN is not allowed", line, col)
    return value


def _suggest(key, allowed):
    close = difflib.get_close_matches(key, allowed, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def parse_config(text: str) -> RunConfig:
    """Parse configuration text into validated domain objects."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None, strict=True)
    parser.optionxform = str  # keys are case-sensitive (temperature_K)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno, 1)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse {exc.errors[0][1] if exc.errors else ''}".strip(),
                          lineno, 1)

    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(
                f"unknown section [{section}]{_suggest(section, SECTIONS)}; "
                f"expected one of {sorted(SECTIONS)}", _section_line(text, section), 1)
        allowed = SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                line, col = _locate(text, section, key)
                raise ConfigError(f"[{section}] unknown key {key!r}{_suggest(key, allowed)}",
                                  line, col)
            values[f"{section}.{key}"] = _convert(text, section, key, raw, allowed[key])

    missing = [k for k in _LASER_REQUIRED if f"laser.{k}" not in values]
    if "laser.tau_p_ps" not in values and "laser.q_factor" not in values:
        missing.append("tau_p_ps | q_factor")
    if "laser.v_mode_um3" not in values and "laser.v_mode_lambda_n3" not in values:
        missing.append("v_mode_um3 | v_mode_lambda_n3 + n_index")
    if missing:
        raise ConfigError("missing required [laser] keys: " + ", ".join(missing))

    def si(section, key, default=None):
        full = f"{section}.{key}"
        if full not in values:
            return default
        unit = SECTIONS[section][key]
        v = values[full]
        return units.to_si(v, unit) if isinstance(unit, str) and unit in units._SUFFIXES \
            else v

    def guard(section, key, build):
        try:
            return build()
        except ParameterError as exc:
            k = _io_key(section, exc.name)
            line, col = _locate(text, section, k) if k else (None, None)
            raise ConfigError(f"[{section}] {k or exc.name}: {exc}", line, col) from None
        except ValueError as exc:
            line, col = _locate(text, section, key) if key else (None, None)
            raise ConfigError(f"[{section}] {exc}", line, col) from None

    lam = si("laser", "lambda_nm")
    if "laser.tau_p_ps" in values and "laser.q_factor" in values:
        line, col = _locate(text, "laser", "q_factor")
        raise ConfigError("[laser] give either tau_p_ps or q_factor, not both", line, col)
    if "laser.q_factor" in values:
        q = values["laser.q_factor"]
        if not q > 0:
            line, col = _locate(text, "laser", "q_factor")
            raise ConfigError(f"[laser] q_factor: must be > 0, got {q}", line, col)
        tau_p = units.ring_down_time(q, lam) if lam and lam > 0 else float("nan")
    else:
        tau_p = si("laser", "tau_p_ps")
    if "laser.v_mode_um3" in values:
        if "laser.v_mode_lambda_n3" in values:
            line, col = _locate(text, "laser", "v_mode_lambda_n3")
            raise ConfigError("[laser] give either v_mode_um3 or v_mode_lambda_n3, not both",
                              line, col)
        v_mode = si("laser", "v_mode_um3")
    else:
        if "laser.n_index" not in values:
            raise ConfigError("missing required [laser] keys: n_index (with v_mode_lambda_n3)")
        v_mode = values["laser.v_mode_lambda_n3"] * (lam / values["laser.n_index"]) ** 3

    gain = guard("laser", "gain_kind", lambda: GainModel(
        GainKind(values.get("laser.gain_kind", "linear")),
        si("laser", "g0_per_s"), si("laser", "n_floor_cm3", 1e-6 * si("laser", "n_tr_cm3"))))
    laser = guard("laser", None, lambda: LaserParams(
        tau_r=si("laser", "tau_r_ps"), tau_pc_nr=si("laser", "tau_pc_nr_ps"), tau_p=tau_p,
        f_cav=si("laser", "f_cav"), f_pc=si("laser", "f_pc"),
        gamma_conf=si("laser", "gamma_conf"), eta=si("laser", "eta"),
        tau_ef=si("laser", "tau_ef_ps"), tau_er=si("laser", "tau_er_ps", math.inf),
        tau_enr=si("laser", "tau_enr_ps", math.inf), v_a=si("laser", "v_a_um3"),
        v_mode=v_mode, lambda_cav=lam, n_tr=si("laser", "n_tr_cm3"), gain=gain))
    pump = guard("pump", "kind", lambda: PumpDrive(
        PumpKind(values.get("pump.kind", "cw")), si("pump", "power_uW", 0.0),
        si("pump", "pulse_fwhm_ps", 3.5e-12), si("pump", "rep_period_ns", 13e-9),
        si("pump", "pulse_delay_ps")))
    surf = guard("surface", None, lambda: SurfaceParams(
        d_amb=si("surface", "d_cm2_per_s", 20 * units.CM2_PER_S),
        s_vel=si("surface", "s_cm_per_s", units.to_si(1.7e5, "cm_per_s")),
        radius=si("surface", "radius_nm", 120e-9), lattice_a=si("surface", "lattice_nm", 315e-9),
        f_pc=laser.f_pc, tau_r=laser.tau_r,
        temperature=si("surface", "temperature_K", 10.0),
        m_eff_ratio=si("surface", "m_eff_ratio", 0.5)))
    integ = guard("integrator", "method", lambda: IntegratorConfig(
        rel_tol=si("integrator", "rel_tol", 1e-8), abs_tol=si("integrator", "abs_tol_cm3"),
        max_step=si("integrator", "max_step_ps", math.inf),
        method=Method(values.get("integrator.method", Method.SEMI_IMPLICIT.value))))
    fit = _fit_settings(text, values, si)
    run_label = values.get("run.label", "")
    seed = values.get("run.seed", 0)
    if seed < 0:
        line, col = _locate(text, "run", "seed")
        raise ConfigError("[run] seed: must be >= 0", line, col)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return RunConfig(laser, pump, surf, integ, fit, run_label, seed, digest, values)


def _io_key(section, field_name):
    """IO key for a domain field name, for diagnostics."""
    table = SECTIONS.get(section, {})
    for key in table:
        if key == field_name or re.sub(r"_(ps|ns|nm|um3|uW|cm3|per_s|cm_per_s|cm2_per_s|K)$",
                                       "", key) == field_name:
            return key
    aliases = {"n_tr": "n_tr_cm3", "lambda_cav": "lambda_nm", "v_a": "v_a_um3",
               "v_mode": "v_mode_um3", "g0": "g0_per_s", "n_floor": "n_floor_cm3",
               "power_avg": "power_uW", "pulse_fwhm": "pulse_fwhm_ps",
               "d_amb": "d_cm2_per_s", "s_vel": "s_cm_per_s", "radius": "radius_nm",
               "lattice_a": "lattice_nm", "tau_p": "q_factor"}
    return aliases.get(field_name)


def _fit_settings(text, values, si):
    def choice(key, options, default):
        v = values.get(f"fit.{key}", default)
        if v not in options:
            line, col = _locate(text, "fit", key)
            raise ConfigError(f"[fit] {key}: expected one of {options}, got {v!r}", line, col)
        return v

    free_raw = values.get("fit.free")
    free = tuple(s.strip() for s in free_raw.split(",") if s.strip()) if free_raw \
        else FitSettings.free
    rise = choice("rise", ("yes", "no", "true", "false"), "yes") in ("yes", "true")
    settings = FitSettings(
        model=choice("model", ("rate", "multiexp"), "rate"),
        region=choice("region", ("mirror", "cavity"), "mirror"),
        observable=choice("observable", ("pl", "output"), "pl"),
        free=free,
        t_end=si("fit", "t_end_ps", 300e-12), dt=si("fit", "dt_ps", 0.5e-12),
        noise_rel=si("fit", "noise_rel", 0.05), irf_fwhm=si("fit", "irf_fwhm_ps", 0.0),
        n_decay=values.get("fit.n_decay", 1), rise=rise,
        max_iter=values.get("fit.max_iter", 200),
        tau_bulk=si("fit", "tau_bulk_ps"), tau_pc=si("fit", "tau_pc_ps"),
        tau_cav=si("fit", "tau_cav_ps"))
    for key in ("t_end_ps", "dt_ps"):
        v = values.get(f"fit.{key}")
        if v is not None and not v > 0:
            line, col = _locate(text, "fit", key)
            raise ConfigError(f"[fit] {key}: must be > 0, got {v}", line, col)
    for key in ("noise_rel", "irf_fwhm_ps"):
        v = values.get(f"fit.{key}")
        if v is not None and not v >= 0:
            line, col = _locate(text, "fit", key)
            raise ConfigError(f"[fit] {key}: must be >= 0, got {v}", line, col)
    return settings


def preset_text(name: str) -> str:
    name = name.removesuffix(".preset").removesuffix(".cfg")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("pclaser.presets").joinpath(f"{name}.cfg").read_text("utf-8")


def load_config(source) -> RunConfig:
    """Parse a config file path, or a bundled preset name such as ``passivated``."""
    path = Path(source)
    if path.is_file():
        try:
            text = path.read_text("utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}")
    else:
        stem = str(source).removesuffix(".preset").removesuffix(".cfg")
        if stem not in PRESETS:
            raise ConfigError(f"{source}: no such file or bundled preset "
                              f"(presets: {', '.join(PRESETS)})")
        text = preset_text(stem)
    return parse_config(text)
