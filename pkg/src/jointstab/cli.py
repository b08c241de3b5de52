"""File-based front end: config parsing, analysis runs, CSV/JSON output.

Subcommands map one-to-one onto the analysis/simulation operations:
``region`` (gain-grid stability maps), ``passivity`` (driving-port
test + Bode file), ``margins``, ``bandwidth``, ``step``, ``chirp`` and
``table2`` (the passivity reproduction table over the standard
parameter variations).

Configuration is sectioned key=value text -- sweeps have too many
dimensions for flags -- with three precedence levels: built-in nominal
defaults, then the ``--config`` file, then repeatable ``--set
SECTION.KEY=VALUE`` overrides.  Unknown sections or keys are hard
errors.  All emitted files are deterministic: 9 significant digits,
comma delimiters, Unix newlines; existing files are only replaced under
``--force``.  Exit codes: 0 success, 2 configuration/validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .analysis import (CellClass, driving_port_admittance, passivity_check,
                       stability_region, torque_bandwidth)
from .controllers import (AveragingFilterConfig, BreakPoint, ImpedanceConfig,
                          Loop, LoopConfig, TorquePIConfig, VelCompConfig,
                          assemble_closed_loop, assemble_loop_gain)
from .errors import (ConfigError, InvalidParamsError, JointstabError,
                     NonConvergentError, ParseError)
from .lti import c2d_zoh, margins
from .plant import PlantParams, build_plant
from .sim import (SignalSpec, SimConfig, chirp_response, run_sim,
                  step_metrics, trace_to_csv)

__all__ = [
    "parse_config",
    "Settings",
    "main",
]

VALIDATION_EXIT = 2
NUMERICAL_EXIT = 3

# CSV cell codes are ordered by health (0 worst), opposite to the
# internal enum, so gnuplot palettes read naturally.
_CSV_CODE = {CellClass.UNSTABLE: 0, CellClass.STABLE_LOW_PM: 1,
             CellClass.STABLE: 2}

_PLANT_FIELDS = ("Jm", "Khd", "Dhd", "Bm", "JL1", "BL1", "JL2", "BL2",
                 "KL2", "Kp", "Dp", "L", "R", "kt", "kw", "N")

# section -> key -> converter name
_SCHEMA = {
    "plant": {"preset": "preset", **{f: "float" for f in _PLANT_FIELDS}},
    "torque": {"closed": "bool", "beta": "float", "Ts": "float"},
    "velocity_comp": {"closed": "bool", "alpha": "float",
                      "filtered": "bool"},
    "impedance": {"closed": "bool", "Pgain": "float", "Dgain": "float"},
    "filter": {"Nav": "int", "counts_per_rev": "int"},
    "sweep": {"pgain_min": "float", "pgain_max": "float", "n_pgain": "int",
              "dgain_min": "float", "dgain_max": "float", "n_dgain": "int",
              "beta": "floatlist", "alpha": "floatlist", "ts": "floatlist",
              "nav": "intlist"},
    "sim": {"duration": "float", "input": "str", "signal": "signal",
            "amplitude": "float", "t_start": "float", "freq_hz": "float",
            "f0_hz": "float", "f1_hz": "float", "quantize": "bool",
            "ripple_amplitude": "float"},
}

_DEFAULTS = {
    "plant": {"preset": "extended"},
    "torque": {"closed": True, "beta": 1.0, "Ts": 1e-3},
    "velocity_comp": {"closed": True, "alpha": 0.94, "filtered": True},
    "impedance": {"closed": True, "Pgain": 200.0, "Dgain": 10.0},
    "filter": {"Nav": 4, "counts_per_rev": 80000},
    "sweep": {"pgain_min": 1.0, "pgain_max": 20000.0, "n_pgain": 120,
              "dgain_min": 1.0, "dgain_max": 50.0, "n_dgain": 60,
              "beta": (), "alpha": (), "ts": (), "nav": ()},
    "sim": {"duration": 20.0, "input": "Tl_ref", "signal": "step",
            "amplitude": 1.0, "t_start": 0.0, "freq_hz": 1.0,
            "f0_hz": 0.5, "f1_hz": 120.0, "quantize": False,
            "ripple_amplitude": 0.0},
}


def _convert(kind: str, value: str, where: str):
    value = value.strip()
    try:
        if kind == "float":
            return float(value)
        if kind == "int":
            f = float(value)
            if f != int(f):
                raise ValueError("not an integer")
            return int(f)
        if kind == "bool":
            low = value.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError("not a boolean")
        if kind == "floatlist":
            return tuple(float(v) for v in value.split(",") if v.strip())
        if kind == "intlist":
            return tuple(int(v) for v in value.split(",") if v.strip())
        if kind == "preset":
            if value not in ("extended", "retracted"):
                raise ValueError("must be 'extended' or 'retracted'")
            return value
        if kind == "signal":
            if value not in ("zero", "step", "sine", "chirp"):
                raise ValueError("must be zero, step, sine or chirp")
            return value
        return value  # "str"
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot read {value!r} ({exc})") from None


@dataclass(frozen=True)
class SweepSpec:
    """Gain-grid extent plus optional per-variant parameter lists."""

    pgain_min: float
    pgain_max: float
    n_pgain: int
    dgain_min: float
    dgain_max: float
    n_dgain: int
    beta: tuple
    alpha: tuple
    ts: tuple
    nav: tuple


@dataclass(frozen=True)
class SimSpec:
    """The [sim] section resolved to one driven input channel."""

    duration: float
    input: str
    signal: str
    amplitude: float
    t_start: float
    freq_hz: float
    f0_hz: float
    f1_hz: float
    quantize: bool
    ripple_amplitude: float

    def signal_spec(self) -> SignalSpec:
        if self.signal == "step":
            return SignalSpec.step(self.amplitude, self.t_start)
        if self.signal == "sine":
            return SignalSpec.sine(self.amplitude, self.freq_hz)
        if self.signal == "chirp":
            return SignalSpec.chirp(self.amplitude, self.f0_hz, self.f1_hz)
        return SignalSpec.zero()


@dataclass(frozen=True)
class Settings:
    """Everything a command needs: plant, loop, sweep and sim blocks."""

    params: PlantParams
    loop: LoopConfig
    sweep: SweepSpec
    sim: SimSpec


def _parse_sections(text: str) -> dict:
    """Sectioned key=value lines -> {section: {key: raw string}}.

    Comments start with '#' or ';' (full-line or trailing); unknown
    sections, unknown keys, duplicates and malformed lines raise
    ParseError with the line number.
    """
    data: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", lineno)
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ParseError(f"unknown section [{name}]", lineno)
            current = name
            data.setdefault(name, {})
            continue
        if current is None:
            raise ParseError("key outside any [section]", lineno)
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA[current]:
            raise ParseError(f"unknown key {key!r} in [{current}]", lineno)
        if key in data[current]:
            raise ParseError(f"duplicate key {key!r} in [{current}]", lineno)
        data[current][key] = value.strip()
    return data


def _apply_overrides(raw: dict, overrides) -> dict:
    """--set SECTION.KEY=VALUE entries merged over the file values."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set needs SECTION.KEY=VALUE, got {item!r}")
        dotted, _, value = item.partition("=")
        if "." not in dotted:
            raise ConfigError(f"--set key must be SECTION.KEY, got {dotted!r}")
        section, _, key = dotted.strip().partition(".")
        if section not in _SCHEMA:
            raise ConfigError(f"--set: unknown section {section!r}")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"--set: unknown key {key!r} in [{section}]")
        raw.setdefault(section, {})[key] = value.strip()
    return raw


def parse_config(text: str, overrides=()) -> Settings:
    """Text config (+ overrides) -> fully validated Settings.

    An empty string yields the nominal operating point: the extended-leg
    drivetrain preset, beta=1, alpha=0.94, Nav=4, Ts=1 ms, impedance
    (200, 10), all loops closed.
    """
    raw = _apply_overrides(_parse_sections(text), overrides)

    values = {}
    for section, schema in _SCHEMA.items():
        vals = dict(_DEFAULTS[section])
        for key, raw_val in raw.get(section, {}).items():
            vals[key] = _convert(schema[key], raw_val, f"[{section}] {key}")
        values[section] = vals

    pv = values["plant"]
    params = PlantParams.extended() if pv["preset"] == "extended" \
        else PlantParams.retracted()
    field_overrides = {f: pv[f] for f in _PLANT_FIELDS if f in pv}
    if field_overrides:
        params = replace(params, **field_overrides)

    closed = set()
    if values["velocity_comp"]["closed"]:
        closed.add(Loop.VELOCITY_COMP)
    if values["torque"]["closed"]:
        closed.add(Loop.TORQUE)
    if values["impedance"]["closed"]:
        closed.add(Loop.IMPEDANCE)
    Ts = values["torque"]["Ts"]
    loop = LoopConfig(
        pi=TorquePIConfig(beta=values["torque"]["beta"], Ts=Ts),
        vc=VelCompConfig(alpha=values["velocity_comp"]["alpha"],
                         filtered=values["velocity_comp"]["filtered"]),
        imp=ImpedanceConfig(Pgain=values["impedance"]["Pgain"],
                            Dgain=values["impedance"]["Dgain"]),
        filt=AveragingFilterConfig(
            Nav=values["filter"]["Nav"], Ts=Ts,
            encoder_counts_per_rev=values["filter"]["counts_per_rev"]),
        closed=frozenset(closed))
    return Settings(params=params, loop=loop,
                    sweep=SweepSpec(**values["sweep"]),
                    sim=SimSpec(**values["sim"]))


# ---------------------------------------------------------------------------
# output plumbing


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, (str, int)):
        return str(v)
    return f"{v:.9g}"


def _round9(v):
    return None if v is None else float(f"{float(v):.9g}")


def _write_text(path: str, content: str, force: bool):
    if os.path.exists(path) and not force:
        raise ConfigError(f"refusing to overwrite {path} (use --force)")
    with open(path, "w", newline="\n") as fh:
        fh.write(content)


def _write_json(path: str, record: dict, force: bool):
    cleaned = {k: (_round9(v) if isinstance(v, float) else v)
               for k, v in record.items()}
    _write_text(path, json.dumps(cleaned, sort_keys=True, indent=2) + "\n",
                force)


def _tag(loop: LoopConfig, params: PlantParams) -> str:
    leg = "ret" if params == PlantParams.retracted() else "ext"
    return (f"b{loop.pi.beta:g}_a{loop.vc.alpha:g}"
            f"_ts{loop.Ts * 1e3:g}ms_nav{loop.filt.Nav}_{leg}")


def _variants(settings: Settings):
    """Cartesian product of the sweep lists over the base loop config."""
    sw = settings.sweep
    betas = sw.beta or (settings.loop.pi.beta,)
    alphas = sw.alpha or (settings.loop.vc.alpha,)
    tss = sw.ts or (settings.loop.Ts,)
    navs = sw.nav or (settings.loop.filt.Nav,)
    for beta in betas:
        for alpha in alphas:
            for ts in tss:
                for nav in navs:
                    loop = LoopConfig(
                        pi=TorquePIConfig(beta=beta, Ts=ts),
                        vc=replace(settings.loop.vc, alpha=alpha),
                        imp=settings.loop.imp,
                        filt=replace(settings.loop.filt, Nav=nav, Ts=ts),
                        closed=settings.loop.closed)
                    yield loop


# ---------------------------------------------------------------------------
# commands


def cmd_region(settings: Settings, out: str, force: bool, jobs: int) -> int:
    sw = settings.sweep
    for loop in _variants(settings):
        grid = stability_region(
            settings.params, loop,
            p_range=(sw.pgain_min, sw.pgain_max),
            d_range=(sw.dgain_min, sw.dgain_max),
            grid=(sw.n_pgain, sw.n_dgain), jobs=jobs)
        # matrix layout: header row carries the Dgain axis, first column
        # the Pgain axis, body the health codes (0 unstable .. 2 stable)
        lines = [",".join(["pgain"] + [f"{d:.9g}" for d in grid.d_axis])]
        for i, p in enumerate(grid.p_axis):
            codes = [str(_CSV_CODE[CellClass(grid.cells[i, j])])
                     for j in range(grid.d_axis.size)]
            lines.append(",".join([f"{p:.9g}"] + codes))
        path = os.path.join(out, f"region_{_tag(loop, settings.params)}.csv")
        _write_text(path, "\n".join(lines) + "\n", force)
        n_un = grid.count(CellClass.UNSTABLE)
        n_low = grid.count(CellClass.STABLE_LOW_PM)
        print(f"{path}: {grid.cells.size} cells, {n_un} unstable, "
              f"{n_low} low-margin")
    return 0


def cmd_passivity(settings: Settings, out: str, force: bool, jobs: int) -> int:
    loop = settings.loop
    port = driving_port_admittance(settings.params, loop)
    rep = passivity_check(port)
    tag = _tag(loop, settings.params)

    record = {
        "verdict": rep.verdict,
        "passive": rep.passive,
        "poles_stable": rep.poles_stable,
        "max_abs_corrected_phase_deg": rep.max_abs_corrected_phase_deg,
        "first_violation_rad_s": rep.first_violation_rad_s,
        "last_violation_rad_s": rep.last_violation_rad_s,
        "Ts": loop.Ts,
        "closed_loops": sorted(l.value for l in loop.closed),
        "Pgain": loop.imp.Pgain if Loop.IMPEDANCE in loop.closed else None,
        "Dgain": loop.imp.Dgain if Loop.IMPEDANCE in loop.closed else None,
    }
    _write_json(os.path.join(out, f"passivity_{tag}.json"), record, force)

    if rep.poles_stable:
        w = np.logspace(-2, math.log10(0.999 * math.pi / loop.Ts), 4000)
        H = port.response(w)[:, 0, 0]
        mag_db = 20.0 * np.log10(np.abs(H))
        phase = np.degrees(np.unwrap(np.angle(H)))
        corrected = phase + np.degrees(w * loop.Ts / 2.0)
        lines = ["omega_rad_s,mag_db,phase_deg,corrected_phase_deg"]
        for row in zip(w, mag_db, phase, corrected):
            lines.append(",".join(f"{v:.9g}" for v in row))
        _write_text(os.path.join(out, f"bode_{tag}.csv"),
                    "\n".join(lines) + "\n", force)

    band = ""
    if rep.first_violation_rad_s is not None:
        band = (f", violation band [{rep.first_violation_rad_s:.4g}, "
                f"{rep.last_violation_rad_s:.4g}] rad/s")
    print(f"passivity_{tag}: {rep.verdict} "
          f"(max corrected phase {rep.max_abs_corrected_phase_deg:.4f} deg"
          f"{band})")
    return 0


def cmd_margins(settings: Settings, out: str, force: bool, jobs: int) -> int:
    loop = settings.loop
    if Loop.TORQUE not in loop.closed:
        raise ConfigError("margins need the torque loop closed")
    tag = _tag(loop, settings.params)
    record = {}
    points = [("torque", BreakPoint.TORQUE_ERROR)]
    if Loop.IMPEDANCE in loop.closed:
        points.append(("impedance", BreakPoint.IMPEDANCE_ERROR))
    for name, bp in points:
        rep = margins(assemble_loop_gain(settings.params, loop, bp))
        record[f"{name}_pm_deg"] = rep.phase_margin_deg
        record[f"{name}_gm_db"] = None if math.isinf(rep.gain_margin_db) \
            else rep.gain_margin_db
        record[f"{name}_gain_crossover_hz"] = rep.gain_crossover_hz
        record[f"{name}_phase_crossover_hz"] = rep.phase_crossover_hz
        pm = "none" if rep.phase_margin_deg is None \
            else f"{rep.phase_margin_deg:.2f} deg"
        gm = "none" if rep.gain_margin_db is None \
            else f"{rep.gain_margin_db:.2f} dB"
        print(f"{name} loop: PM {pm}, GM {gm}")
    _write_json(os.path.join(out, f"margins_{tag}.json"), record, force)
    return 0


def cmd_bandwidth(settings: Settings, out: str, force: bool, jobs: int) -> int:
    loop = settings.loop
    bw = torque_bandwidth(settings.params, loop)
    tag = _tag(loop, settings.params)
    _write_json(os.path.join(out, f"bandwidth_{tag}.json"),
                {"omega_rad_s": bw.omega_rad_s,
                 "nyquist_limited": bw.nyquist_limited}, force)
    lim = " (Nyquist-limited)" if bw.nyquist_limited else ""
    print(f"torque-loop -3 dB bandwidth: {bw.omega_rad_s:.4g} rad/s{lim}")
    return 0


def cmd_step(settings: Settings, out: str, force: bool, jobs: int) -> int:
    loop = settings.loop
    ss = settings.sim
    alphas = settings.sweep.alpha or (loop.vc.alpha,)
    results = []
    for alpha in alphas:
        lv = replace(loop, vc=replace(loop.vc, alpha=alpha))
        extra = ("dtheta_L1_filt",)
        if ss.ripple_amplitude > 0:
            extra += ("dtheta_m",)
        sys = assemble_closed_loop(settings.params, lv, extra_outputs=extra,
                                   measurement_input=ss.quantize)
        cfg = SimConfig(duration=ss.duration,
                        inputs={ss.input: ss.signal_spec()},
                        quantize_encoder=ss.quantize,
                        counts_per_rev=loop.filt.encoder_counts_per_rev,
                        ripple_amplitude=ss.ripple_amplitude)
        trace = run_sim(sys, cfg)
        tag = _tag(lv, settings.params)
        _write_text(os.path.join(out, f"trace_{tag}.csv"),
                    trace_to_csv(trace), force)
        line = f"trace_{tag}: {ss.signal} on {ss.input}"
        if ss.signal == "step" and "Tl" in trace.labels:
            try:
                met = step_metrics(trace, "Tl", ss.amplitude)
                results.append((alpha, met["settling_time_2pct"]))
                line += (f", Tl settling {met['settling_time_2pct']:.4g} s, "
                         f"rise {met['rise_time_10_90']:.4g} s, "
                         f"overshoot {met['overshoot_pct']:.2f}%")
            except NonConvergentError:
                line += ", Tl did not settle within the run"
        print(line)
    if len(results) > 1:
        results.sort(key=lambda r: r[1])
        fast, slow = results[0], results[-1]
        print(f"settling comparison: alpha={fast[0]:g} settles "
              f"{slow[1] / fast[1]:.2f}x faster than alpha={slow[0]:g} "
              f"({fast[1]:.4g} s vs {slow[1]:.4g} s)")
    return 0


def cmd_chirp(settings: Settings, out: str, force: bool, jobs: int) -> int:
    ss = settings.sim
    spec = ss.signal_spec()
    if spec.kind != "chirp":
        spec = SignalSpec.chirp(ss.amplitude, ss.f0_hz, ss.f1_hz)
    plant_d = c2d_zoh(build_plant(settings.params), settings.loop.Ts)
    cfg = SimConfig(duration=ss.duration, inputs={"Vm": spec})
    est = chirp_response(plant_d, cfg, output="dtheta_L1")
    tag = _tag(settings.loop, settings.params)
    lines = ["omega_rad_s,amplitude_ratio"]
    for wv, rv in zip(est.omega_rad_s, est.amplitude_ratio):
        lines.append(f"{wv:.9g},{rv:.9g}")
    _write_text(os.path.join(out, f"chirp_{tag}.csv"),
                "\n".join(lines) + "\n", force)
    a = est.amplitude_ratio
    interior = [i for i in range(1, len(a) - 1)
                if a[i] < a[i - 1] and a[i] < a[i + 1]]

    # rank candidate dips by depth below the envelope on both sides, not
    # by raw amplitude: estimator jitter on the high-frequency rolloff
    # makes shallow local minima at levels below the true anti-resonance
    def depth(k: int) -> float:
        return min(max(a[:k]), max(a[k + 1:])) / a[k]

    best = max(interior, key=depth) if interior else None
    if best is not None and depth(best) >= 1.1:
        print(f"chirp_{tag}: anti-resonance near "
              f"{est.omega_rad_s[best]:.4g} rad/s "
              f"({depth(best):.2f}x below the surrounding envelope)")
    else:
        print(f"chirp_{tag}: no clear interior amplitude minimum")
    return 0


# Reference verdict triples for the reproduction table: (torque-only,
# impedance 200/10, impedance 20000/50) under each parameter variation.
TABLE2_ROWS = (
    ("beta=1", {}, ("No", "Yes", "Yes")),
    ("beta=0.5", {"beta": 0.5}, ("No", "Yes", "No")),
    ("beta=2", {"beta": 2.0}, ("No", "Yes", "No")),
    ("beta=4", {"beta": 4.0}, ("No", "Yes", "Unstable")),
    ("beta=6", {"beta": 6.0}, ("No", "Yes", "Unstable")),
    ("alpha=0", {"alpha": 0.0}, ("Yes", "Yes", "Yes")),
    ("alpha=0.5", {"alpha": 0.5}, ("Yes", "Yes", "Yes")),
    ("Ts=4ms", {"ts": 4e-3}, ("No", "Yes", "No")),
    ("Ts=2ms", {"ts": 2e-3}, ("No", "Yes", "No")),
    ("Ts=0.5ms", {"ts": 0.5e-3}, ("No", "Yes", "Yes")),
    ("Nav=1", {"nav": 1}, ("No", "Yes", "Yes")),
    ("Nav=10", {"nav": 10}, ("No", "Yes", "Yes")),
    ("Nav=20", {"nav": 20}, ("No", "Yes", "Yes")),
    ("Nav=50", {"nav": 50}, ("No", "Yes", "Yes")),
    ("retracted leg", {"retracted": True}, ("No", "Yes", "Yes")),
)


def _table2_loop(base: LoopConfig, beta=1.0, alpha=0.94, ts=1e-3, nav=4,
                 closed=(), pgain=200.0, dgain=10.0) -> LoopConfig:
    return LoopConfig(
        pi=TorquePIConfig(beta=beta, Ts=ts),
        vc=replace(base.vc, alpha=alpha),
        imp=ImpedanceConfig(Pgain=pgain, Dgain=dgain),
        filt=replace(base.filt, Nav=nav, Ts=ts),
        closed=frozenset(closed))

def table2_verdicts(params_extended: PlantParams,
                    params_retracted: PlantParams,
                    base: LoopConfig) -> list:
    """Verdict triples for every reproduction-table row.

    Returns [(row_label, ours_triple, reference_triple), ...] where each
    triple is (torque-only, impedance 200/10, impedance 20000/50).
    """
    t_only = (Loop.VELOCITY_COMP, Loop.TORQUE)
    full = (Loop.VELOCITY_COMP, Loop.TORQUE, Loop.IMPEDANCE)
    rows = []
    for label, kw, reference in TABLE2_ROWS:
        kw = dict(kw)
        params = params_retracted if kw.pop("retracted", False) \
            else params_extended
        ours = tuple(
            passivity_check(driving_port_admittance(
                params,
                _table2_loop(base, closed=closed, pgain=pg, dgain=dg,
                             **kw))).verdict
            for closed, pg, dg in ((t_only, 200.0, 10.0),
                                   (full, 200.0, 10.0),
                                   (full, 20000.0, 50.0)))
        rows.append((label, ours, reference))
    return rows


def cmd_table2(settings: Settings, out: str, force: bool, jobs: int) -> int:
    rows = table2_verdicts(PlantParams.extended(), PlantParams.retracted(),
                           settings.loop)
    lines = ["row,torque_only,imp_200_10,imp_20000_50,"
             "ref_torque_only,ref_imp_200_10,ref_imp_20000_50,match"]
    n_match = 0
    header = (f"{'row':<14} {'torque-only':<12} {'imp(200,10)':<12} "
              f"{'imp(20000,50)':<13} reference")
    print(header)
    print("-" * len(header))
    for label, ours, reference in rows:
        match = ours == reference
        n_match += match
        print(f"{label:<14} {ours[0]:<12} {ours[1]:<12} {ours[2]:<13} "
              f"{'/'.join(reference)}{'' if match else '   <- differs'}")
        lines.append(",".join([label.replace(",", ";")] + list(ours)
                              + list(reference) + [str(match)]))
    print(f"{n_match}/{len(rows)} rows match the reference verdicts")
    _write_text(os.path.join(out, "table2.csv"), "\n".join(lines) + "\n",
                force)
    return 0


_COMMANDS = {
    "region": cmd_region,
    "passivity": cmd_passivity,
    "margins": cmd_margins,
    "bandwidth": cmd_bandwidth,
    "step": cmd_step,
    "chirp": cmd_chirp,
    "table2": cmd_table2,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointstab",
        description="Stability, margin, bandwidth and passivity analysis "
                    "of a torque/impedance controlled electric joint.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None,
                        help="sectioned key=value config file")
    parser.add_argument("--out", default="out",
                        help="output directory (created if absent)")
    parser.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", dest="overrides",
                        help="override one config value (repeatable)")
    parser.add_argument("--force", action="store_true",
                        help="allow overwriting existing output files")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads for grid sweeps")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = ""
        if args.config is not None:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        settings = parse_config(text, args.overrides)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](settings, args.out, args.force,
                                       args.jobs)
    except (ParseError, ConfigError, InvalidParamsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_EXIT
    except JointstabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return NUMERICAL_EXIT
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
