"""Run configuration files.

INI-style ``key = value`` lines grouped under ``[section]`` headers.  Section
names are for readability only: keys are looked up across all sections and
must be unique.  List values are comma separated; commas inside parentheses
belong to the item (``geometric_mean(q_criterion,vreman)``).
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .filters import FilterSpec, IndicatorKind
from .grid import StaggeredGrid
from .linsolve import SolverConfig


class ConfigError(ValueError):
    pass


class RawConfig:
    """Flat key lookup over a sectioned file, with line numbers for errors."""

    def __init__(self, text: str, source: str = "<config>"):
        self.source = source
        self.text = text
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        self.values: dict[str, str] = {}
        for section in parser.sections():
            for key, value in parser.items(section):
                if key in self.values:
                    raise ConfigError(f"duplicate key: {key} (line {self.line_of(key)})")
                self.values[key] = value
        self.used: set[str] = set()

    @classmethod
    def from_path(cls, path) -> "RawConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(text, str(path))

    def line_of(self, key: str) -> int | None:
        pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]")
        for no, line in enumerate(self.text.splitlines(), 1):
            if pat.match(line):
                return no
        return None

    def has(self, key) -> bool:
        return key in self.values

    def _convert(self, key, conv, what):
        raw = self.values[key]
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for key {key} on line {self.line_of(key)}: "
                              f"{raw!r} is not {what}") from exc

    def get(self, key, conv=str, default=..., what="valid"):
        self.used.add(key)
        if key not in self.values:
            if default is ...:
                raise ConfigError(f"missing key: {key}")
            return default
        return self._convert(key, conv, what)

    def float(self, key, default=...):
        return self.get(key, float, default, "a number")

    def int(self, key, default=...):
        return self.get(key, int, default, "an integer")

    def bool(self, key, default=...):
        def conv(s):
            s = s.strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return self.get(key, conv, default, "a boolean")

    def list(self, key, conv=str, default=...):
        return self.get(key, lambda s: [conv(x) for x in split_list(s)], default, "a list")

    def fail(self, key, msg):
        raise ConfigError(f"bad value for key {key} on line {self.line_of(key)}: {msg}")


def split_list(text: str) -> list[str]:
    items, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        items.append("".join(cur).strip())
    return items


@dataclass
class RunConfig:
    nx: int
    ny: int
    lx: float
    ly: float
    dt: float
    t_final: float
    n_steps: int
    nu: float
    chi0: float
    indicator: IndicatorKind
    c_delta: float | None
    delta: float | None
    eps_floor: float
    filter_mode: str
    reproject: bool
    rel_tol: float
    abs_tol: float
    max_iter: int | None
    out_dir: str
    seed: int
    initial: str
    forcing: str
    on_violation: str
    check_stability: bool
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> StaggeredGrid:
        return StaggeredGrid(self.nx, self.ny, self.lx, self.ly)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(self.rel_tol, self.abs_tol, self.max_iter)

    @property
    def filter_spec(self) -> FilterSpec:
        return FilterSpec(kind=self.indicator, c_delta=self.c_delta, delta=self.delta,
                          eps_floor=self.eps_floor, chi0=self.chi0, solver=self.solver)


def _check(raw: RawConfig, key, ok, msg):
    if not ok:
        raw.fail(key, msg)


def parse_run_config(raw: RawConfig, require_time=True) -> RunConfig:
    """Validate every numeric field before anything is allocated."""
    nx = raw.int("nx")
    ny = raw.int("ny", nx)
    lx = raw.float("lx", 1.0)
    ly = raw.float("ly", 1.0)
    _check(raw, "nx", nx >= 2, "need at least 2 cells")
    if raw.has("ny"):
        _check(raw, "ny", ny >= 2, "need at least 2 cells")
    if raw.has("lx"):
        _check(raw, "lx", lx > 0, "must be positive")
    if raw.has("ly"):
        _check(raw, "ly", ly > 0, "must be positive")

    nu = raw.float("nu")
    _check(raw, "nu", nu > 0, "must be positive")
    if require_time:
        dt = raw.float("dt")
        _check(raw, "dt", dt > 0, "must be positive")
        if raw.has("n_steps"):
            n_steps = raw.int("n_steps")
            _check(raw, "n_steps", n_steps >= 1, "must be >= 1")
            t_final = raw.float("t_final", n_steps * dt)
        else:
            t_final = raw.float("t_final")
            _check(raw, "t_final", t_final > 0, "must be positive")
            n_steps = max(1, int(round(t_final / dt)))
    else:
        dt = raw.float("dt", 0.0)
        t_final = raw.float("t_final", 1.0)
        n_steps = 0

    chi0 = raw.float("chi0", 1.0)
    if raw.has("chi0"):
        _check(raw, "chi0", chi0 >= 0, "must be >= 0")
    eta = raw.float("eta", 1e-10)
    try:
        indicator = IndicatorKind.parse(raw.get("indicator", str, "constant"), eta)
    except ValueError as exc:
        raw.fail("indicator", str(exc))
    delta = raw.float("delta", None)
    c_delta = None if delta is not None else raw.float("c_delta", 1.0)
    if delta is not None:
        _check(raw, "delta", delta >= 0, "must be >= 0")
    else:
        if raw.has("c_delta"):
            _check(raw, "c_delta", c_delta >= 0, "must be >= 0")
    eps_floor = raw.float("eps_floor", 0.0)
    if raw.has("eps_floor"):
        _check(raw, "eps_floor", 0 <= eps_floor < 1, "must lie in [0, 1)")
    mode = raw.get("filter_mode", str, "after").strip()
    if raw.has("filter_mode"):
        _check(raw, "filter_mode", mode in ("after", "before"), "expected 'after' or 'before'")
    reproject = raw.bool("reproject", True)
    rel_tol = raw.float("rel_tol", 1e-10)
    abs_tol = raw.float("abs_tol", 1e-14)
    if raw.has("rel_tol"):
        _check(raw, "rel_tol", rel_tol > 0, "must be positive")
    if raw.has("abs_tol"):
        _check(raw, "abs_tol", abs_tol > 0, "must be positive")
    max_iter = raw.int("max_iter", None)
    if max_iter is not None:
        _check(raw, "max_iter", max_iter >= 1, "must be >= 1")
    initial = raw.get("initial", str, "random_divfree").strip()
    if raw.has("initial"):
        _check(raw, "initial", initial in ("random_divfree", "manufactured", "zero"),
               "expected random_divfree, manufactured or zero")
    forcing = raw.get("forcing", str, "none").strip()
    if raw.has("forcing"):
        _check(raw, "forcing", forcing in ("none", "manufactured"), "expected none or manufactured")
    on_violation = raw.get("on_violation", str, "abort").strip()
    if raw.has("on_violation"):
        _check(raw, "on_violation", on_violation in ("abort", "warn"), "expected abort or warn")
    return RunConfig(
        nx=nx, ny=ny, lx=lx, ly=ly, dt=dt, t_final=t_final, n_steps=n_steps, nu=nu, chi0=chi0,
        indicator=indicator, c_delta=c_delta, delta=delta, eps_floor=eps_floor,
        filter_mode=mode, reproject=reproject, rel_tol=rel_tol, abs_tol=abs_tol,
        max_iter=max_iter, out_dir=raw.get("out_dir", str, "out").strip(),
        seed=raw.int("seed", 0), initial=initial, forcing=forcing, on_violation=on_violation,
        check_stability=raw.bool("check_stability", True),
    )
