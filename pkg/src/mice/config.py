"""Plain-text ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys and out-of-range
values are rejected when the file is parsed.  See README for the key table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .estimators import Mode, NeighborhoodConfig
from .graphon import builtin_graphon
from .io import FORMAT_VERSION


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip().upper() for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


@dataclass(frozen=True)
class RunConfig:
    format_version: str = FORMAT_VERSION
    mode: str = "MICE"
    graphon: str | None = None
    n: int | None = None
    K: int | None = None
    seed: int = 0
    D_i: float = 0.5
    G_k: float = 1.0
    s: int | None = None
    t: int | None = None
    delta_0: float = 1e-4
    max_iters: int = 50
    mask_aware: bool = False
    exclude_self_pairs: bool = False
    rho: float | None = None
    mask_seed: int | None = None
    tau: float = 0.5
    tau_grid: int = 201
    replications: int = 1
    n_grid: tuple[int, ...] = ()
    K_grid: tuple[int, ...] = ()
    methods: tuple[str, ...] = ("MICE",)
    base_seed: int = 0
    adjacency: str | None = None
    edge_list: str | None = None
    p_true: str | None = None
    p_init: str | None = None
    estimate: str | None = None
    mask: str | None = None
    adjacency_next: str | None = None
    out: str | None = None
    threads: int | None = None
    _source: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        check = self._check
        check(self.mode.upper() in ("MICE", "ICE", "ORACLE"), "mode", self.mode)
        if self.graphon is not None:
            try:
                builtin_graphon(self.graphon)
            except ValueError as exc:
                raise ConfigError(f"graphon: {exc}") from None
        check(self.n is None or self.n >= 2, "n", self.n)
        check(self.K is None or self.K >= 1, "K", self.K)
        check(self.seed >= 0, "seed", self.seed)
        check(self.base_seed >= 0, "base_seed", self.base_seed)
        check(math.isfinite(self.D_i) and self.D_i > 0, "D_i", self.D_i)
        check(math.isfinite(self.G_k) and self.G_k > 0, "G_k", self.G_k)
        check(self.s is None or self.s >= 1, "s", self.s)
        check(self.t is None or self.t >= 1, "t", self.t)
        check(math.isfinite(self.delta_0) and self.delta_0 > 0, "delta_0", self.delta_0)
        check(self.max_iters >= 0, "max_iters", self.max_iters)
        check(self.rho is None or 0.0 <= self.rho <= 1.0, "rho", self.rho)
        check(self.mask_seed is None or self.mask_seed >= 0, "mask_seed", self.mask_seed)
        check(0.0 <= self.tau <= 1.0, "tau", self.tau)
        check(self.tau_grid >= 2, "tau_grid", self.tau_grid)
        check(self.replications >= 1, "replications", self.replications)
        check(all(v >= 2 for v in self.n_grid), "n_grid", self.n_grid)
        check(all(v >= 1 for v in self.K_grid), "K_grid", self.K_grid)
        check(not (self.n_grid and self.K_grid), "n_grid", "only one of n_grid / K_grid")
        check(bool(self.methods) and all(m in ("MICE", "ICE", "ORACLE", "WARM") for m in self.methods),
              "methods", self.methods)
        check(self.threads is None or self.threads >= 1, "threads", self.threads)

    @staticmethod
    def _check(ok: bool, key: str, value) -> None:
        if not ok:
            raise ConfigError(f"invalid value for {key}: {value!r}")

    def neighborhood(self, mode: str | None = None, threads: int = 1) -> NeighborhoodConfig:
        return NeighborhoodConfig(
            D_i=self.D_i, G_k=self.G_k, s_override=self.s, t_override=self.t,
            delta_0=self.delta_0, max_iters=self.max_iters,
            mode=Mode.parse(mode or self.mode), mask_aware=self.mask_aware,
            exclude_self_pairs=self.exclude_self_pairs, threads=threads,
        )

    def path(self, key: str) -> Path | None:
        """Config path value, resolved relative to the config file's directory."""
        value = getattr(self, key)
        if value is None:
            return None
        p = Path(value)
        if not p.is_absolute() and self._source is not None:
            p = self._source.parent / p
        return p

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


_PARSERS = {
    "format_version": str, "mode": lambda v: v.strip().upper(), "graphon": str,
    "n": int, "K": int, "seed": int, "D_i": float, "G_k": float,
    "s": _opt_int, "t": _opt_int, "delta_0": float, "max_iters": int,
    "mask_aware": _bool, "exclude_self_pairs": _bool,
    "rho": float, "mask_seed": int, "tau": float, "tau_grid": int,
    "replications": int, "n_grid": _int_list, "K_grid": _int_list, "methods": _str_list,
    "base_seed": int,
    "adjacency": str, "edge_list": str, "p_true": str, "p_init": str, "estimate": str,
    "mask": str, "adjacency_next": str, "out": str, "threads": int,
}
KEYS = tuple(_PARSERS)
assert set(KEYS) == {f.name for f in fields(RunConfig) if not f.name.startswith("_")}


def parse_config(text: str, source: str = "<config>", base: Path | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    if values.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ConfigError(f"{source}: unsupported format_version {values['format_version']!r}")
    try:
        return RunConfig(**values, _source=base)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path), base=path)
