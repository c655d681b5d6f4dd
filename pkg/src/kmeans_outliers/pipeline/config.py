"""Experiment configuration: a flat ``key = value`` text format, the resolved
:class:`RunConfig`, and the penalty-threshold grids derived from it."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..local_search import theta_ladder

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "RunConfig",
    "parse_config",
    "resolve_z",
    "theta_grid_values",
]

ALGORITHMS = (
    "lloyd",
    "kmeanspp",
    "penalized",
    "metropolized",
    "local_search",
    "distributed",
)

#: grid names understood by :func:`theta_grid_values`
GRID_NAMES = ("geometric", "ladder")


class ConfigError(ValueError):
    """A config file or config value is malformed or out of range."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved experiment configuration.

    ``z`` stays as written — an absolute count (int) or a fraction of ``n``
    (float in ``[0, 1)``) — and is resolved against a concrete dataset with
    :func:`resolve_z`.  The ``c1``/``c2``/``c_mh``/``c_est``/``a``/``alpha``/
    ``beta`` fields override the solvers' budget constants when set; ``None``
    keeps each solver's default.
    """

    algorithm: str
    k_values: tuple[int, ...]
    z: float | int
    eps: float = 0.5
    seeds: tuple[int, ...] = (0,)
    theta_grid: str | tuple[float, ...] = "geometric"
    machines: int = 10
    refine_iters: int = 10
    timing: bool = False
    mh_steps: int = 100
    c1: float | None = None
    c2: float | None = None
    c_mh: float | None = None
    c_est: float | None = None
    a: float | None = None
    alpha: float | None = None
    beta: float | None = None


def _parse_int(key: str, raw: str, minimum: int) -> int:
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if v < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {v}")
    return v


def _parse_float(key: str, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if math.isnan(v):
        raise ConfigError(f"{key}: must not be NaN")
    return v


def _parse_int_list(key: str, raw: str, minimum: int) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: expected at least one integer")
    return tuple(_parse_int(key, p, minimum) for p in parts)


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _parse_z(raw: str):
    try:
        return _parse_int("z", raw, 0)
    except ConfigError:
        pass
    frac = _parse_float("z", raw)
    if not 0.0 <= frac < 1.0:
        raise ConfigError(f"z: fraction must be in [0, 1), got {frac}")
    return frac


def _parse_grid(raw: str):
    if raw in GRID_NAMES:
        return raw
    values = tuple(_parse_float("theta_grid", p) for p in raw.split(",") if p.strip())
    if not values:
        raise ConfigError("theta_grid: expected a grid name or a list of thresholds")
    if any(v <= 0.0 for v in values):
        raise ConfigError("theta_grid: thresholds must be > 0")
    return values


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` config text into a :class:`RunConfig`.

    Blank lines and ``#`` comments are ignored; keys may appear once.
    ``algorithm``, ``k`` and ``z`` are required; everything else defaults.
    """
    seen: dict[str, str] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {rawline!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {rawline!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = value

    for required in ("algorithm", "k", "z"):
        if required not in seen:
            raise ConfigError(f"missing required key {required!r}")

    known = {
        "algorithm", "k", "z", "eps", "seeds", "theta_grid", "machines",
        "refine_iters", "timing", "mh_steps",
        "c1", "c2", "c_mh", "c_est", "a", "alpha", "beta",
    }
    unknown = sorted(set(seen) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")

    algorithm = seen["algorithm"]
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"algorithm: expected one of {', '.join(ALGORITHMS)}; got {algorithm!r}"
        )

    eps = _parse_float("eps", seen["eps"]) if "eps" in seen else 0.5
    if not 0.0 < eps <= 1.0:
        raise ConfigError(f"eps: must be in (0, 1], got {eps}")

    consts = {}
    for key in ("c1", "c2", "c_mh", "c_est", "a", "alpha", "beta"):
        if key in seen:
            v = _parse_float(key, seen[key])
            if v <= 0.0:
                raise ConfigError(f"{key}: must be > 0, got {v}")
            consts[key] = v

    return RunConfig(
        algorithm=algorithm,
        k_values=_parse_int_list("k", seen["k"], minimum=1),
        z=_parse_z(seen["z"]),
        eps=eps,
        seeds=_parse_int_list("seeds", seen["seeds"], minimum=0) if "seeds" in seen else (0,),
        theta_grid=_parse_grid(seen["theta_grid"]) if "theta_grid" in seen else "geometric",
        machines=_parse_int("machines", seen["machines"], 1) if "machines" in seen else 10,
        refine_iters=_parse_int("refine_iters", seen["refine_iters"], 0) if "refine_iters" in seen else 10,
        timing=_parse_bool("timing", seen["timing"]) if "timing" in seen else False,
        mh_steps=_parse_int("mh_steps", seen["mh_steps"], 1) if "mh_steps" in seen else 100,
        **consts,
    )


def resolve_z(z, n: int) -> int:
    """Resolve an outlier budget against a dataset size.

    Integers pass through unchanged; floats are fractions of ``n`` in
    ``[0, 1)`` and resolve to ``floor(z * n)``.
    """
    if isinstance(z, bool):
        raise ConfigError(f"z: expected a count or fraction, got {z!r}")
    if isinstance(z, int):
        if z < 0:
            raise ConfigError(f"z: must be >= 0, got {z}")
        return z
    frac = float(z)
    if not 0.0 <= frac < 1.0:
        raise ConfigError(f"z: fraction must be in [0, 1), got {frac}")
    return int(math.floor(frac * n))


def theta_grid_values(cfg: RunConfig, n: int, z: int,
                      diameter_sq: float) -> tuple[float, ...]:
    """Concrete penalty thresholds for one dataset.

    ``"geometric"`` is the fixed ten-point grid from 1 to 1e10;
    ``"ladder"`` derives thresholds from the geometric optimum-guess ladder
    (honoring a ``beta`` override); an explicit tuple passes through.
    """
    choice = cfg.theta_grid
    if isinstance(choice, tuple):
        return choice
    if choice == "geometric":
        return tuple(10.0 ** (10.0 * i / 9.0) for i in range(10))
    if choice == "ladder":
        entries = theta_ladder(n, max(diameter_sq, 1.0), z, cfg.eps, beta=cfg.beta)
        return tuple(float(e.theta) for e in entries)
    raise ConfigError(f"theta_grid: unknown grid {choice!r}")
