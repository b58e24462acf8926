"""Experiment configuration: flat ``key = value`` text with one G matrix block.

Example::

    experiment = fig7
    snr_db_grid = 0:5:30          # start:step:stop, or a comma list
    methods = eq_joint, nc_approx
    stopping = 200, 100000000     # min_errors, max_trials
    seed = 7
    output_path = results/fig7.csv
    G = [
        1 0 1 1
        0 1 0 1
        0 0 1 0
    ]
    v = 1, 2, 3, 2

``#`` starts a comment. Every error names the offending line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .montecarlo import StoppingRule
from .netcode import DEFAULT_G, DEFAULT_V, NetworkCode
from .numerics import DomainError

EXPERIMENTS = ("fig2", "fig4", "fig6", "fig7", "custom")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class ExperimentConfig:
    experiment: str
    snr_db_grid: list
    methods: list = field(default_factory=list)
    stopping: StoppingRule = field(default_factory=StoppingRule)
    seed: int = 0
    network_code: NetworkCode | None = None
    output_path: str = ""
    canonical_variances: tuple = (1.0, 1.0, 1.0)
    lines: dict = field(default_factory=dict, repr=False)  # key -> source line

    def __post_init__(self):
        if not self.output_path:
            self.output_path = f"results/{self.experiment}.csv"


KNOWN_KEYS = ("experiment", "snr_db_grid", "methods", "stopping", "seed", "output_path",
              "G", "v", "slot_variances", "link_variances", "canonical_variances")


def _floats(text, key, line):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}", line) from None


def _grid(text, line):
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("snr_db_grid: range form is start:step:stop", line)
        start, step, stop = _floats(" ".join(parts), "snr_db_grid", line)
        if not step > 0:
            raise ConfigError("snr_db_grid: step must be positive", line)
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return _floats(text, "snr_db_grid", line)


def parse_config(text: str) -> ExperimentConfig:
    raw, lines = {}, {}
    matrix_rows, matrix_line = None, None
    for no, full in enumerate(text.splitlines(), start=1):
        line = full.split("#", 1)[0].strip()
        if matrix_rows is not None:
            if line.startswith("]"):
                raw["G"], lines["G"] = matrix_rows, matrix_line
                matrix_rows = None
                continue
            if line:
                if not all(tok in ("0", "1") for tok in line.split()):
                    raise ConfigError(f"G: rows must contain only 0 and 1, got {line!r}", no)
                matrix_rows.append([int(tok) for tok in line.split()])
            continue
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", no)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", no)
        if key == "G":
            if not value.startswith("["):
                raise ConfigError("G: expected '[' to open the matrix block", no)
            rest = value[1:].strip()
            matrix_rows, matrix_line = [], no
            if rest:
                raise ConfigError("G: put matrix rows on their own lines", no)
            continue
        raw[key], lines[key] = value, no
    if matrix_rows is not None:
        raise ConfigError("G: matrix block is not closed with ']'", matrix_line)
    return _build(raw, lines)


def _build(raw, lines):
    if "experiment" not in raw:
        raise ConfigError("missing required key 'experiment'")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {exp!r}",
                          lines["experiment"])
    if "snr_db_grid" not in raw:
        raise ConfigError("missing required key 'snr_db_grid'")
    grid = _grid(raw["snr_db_grid"], lines["snr_db_grid"])
    if not grid:
        raise ConfigError("snr_db_grid is empty", lines["snr_db_grid"])
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("snr_db_grid must be strictly increasing", lines["snr_db_grid"])
    methods = []
    if "methods" in raw:
        methods = [m.strip() for m in raw["methods"].split(",") if m.strip()]
        from .experiments import METHODS  # late import: experiments imports this module

        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}", lines["methods"])
    elif exp == "custom":
        raise ConfigError("custom experiments must list their methods")
    stopping = StoppingRule()
    if "stopping" in raw:
        vals = _floats(raw["stopping"], "stopping", lines["stopping"])
        if len(vals) != 2 or any(v != int(v) for v in vals):
            raise ConfigError("stopping: expected two integers 'min_errors, max_trials'",
                              lines["stopping"])
        if vals[0] < 1:
            raise ConfigError("stopping: min_errors must be at least 1", lines["stopping"])
        if vals[1] < 1:
            raise ConfigError("stopping: max_trials must be at least 1", lines["stopping"])
        stopping = StoppingRule(int(vals[0]), int(vals[1]))
    seed = 0
    if "seed" in raw:
        try:
            seed = int(raw["seed"])
        except ValueError:
            raise ConfigError(f"seed: expected an integer, got {raw['seed']!r}", lines["seed"]) from None
        if not 0 <= seed < 2**64:
            raise ConfigError("seed: must be a 64-bit unsigned integer", lines["seed"])
    code = None
    if "G" in raw or "v" in raw:
        if "G" not in raw or "v" not in raw:
            missing = "v" if "G" in raw else "G"
            raise ConfigError(f"network code needs both G and v; {missing} is missing",
                              lines.get("G") or lines.get("v"))
        rows = raw["G"]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ConfigError("G: rows must be non-empty and of equal length", lines["G"])
        v = _floats(raw["v"], "v", lines["v"])
        if any(t != int(t) for t in v):
            raise ConfigError("v: node ids must be integers", lines["v"])
        kwargs = {}
        for key in ("slot_variances", "link_variances"):
            if key in raw:
                kwargs[key] = _floats(raw[key], key, lines[key])
        try:
            code = NetworkCode(rows, [int(t) for t in v], **kwargs)
        except DomainError as exc:
            raise ConfigError(f"network code: {exc}", lines["G"]) from None
    elif "slot_variances" in raw or "link_variances" in raw:
        key = "slot_variances" if "slot_variances" in raw else "link_variances"
        try:
            code = NetworkCode(DEFAULT_G, DEFAULT_V,
                               **{k: _floats(raw[k], k, lines[k])
                                  for k in ("slot_variances", "link_variances") if k in raw})
        except DomainError as exc:
            raise ConfigError(f"{key}: {exc}", lines[key]) from None
    variances = (1.0, 1.0, 1.0)
    if "canonical_variances" in raw:
        vals = _floats(raw["canonical_variances"], "canonical_variances", lines["canonical_variances"])
        if len(vals) != 3 or any(not v > 0 for v in vals):
            raise ConfigError("canonical_variances: expected three positive numbers 'sr, rd, sd'",
                              lines["canonical_variances"])
        variances = tuple(vals)
    return ExperimentConfig(exp, grid, methods, stopping, seed, code, raw.get("output_path", ""),
                            variances, lines)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def diagnostics(cfg: ExperimentConfig) -> list:
    """Non-fatal warnings about a parsed config."""
    from .experiments import METHODS, default_methods

    out = []
    methods = cfg.methods or default_methods(cfg.experiment)
    analytic = [m for m in methods if METHODS[m].kind != "mc"]
    if analytic and any(v != 1.0 for v in cfg.canonical_variances):
        out.append(f"line {cfg.lines.get('canonical_variances')}: non-unit canonical variances; "
                   f"analysis methods ({', '.join(analytic)}) assume unit variances")
    code = cfg.network_code
    if analytic and code is not None and (
            (code.slot_variances != 1.0).any() or (code.link_variances != 1.0).any()):
        key = "slot_variances" if (code.slot_variances != 1.0).any() else "link_variances"
        out.append(f"line {cfg.lines.get(key)}: non-unit network variances; "
                   f"analysis methods ({', '.join(analytic)}) assume unit variances")
    return out
