"""CSV ingestion and run-configuration parsing."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dgp import DgpSpec
from .errors import (ConfigError, MissingColumn, MissingCovariate,
                     OutcomeMissingWhileSelected, ParseError)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MISSING_TOKENS = frozenset({"", "NA"})


@dataclass
class TabularDataset:
    names: list
    columns: dict
    missing: dict
    n: int

    def matrix(self, cols) -> np.ndarray:
        return np.column_stack([self.columns[c] for c in cols]) if cols else np.empty((self.n, 0))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]


@dataclass
class EstimationRequest:
    data_path: str
    outcome_col: str
    selection_col: str
    covariate_cols: list
    continuous_cols: list
    interact_dummies: bool = True
    knots_first: int = 5
    knots_second: int = 7
    robust: bool = False
    output_format: str = "json"
    alpha: float = 0.05

    def __post_init__(self):
        self.covariate_cols = list(self.covariate_cols)
        self.continuous_cols = list(self.continuous_cols)
        if not self.continuous_cols:
            raise ConfigError("at least one continuous covariate is required")
        extra = [c for c in self.continuous_cols if c not in self.covariate_cols]
        if extra:
            raise ConfigError(f"continuous columns {extra} are not among the covariates")
        if self.output_format not in ("json", "csv", "table"):
            raise ConfigError(f"unknown output format {self.output_format!r}")

    @property
    def dummy_cols(self) -> list:
        return [c for c in self.covariate_cols if c not in self.continuous_cols]


def read_csv(path, columns=None, binary=()) -> TabularDataset:
    """Read a headed CSV into float columns; empty cells and "NA" become NaN.

    Only ``columns`` are parsed when given.  Columns listed in ``binary``
    must hold 0/1 wherever they are present.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: file is empty, a header row is required") from None
        wanted = list(header) if columns is None else list(dict.fromkeys(columns))
        absent = [c for c in wanted if c not in header]
        if absent:
            raise MissingColumn(f"{path}: column(s) {absent} not found in header {header}")
        idx = {c: header.index(c) for c in wanted}
        raw = {c: [] for c in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, "
                                 f"header has {len(header)}")
            for c in wanted:
                cell = row[idx[c]].strip()
                if cell in MISSING_TOKENS:
                    raw[c].append(np.nan)
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: line {lineno}, column {c!r}: "
                                     f"cannot parse {cell!r} as a number") from None
                if not np.isfinite(value):
                    raise ParseError(f"{path}: line {lineno}, column {c!r}: "
                                     f"non-finite value {cell!r}")
                if c in binary and value not in (0.0, 1.0):
                    raise ParseError(f"{path}: line {lineno}, column {c!r}: "
                                     f"expected 0/1, got {cell!r}")
                raw[c].append(value)
    cols = {c: np.asarray(v, dtype=np.float64) for c, v in raw.items()}
    n = len(next(iter(cols.values()))) if cols else 0
    return TabularDataset(wanted, cols, {c: np.isnan(v) for c, v in cols.items()}, n)


def _first_line(mask) -> int:
    # data row i sits on file line i + 2 (header is line 1)
    return int(np.argmax(mask)) + 2


def load_csv(path, request: EstimationRequest) -> TabularDataset:
    """Load the columns an estimation request needs and validate them."""
    cols = [request.outcome_col, request.selection_col, *request.covariate_cols]
    data = read_csv(path, cols, binary=[request.selection_col])
    sel = data.missing[request.selection_col]
    if sel.any():
        raise ParseError(f"{path}: line {_first_line(sel)}, column "
                         f"{request.selection_col!r}: selection indicator is missing")
    for c in request.covariate_cols:
        if data.missing[c].any():
            raise MissingCovariate(f"{path}: line {_first_line(data.missing[c])}, "
                                   f"column {c!r}: covariate is missing")
    bad = data.missing[request.outcome_col] & (data[request.selection_col] == 1)
    if bad.any():
        raise OutcomeMissingWhileSelected(
            f"{path}: line {_first_line(bad)}, column {request.outcome_col!r}: "
            "outcome is missing for a selected observation")
    return data


def write_csv(path, header, rows) -> None:
    """Write rows of floats with 17 significant digits (exact round-trip)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def fmt_float(v) -> str:
    v = float(v)
    if np.isnan(v):
        return "NA"
    return "%.17g" % v


# ---------------------------------------------------------------------------
# run configuration (TOML)

_MC_KEYS = {"dgp", "estimators", "n", "reps", "seed", "base_seed", "knots_first",
            "knots_second", "max_parallel", "lee_treatment", "designs"}


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*(\[+\s*)?[\"']?{re.escape(key)}\b")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _config_error(path, text, key, msg) -> ConfigError:
    line = _line_of(text, key)
    where = f"{path}: line {line}" if line else f"{path}"
    return ConfigError(f"{where}: {msg}")


def read_config(path) -> tuple:
    """Parse a TOML run configuration; returns ``(mapping, raw_text)``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return tomllib.loads(text), text
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def mc_configs_from_file(path) -> list:
    """Build one McConfig per design listed under ``dgp``.

    Custom designs are declared as ``[designs.<name>]`` tables holding the
    DgpSpec fields and referenced by name in ``dgp``.
    """
    from .montecarlo import McConfig

    cfg, text = read_config(path)
    unknown = set(cfg) - _MC_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise _config_error(path, text, key, f"unknown key {key!r}")
    designs = cfg.get("designs", {})
    names = cfg.get("dgp", list(designs) or None)
    if names is None:
        raise _config_error(path, text, "dgp", "no design given; set dgp = \"dgp1\" or similar")
    if isinstance(names, str):
        names = [names]
    common = {}
    for key, target in (("estimators", "estimators"), ("n", "n"), ("reps", "reps"),
                        ("knots_first", "knots_first"), ("knots_second", "knots_second"),
                        ("max_parallel", "max_parallel"), ("lee_treatment", "lee_treatment"),
                        ("seed", "base_seed"), ("base_seed", "base_seed")):
        if key in cfg:
            common[target] = cfg[key]
    for key in ("n", "reps", "knots_first", "knots_second", "max_parallel", "seed", "base_seed"):
        if key in cfg and (not isinstance(cfg[key], int) or isinstance(cfg[key], bool)):
            raise _config_error(path, text, key, f"{key} must be an integer")
    configs = []
    for name in names:
        try:
            if name in designs:
                d = dict(designs[name])
                d.setdefault("name", name)
                d.setdefault("n", common.get("n", 5000))
                dgp = DgpSpec.from_dict(d)
            else:
                dgp = name
            configs.append(McConfig(dgp=dgp, **common))
        except (ConfigError, TypeError) as exc:
            key = f"designs.{name}" if name in designs else "dgp"
            raise _config_error(path, text, key, str(exc)) from None
    return configs


_REQUEST_KEYS = {"data", "outcome", "selection", "covariates", "continuous",
                 "interact_dummies", "knots_first", "knots_second", "robust", "format", "alpha"}


def request_from_file(path, **overrides) -> EstimationRequest:
    """Build an EstimationRequest from a TOML file.

    Keys: ``data``, ``outcome``, ``selection``, ``covariates`` (list),
    ``continuous`` (list) and optionally ``interact_dummies``,
    ``knots_first``, ``knots_second``, ``robust``, ``format``, ``alpha``.
    A relative ``data`` path is resolved against the config file's
    directory.  Non-None ``overrides`` replace the file values.
    """
    cfg, text = read_config(path)
    unknown = set(cfg) - _REQUEST_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise _config_error(path, text, key, f"unknown key {key!r}")
    for key in ("data", "outcome", "selection", "covariates", "continuous"):
        if key not in cfg and overrides.get(key) is None:
            raise _config_error(path, text, key, f"missing required key {key!r}")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    data_path = Path(cfg["data"])
    if not data_path.is_absolute() and "data" not in overrides:
        data_path = Path(path).parent / data_path
    try:
        return EstimationRequest(
            str(data_path), cfg["outcome"], cfg["selection"], cfg["covariates"],
            cfg["continuous"], bool(cfg.get("interact_dummies", True)),
            int(cfg.get("knots_first", 5)), int(cfg.get("knots_second", 7)),
            bool(cfg.get("robust", False)), cfg.get("format", "json"),
            float(cfg.get("alpha", 0.05)))
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
