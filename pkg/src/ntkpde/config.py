"""Experiment configuration files (TOML).

A configuration is normalized on load: defaults are filled in, numbers are
coerced and every expression is parsed and checked against the declared
dimension.  :func:`dumps` writes the normalized form back, and loading that
text again yields an equal :class:`ExperimentConfig`.

Errors are reported as :class:`ConfigError` carrying the 1-based line and
column of the offending value.
"""

from __future__ import annotations

import copy
import hashlib
import math
import re
import sys

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .expressions import Expression, ExpressionError

SCHEMA = {
    "": {"seed": int, "name": str},
    "problem": {
        "dim": int, "bound": float, "form": str, "A": list, "b": list, "c": str,
        "rhs": str, "rhs_bound": float,
    },
    "problem.barron": {"a": list, "w": list, "p": list, "rescale": bool},
    "problem.time": {"kind": str, "T": float, "convention": str},
    "boundary": {"kind": str, "a": float, "b": float, "a0": float, "b0": float,
                 "p_a": float, "p_b": float, "c1": float, "c2": float},
    "samples": {"n": int, "seed": int},
    "train": {"width": int, "gamma": float, "lr": float, "steps": int, "asi": bool,
              "lambda": float, "seed": int, "cadence": int},
    "diagnostics": {"gram_cadence": int, "gram_w": bool, "kernel_mc": int, "delta": float},
    "approx": {"widths": list, "seeds": int, "num_mc": int, "event_width": int, "event_seeds": int},
    "spectrum": {"widths": list, "seeds": int, "kernel_mc": int},
    "generalize": {"num_mc": int, "delta": float},
}

DEFAULTS = {
    "": {"seed": 0},
    "problem": {"dim": 1, "bound": 1.0, "form": "nondivergence", "rhs_bound": 1.0},
    "boundary": {"kind": "identity"},
    "samples": {"n": 5},
    "train": {"width": 1000, "steps": 1000, "asi": True, "lambda": 0.0},
    "diagnostics": {"gram_cadence": 0, "gram_w": False, "kernel_mc": 100_000, "delta": 0.1},
    "approx": {"widths": [8, 32, 128, 512], "seeds": 20, "num_mc": 10_000},
    "spectrum": {"widths": [50, 500, 5000], "seeds": 5, "kernel_mc": 100_000},
    "generalize": {"num_mc": 100_000, "delta": 0.1},
}

EXPR_KEYS = {("problem", "A"), ("problem", "b"), ("problem", "c"), ("problem", "rhs")}


class ConfigError(ValueError):
    """Invalid configuration with a 1-based source location."""

    def __init__(self, message, line=None, column=None, path=None):
        self.message, self.line, self.column, self.path = message, line, column, path
        super().__init__(str(self))

    def __str__(self):
        where = self.path or "<config>"
        if self.line is not None:
            where += f":{self.line}:{self.column or 1}"
        return f"{where}: {self.message}"


class _Locator:
    """Maps ``(table, key)`` to a position in the source text."""

    def __init__(self, text):
        self.lines = text.splitlines()

    def find(self, table, key=None, needle=None):
        current = ""
        header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\s]+?)\s*\]")
        for i, raw in enumerate(self.lines):
            m = header.match(raw)
            if m:
                current = re.sub(r"\s+", "", m.group(1))
                if key is None and current == table:
                    return i + 1, raw.index("[") + 1
                continue
            if key is None or current != table:
                continue
            km = re.match(rf"^\s*{re.escape(key)}\s*=\s*", raw)
            if km is None:
                continue
            if needle is None:
                return i + 1, km.end() + 1
            # the value may continue over several lines (arrays)
            for j in range(i, len(self.lines)):
                start = km.end() if j == i else 0
                col = self.lines[j].find(needle, start)
                if col >= 0:
                    return j + 1, col + 1
                if j > i and re.match(r"^\s*[A-Za-z_][\w]*\s*=", self.lines[j]):
                    break
            return i + 1, km.end() + 1
        return None, None


class ExperimentConfig:
    """Normalized configuration; ``data`` maps table names to key/value dicts."""

    def __init__(self, data, path=None):
        self.data = data
        self.path = path

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.data == other.data

    def __getitem__(self, table):
        return self.data.get(table, {})

    def get(self, table, key, default=None):
        return self.data.get(table, {}).get(key, default)

    @property
    def seed(self):
        return self.data[""]["seed"]

    def with_overrides(self, seed=None, gram_cadence=None):
        data = copy.deepcopy(self.data)
        if seed is not None:
            data[""]["seed"] = int(seed)
        if gram_cadence is not None:
            data["diagnostics"]["gram_cadence"] = int(gram_cadence)
        return ExperimentConfig(data, self.path)

    def to_toml(self):
        return dumps(self)

    def sha256(self):
        return hashlib.sha256(dumps(self).encode()).hexdigest()


def _nest(data):
    out = {}
    for table, values in data.items():
        if not values and table:
            continue
        if table == "":
            out.update(values)
            continue
        node = out
        for part in table.split("."):
            node = node.setdefault(part, {})
        node.update(values)
    return out


def dumps(config):
    return tomli_w.dumps(_nest(config.data))


def _flatten(raw, locator, path):
    tables = {}

    def walk(prefix, node):
        for key, value in node.items():
            name = f"{prefix}.{key}" if prefix else key
            if isinstance(value, dict):
                if name not in SCHEMA:
                    line, col = locator.find(name)
                    raise ConfigError(f"unknown table [{name}]", line, col, path)
                tables.setdefault(name, {})
                walk(name, value)
            else:
                tables.setdefault(prefix, {})[key] = value

    walk("", raw)
    for table, values in tables.items():
        allowed = SCHEMA[table]
        for key in values:
            if key not in allowed:
                line, col = locator.find(table, key)
                label = f"[{table}] " if table else ""
                raise ConfigError(f"unknown key {label}{key!r}", line, col, path)
    return tables


def _coerce(table, key, value, locator, path):
    kind = SCHEMA[table][key]
    line, col = locator.find(table, key)

    def bad(msg):
        return ConfigError(f"{key}: {msg}", line, col, path)

    if (table, key) in EXPR_KEYS:
        if kind is str:
            if isinstance(value, bool) or not isinstance(value, (str, int, float)):
                raise bad("expected an expression")
            return value if isinstance(value, str) else repr(float(value))
        if not isinstance(value, list):
            raise bad("expected an array of expressions")
        return [
            [v if isinstance(v, str) else repr(float(v)) for v in row] if isinstance(row, list)
            else (row if isinstance(row, str) else repr(float(row)))
            for row in value
        ]
    if kind is bool:
        if not isinstance(value, bool):
            raise bad("expected true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("expected an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise bad("expected a finite number")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise bad("expected a string")
        return value
    if not isinstance(value, list):
        raise bad("expected an array")
    return value


def _check_expression(source, dim, table, key, locator, path):
    try:
        Expression(source).check_dim(dim)
    except ExpressionError as exc:
        line, col = locator.find(table, key, needle=f'"{source}"')
        if line is not None:
            col += 1 + exc.position  # skip the opening quote
        raise ConfigError(f"{key}: {exc} in {source!r}", line, col, path) from None


def _validate(data, locator, path):
    prob = data["problem"]
    d = prob["dim"]
    if d < 1:
        raise ConfigError("dim must be >= 1", *locator.find("problem", "dim"), path)
    if prob["bound"] < 1:
        raise ConfigError("bound M must be >= 1", *locator.find("problem", "bound"), path)
    if prob["form"] not in ("nondivergence", "divergence"):
        raise ConfigError("form must be 'nondivergence' or 'divergence'", *locator.find("problem", "form"), path)
    prob.setdefault("A", [["1.0" if i == j else "0.0" for j in range(d)] for i in range(d)])
    prob.setdefault("b", ["0.0"] * d)
    prob.setdefault("c", "0.0")
    A = prob["A"]
    if len(A) != d or any(not isinstance(r, list) or len(r) != d for r in A):
        raise ConfigError(f"A must be a {d}x{d} array", *locator.find("problem", "A"), path)
    if len(prob["b"]) != d or any(isinstance(v, list) for v in prob["b"]):
        raise ConfigError(f"b must have {d} entries", *locator.find("problem", "b"), path)
    for row in A:
        for src in row:
            _check_expression(src, d, "problem", "A", locator, path)
    for src in prob["b"]:
        _check_expression(src, d, "problem", "b", locator, path)
    _check_expression(prob["c"], d, "problem", "c", locator, path)

    barron = data.get("problem.barron")
    if barron:
        for key in ("a", "w", "p"):
            if key not in barron:
                raise ConfigError(f"[problem.barron] needs {key!r}", *locator.find("problem.barron"), path)
        barron.setdefault("rescale", False)
        try:
            barron["a"] = [float(v) for v in barron["a"]]
            barron["p"] = [float(v) for v in barron["p"]]
            barron["w"] = [[float(v) for v in row] for row in barron["w"]]
        except (TypeError, ValueError):
            raise ConfigError("Barron atoms must be numbers", *locator.find("problem.barron"), path) from None
        if any(len(row) != d for row in barron["w"]):
            raise ConfigError(f"each Barron w must have {d} entries", *locator.find("problem.barron", "w"), path)
        if "rhs" in prob:
            raise ConfigError("give either rhs or [problem.barron], not both", *locator.find("problem", "rhs"), path)
    elif "rhs" in prob:
        _check_expression(prob["rhs"], d, "problem", "rhs", locator, path)
    else:
        prob["rhs"] = "0.0"

    time = data.get("problem.time")
    if time:
        time.setdefault("T", 1.0)
        time.setdefault("convention", "time_positive")
        if time.get("kind") not in ("parabolic", "hyperbolic"):
            raise ConfigError("time kind must be 'parabolic' or 'hyperbolic'", *locator.find("problem.time", "kind"), path)
        if time["T"] <= 0:
            raise ConfigError("T must be positive", *locator.find("problem.time", "T"), path)

    bnd = data["boundary"]
    if bnd["kind"] not in ("identity", "dirichlet", "mixed", "neumann"):
        raise ConfigError(f"unknown boundary kind {bnd['kind']!r}", *locator.find("boundary", "kind"), path)
    if bnd["kind"] != "identity" and d != 1:
        raise ConfigError("boundary augmentations need dim = 1", *locator.find("boundary", "kind"), path)
    try:
        build_augmentation(data)
    except ValueError as exc:
        raise ConfigError(str(exc), *locator.find("boundary"), path) from None

    if barron:
        from .barron import BarronRepresentation
        from .experiment import build_coefficients

        try:
            BarronRepresentation(barron["a"], barron["w"], barron["p"], build_coefficients(data), barron["rescale"])
        except ValueError as exc:
            raise ConfigError(f"Barron representation: {exc}", *locator.find("problem.barron"), path) from None

    tr = data["train"]
    if tr["width"] < 1:
        raise ConfigError("width must be >= 1", *locator.find("train", "width"), path)
    if tr["asi"] and tr["width"] % 2:
        raise ConfigError("ASI needs an even width", *locator.find("train", "width"), path)
    if "gamma" in tr and not 0 < tr["gamma"] < 1:
        raise ConfigError("gamma must lie in (0, 1)", *locator.find("train", "gamma"), path)
    if "lr" in tr and not tr["lr"] > 0:
        raise ConfigError("lr must be positive", *locator.find("train", "lr"), path)
    if tr["lambda"] < 0:
        raise ConfigError("lambda must be >= 0", *locator.find("train", "lambda"), path)
    if tr["steps"] < 0:
        raise ConfigError("steps must be >= 0", *locator.find("train", "steps"), path)
    if data["samples"]["n"] < 1:
        raise ConfigError("n must be >= 1", *locator.find("samples", "n"), path)
    for table in ("diagnostics", "generalize"):
        if not 0 < data[table]["delta"] < 1:
            raise ConfigError("delta must lie in (0, 1)", *locator.find(table, "delta"), path)
    for table in ("approx", "spectrum"):
        widths = data[table]["widths"]
        if not widths or any(isinstance(w, bool) or not isinstance(w, int) or w < 1 for w in widths):
            raise ConfigError("widths must be positive integers", *locator.find(table, "widths"), path)


def loads(text, path=None):
    """Parse and normalize configuration text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"\(at line (\d+), column (\d+)\)", str(exc))
        msg = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigError(f"syntax error: {msg}", line, col, path) from None
    locator = _Locator(text)
    tables = _flatten(raw, locator, path)
    data = {}
    for table in SCHEMA:
        values = dict(DEFAULTS.get(table, {}))
        for key, value in tables.get(table, {}).items():
            values[key] = _coerce(table, key, value, locator, path)
        if values or table in DEFAULTS:
            data[table] = values
    _validate(data, locator, path)
    return ExperimentConfig(data, path)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from None
    return loads(text, str(path))


def build_augmentation(data):
    from .boundary import make_augmentation

    bnd = dict(data["boundary"])
    kind = bnd.pop("kind")
    if kind == "identity":
        return make_augmentation("identity")
    if kind != "neumann":
        bnd.pop("c1", None)
        bnd.pop("c2", None)
    if kind == "mixed":
        bnd.pop("p_b", None)
    return make_augmentation(kind, **bnd)
