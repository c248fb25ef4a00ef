"""Flat ``key = value`` experiment configs with ``[command]`` sections.

Keys above the first section header are shared defaults. Every problem in a
file is collected and reported together, each with its line number.
"""
from __future__ import annotations

import dataclasses
import math

COMMANDS = ("gc", "cmm", "sketch", "descend", "report")


def _int(text):
    return int(text)


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _int_list(text):
    return tuple(int(tok) for tok in text.replace(";", ",").split(",") if tok.strip())


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    parse.options = options
    return parse


COMMON_KEYS = {
    "seed": _int,
    "trials": _int,
    "delay": _choice("shifted-exponential", "deterministic", "empirical"),
    "shift": _float,
    "rate": _float,
    "delays": lambda t: tuple(_float(x) for x in t.split(",") if x.strip()),
    "policy": _choice("delay-order", "fixed-set", "adversarial"),
    "stragglers": _int_list,
    "format": _choice("csv", "jsonl"),
    "out": str,
}

COMMAND_KEYS = {
    "gc": {
        "scheme": _choice("frc", "brs", "expander", "bernoulli", "bibd"),
        "n": _int, "k": _int, "s": _int,
        "graph": _choice("petersen", "complete", "random-regular"),
        "degree": _int,
        "design": _choice("fano", "complete"),
        "v": _int,
        "decoder": _choice("default", "optimal", "one-step"),
        "rho": _float,
    },
    "cmm": {
        "scheme": _choice("matdot", "polynomial", "entangled", "independent", "setwise",
                          "weighted", "oversketch"),
        "L": _int, "N": _int, "M": _int,
        "n": _int, "k": _int, "r": _int,
        "q": _int, "b": _int, "e": _int,
    },
    "sketch": {
        "method": _choice("cr", "gaussian", "srht", "countsketch", "leverage"),
        "L": _int, "N": _int, "M": _int,
        "q": _int_list,
    },
    "descend": {
        "scheme": _choice("centralized", "frc", "brs", "expander", "bernoulli", "iterative"),
        "N": _int, "d": _int,
        "n": _int, "k": _int, "s": _int,
        "graph": _choice("petersen", "complete"),
        "step": _float,
        "iterations": _int,
        "noise": _float,
    },
}
COMMAND_KEYS["report"] = {"experiment": _choice("gc", "cmm", "sketch", "descend")}

DEFAULTS = {
    "seed": 0,
    "format": "csv",
    "delay": "shifted-exponential",
    "shift": 1.0,
    "rate": 1.0,
    "policy": "delay-order",
    "gc": {"decoder": "default"},
    "cmm": {"L": 8, "N": 16, "M": 8, "trials": 1, "e": 0},
    "sketch": {"L": 16, "N": 256, "M": 16, "q": (16, 64, 256), "trials": 50},
    "descend": {"N": 256, "d": 4, "iterations": 100, "noise": 1.0, "s": 0},
}


class ConfigError(Exception):
    """All problems found in a config; ``errors`` holds (line, message) pairs."""

    def __init__(self, errors):
        self.errors = sorted(errors, key=lambda e: (e[0] or 0, e[1]))
        super().__init__("; ".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


@dataclasses.dataclass
class ExperimentConfig:
    command: str
    params: dict
    lines: dict = dataclasses.field(default_factory=dict)
    invalid: set = dataclasses.field(default_factory=set)

    @property
    def seed(self) -> int:
        return self.params["seed"]

    @property
    def experiment(self) -> str:
        """The experiment actually run (report delegates to another command)."""
        return self.params.get("experiment", self.command) if self.command == "report" else self.command

    def get(self, key, default=None):
        return self.params.get(key, default)

    def resolved_items(self):
        return sorted(self.params.items())


def allowed_keys(command, experiment=None) -> dict:
    keys = dict(COMMON_KEYS)
    keys.update(COMMAND_KEYS[command])
    if command == "report" and experiment in COMMAND_KEYS:
        keys.update(COMMAND_KEYS[experiment])
    return keys


def parse_config(text: str, command: str | None = None) -> ExperimentConfig:
    """Parse and validate a config, raising ConfigError with every problem found."""
    errors = []
    sections: dict[str, list] = {None: []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in COMMANDS:
                errors.append((lineno, f"unknown section [{current}]"))
            sections.setdefault(current, [])
            continue
        if "=" not in line:
            errors.append((lineno, f"expected key = value, got {line!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            errors.append((lineno, "empty key"))
            continue
        sections.setdefault(current, []).append((lineno, key, value))

    named = [s for s in sections if s is not None]
    if command is None:
        if len(named) != 1:
            errors.append((None, "config must contain exactly one [command] section"))
            raise ConfigError(errors)
        command = named[0]
    if command not in COMMANDS:
        raise ConfigError(errors + [(None, f"unknown command {command!r}")])
    if named and command not in sections:
        errors.append((None, f"config has no [{command}] section"))
    entries = sections[None] + sections.get(command, [])

    experiment = None
    if command == "report":
        for lineno, key, value in entries:
            if key == "experiment":
                experiment = value
    keys = allowed_keys(command, experiment)

    params, lines, invalid = {}, {}, set()
    for lineno, key, value in entries:
        parser = keys.get(key)
        if parser is None:
            errors.append((lineno, f"unknown key {key!r}"))
            continue
        try:
            params[key] = parser(value)
        except ValueError as exc:
            errors.append((lineno, f"bad value for {key!r}: {value!r} ({exc})"))
            invalid.add(key)
            continue
        lines[key] = lineno

    _apply_defaults(params, command, experiment)
    cfg = ExperimentConfig(command, params, lines, invalid)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _apply_defaults(params, command, experiment):
    for key in ("seed", "format", "delay", "shift", "rate", "policy"):
        params.setdefault(key, DEFAULTS[key])
    target = experiment if command == "report" else command
    for key, value in DEFAULTS.get(target, {}).items():
        params.setdefault(key, value)


def _require(cfg, errors, *keys):
    missing = [k for k in keys if k not in cfg.params]
    for k in missing:
        if k in cfg.invalid:
            continue
        errors.append((None, f"missing required key {k!r} for {cfg.experiment} {cfg.get('scheme', cfg.get('method', ''))}".rstrip()))
    return not missing


def validate(cfg: ExperimentConfig) -> list:
    """Semantic checks that need several keys at once."""
    errors = []
    p = cfg.params
    line = cfg.lines.get

    if cfg.command == "report" and not _require(cfg, errors, "experiment"):
        return errors
    exp = cfg.experiment

    for key in ("trials", "iterations", "n", "k", "r", "q", "b", "L", "N", "M", "d", "v", "degree"):
        if key in p and not isinstance(p[key], tuple) and p[key] < 1:
            errors.append((line(key), f"{key} must be >= 1"))
    if "q" in p and isinstance(p["q"], tuple) and (not p["q"] or min(p["q"]) < 1):
        errors.append((line("q"), "q grid must list positive integers"))
    for key in ("s", "e", "seed"):
        if key in p and p[key] < 0:
            errors.append((line(key), f"{key} must be >= 0"))
    if "step" in p and p["step"] <= 0:
        errors.append((line("step"), "step must be positive"))
    if "n" in p and "s" in p and p["s"] >= p["n"]:
        errors.append((line("s"), f"s={p['s']} must be smaller than n={p['n']}"))
    if p.get("policy") == "adversarial" and exp not in ("gc", "descend"):
        errors.append((line("policy"), "adversarial policy applies to gradient coding only"))
    if p.get("policy") == "fixed-set" and "stragglers" not in p:
        errors.append((line("policy"), "fixed-set policy needs a 'stragglers' list"))
    if "stragglers" in p and "n" in p and any(not 0 <= i < p["n"] for i in p["stragglers"]):
        errors.append((line("stragglers"), f"straggler ids must lie in [0, {p['n']})"))

    if exp in ("gc", "descend"):
        if not _require(cfg, errors, "scheme"):
            return errors
        scheme = p["scheme"]
        if exp == "gc":
            _require(cfg, errors, "s")
        if scheme == "frc" and _require(cfg, errors, "n"):
            if p["n"] % (p.get("s", 0) + 1):
                errors.append((line("n"), f"frc needs (s+1) | n, got n={p['n']}, s={p.get('s')}"))
        if scheme in ("brs", "bernoulli") and _require(cfg, errors, "n", "k"):
            s = p.get("s", 0)
            if scheme == "brs":
                if s > p["k"] - 1:
                    errors.append((line("s"), f"brs needs s <= k-1, got s={s}, k={p['k']}"))
                if (p["k"] * (p["n"] - s)) % p["n"]:
                    errors.append((line("k"), "brs needs n | k(n-s)"))
                if p["n"] - s < p["k"]:
                    errors.append((line("k"), "brs needs n - s >= k"))
            elif not 0 < s <= p["k"]:
                errors.append((line("s"), "bernoulli needs 0 < s <= k"))
        if scheme == "expander":
            graph = p.get("graph", "petersen")
            if graph in ("complete", "random-regular"):
                _require(cfg, errors, "n")
            if graph == "random-regular":
                _require(cfg, errors, "degree")
        if scheme == "bibd" and p.get("design") == "complete":
            _require(cfg, errors, "v")
        if p.get("decoder") == "one-step" and "rho" not in p and scheme != "bibd":
            errors.append((line("decoder"), "one-step decoder needs 'rho'"))
        if exp == "descend" and scheme != "centralized":
            k = p.get("k")
            if scheme == "expander":
                k = p.get("n") if p.get("graph", "petersen") == "complete" else 10
            elif scheme == "frc" and "n" in p:
                k = p["n"] // (p.get("s", 0) + 1)
            if scheme in ("iterative",):
                _require(cfg, errors, "n", "k")
            if k and p["N"] % k:
                errors.append((line("N"), f"N={p['N']} must be divisible by the partition count {k}"))
            if scheme == "iterative" and "n" in p and "k" in p and p["n"] < p["k"]:
                errors.append((line("n"), "iterative sketching needs n >= k (one server per block)"))
    elif exp == "cmm":
        if not _require(cfg, errors, "scheme"):
            return errors
        scheme = p["scheme"]
        L, N, M = p["L"], p["N"], p["M"]
        if scheme in ("matdot", "polynomial", "independent", "setwise", "weighted") and not _require(cfg, errors, "k"):
            return errors
        k = p.get("k", 2)
        if scheme in ("matdot", "independent", "setwise", "weighted", "entangled") and N % (2 if scheme == "entangled" else k):
            errors.append((line("N"), f"N={N} must be divisible by k"))
        if scheme == "polynomial" and (L % k or M % k):
            errors.append((line("k"), f"k={k} must divide L={L} and M={M}"))
        need = {"matdot": 2 * k - 1, "polynomial": k * k, "entangled": 3}.get(scheme)
        if scheme in ("independent", "setwise", "weighted"):
            if _require(cfg, errors, "r"):
                need = 2 * p["r"] - 1
                if p["r"] > k:
                    errors.append((line("r"), f"r={p['r']} exceeds k={k}"))
        if need is not None and "n" in p and p["n"] < need:
            errors.append((line("n"), f"{scheme} needs n >= {need}, got {p['n']}"))
        if scheme == "oversketch" and _require(cfg, errors, "q", "b"):
            q, b, e = p["q"], p["b"], p.get("e", 0)
            if q % b or L % b or M % b:
                errors.append((line("b"), f"b={b} must divide q={q}, L={L} and M={M}"))
            elif e >= q // b:
                errors.append((line("e"), f"e={e} must be smaller than q/b={q // b}"))
    elif exp == "sketch":
        if not _require(cfg, errors, "method"):
            pass
        elif p["method"] == "srht" and max(p["q"]) > p["N"]:
            errors.append((line("q"), f"srht needs q <= N={p['N']}"))
    return errors
