"""Run configuration: sectioned key = value files with a single table of defaults.

Unknown sections or keys, and values that fail to parse, raise ConfigError
naming the offending line and field.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import sympy as sp

from .network import default_widths
from .problems import (Domain, ExactSolution, ProblemSpec, constant, exact_dirichlet_1d,
                       exact_robin_1d, manufacture, sample_boundary)

# section -> key -> (type, default, description)
DEFAULTS: dict[str, dict[str, tuple[str, Any, str]]] = {
    "problem": {
        "bc": ("str", "robin", "dirichlet | neumann | robin"),
        "beta": ("float", 1.0, "Robin coefficient; penalty for dirichlet"),
        "d": ("int", 1, "spatial dimension"),
        "domain": ("str", "hypercube", "hypercube | ball"),
        "solution": ("str", "robin_const", "robin_const | sine | cosine | quadratic | zero"),
        "w": ("str", "one", "one | two | variable"),
        "f": ("str", "manufactured", "source term; derived from the solution"),
        "g": ("str", "manufactured", "boundary datum; derived from the solution"),
        "fconst": ("float", 1.0, "constant source for robin_const"),
    },
    "train": {
        "A": ("int", 16, "number of subnetworks"),
        "m1": ("int", 0, "first hidden width; 0 means 5d"),
        "m2": ("int", 0, "second hidden width; 0 means C(2d+1, d+1)"),
        "n": ("int", 2048, "interior samples"),
        "m": ("int", 0, "boundary samples; 0 means n"),
        "eta": ("float", 1.0, "initial step size (halved until monotone)"),
        "T": ("int", 2000, "iterations"),
        "init_bound": ("float", 1.0, "inner weights uniform on [-b, b]"),
        "inner_radius": ("float", 1.0, "Frobenius radius around the inner initialisation"),
        "outer_budget": ("float", 100.0, "l1 budget of the outer layer"),
        "seed": ("int", 0, "master seed"),
        "mode": ("str", "practical", "practical | theory-report"),
        "n_eval": ("int", 20000, "Monte Carlo points for the H1 error"),
    },
    "output": {
        "directory": ("str", "out", "artifact directory"),
        "formats": ("list_str", ["csv", "json", "bin"], "subset of csv, json, bin"),
    },
    "study": {
        "n_list": ("list_int", [256, 1024, 4096], "sample sizes"),
        "repetitions": ("int", 3, "runs per sample size"),
    },
    "pou": {
        "N_list": ("list_int", [4, 8], "grid resolutions for the bound sweep"),
        "eps_list": ("list_float", [0.1, 0.01], "accuracy parameters"),
        "d_list": ("list_int", [1, 2], "dimensions"),
        "k": ("int", 1, "smoothness order seeding alpha"),
        "sample_count": ("int", 200, "points per cell"),
        "fit_s": ("list_int", [2, 3], "polynomial orders s (degree s - 1)"),
        "fit_N_list": ("list_int", [8, 16, 32, 64], "resolutions for the fit slope"),
    },
    "grad_check": {
        "configs": ("int", 20, "random network/problem configurations"),
        "tolerance": ("float", 1e-5, "relative error bound"),
        "directions": ("int", 1000, "outer-layer directions for the convexity probe"),
        "pairs": ("int", 1000, "random pairs for the projection suite"),
        "corrupt": ("bool", False, "test hook: drop the tanh'' terms from the analytic gradient"),
    },
    "bounds": {
        "n": ("int", 100, "sample size for the prescriptions"),
    },
}


class ConfigError(ValueError):
    pass


def _parse(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "str":
        return raw
    inner = kind.split("_", 1)[1]
    items = [p.strip() for p in raw.split(",") if p.strip()]
    return [_parse(inner, p) for p in items]


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            if re.match(rf"{re.escape(key)}\s*[=:]", s, flags=re.IGNORECASE):
                return no
    return 0


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: Optional[str] = None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({sec: {k: v[1] for k, v in keys.items()} for sec, keys in DEFAULTS.items()})

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls.defaults()
        cfg.source = source
        parser = configparser.ConfigParser(interpolation=None, strict=True)
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"{source}:{_line_of(text, section)}: unknown section [{section}]")
            for key, raw in parser.items(section):
                line = _line_of(text, section, key)
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"{source}:{line}: unknown key {section}.{key}")
                kind = DEFAULTS[section][key][0]
                try:
                    cfg.values[section][key] = _parse(kind, raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"{source}:{line}: bad value for {section}.{key} ({kind}): {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), str(path))

    def validate(self) -> None:
        p, t = self["problem"], self["train"]
        choices = {
            ("problem", "bc"): ("dirichlet", "neumann", "robin"),
            ("problem", "domain"): ("hypercube", "ball"),
            ("problem", "solution"): tuple(SOLUTIONS) + ("robin_const",),
            ("problem", "w"): tuple(WEIGHTS),
            ("problem", "f"): ("manufactured",),
            ("problem", "g"): ("manufactured",),
            ("train", "mode"): ("practical", "theory-report"),
        }
        for (sec, key), allowed in choices.items():
            if self[sec][key] not in allowed:
                raise ConfigError(f"{sec}.{key}: {self[sec][key]!r} is not one of {allowed}")
        if p["d"] < 1:
            raise ConfigError("problem.d must be at least 1")
        if p["bc"] != "neumann" and p["beta"] == 0:
            raise ConfigError("problem.beta must be nonzero")
        if p["solution"] == "robin_const":
            if p["d"] != 1:
                raise ConfigError("problem.solution robin_const needs d = 1")
            if p["w"] not in CONSTANT_WEIGHTS:
                raise ConfigError("problem.solution robin_const needs a constant w")
        if t["n"] < 1 or t["m"] < 0:
            raise ConfigError("train.n must be >= 1 and train.m >= 0")
        if t["A"] < 1:
            raise ConfigError("train.A must be at least 1")
        bad = set(self["output"]["formats"]) - {"csv", "json", "bin"}
        if bad:
            raise ConfigError(f"output.formats: unknown formats {sorted(bad)}")

    def set(self, section: str, key: str, value) -> None:
        if key not in DEFAULTS.get(section, {}):
            raise ConfigError(f"unknown key {section}.{key}")
        self.values[section][key] = value

    # derived quantities --------------------------------------------------
    @property
    def dims(self) -> tuple[int, int, int]:
        d = self["problem"]["d"]
        m1, m2 = default_widths(d)
        t = self["train"]
        return d, t["m1"] or m1, t["m2"] or m2

    @property
    def n_boundary(self) -> int:
        return self["train"]["m"] or self["train"]["n"]

    def domain(self) -> Domain:
        return Domain(self["problem"]["domain"], self["problem"]["d"])

    def problem(self) -> ProblemSpec:
        p = self["problem"]
        return build_problem(p["solution"], p["bc"], p["beta"], self.domain(), p["w"], p["fconst"])


SOLUTIONS = {
    "sine": lambda xs: sp.Mul(*[sp.sin(sp.pi * x) for x in xs]),
    "cosine": lambda xs: sp.Mul(*[sp.cos(sp.pi * x) for x in xs]),
    "quadratic": lambda xs: sp.Add(*[x**2 for x in xs]),
    "zero": lambda xs: sp.Integer(0),
}

CONSTANT_WEIGHTS = {"one": 1.0, "two": 2.0}
WEIGHTS = {
    "one": constant(1.0),
    "two": constant(2.0),
    "variable": lambda X: 1.0 + 0.5 * np.sum(np.atleast_2d(X) ** 2, axis=1),
}


def build_problem(solution: str, bc: str, beta: float, domain: Domain, w: str = "one",
                  fconst: float = 1.0) -> ProblemSpec:
    """Problem from registry ids; robin_const is the constant-data 1D benchmark."""
    if solution == "robin_const":
        wc = CONSTANT_WEIGHTS[w]
        if bc == "neumann":
            # g = 0 and constant data: the solution is the constant f / w
            ex = ExactSolution.from_sympy(sp.Float(fconst / wc), 1)
            return manufacture(domain, ex, WEIGHTS[w], "neumann")
        if bc == "dirichlet":
            sol = exact_dirichlet_1d(fconst, wc)
        else:
            sol = exact_robin_1d(fconst, wc, beta)
        return ProblemSpec(bc, domain, WEIGHTS[w], constant(fconst),
                           lambda Y, nrm: np.zeros(len(np.atleast_2d(Y))), beta,
                           sol.as_exact(), c_w=wc)
    xs = sp.symbols(f"x1:{domain.d + 1}")
    ex = ExactSolution.from_sympy(SOLUTIONS[solution](xs), domain.d)
    if bc == "dirichlet":
        Y, _ = sample_boundary(domain, 256, 0)
        if np.max(np.abs(ex.u(Y))) > 1e-10:
            raise ValueError(f"solution {solution!r} does not vanish on the {domain.kind} boundary")
    return manufacture(domain, ex, WEIGHTS[w], bc, None if bc == "neumann" else beta)


def reference_table() -> str:
    """Markdown table of every key with its default."""
    rows = ["| section | key | type | default | meaning |", "|---|---|---|---|---|"]
    for sec, keys in DEFAULTS.items():
        for key, (kind, default, desc) in keys.items():
            if isinstance(default, list):
                default = ",".join(str(v) for v in default)
            rows.append(f"| {sec} | {key} | {kind} | {default} | {desc} |")
    return "\n".join(rows)
