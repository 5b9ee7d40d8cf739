"""Scenario files: INI-style sections with typed values.

Example::

    [scenario]
    name = cosine
    eps = 1/4, 1/8, 1/16, 1/32
    n1 = 512
    n2 = 512
    period_x2 = 1.0
    seed = 0

    [solver]
    rel_tol = 1e-10
    preconditioner = "jacobi"

    [g1]
    family = "x1-cosine"
    params = [2.0, 1.0]

``[g2]`` and ``[Q]`` follow the same two-key grammar. Optional sections are
``[schrodinger]`` (``omega_family``, ``omega_params``, ``lambda`` and
``path``; the ``[g1]``/``[g2]`` fields then play the role of g~1, g~2) and
``[bloch]`` (parameters of the Bloch diagnostics, see ``BLOCH_DEFAULTS``).
Values are Python literals; bare words are read as strings and ``eps`` entries
may be written as fractions.
"""
from __future__ import annotations

import ast
import configparser
import hashlib
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .discretize import reciprocal_integer
from .errors import ConfigurationError
from .fields import CoefficientField, HypothesisConstants, validate_hypotheses
from .linsolve import SolveOptions

SOLVER_DEFAULTS = {
    "rel_tol": 1e-10,
    "max_iter": None,
    "preconditioner": "jacobi",
    "power_tol": 1e-4,
    "power_max_iter": 200,
}

BLOCH_DEFAULTS = {
    "x2": 0.0,
    "k": [0.1, 0.4, 1.2],
    "fiber_n1": 64,
    "fiber_n2": 64,
    "germ_k": [0.05, 0.1, 0.2, 0.4],
    "germ_n1": 256,
    "gap_points": 9,
    "decomp_eps": "1/4",
    "M": 4,
    "count": 4,
    "decomp_n1": 16,
    "decomp_n2": 16,
}

SCHRODINGER_DEFAULTS = {
    "omega_family": "constant",
    "omega_params": [1.0],
    "lambda": "auto",
    "path": "discrete",
}


def _literal(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_eps(value) -> tuple:
    """Fractions 1/m from a comma-separated string or a list of numbers/strings."""
    items = value.split(",") if isinstance(value, str) else list(value)
    out = []
    for item in items:
        try:
            frac = Fraction(str(item).strip()).limit_denominator(1 << 20)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigurationError(f"cannot parse eps entry {item!r}") from exc
        if frac <= 0 or frac > 1 or frac.numerator != 1:
            raise ConfigurationError(f"eps = {item} is not the reciprocal of an integer")
        reciprocal_integer(float(frac))
        out.append(frac)
    return tuple(out)


@dataclass(frozen=True)
class ProblemScenario:
    name: str
    g1: CoefficientField
    g2: CoefficientField
    Q: CoefficientField
    eps_list: tuple
    n1: int
    n2: int
    period_x2: float = 1.0
    seed: int = 0
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    schrodinger: dict | None = None
    bloch: dict = field(default_factory=lambda: dict(BLOCH_DEFAULTS))

    def __post_init__(self):
        eps = self.eps_list
        if len(eps) == 0:
            raise ConfigurationError("eps list is empty")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigurationError("eps list must be strictly decreasing")
        m_max = round(1 / min(eps))
        for e in eps:
            m = round(1 / e)
            if self.n1 % m:
                raise ConfigurationError(f"n1 = {self.n1} is not divisible by 1/eps = {m}")
        if self.n1 < 16 * m_max:
            raise ConfigurationError(f"n1 = {self.n1} < 16/min(eps) = {16 * m_max}")
        if self.n2 < 4:
            raise ConfigurationError("n2 must be >= 4")
        for f in (self.g1, self.g2, self.Q):
            if f.period_x2 != self.period_x2:
                raise ConfigurationError("field x2-periods must match the scenario period")

    # -- derived objects -------------------------------------------------

    def constants(self, sampling: int = 64) -> HypothesisConstants:
        return validate_hypotheses(self.g1, self.g2, self.Q, sampling)

    def solve_options(self, eps_index: int = 0, tol: float | None = None) -> SolveOptions:
        return SolveOptions(
            rel_tol=tol if tol is not None else float(self.solver["rel_tol"]),
            max_iter=self.solver.get("max_iter"),
            preconditioner=self.solver["preconditioner"],
            seed=int(self.seed) ^ int(eps_index),
        )

    def scaled(self, sigma: float) -> "ProblemScenario":
        return self.with_fields(self.g1.scaled(sigma), self.g2.scaled(sigma), self.Q.scaled(sigma))

    def with_fields(self, g1, g2, Q) -> "ProblemScenario":
        return ProblemScenario(self.name, g1, g2, Q, self.eps_list, self.n1, self.n2, self.period_x2,
                               self.seed, dict(self.solver), self.schrodinger, dict(self.bloch))

    def replace(self, **kw) -> "ProblemScenario":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return ProblemScenario(**d)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        def fdict(f):
            return {"family": f.family, "params": list(f.params), "scale": f.scale}

        return {
            "name": self.name,
            "eps": [str(e) for e in self.eps_list],
            "n1": self.n1,
            "n2": self.n2,
            "period_x2": self.period_x2,
            "seed": self.seed,
            "solver": dict(self.solver),
            "g1": fdict(self.g1),
            "g2": fdict(self.g2),
            "Q": fdict(self.Q),
            "schrodinger": self.schrodinger,
            "bloch": dict(self.bloch),
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _field(section, period, name) -> CoefficientField:
    if "family" not in section:
        raise ConfigurationError(f"[{name}] needs a 'family' key")
    params = _literal(section.get("params", "[]"))
    if isinstance(params, (int, float)):
        params = [params]
    scale = float(_literal(section.get("scale", "1.0")))
    return CoefficientField(str(_literal(section["family"])), tuple(params), period, scale)


def _typed(section, defaults, name) -> dict:
    out = dict(defaults)
    for key, raw in section.items():
        if key not in defaults:
            raise ConfigurationError(f"unknown key {key!r} in [{name}]")
        out[key] = _literal(raw)
    return out


def parse_scenario(text: str, validate: bool = True) -> ProblemScenario:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse scenario: {exc}") from exc
    if "scenario" not in cp:
        raise ConfigurationError("missing [scenario] section")
    s = cp["scenario"]
    try:
        period = float(_literal(s.get("period_x2", "1.0")))
        n1 = int(_literal(s.get("n1", "64")))
        n2 = int(_literal(s.get("n2", str(n1))))
        seed = int(_literal(s.get("seed", "0")))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value in [scenario]: {exc}") from exc
    eps_raw = s.get("eps", "1/4")
    eps = parse_eps(_literal(eps_raw) if eps_raw.strip().startswith("[") else eps_raw)
    missing = [n for n in ("g1", "g2", "Q") if n not in cp]
    fields = {}
    for n in ("g1", "g2", "Q"):
        if n in cp:
            fields[n] = _field(cp[n], period, n)
    if "g1" in missing:
        raise ConfigurationError("missing [g1] section")
    fields.setdefault("g2", fields["g1"])
    fields.setdefault("Q", CoefficientField("constant", (1.0,), period))
    solver = _typed(cp["solver"], SOLVER_DEFAULTS, "solver") if "solver" in cp else dict(SOLVER_DEFAULTS)
    bloch = _typed(cp["bloch"], BLOCH_DEFAULTS, "bloch") if "bloch" in cp else dict(BLOCH_DEFAULTS)
    schr = None
    if "schrodinger" in cp:
        schr = _typed(cp["schrodinger"], SCHRODINGER_DEFAULTS, "schrodinger")
        if isinstance(schr["omega_params"], (int, float)):
            schr["omega_params"] = [schr["omega_params"]]
        schr["omega_params"] = [float(p) for p in schr["omega_params"]]
    scn = ProblemScenario(
        name=str(_literal(s.get("name", "unnamed"))),
        g1=fields["g1"], g2=fields["g2"], Q=fields["Q"],
        eps_list=eps, n1=n1, n2=n2, period_x2=period, seed=seed,
        solver=solver, schrodinger=schr, bloch=bloch,
    )
    SolveOptions(rel_tol=float(solver["rel_tol"]), max_iter=solver["max_iter"],
                 preconditioner=solver["preconditioner"])
    if validate:
        scn.constants()
    return scn


def load_scenario(path, validate: bool = True) -> ProblemScenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, validate)


def serialize_scenario(scn: ProblemScenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["scenario"] = {
        "name": repr(scn.name),
        "eps": ", ".join(str(e) for e in scn.eps_list),
        "n1": str(scn.n1),
        "n2": str(scn.n2),
        "period_x2": repr(float(scn.period_x2)),
        "seed": str(scn.seed),
    }
    cp["solver"] = {k: repr(v) for k, v in scn.solver.items()}
    for name in ("g1", "g2", "Q"):
        f = getattr(scn, name)
        cp[name] = {"family": repr(f.family), "params": repr(list(f.params)), "scale": repr(f.scale)}
    if scn.schrodinger is not None:
        cp["schrodinger"] = {k: repr(v) for k, v in scn.schrodinger.items()}
    cp["bloch"] = {k: repr(v) for k, v in scn.bloch.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
