from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from homstrip.errors import ConfigurationError, HypothesisViolation
from homstrip.scenario import (
    BLOCH_DEFAULTS,
    SOLVER_DEFAULTS,
    load_scenario,
    parse_eps,
    parse_scenario,
    serialize_scenario,
)

MINIMAL = """
[scenario]
eps = 1/4

[g1]
family = constant
params = 1.0
"""


def test_minimal_file_fills_defaults():
    scn = parse_scenario(MINIMAL)
    assert scn.name == "unnamed"
    assert scn.eps_list == (Fraction(1, 4),)
    assert (scn.n1, scn.n2, scn.period_x2, scn.seed) == (64, 64, 1.0, 0)
    assert scn.g2 == scn.g1 and scn.Q.family == "constant"
    assert scn.solver == SOLVER_DEFAULTS and scn.bloch == BLOCH_DEFAULTS
    assert scn.schrodinger is None


@pytest.mark.parametrize("name", ["cosine", "cosine-small", "layered", "two-phase", "schrodinger"])
def test_round_trip_fingerprint(scenario_dir, name):
    scn = load_scenario(scenario_dir / f"{name}.ini")
    again = parse_scenario(serialize_scenario(scn))
    assert again.fingerprint() == scn.fingerprint()
    assert again == scn


def test_fingerprint_tracks_content():
    a = parse_scenario(MINIMAL)
    assert a.fingerprint() != a.replace(seed=1).fingerprint()


@pytest.mark.parametrize("eps", ["0.3", "1/4, 0.3", "0", "2", "abc"])
def test_inadmissible_eps_rejected(eps):
    with pytest.raises(ConfigurationError):
        parse_scenario(MINIMAL.replace("eps = 1/4", f"eps = {eps}"))


def test_eps_forms():
    assert parse_eps("1/2, 0.25, 1/8") == (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
    assert parse_eps([0.5, "1/4"]) == (Fraction(1, 2), Fraction(1, 4))


@pytest.mark.parametrize("text, fragment", [
    (MINIMAL.replace("eps = 1/4", "eps = 1/4, 1/2"), "decreasing"),
    (MINIMAL.replace("eps = 1/4", "eps = 1/8"), "16/min"),
    (MINIMAL.replace("eps = 1/4", "eps = 1/4\nn1 = 66"), "divisible"),
    ("[g1]\nfamily = constant\nparams = 1.0\n", "scenario"),
    ("[scenario]\neps = 1/4\n", "g1"),
    (MINIMAL + "\n[solver]\nbogus = 1\n", "bogus"),
    (MINIMAL + "\n[solver]\npreconditioner = 'ilu'\n", "preconditioner"),
    ("not an ini file", "parse"),
])
def test_configuration_errors(text, fragment):
    with pytest.raises(ConfigurationError, match=fragment):
        parse_scenario(text)


def test_hypothesis_violation_on_load():
    text = MINIMAL.replace("family = constant\nparams = 1.0", "family = x1-cosine\nparams = [0.5, 1.0]")
    with pytest.raises(HypothesisViolation) as info:
        parse_scenario(text)
    assert info.value.field == "g1"
    parse_scenario(text, validate=False)


def test_missing_file():
    with pytest.raises(ConfigurationError):
        load_scenario("/nonexistent/scenario.ini")


def test_solve_options_seed_per_eps():
    scn = parse_scenario(MINIMAL.replace("eps = 1/4", "eps = 1/4\nseed = 6"))
    assert [scn.solve_options(i).seed for i in range(3)] == [6, 7, 4]


def test_scaled_scenario():
    scn = parse_scenario(MINIMAL).scaled(2.0)
    assert scn.g1(0.1, 0.2) == 2.0 and scn.Q(0.1, 0.2) == 2.0


@given(st.lists(st.integers(1, 64), min_size=1, max_size=5, unique=True), st.integers(0, 2**31))
def test_round_trip_property(ms, seed):
    ms = sorted(ms)
    n1 = 16 * max(ms)
    while any(n1 % m for m in ms):
        n1 += 16
    eps = ", ".join(f"1/{m}" for m in ms)
    text = MINIMAL.replace("eps = 1/4", f"eps = {eps}\nn1 = {n1}\nn2 = 8\nseed = {seed}")
    scn = parse_scenario(text, validate=False)
    assert parse_scenario(serialize_scenario(scn), validate=False).fingerprint() == scn.fingerprint()
