import math

from misspec.bounds import FROZEN_CONSTANTS, calibrate, check_constants, random_tuple, tuple_ratios
from misspec.measures import make_rng


def test_frozen_constants_dominate_calibration_prefix():
    # the first tuples of the calibration run must sit below the frozen constants
    got = calibrate(n_tuples=40)
    for k, v in got.items():
        assert v <= FROZEN_CONSTANTS[k]


def test_fresh_tuples_pass():
    r = check_constants(n_tuples=60, seed=12345)
    assert r.passed, r.violations
    assert r.in_regime > 0


def test_tighter_constants_are_caught():
    tight = {k: v / 50 for k, v in FROZEN_CONSTANTS.items()}
    r = check_constants(n_tuples=20, seed=3, constants=tight)
    assert not r.passed


def test_ratios_are_finite_or_flagged():
    rng = make_rng(8)
    for _ in range(10):
        r = tuple_ratios(random_tuple(rng))
        assert set(r) == set(FROZEN_CONSTANTS)
        # P log(p/q) may be negative when q has mass above one; the bound is one-sided
        for k, v in r.items():
            assert math.isnan(v) or math.isfinite(v)
        assert all(r[k] >= 0 for k in r if k.startswith("expansion"))
