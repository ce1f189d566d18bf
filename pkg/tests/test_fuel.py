import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoonmine.fuel import (DrivingProfile, FuelParams, derive_profile, fuel_rate, interval_fuel, is_coordinable,
                              pattern_roles, platoon_savings, step_fuel, traction_force, write_savings)
from platoonmine.mining import PlatoonPattern

P = FuelParams()


def hand_force(v, a=0.0, alpha=0.0, phi=1.0):
    # written out independently: m a + drag + rolling + grade
    m, g = 26800.0, 9.8
    return m * a + 0.5 * 1.29 * 10.26 * 0.6 * v * v * phi + m * g * 0.007 * math.cos(alpha) + m * g * math.sin(alpha)


def flat(v, n=4, tid="x"):
    return DrivingProfile(tid, list(range(n)), [v] * n, [0.0] * n, [0.0] * n)


# ---------------------------------------------------------------- profile
def test_profile_stationary():
    p = derive_profile("x", [0, 1, 2], [50.0, 50.0, 50.0], [10.0, 10.0, 10.0], 15.0)
    assert p.v == [0, 0, 0] and p.a == [0, 0, 0] and p.alpha == [0, 0, 0]


def test_profile_acceleration():
    # 10 m/s then 13 m/s over one 15 s step
    p = derive_profile("x", [0, 1, 2], [0.0, 150.0, 345.0], [0.0] * 3, 15.0)
    assert p.v[:2] == pytest.approx([10.0, 13.0])
    assert p.a[0] == pytest.approx(0.2)


def test_profile_grade():
    odo = [300.0 * k for k in range(6)]
    alt = [100 + 0.05 * x for x in odo]
    p = derive_profile("x", range(6), odo, alt, 15.0)
    assert p.alpha == pytest.approx([math.atan(0.05)] * 6)


def test_profile_rejects_unsorted():
    with pytest.raises(ValueError):
        derive_profile("x", [2, 1], [0.0, 1.0], [0.0, 0.0], 15.0)


# ------------------------------------------------------------------ force
def test_force_at_rest():
    assert traction_force(0, 0, 0, 1.0, P) == pytest.approx(26800 * 9.8 * 0.007)


def test_force_descent_brakes():
    alpha = -0.05
    assert math.sin(alpha) < -(0.007 * math.cos(alpha))
    assert traction_force(2.0, 0, alpha, 1.0, P) < 0


def test_force_cruise():
    assert traction_force(20, 0, 0, 1.0, P) == pytest.approx(hand_force(20), rel=1e-12)
    assert traction_force(20, 0, 0, 1.0, P) == pytest.approx(3427, abs=1)


def test_table_values_verbatim():
    verbatim = FuelParams(table2_verbatim=True)
    m, g = 26800.0, 9.8
    assert traction_force(20, 0, 0, 1.0, verbatim) == pytest.approx(
        0.5 * 1.29 * 10.26 * 0.007 * 400 + m * g * 0.6)


# ------------------------------------------------------------------- rate
def test_rate_braking_zero():
    assert fuel_rate(-100.0, 20.0, P) == 0.0


def test_rate_standstill_zero():
    assert fuel_rate(1838.0, 0.0, P) == 0.0


def test_rate_cruise():
    assert fuel_rate(3427.0, 20.0, P) == pytest.approx(3427 * 20 / (0.737 * 0.4 * 44000))
    assert fuel_rate(3427.0, 20.0, P) == pytest.approx(5.28, abs=0.01)


# ---------------------------------------------------------------- interval
def test_interval_stationary():
    assert interval_fuel(flat(0.0), 1.0, P) == 0.0


def test_interval_one_step_constant():
    rate = fuel_rate(traction_force(20, 0, 0, 1.0, P), 20, P)
    assert interval_fuel(flat(20.0, 1), 1.0, P) == pytest.approx(rate * 15.0)


def fine_oracle(profile, phi, h=0.1, dt=15.0):
    """Left-point sum at 0.1 s of the same physics, written from scratch."""
    total = 0.0
    n = int(round(dt / h))
    for v0, a, al in zip(profile.v, profile.a, profile.alpha):
        for k in range(n):
            v = max(0.0, v0 + a * (k + 0.5) * h)
            f = hand_force(v, a, al, phi)
            total += (f * v / (0.737 * 0.4 * 44000) if f > 0 else 0.0) * h
    return total


def random_profile(rng, n=8):
    v = [rng.uniform(5, 25)]
    for _ in range(n - 1):
        v.append(max(0.0, v[-1] + rng.uniform(-3, 3)))
    a = [(v[i + 1] - v[i]) / 15.0 for i in range(n - 1)] + [0.0]
    alpha = [rng.uniform(-0.04, 0.04) for _ in range(n)]
    return DrivingProfile("x", list(range(n)), v, a, alpha)


@pytest.mark.parametrize("seed", range(5))
def test_interval_matches_fine_integration(seed):
    prof = random_profile(random.Random(seed))
    got = interval_fuel(prof, 1.0, P)
    assert got == pytest.approx(fine_oracle(prof, 1.0), rel=0.01)


@pytest.mark.parametrize("seed", range(5))
def test_substeps_converge(seed):
    prof = random_profile(random.Random(100 + seed))
    coarse = interval_fuel(prof, 1.0, P)
    finer = interval_fuel(prof, 1.0, FuelParams(substeps=30))
    assert abs(finer - coarse) <= 0.005 * finer


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), p1=st.floats(0.3, 1.0), p2=st.floats(0.3, 1.0))
def test_phi_monotone(seed, p1, p2):
    prof = random_profile(random.Random(seed), 4)
    lo, hi = sorted((p1, p2))
    assert interval_fuel(prof, lo, P) <= interval_fuel(prof, hi, P) + 1e-9


# ---------------------------------------------------------------- savings
def test_not_coordinable():
    assert not is_coordinable(1.0, 200.0, P)
    assert is_coordinable(3.5, 200.0, P)
    assert not is_coordinable(None, 200.0, P)


def test_follower_ratio():
    drag = 0.5 * 1.29 * 10.26 * 0.6 * 400
    roll = 26800 * 9.8 * 0.007
    ratio = (drag * 0.72 + roll) / (drag + roll)
    assert ratio == pytest.approx(0.87, abs=0.005)
    prof = flat(20.0, 10)
    assert interval_fuel(prof, 0.72, P) / interval_fuel(prof, 1.0, P) == pytest.approx(ratio, rel=0.001)


def two_truck_case(steps=30, v=20.0, n=40):
    profiles = {t: flat(v, n, t) for t in ("a", "b")}
    p = PlatoonPattern(("a", "b"), tuple(range(steps)),
                       {"distance_km": steps * v * 15 / 1000, "mean_headway_m": 200.0})
    return profiles, p


def test_savings_roles_and_totals():
    profiles, p = two_truck_case()
    rep = platoon_savings([p], profiles, lambda pat, t: ("b", "a"), P)
    (row,) = rep.patterns
    assert row.coordinable
    one = interval_fuel(profiles["a"], 1.0, P, p.timesteps)
    assert row.baseline_ml == pytest.approx(2 * one)
    lead = interval_fuel(profiles["b"], 0.92, P, p.timesteps)
    follow = interval_fuel(profiles["a"], 0.72, P, p.timesteps)
    assert row.platooned_ml == pytest.approx(lead + follow)
    assert rep.fleet_platooned_ml <= rep.fleet_baseline_ml
    assert 0 < rep.fleet_saving_pct < row.saving_pct


def test_savings_braking_only():
    n = 5
    profiles = {t: DrivingProfile(t, list(range(n)), [3.0] * n, [0.0] * n, [-0.1] * n) for t in "ab"}
    p = PlatoonPattern(("a", "b"), tuple(range(n)), {"distance_km": 50.0, "mean_headway_m": 100.0})
    rep = platoon_savings([p], profiles, lambda pat, t: ("a", "b"), P)
    assert rep.patterns[0].baseline_ml == 0 and rep.patterns[0].platooned_ml == 0
    assert rep.patterns[0].saving_pct == 0


def test_uncoordinable_pattern_saves_nothing():
    profiles, p = two_truck_case(steps=3)
    rep = platoon_savings([p], profiles, lambda pat, t: ("a", "b"), P)
    assert not rep.patterns[0].coordinable
    assert rep.fleet_platooned_ml == pytest.approx(rep.fleet_baseline_ml)


def test_overlapping_patterns_take_lowest_phi():
    profiles = {t: flat(20.0, 40, t) for t in "abc"}
    steps = tuple(range(30))
    meta = {"distance_km": 9.0, "mean_headway_m": 200.0}
    p1 = PlatoonPattern(("a", "b"), steps, dict(meta))
    p2 = PlatoonPattern(("a", "b", "c"), steps, dict(meta))
    # a leads in the pair but follows c in the trio
    orders = {("a", "b"): ("a", "b"), ("a", "b", "c"): ("c", "a", "b")}
    rep = platoon_savings([p1, p2], profiles, lambda pat, t: orders[pat.trucks], P)
    want = (interval_fuel(profiles["a"], {t: 0.72 for t in steps}, P)
            + interval_fuel(profiles["b"], {t: 0.72 for t in steps}, P)
            + interval_fuel(profiles["c"], {t: 0.92 for t in steps}, P))
    assert rep.fleet_platooned_ml == pytest.approx(want)


def test_roles_fixed_per_run():
    p = PlatoonPattern(("a", "b"), (1, 2, 5, 6))
    order = {1: ("a", "b"), 2: ("b", "a"), 5: ("b", "a"), 6: ("a", "b")}
    roles = pattern_roles(p, lambda pat, t: order[t])
    assert roles[("a", 2)] == "leader" and roles[("b", 6)] == "leader"


def test_write_savings(tmp_path):
    profiles, p = two_truck_case()
    write_savings(tmp_path / "s.csv", platoon_savings([p], profiles, lambda pat, t: ("a", "b"), P))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("pattern_id,coordinable") and lines[1].startswith("0,true")


def test_params_validated():
    with pytest.raises(ValueError):
        FuelParams(eta_eng=0)
    with pytest.raises(ValueError):
        FuelParams(phi_follow=1.2)


def test_headway_stat_max():
    profiles, p = two_truck_case(steps=10)  # overlap 3 km
    p.summary.update(mean_headway_m=150.0, max_headway_m=190.0)
    order = lambda pat, t: ("b", "a")
    assert platoon_savings([p], profiles, order, P).patterns[0].coordinable
    strict = FuelParams(headway_stat="max")
    (row,) = platoon_savings([p], profiles, order, strict).patterns
    assert not row.coordinable and row.mean_headway_m == 150.0
    with pytest.raises(ValueError):
        FuelParams(headway_stat="median")
