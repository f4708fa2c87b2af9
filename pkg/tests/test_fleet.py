import math

import pytest
from hypothesis import given, strategies as st

from fleetsim.fleet import (
    ConfigError, InvalidState, Job, JobStatus, Mode, SystemConfig, VehicleState, decompose_times,
    default_delta, delta_bound, read_jobs_csv, update_battery, write_jobs_csv,
)


def test_default_delta():
    assert delta_bound(0.65) == pytest.approx(1 / math.sqrt(1500 * 0.65))
    assert default_delta(0.65) == 0.032
    cfg = SystemConfig()
    assert cfg.delta == 0.032
    assert cfg.step_km == pytest.approx(0.016)
    assert cfg.area.A == 16.0


@pytest.mark.parametrize("changes, fragment", [
    ({"delta": 0.2}, "delta <="),
    ({"K": 0}, "K >= 1"),
    ({"L": 0}, "L >= 1"),
    ({"lam": -1.0}, "lambda > 0"),
    ({"battery_low": 0.9}, "battery_low < battery_ready"),
    ({"charge_time": 100.0}, "alpha"),
])
def test_invalid_configs_name_invariant(changes, fragment):
    with pytest.raises(ConfigError, match=fragment):
        SystemConfig(**changes)


def test_replace_keeps_alpha_consistent():
    cfg = SystemConfig().replace(alpha=0.5)
    assert cfg.charge_time == pytest.approx(60.0)
    assert SystemConfig().replace(lam=2.0).delta == default_delta(2.0)


def test_from_dict_rejects_unknown():
    with pytest.raises(ConfigError):
        SystemConfig.from_dict({"bogus": 1})
    assert SystemConfig.from_dict(SystemConfig(K=7).to_dict()).K == 7


def test_battery_flight_and_charge():
    v = VehicleState(0, 0.0, 0.0, 0.5, Mode.TO_CUSTOMER)
    w = update_battery(v, 6.0)
    assert w.battery == pytest.approx(0.4) and v.battery == 0.5
    c = update_battery(v, 18.0, Mode.CHARGING)
    assert c.battery == pytest.approx(0.6)
    assert update_battery(v, 1e4, Mode.CHARGING).battery == 1.0


def test_battery_violation_flag():
    v = VehicleState(0, 0.0, 0.0, 0.01, Mode.TO_DEPOT)
    w = update_battery(v, 5.0)
    assert w.battery == 0.0 and w.energy_violation


@given(st.floats(0, 1), st.floats(0, 500), st.sampled_from(list(Mode)))
def test_battery_stays_in_unit_interval(b, dt, mode):
    w = update_battery(VehicleState(0, 0, 0, b, mode), dt)
    assert 0.0 <= w.battery <= 1.0


def test_decompose_times():
    j = Job(0, 1.0, 1.0, 2.0, 3.0, 4.5, 7.0, 3, JobStatus.DELIVERED)
    W, R, S, T = decompose_times(j)
    assert (W, R, S, T) == (1.0, 1.5, 2.5, 5.0)
    assert W + R + S == T
    with pytest.raises(InvalidState):
        decompose_times(Job(1, 0, 0, 0.0))


def test_jobs_csv_roundtrip(tmp_path):
    jobs = [Job(0, 1.0, 1.0, 2.0, 3.0, 4.5, 7.0, 3, JobStatus.DELIVERED), Job(1, 0.0, 0.0, 2.5)]
    write_jobs_csv(jobs, tmp_path / "j.csv")
    rows = read_jobs_csv(tmp_path / "j.csv")
    assert rows[0]["vehicle_id"] == 3 and rows[0]["T"] == 5.0
    assert rows[1]["T"] is None and rows[1]["vehicle_id"] is None
