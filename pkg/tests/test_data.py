import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchps import THETA_REFERENCE, GeneratorConfig, generate
from switchps.data import (NON_SWITCHER, AugmentedUnit, Dataset, InvariantViolation,
                           MalformedRow, ObservedPattern, PatientRecord, SwitchStatus, classify,
                           parse_dataset, parse_latent, serialize_dataset, serialize_latent)
from switchps.model import Theta

HEADER = "id,z,c,s_tilde,s_event,y_tilde,y_event\n"
OP = ObservedPattern


def rec(z, s_event, y_event, c=2.5):
    if z == 1:
        return PatientRecord(1, 1, c, None, 0, c if not y_event else 1.0, y_event)
    s = 0.8 if s_event else c
    y = 1.7 if y_event else c
    return PatientRecord(1, 0, c, s, s_event, y, y_event)


def test_switch_status():
    assert not NON_SWITCHER.is_switcher
    assert SwitchStatus.at(1.2).time == 1.2
    for bad in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(ValueError):
            SwitchStatus(bad)


def test_classify_table_rows():
    assert classify(rec(0, 0, 1)) is OP.KNOWN_NON_SWITCHER
    assert classify(rec(0, 1, 0)) is OP.KNOWN_SWITCHER_CENSORED
    assert classify(rec(0, 0, 0)) is OP.AMBIGUOUS_CONTROL
    assert classify(rec(0, 1, 1)) is OP.KNOWN_SWITCHER_DEAD
    assert classify(rec(1, 0, 1)) is OP.TREATED_UNCENSORED
    assert classify(rec(1, 0, 0)) is OP.TREATED_CENSORED


def test_classify_exhaustive():
    expected = {
        (0, 0, 1): OP.KNOWN_NON_SWITCHER, (0, 1, 1): OP.KNOWN_SWITCHER_DEAD,
        (0, 1, 0): OP.KNOWN_SWITCHER_CENSORED, (0, 0, 0): OP.AMBIGUOUS_CONTROL,
        (1, 0, 1): OP.TREATED_UNCENSORED, (1, 0, 0): OP.TREATED_CENSORED,
    }
    for z, se, ye in itertools.product((0, 1), repeat=3):
        if z == 1 and se == 1:
            with pytest.raises(InvariantViolation):
                PatientRecord(1, 1, 2.0, None, 1, 1.0, ye).validate()
            continue
        assert classify(rec(z, se, ye)) is expected[(z, se, ye)]


def test_parse_contract_rows():
    ds = parse_dataset(HEADER + "1,0,3.0,1.24,1,2.10,1\n2,1,2.5,,0,2.5,0\n", c_max=3.0)
    a, b = ds.records
    assert (a.z, a.s_tilde, a.s_event, a.y_tilde, a.y_event) == (0, 1.24, 1, 2.10, 1)
    assert classify(a) is OP.KNOWN_SWITCHER_DEAD
    assert b.s_tilde is None and classify(b) is OP.TREATED_CENSORED


def test_parse_rejects_treated_switch():
    with pytest.raises(InvariantViolation) as exc:
        parse_dataset(HEADER + "3,1,2.5,1.0,1,2.0,1\n", c_max=3.0)
    assert exc.value.unit_id == 3


@pytest.mark.parametrize("row", [
    "4,0,2.0,2.0,0,2.5,0",     # y_tilde > c
    "5,0,2.0,1.0,0,2.0,0",     # unswitched control needs s_tilde == c
    "6,0,2.0,1.5,1,1.0,1",     # switch after death
    "7,0,2.0,2.0,0,1.5,0",     # censored survival must equal c
    "8,0,3.5,3.5,0,3.5,0",     # beyond study duration
])
def test_parse_invariant_violations(row):
    with pytest.raises(InvariantViolation):
        parse_dataset(HEADER + row + "\n", c_max=3.0)


@pytest.mark.parametrize("text,line", [
    ("id,z,c\n", 1),
    (HEADER + "1,0,2.0,2.0,0,2.0\n", 2),
    (HEADER + "1,0,2.0,2.0,0,2.0,0\n2,x,2,2,0,2,0\n", 3),
])
def test_parse_malformed(text, line):
    with pytest.raises(MalformedRow) as exc:
        parse_dataset(text, c_max=3.0)
    assert exc.value.line == line


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        parse_dataset(HEADER + "1,1,2.5,,0,2.5,0\n1,1,2.5,,0,2.5,0\n", c_max=3.0)


def test_round_trip(small_trial):
    ds, _ = small_trial
    text = serialize_dataset(ds)
    back = parse_dataset(text, ds.c_max)
    assert back == ds
    assert serialize_dataset(back) == text


@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0.1, 3.0), st.floats(0.01, 1.0),
                          st.floats(0.01, 1.0), st.booleans(), st.booleans()),
                min_size=1, max_size=15))
def test_round_trip_property(rows):
    recs = []
    for i, (z, c, fs, fy, sev, yev) in enumerate(rows):
        y = fy * c if yev else c
        if z == 1:
            recs.append(PatientRecord(i, 1, c, None, 0, y, int(yev)))
        else:
            se = int(sev)
            s = min(fs * y, c) if se else c
            recs.append(PatientRecord(i, 0, c, s, se, y, int(yev)))
    ds = Dataset(tuple(recs), 3.0)
    assert parse_dataset(serialize_dataset(ds), 3.0) == ds


def test_augmented_unit_holds_values():
    a = AugmentedUnit(SwitchStatus.at(0.7), 1.4)
    assert a.s_star.time == 0.7 and a.y0_star == 1.4


def test_generator_all_non_switchers():
    th = Theta.from_dict(THETA_REFERENCE.as_dict() | {"pi": 1 - 1e-12})
    ds, truth = generate(GeneratorConfig(n=300, theta_true=th, seed=1))
    assert np.isnan(truth.s0).all()
    assert not any(r.s_event for r in ds)


def test_generator_deterministic():
    cfg = GeneratorConfig(n=200, theta_true=THETA_REFERENCE, seed=99)
    a, ta = generate(cfg)
    b, tb = generate(cfg)
    assert serialize_dataset(a) == serialize_dataset(b)
    assert serialize_latent(ta) == serialize_latent(tb)


def test_generator_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(n=1, theta_true=THETA_REFERENCE)
    with pytest.raises(ValueError):
        GeneratorConfig(n=10, theta_true=THETA_REFERENCE, c_min=3.0, c_max=1.5)


def test_latent_sidecar_round_trip(small_trial):
    _, truth = small_trial
    back = parse_latent(serialize_latent(truth))
    np.testing.assert_array_equal(back.id, truth.id)
    np.testing.assert_array_equal(np.isnan(back.s0), np.isnan(truth.s0))
    np.testing.assert_array_equal(back.y1, truth.y1)


def test_generated_natural_constraint_and_monotonicity():
    th = THETA_REFERENCE.with_kappa(1.0)
    _, truth = generate(GeneratorConfig(n=2000, theta_true=th, seed=3))
    sw = ~np.isnan(truth.s0)
    assert np.all(truth.s0[sw] < truth.y0[sw])
    assert np.all(truth.y1 >= truth.y0)


def test_generated_observations_consistent(small_trial):
    ds, truth = small_trial
    col = ds.columns
    ctrl = col.z == 0
    obs_sw = col.s_event == 1
    np.testing.assert_array_equal(col.s_tilde[obs_sw], truth.s0[obs_sw])
    assert np.all(col.s_event[~ctrl] == 0)
    y_obs = np.where(ctrl, truth.y0, truth.y1)
    np.testing.assert_array_equal(col.y_event == 1, y_obs <= col.c)


def test_generator_calibration_over_seeds():
    """Descriptive statistics of simulated trials against the published trial summary."""
    ns_frac, sw_mean, sw_cens_mean, y_cens = [], [], [], []
    for seed in range(20):
        ds, _ = generate(GeneratorConfig(n=1000, theta_true=THETA_REFERENCE, seed=seed))
        col = ds.columns
        ctrl = col.z == 0
        ns_frac.append(np.mean(col.s_event[ctrl] == 0))
        obs = ctrl & (col.s_event == 1)
        sw_mean.append(col.s_tilde[obs].mean())
        # switching time censored by death or end of follow-up
        sw_cens_mean.append(np.where(col.s_event == 1, col.s_tilde, col.y_tilde)[ctrl].mean())
        y_cens.append(np.mean(col.y_event == 0))
    for v in ns_frac:
        assert abs(v - 0.62) <= 0.06
    for v in y_cens:
        assert abs(v - 0.69) <= 0.06
    for v in sw_cens_mean:
        assert abs(v - 1.55) <= 0.15
    for v in sw_mean:
        assert abs(v - 1.24) <= 0.15
