from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ransomgraph.ingest import (
    AlertParseError,
    RawAlert,
    ToolProfile,
    UnknownCategoryError,
    UnknownToolError,
    fit_tool_profiles,
    load_profiles,
    normalize_alert,
    normalize_stream,
    parse_alert_line,
    read_alert_stream,
    save_profiles,
    write_alert_stream,
)

HORIZON = 7 * 24 * 3600


def line(**over):
    rec = {"tool": "edr", "ts": 100, "risk": 50, "severity": 3.5, "category": "ransom_note",
           "src": "h1", "dst": "h2"}
    rec.update(over)
    return json.dumps({k: v for k, v in rec.items() if v is not ...})


def raw(tool="A", ts=0, risk=0.0, sev=0.0, cat="x", src="h1", dst=None):
    return RawAlert(tool, ts, risk, sev, cat, src, dst)


class TestParse:
    def test_all_fields(self):
        a = parse_alert_line(line())
        assert a == RawAlert("edr", 100, 50.0, 3.5, "ransom_note", "h1", "h2")

    def test_missing_destination(self):
        assert parse_alert_line(line(dst=...)).destination_host is None
        assert parse_alert_line(line(dst=None)).destination_host is None

    def test_negative_timestamp(self):
        with pytest.raises(AlertParseError) as err:
            parse_alert_line(line(ts=-5), line_no=7)
        assert err.value.field == "timestamp"
        assert err.value.line_no == 7

    def test_self_destination_dropped(self):
        assert parse_alert_line(line(dst="h1")).destination_host is None

    @pytest.mark.parametrize("field", ["tool", "ts", "risk", "severity", "category", "src"])
    def test_missing_mandatory(self, field):
        with pytest.raises(AlertParseError) as err:
            parse_alert_line(line(**{field: ...}), line_no=3)
        assert err.value.field == field
        assert "line 3" in str(err.value)

    @pytest.mark.parametrize("over,field", [({"risk": "high"}, "risk"), ({"ts": 1.5}, "ts"),
                                            ({"src": ""}, "src"), ({"severity": True}, "severity")])
    def test_bad_values(self, over, field):
        with pytest.raises(AlertParseError) as err:
            parse_alert_line(line(**over))
        assert err.value.field == field

    def test_invalid_json(self):
        with pytest.raises(AlertParseError, match="line 2"):
            parse_alert_line("{not json", line_no=2)

    def test_unknown_tool_is_not_a_parse_error(self):
        assert parse_alert_line(line(tool="brand_new")).tool_id == "brand_new"


class TestFit:
    def test_extrema(self):
        prof = fit_tool_profiles([raw(risk=r) for r in (10, 50, 90)])["A"]
        assert (prof.risk_min, prof.risk_max) == (10, 90)

    def test_singleton(self):
        prof = fit_tool_profiles([raw(risk=7)])["A"]
        assert prof.risk_min == prof.risk_max == 7

    def test_empty(self):
        with pytest.raises(ValueError, match="no alerts"):
            fit_tool_profiles([])

    def test_interleaved_tools_match_bruteforce_grouping(self):
        rng = random.Random(4)
        alerts = [raw(tool=rng.choice("AB"), risk=rng.uniform(-5, 5), sev=rng.uniform(0, 9),
                      cat=rng.choice("pqr")) for _ in range(60)]
        profs = fit_tool_profiles(alerts)
        assert set(profs) == {a.tool_id for a in alerts}
        for tool, prof in profs.items():
            mine = [a for a in alerts if a.tool_id == tool]
            assert prof.risk_min == min(a.risk_score for a in mine)
            assert prof.risk_max == max(a.risk_score for a in mine)
            assert prof.severity_min == min(a.severity_score for a in mine)
            assert prof.severity_max == max(a.severity_score for a in mine)
            assert prof.categories == tuple(sorted({a.category for a in mine}))

    def test_registry_ordinals(self):
        prof = ToolProfile("A", 0, 1, 0, 1, ("a", "b", "c"))
        assert [prof.ordinal(c) for c in "abc"] == [0, 1, 2]
        with pytest.raises(UnknownCategoryError):
            prof.ordinal("z")

    def test_invalid_profile(self):
        with pytest.raises(ValueError):
            ToolProfile("A", 2, 1, 0, 1, ("a",))


class TestNormalize:
    prof = ToolProfile("A", 0.0, 100.0, 7.0, 7.0, ("a", "b", "c"))

    def test_midpoint(self):
        assert normalize_alert(raw(risk=50, sev=7, cat="b"), self.prof, 0, HORIZON).risk_norm == 0.5

    def test_degenerate_range(self):
        u = normalize_alert(raw(risk=50, sev=7, cat="b"), self.prof, 0, HORIZON)
        assert u.severity_norm == 0.5

    def test_time_clamp(self):
        u = normalize_alert(raw(ts=2 * HORIZON, sev=7, cat="a"), self.prof, 0, HORIZON)
        assert u.time_feature == 1.0

    def test_category_ordinal_scaled(self):
        assert [normalize_alert(raw(cat=c, sev=7), self.prof, 0).category_norm for c in "abc"] == [0.0, 0.5, 1.0]

    def test_single_category(self):
        prof = ToolProfile("A", 0, 1, 0, 1, ("only",))
        assert normalize_alert(raw(cat="only"), prof, 0).category_norm == 0.5

    def test_unknown_category(self):
        with pytest.raises(UnknownCategoryError, match="unknown category"):
            normalize_alert(raw(cat="zzz"), self.prof, 0)

    def test_tool_mismatch_and_start(self):
        with pytest.raises(ValueError):
            normalize_alert(raw(tool="B", cat="a"), self.prof, 0)
        with pytest.raises(ValueError):
            normalize_alert(raw(ts=5, cat="a"), self.prof, 10)

    def test_out_of_range_values_are_clamped(self):
        u = normalize_alert(raw(risk=150, sev=7, cat="a"), self.prof, 0)
        assert u.risk_norm == 1.0

    def test_stream_arrival_indices(self):
        alerts = [raw(ts=t, risk=t, cat="a") for t in (5, 6, 9)]
        profs = fit_tool_profiles(alerts)
        out = normalize_stream(alerts, profs)
        assert [u.arrival_index for u in out] == [0, 1, 2]
        assert out[0].time_feature == 0.0
        with pytest.raises(UnknownToolError):
            normalize_stream([raw(tool="Z")], profs)


finite = st.floats(-1e6, 1e6, allow_nan=False)
alert_st = st.builds(raw, tool=st.sampled_from("AB"), ts=st.integers(0, 10**7), risk=finite, sev=finite,
                     cat=st.sampled_from(["a", "b", "c", "d"]))


@settings(max_examples=200, deadline=None)
@given(st.lists(alert_st, min_size=1, max_size=30), st.integers(1, 10**6))
def test_features_in_unit_interval(alerts, horizon):
    profs = fit_tool_profiles(alerts)
    start = min(a.timestamp for a in alerts)
    for a in alerts:
        u = normalize_alert(a, profs[a.tool_id], start, horizon)
        assert all(0.0 <= f <= 1.0 for f in u.features)
        # deterministic and repeatable
        assert normalize_alert(a, profs[a.tool_id], start, horizon) == u


@settings(max_examples=100, deadline=None)
@given(st.lists(alert_st, min_size=1, max_size=30), st.randoms())
def test_fit_is_order_independent(alerts, rnd):
    shuffled = list(alerts)
    rnd.shuffle(shuffled)
    assert fit_tool_profiles(alerts) == fit_tool_profiles(shuffled)


@settings(max_examples=50, deadline=None)
@given(st.lists(alert_st, min_size=1, max_size=20), st.integers(0, 10**6))
def test_unseen_values_stay_in_unit_interval(alerts, probe):
    profs = fit_tool_profiles(alerts)
    a = alerts[0]
    u = normalize_alert(raw(tool=a.tool_id, ts=a.timestamp + probe, risk=probe * 1e3, sev=-probe * 1e3,
                            cat=a.category), profs[a.tool_id], a.timestamp, 3600)
    assert all(0.0 <= f <= 1.0 for f in u.features)


def test_stream_and_profile_roundtrip(tmp_path):
    alerts = [raw(ts=i, risk=i, cat="ab"[i % 2], dst="h2" if i % 3 else None) for i in range(5)]
    write_alert_stream(tmp_path / "s.jsonl", alerts, {"campaign_id": "c1"})
    meta, back = read_alert_stream(tmp_path / "s.jsonl")
    assert meta == {"campaign_id": "c1"} and back == alerts
    profs = fit_tool_profiles(alerts)
    save_profiles(tmp_path / "p.json", profs, 1234.0)
    loaded, horizon = load_profiles(tmp_path / "p.json")
    assert loaded == profs and horizon == 1234.0


def test_profiles_file_is_versioned(tmp_path):
    (tmp_path / "p.json").write_text(json.dumps({"format": "tool-profiles", "version": 99, "profiles": []}))
    with pytest.raises(ValueError, match="version"):
        load_profiles(tmp_path / "p.json")
