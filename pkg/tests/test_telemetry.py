from unittest.mock import patch

import pytest

from engine.telemetry import COUNTERS, D_STEP, D_UPDATES, EVALUATE, G_UPDATES, PHASES, RunTelemetry


class TestRunTelemetry:
    def test_counters_start_at_zero(self):
        telemetry = RunTelemetry()
        assert telemetry.counters() == dict.fromkeys(COUNTERS, 0)

    def test_count(self):
        telemetry = RunTelemetry()
        telemetry.count(D_UPDATES)
        telemetry.count(D_UPDATES, 4)
        assert telemetry.get(D_UPDATES) == 5
        assert telemetry.get(G_UPDATES) == 0

    def test_unknown_counter_rejected(self):
        with pytest.raises(KeyError):
            RunTelemetry().count("clipped")

    def test_phase_timing(self):
        telemetry = RunTelemetry()
        with patch("time.perf_counter", side_effect=[0.0, 0.1, 1.0, 1.3]):
            with telemetry.phase(D_STEP):
                pass
            with telemetry.phase(D_STEP):
                pass
        stats = telemetry.timings()[D_STEP]
        assert stats["count"] == 2
        assert stats["total_ms"] == pytest.approx(400.0)
        assert stats["mean_ms"] == pytest.approx(200.0)
        assert stats["max_ms"] == pytest.approx(300.0)

    def test_phase_recorded_when_body_raises(self):
        telemetry = RunTelemetry()
        with pytest.raises(RuntimeError):
            with telemetry.phase(EVALUATE):
                raise RuntimeError("boom")
        assert telemetry.timings()[EVALUATE]["count"] == 1

    def test_untouched_phases_report_zero(self):
        timings = RunTelemetry().timings()
        assert set(timings) == set(PHASES)
        assert all(t == {"count": 0, "total_ms": 0.0, "mean_ms": 0.0, "max_ms": 0.0} for t in timings.values())

    def test_unknown_phase_rejected(self):
        with pytest.raises(KeyError):
            with RunTelemetry().phase("warmup"):
                pass
