import json
import logging

from ganlab.logging import RunContextFilter, StructuredFormatter, current_run, log_event, run_context


class _Capture(logging.Handler):
    def __init__(self):
        super().__init__()
        self.lines = []
        self.addFilter(RunContextFilter())
        self.setFormatter(StructuredFormatter())

    def emit(self, record):
        self.lines.append(json.loads(self.format(record)))


def _logger(name):
    logger = logging.getLogger(name)
    logger.setLevel(logging.INFO)
    logger.propagate = False
    handler = _Capture()
    logger.handlers = [handler]
    return logger, handler


def test_run_context_restores_previous_run():
    assert current_run() is None
    with run_context("outer-s0", "vanilla", 0):
        with run_context("inner-s1", "wgan_gp", 1) as ctx:
            assert current_run() == ctx
            assert ctx.algorithm == "wgan_gp"
        assert current_run().run_id == "outer-s0"
    assert current_run() is None


def test_structured_lines_carry_run_identity_and_step():
    logger, handler = _logger("ganlab.test.structured")
    with run_context("vanilla-abc-s4", "vanilla", 4):
        log_event(logger, logging.INFO, "step 10", step=10, js=0.25)
    entry = handler.lines[0]
    assert entry["run_id"] == "vanilla-abc-s4"
    assert entry["algorithm"] == "vanilla"
    assert entry["seed"] == 4
    assert entry["step"] == 10
    assert entry["message"] == "step 10"
    assert entry["data"] == {"js": 0.25}


def test_lines_outside_a_run_use_placeholders():
    logger, handler = _logger("ganlab.test.outside")
    logger.info("loading settings")
    entry = handler.lines[0]
    assert entry["run_id"] == "-"
    assert entry["algorithm"] == "-"
    assert "step" not in entry
    assert "data" not in entry


def test_disabled_level_is_skipped():
    logger, handler = _logger("ganlab.test.quiet")
    log_event(logger, logging.DEBUG, "hidden", step=1)
    assert handler.lines == []
