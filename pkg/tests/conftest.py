import pytest

from nfjcde.config import load_config

TINY = {
    "system.N": 16, "system.U": 3, "frame.Kp": 2, "frame.Kd": 10, "frame.Q": 4,
    "channel.Lu": 1, "grid.G_theta": 16, "grid.G_r": 2, "init.L_hat": 6, "jcde.T": 3,
    "jcde.C": 2, "trials": 2, "snr_db": 20.0,
}


@pytest.fixture
def tiny_cfg():
    return load_config(overrides=dict(TINY))


ACCEPTANCE = {}


def report(criterion: int, passed: bool, detail: str) -> None:
    """Record one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
