import numpy as np
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SMALL_C = np.array([[50.0, 10.0], [50.0, 40.0]])
TABLE_C = np.array(
    [[96, 93, 47, 42], [90, 75, 24, 3], [83, 62, 19, 7], [50, 45, 42, 36], [95, 90, 82, 63], [93, 80, 77, 2]],
    dtype=float,
)


def sorted_rows(rng, n, m, lo=1.0, hi=100.0):
    return -np.sort(-rng.uniform(lo, hi, (n, m)), axis=1)


@st.composite
def ctr_and_values(draw, max_n=5, max_m=4, integer=False):
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(m, max(m, max_n)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, n, m)
    v = rng.uniform(0.0, 10.0, n)
    if integer:
        c = np.floor(c)
        c = -np.sort(-c, axis=1)
        v = np.floor(v)
    return c, v


# filled by test_acceptance; echoed after the run so the verdicts land in the log
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
