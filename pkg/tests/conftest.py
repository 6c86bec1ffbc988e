import numpy as np
import pandas as pd
import pytest

HEADER = "Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3"


def write_power_csv(path, n=3000, seed=0, start="2007-01-01 00:00", missing=(), skip=()):
    """Write ``n`` minutes in the UCI household power format.

    ``missing`` lists row numbers written as all '?'; ``skip`` lists minutes
    left out of the file entirely. Voltage follows a slow random walk so all
    three label directions occur.
    """
    rng = np.random.default_rng(seed)
    times = pd.date_range(start, periods=n, freq="min")
    volt = 240 + np.cumsum(rng.normal(0, 0.3, n))
    active = np.abs(rng.normal(1.0, 0.5, n))
    lines = [HEADER]
    missing, skip = set(missing), set(skip)
    for i, t in enumerate(times):
        if i in skip:
            continue
        date, clock = t.strftime("%d/%m/%Y"), t.strftime("%H:%M:%S")
        if i in missing:
            lines.append(f"{date};{clock};?;?;?;?;?;?;?")
            continue
        lines.append(
            f"{date};{clock};{active[i]:.3f};{active[i] / 10:.3f};{volt[i]:.2f};{active[i] * 4:.1f};"
            f"{i % 3:.1f};{i % 2:.1f};{float(i % 20 > 15):.1f}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def power_csv(tmp_path):
    return write_power_csv(tmp_path / "power.txt", missing=range(100, 130), skip=range(1000, 1010))


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion.

    Call ``acceptance(n, ok, detail)``; the lines are printed in the terminal
    summary so they show up without ``-s``.
    """

    def record(n, ok, detail):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE.append((n, f"{status} criterion {n}: {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE, key=lambda item: str(item[0])):
            terminalreporter.write_line(line)
