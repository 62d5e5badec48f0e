from __future__ import annotations

import numpy as np
import pytest

from hdpa.estimators import hdpa_estimate
from hdpa.simharness import GeneratorSpec, generate
from hdpa.spectral import RngSeed, augmented_spectrum, original_eigenvalues


@pytest.fixture(scope="session")
def single_spike_mc():
    """200 replicates of one spike (4) with p = r = n/4, n = 2000, known noise."""
    n, p, r, K = 2000, 500, 500, 5
    c1, c2, h, d_hat = [], [], [], []
    for rep in range(200):
        x = generate(GeneratorSpec("gaussian", (4.0,), p, n), RngSeed(9000 + rep, 0))
        orig = original_eigenvalues(x)
        spec = augmented_spectrum(x, r, 1.0, K + 1, RngSeed(9000 + rep, 1))
        report = hdpa_estimate(x, r, 1.0, K, orig_eigenvalues=orig, spectrum=spec)
        c1.append(spec.c_norms[0])
        c2.append(spec.c_norms[1])
        h.append(report.diagnostics["h"])
        d_hat.append(report.d_hat)
    return {
        "c1": np.array(c1),
        "c2": np.array(c2),
        "h": np.array(h),
        "d_hat": np.array(d_hat),
    }


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
