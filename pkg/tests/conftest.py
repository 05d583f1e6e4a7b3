import numpy as np
import pytest

from stsfit.pipeline import run_pipeline
from stsfit.synth import PRESETS, NotchNuisanceParams, default_grids, generate_heatmap

NUISANCE = NotchNuisanceParams()
RADIUS = NUISANCE.circle_radius


def make_heatmap(preset="anticrossing", snr=None, seed=0, truth=None):
    truth = PRESETS[preset] if truth is None else truth
    cur, fp = default_grids(truth.f_c)
    sd = 0.0 if snr is None else RADIUS / snr
    return generate_heatmap(truth, NUISANCE, cur, fp, sd, seed)


@pytest.fixture(scope="session")
def clean_runs():
    """Noiseless pipeline result for every preset."""
    return {name: run_pipeline(make_heatmap(name)) for name in PRESETS}


@pytest.fixture(scope="session")
def noisy_anticrossing():
    hm = make_heatmap("anticrossing", snr=19, seed=11)
    return hm, run_pipeline(hm)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
