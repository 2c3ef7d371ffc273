"""Shared fixtures and the acceptance-criteria reporter.

Meshes and triples are session-scoped and treated as immutable.  The
acceptance module is moved to the end of the run so its suite-budget
check observes the whole session; its per-criterion pass/fail lines are
replayed in the terminal summary where output capture cannot hide them.
"""

import time

import numpy as np
import pytest

from hamflow import forms, mesh

SESSION_T0 = time.perf_counter()
CRITERION_LINES = []


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
    elapsed = time.perf_counter() - SESSION_T0
    terminalreporter.write_line(f"suite wall time: {elapsed:.1f} s")


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(num, ok, detail):
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        CRITERION_LINES.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def icosphere2():
    return mesh.gen_icosphere(2)


@pytest.fixture(scope="session")
def icosphere3():
    return mesh.gen_icosphere(3)


@pytest.fixture(scope="session")
def tri_s3(icosphere3):
    return forms.build_triple(icosphere3)


@pytest.fixture(scope="session")
def torus4():
    return mesh.gen_flat_torus(4, 4)


@pytest.fixture(scope="session")
def tri4(torus4):
    return forms.build_triple(torus4)


@pytest.fixture(scope="session")
def torus8():
    return mesh.gen_flat_torus(8, 8)


@pytest.fixture(scope="session")
def tri8(torus8):
    return forms.build_triple(torus8)


@pytest.fixture(scope="session")
def torus16():
    return mesh.gen_flat_torus(16, 16)


@pytest.fixture(scope="session")
def tri16(torus16):
    return forms.build_triple(torus16)


@pytest.fixture(scope="session")
def genus2():
    return mesh.genus2_surface()


@pytest.fixture(scope="session")
def tri_g2(genus2):
    return forms.build_triple(genus2)
