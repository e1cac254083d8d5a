import time
from fractions import Fraction
from types import SimpleNamespace

import pytest

from subhomog.basis import ideal_basis, localized_basis
from subhomog.fem import Factorization, assemble_mass, assemble_stiffness
from subhomog.fields import coeff_multiscale_2d
from subhomog.grid import build_coarse_partition, build_fine_grid, measurement_set_from_ratio

_RESULTS = {}


@pytest.fixture(scope="session")
def multiscale_2d_instance():
    """levels 7, H = 2^-3, h = H/2, multiscale coefficient; ideal plus l = 0..3."""
    t0 = time.perf_counter()
    g = build_fine_grid(2, 7)
    A = assemble_stiffness(g, coeff_multiscale_2d(g))
    ms = measurement_set_from_ratio(build_coarse_partition(g, Fraction(1, 8)), Fraction(1, 2))
    ideal = ideal_basis(A, ms, Factorization(A.matrix))
    local = {l: localized_basis(A, ms, l) for l in range(4)}
    return SimpleNamespace(grid=g, A=A, M=assemble_mass(g), ms=ms, ideal=ideal, local=local,
                           build_seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def biorthogonality_registry():
    """(label, max |[psi_i, phi_j] - delta_ij|) for every basis built by the acceptance run."""
    return []


@pytest.fixture(scope="session")
def shared_outputs():
    return {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args[:2]
    entry = _RESULTS.setdefault(number, dict(title=title, ok=True, seconds=0.0, detail=""))
    if report.when in ("setup", "call"):
        entry["seconds"] += report.duration
    if report.when == "call":
        measured = dict(report.user_properties).get("measured")
        if measured:
            entry["detail"] = measured
    if report.failed:
        entry["ok"] = False
        crash = getattr(report.longrepr, "reprcrash", None)
        reason = crash.message.splitlines()[0] if crash else "failed"
        entry["detail"] = f"{entry['detail']} | {reason}" if entry["detail"] else reason
    elif report.skipped:
        entry["ok"] = False
        entry["detail"] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        r = _RESULTS[number]
        status = "PASS" if r["ok"] else "FAIL"
        terminalreporter.write_line(f"C{number:<2} {status}  {r['title']} ({r['seconds']:.1f} s)  {r['detail']}")
