import sys
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import settings

from shrinkpca import DataMatrix, DenseEnsemble

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def rows_matrix(rows) -> DataMatrix:
    return DataMatrix(sp.csr_matrix(np.asarray(rows, dtype=float)))


def diag_ensemble(values) -> DenseEnsemble:
    """Single-component ensemble whose covariance is ``diag(values)``."""
    v = np.asarray(values, dtype=float)
    return DenseEnsemble([1.0], [np.diag(v)], norm_bound=float(np.abs(v).max()))


@pytest.fixture
def rng():
    from shrinkpca import SeededRng
    return SeededRng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
