import sys
from pathlib import Path

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

import streamrec.hmm as hmm  # noqa: E402

TRAINING_RUNS = {"count": 0, "worst_decrease": 0.0}

_real_fit_once = hmm._fit_once


def _audited_fit_once(*args, **kwargs):
    """Every EM run in the whole suite must have a monotone likelihood
    history (within 1e-9); violations fail the test that triggered them."""
    result = _real_fit_once(*args, **kwargs)
    TRAINING_RUNS["count"] += 1
    diffs = np.diff(result.history)
    if diffs.size:
        worst = float(diffs.min())
        TRAINING_RUNS["worst_decrease"] = min(TRAINING_RUNS["worst_decrease"], worst)
        assert worst >= -1e-9, (
            f"EM log-likelihood decreased by {-worst:.3e} within one training run"
        )
    return result


hmm._fit_once = _audited_fit_once


@pytest.fixture(scope="session", autouse=True)
def _report_training_audit():
    yield
    print(
        f"\n[EM audit] {TRAINING_RUNS['count']} training runs, "
        f"worst per-iteration decrease {-TRAINING_RUNS['worst_decrease']:.3e}"
    )
