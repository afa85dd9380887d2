from __future__ import annotations

import pytest

from bgsched.errors import ParameterError
from bgsched.metrics import evaluate, mpe_and_cumulative, smape


def test_smape():
    assert smape([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert smape([100.0], [50.0]) == pytest.approx(100.0 * 50 / 75)
    assert smape([0.0, 0.0], [0.0, 0.0]) == 0.0
    assert smape([0.0], [10.0]) == pytest.approx(200.0)


def test_mpe_sign_and_zero_actuals():
    mpe, cumulative = mpe_and_cumulative([100.0, 0.0], [90.0, 5.0])
    assert mpe == pytest.approx(10.0)
    assert cumulative == pytest.approx(5.0)
    assert mpe_and_cumulative([0.0, 0.0], [1.0, 2.0]) == (None, -3.0)


def test_evaluate():
    errors = evaluate([0.0, 10.0, 20.0], [0.0, 12.0, 18.0])
    data = errors.to_dict()
    assert data["zero_actual_bins"] == 1
    assert data["bins"] == 3
    assert data["max_abs_bin_error"] == 2.0
    assert data["cumulative_error"] == 0.0
    assert data["mpe_defined"]

    assert not evaluate([0.0], [1.0]).mpe_defined


@pytest.mark.parametrize("actual, predicted", [([1.0], [1.0, 2.0]), ([], [])])
def test_bad_lengths(actual, predicted):
    with pytest.raises(ParameterError):
        smape(actual, predicted)
