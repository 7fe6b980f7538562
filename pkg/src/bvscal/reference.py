"""Published scores for the QM9 atomization-energy benchmark.

Values are rounded to two decimals as published. ``fv`` entries are the
reported binomial intervals on the fraction of valid LZMS intervals.
"""

from types import MappingProxyType

_ROWS = {
    "unscaled_train": {
        "nll": -2.76, "s_cal": 1.17, "s_u": 1.32, "s_x.X1": 1.29, "s_x.X2": 1.27, "s_tot": 5.04,
        "fv": {"u": (0.01, 0.09), "X1": (0.04, 0.17), "X2": (0.07, 0.20)},
    },
    "unscaled_test": {
        "nll": -2.75, "s_cal": 1.13, "s_u": 1.39, "s_x.X1": 1.27, "s_x.X2": 1.27, "s_tot": 5.06,
        "fv": {"u": (0.01, 0.09), "X1": (0.09, 0.24), "X2": (0.06, 0.19)},
    },
    "isotonic_test": {
        "nll": -3.08, "s_cal": 0.03, "s_u": 0.19, "s_x.X1": 0.29, "s_x.X2": 0.27, "s_tot": 0.78,
        "fv": {"u": (0.73, 0.89), "X1": (0.52, 0.71), "X2": (0.61, 0.79)},
    },
    "simulated_test": {
        "s_cal": 0.00, "s_u": 0.10, "s_x.X1": 0.09, "s_x.X2": 0.09, "s_tot": 0.29,
        "fv": {"u": (0.90, 1.00), "X1": (0.90, 1.00), "X2": (0.90, 1.00)},
    },
}

QM9_REFERENCE = MappingProxyType(_ROWS)

QM9_TRAIN_ZMS = 0.31
QM9_TEST_ZMS = 0.32
QM9_TRAIN_SIZE = 10000
QM9_TEST_SIZE = 13885


def compare(scores: dict, row: str = "isotonic_test") -> list[tuple[str, float, float]]:
    """``(key, computed, published)`` for every score the reference row has."""
    ref = QM9_REFERENCE[row]
    return [(k, float(scores[k]), v) for k, v in ref.items() if k != "fv" and k in scores]
