"""Shared builders for the test suite."""
import numpy as np

from featbias.glm import DesignMatrix


def table_rows(n00, n10, n01, n11):
    """Rows of a 2x2 table; ``n_yx`` counts outcome y with feature x."""
    x = np.repeat([0.0, 0.0, 1.0, 1.0], [n00, n10, n01, n11])
    y = np.repeat([0.0, 1.0, 0.0, 1.0], [n00, n10, n01, n11])
    return x, y


def table_design(n00, n10, n01, n11, intercept=True):
    x, y = table_rows(n00, n10, n01, n11)
    return DesignMatrix(x[:, None], intercept_column=intercept, names=["x"]), y


def add_half_log_or(n00, n10, n01, n11):
    return float(np.log((n00 + 0.5) * (n11 + 0.5) / ((n10 + 0.5) * (n01 + 0.5))))
