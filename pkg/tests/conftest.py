import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from balance_assist.experiment import LOG_COLUMNS, TrialLog

settings.register_profile("numerics", deadline=None, max_examples=200)
settings.load_profile("numerics")


@pytest.fixture
def make_log():
    """Build a sagittal trial log from a CoP trace (DZ x in [-0.05, 0.12])."""

    def build(cop_x, f_x=None, f_z=None, phase=None, dt=0.01):
        cop_x = np.asarray(cop_x, dtype=float)
        n = cop_x.size
        t = np.round(np.arange(n) * dt, 6)
        zeros = np.zeros(n)
        frame = pd.DataFrame(
            {
                "t": t,
                "cop_x": cop_x,
                "dz_lo": np.full(n, -0.05),
                "dz_hi": np.full(n, 0.12),
                "f_x": zeros if f_x is None else np.asarray(f_x, dtype=float),
                "f_y": zeros,
                "f_z": zeros if f_z is None else np.asarray(f_z, dtype=float),
                "ee_x": np.full(n, -0.4),
                "ee_z": np.full(n, 1.1),
                "ref_x": np.full(n, -0.4),
                "ref_z": np.full(n, 1.1),
                "elbow": np.full(n, -1.0),
                "phase": ["lean"] * n if phase is None else list(phase),
            },
            columns=LOG_COLUMNS,
        )
        return TrialLog(frame)

    return build
