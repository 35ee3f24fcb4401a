import json

import numpy as np
import pytest
import scipy.io as sio

from optidamp import build_problem, modal_transform
from optidamp.export import export_model
from optidamp.model import Damp2Spec, PRESETS


def _read(dirpath, man, name):
    return np.asarray(sio.mmread(str(dirpath / man["files"][name]["file"])))


class TestExport:
    def test_bit_exact(self, tmp_path):
        model = build_problem("damp1-c")
        modal = modal_transform(model, 20)
        man = json.loads(open(export_model(model, modal, tmp_path)).read())
        for name, arr in [("M", model.M), ("K", model.K), ("D_int", model.D_int),
                          ("D_1", model.dampers[0]), ("D_2", model.dampers[1]), ("R", modal.R)]:
            np.testing.assert_array_equal(_read(tmp_path, man, name), arr)
        np.testing.assert_array_equal(_read(tmp_path, man, "omega")[:, 0], modal.omega)
        assert man["block_sizes"] == [1, 1] and man["s"] == 20

    def test_damp2a_shapes(self, tmp_path):
        spec = PRESETS["damp2-a"]
        model = build_problem(Damp2Spec(n=spec.n, positions=spec.positions,
                                        mass_rule=lambda i, t: 1.0 + i / t))
        modal = modal_transform(model, 27)
        man = json.loads(open(export_model(model, modal, tmp_path)).read())
        assert man["k_d"] == 3 and man["n"] == 801
        assert man["files"]["M"]["shape"] == [801, 801]
        assert man["files"]["D_3"]["shape"] == [801, 1]
