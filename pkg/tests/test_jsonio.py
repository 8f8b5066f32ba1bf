"""JSON schema round-trips and diagnostics."""

import numpy as np
import pytest

from stepkernels import RealStepKernel, from_real_graphon, quotient_cloud
from stepkernels import jsonio

RUNNING = from_real_graphon(RealStepKernel([0.5, 0.5], [[0.2, 0.8], [0.8, 0.2]]))


class TestRoundTrips:
    def test_space(self):
        doc = jsonio.space_to_json(RUNNING.space)
        back = jsonio.space_from_json(doc)
        assert back.same_as(RUNNING.space)

    def test_measure(self):
        doc = {"space": jsonio.space_to_json(RUNNING.space), "weights": [0.3, 0.7]}
        mu = jsonio.measure_from_json(doc)
        assert np.allclose(mu.weights, [0.3, 0.7])

    def test_measure_by_registry_id(self):
        registry = {"two": jsonio.space_to_json(RUNNING.space)}
        mu = jsonio.measure_from_json({"space": "two", "weights": [1.0, 0.0]}, registry)
        assert mu.space.same_as(RUNNING.space)

    def test_family(self):
        doc = {"space": jsonio.space_to_json(RUNNING.space), "functions": [[1, 1], [0, 1]]}
        fam = jsonio.family_from_json(doc)
        assert len(fam) == 2

    def test_kernel(self):
        back = jsonio.kernel_from_json(jsonio.kernel_to_json(RUNNING))
        assert back.approx_eq(RUNNING)

    def test_graph(self):
        from stepkernels import CbGraph

        g = CbGraph.from_edges(RUNNING.space, 3, [(0, 1, [0.5, 1.0])], alpha=[0.2, 0.3, 0.5])
        back = jsonio.cb_graph_from_json(jsonio.cb_graph_to_json(g))
        assert np.allclose(back.beta, g.beta)
        assert np.allclose(back.alpha, g.alpha)

    def test_cloud(self):
        cloud = quotient_cloud(RUNNING, 2, mode="enumerate", cells=4)
        back = jsonio.cloud_from_json(jsonio.cloud_to_json(cloud))
        assert len(back) == len(cloud)
        assert back.provenance == cloud.provenance


class TestDiagnostics:
    def test_missing_key_names_path(self):
        with pytest.raises(jsonio.SchemaError, match="kernel: missing required key 'space'"):
            jsonio.kernel_from_json({"part_sizes": [1.0]})

    def test_bad_weights_shape(self):
        doc = {"space": jsonio.space_to_json(RUNNING.space), "weights": [1.0]}
        with pytest.raises(jsonio.SchemaError, match="weights"):
            jsonio.measure_from_json(doc)

    def test_bad_graph_entry(self):
        doc = {
            "space": jsonio.space_to_json(RUNNING.space),
            "k": 2,
            "beta": [[0, 5, [0.0, 1.0]]],
        }
        with pytest.raises(jsonio.SchemaError, match="out of range"):
            jsonio.cb_graph_from_json(doc)

    def test_canonical_output_sorted_and_stable(self):
        a = jsonio.canonical_dumps({"b": 1, "a": np.float64(2.5)})
        b = jsonio.canonical_dumps({"a": 2.5, "b": 1})
        assert a == b
        assert a.index('"a"') < a.index('"b"')
