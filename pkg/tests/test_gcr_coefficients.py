import numpy as np
import pytest

from qc_chain.models.errors import ModelError
from qc_chain.services.assembly import assemble
from qc_chain.services.gcr_coefficients import SHIFTED, TABLE_ONE, GCRCoefficients
from qc_chain.services.lattice import uniform_config

LEFT, RIGHT = 27, 34


def test_table_contents():
    assert GCRCoefficients.table_one(3).entries == TABLE_ONE
    assert GCRCoefficients.shifted(3).entries == SHIFTED
    assert GCRCoefficients.table_one(3).entries[(-2, 1)] == pytest.approx(2 / 3)
    assert GCRCoefficients.shifted(3).entries[(0, -3)] == pytest.approx(1 / 3)


def test_second_neighbor_filtering():
    expected = {(-1, 0): 1.0, (-1, 1): 1.0}
    assert GCRCoefficients.table_one(2).entries == expected
    # n = 2 时两个变体一致
    assert GCRCoefficients.shifted(2).entries == expected


def test_unsupported_range_and_variant():
    for n in (1, 4):
        with pytest.raises(ModelError):
            GCRCoefficients.table_one(n)
        with pytest.raises(ModelError):
            GCRCoefficients.shifted(n)
    with pytest.raises(ModelError):
        GCRCoefficients("table_two", 3)


def test_lookup_left_interface():
    c = GCRCoefficients.table_one(3)
    assert c.lookup(26, 27, LEFT, RIGHT) == 1.0
    assert c.lookup(26, 28, LEFT, RIGHT) == 1.0
    assert c.lookup(25, 28, LEFT, RIGHT) == pytest.approx(2 / 3)
    assert c.lookup(28, 25, LEFT, RIGHT) == pytest.approx(1 / 3)


def test_lookup_right_interface_is_mirrored():
    c = GCRCoefficients.table_one(3)
    assert c.lookup(35, 34, LEFT, RIGHT) == 1.0
    assert c.lookup(36, 33, LEFT, RIGHT) == pytest.approx(2 / 3)
    assert c.lookup(33, 36, LEFT, RIGHT) == pytest.approx(1 / 3)


def test_lookup_falls_back_to_qce():
    c = GCRCoefficients.table_one(3)
    assert c.lookup(20, 21, LEFT, RIGHT) == 0.0
    assert c.lookup(30, 31, LEFT, RIGHT) == 1.0
    assert c.lookup(27, 25, LEFT, RIGHT) == 1.0
    assert c.lookup(24, 27, LEFT, RIGHT) == 0.0

    shifted = GCRCoefficients.shifted(3)
    assert shifted.lookup(24, 27, LEFT, RIGHT) == pytest.approx(2 / 3)
    assert shifted.lookup(27, 24, LEFT, RIGHT) == pytest.approx(1 / 3)
    assert shifted.lookup(37, 34, LEFT, RIGHT) == pytest.approx(2 / 3)


def test_brackets_structure(single_mesh):
    terms = GCRCoefficients.table_one(3).brackets(single_mesh)
    # 5 个表项 × 2 个界面，每项一个真实部分和一个 Cauchy-Born 部分
    assert terms.size == 20
    eps = single_mesh.epsilon
    actual = terms.weights[:10]
    np.testing.assert_allclose(np.sort(actual), np.sort(
        0.5 * eps * np.array([1, 1, 1, 1, 1, 1, 2 / 3, 2 / 3, -2 / 3, -2 / 3])))
    np.testing.assert_allclose(terms.weights[10:], -actual)


def test_brackets_vanish_at_uniform_strain(single_mesh, lj3):
    terms = GCRCoefficients.shifted(3).brackets(single_mesh)
    for z in (1.0, 0.97, 1.04):
        energy, _, _ = assemble(single_mesh, uniform_config(single_mesh, z), lj3, terms, with_hessian=False)
        assert abs(energy) <= 1e-15
