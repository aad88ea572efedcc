import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fermion_pimc import _kernels as kern
from fermion_pimc.exceptions import ConfigurationError, SingularityError
from fermion_pimc.potentials import (
    Nucleus, PotentialKind, PotentialSpec, external_term, gradient_terms, harmonic,
    harmonic_coulomb, interaction_term, nuclei_factor, total_potential,
)

MOLECULE = PotentialSpec(PotentialKind.MOLECULAR_COULOMB, 0.5,
                         nuclei=(Nucleus((0.0, 0.0, 0.7), 1.0), Nucleus((0.0, 0.0, -0.7), 2.0)),
                         trap=True)


def test_external_term_examples():
    assert external_term(harmonic(), [1, 2, 2]) == pytest.approx(4.5)
    assert external_term(harmonic(), [0, 0, 0]) == 0.0
    single = PotentialSpec(PotentialKind.MOLECULAR_COULOMB, nuclei=(Nucleus((0.0, 0.0, 0.0), 1.0),))
    assert not single.has_trap
    assert external_term(single, [0, 2, 0]) == pytest.approx(-0.5)


def test_interaction_term_examples():
    spec = harmonic_coulomb(0.5)
    assert interaction_term(spec, [0, 0, 0], [[0.5, 0, 0]]) == pytest.approx(0.5)
    assert interaction_term(spec, [0, 0, 0], [[1, 0, 0], [0, 0.25, 0]]) == pytest.approx(1.25)
    assert interaction_term(harmonic(), [0, 0, 0], [[1e-20, 0, 0]]) == 0.0
    assert interaction_term(spec, [0, 0, 0], []) == 0.0


def test_gradient_examples():
    np.testing.assert_allclose(gradient_terms(harmonic(), [1, 2, 2], []), [1, 2, 2])
    grad = gradient_terms(PotentialSpec(PotentialKind.HARMONIC_COULOMB, 0.5, trap=False),
                          [0, 0, 0], [[1, 0, 0]])
    np.testing.assert_allclose(grad, [0.25, 0, 0])


def test_singularities_raise():
    with pytest.raises(SingularityError):
        interaction_term(harmonic_coulomb(0.5), [0, 0, 0], [[0, 0, 0]])
    with pytest.raises(SingularityError):
        external_term(MOLECULE, [0, 0, 0.7])


def _scalar(spec, y, others):
    return external_term(spec, y) + interaction_term(spec, y, others)


points = arrays(np.float64, (4, 3), elements=st.floats(-2, 2))


@given(points)
def test_gradient_matches_finite_differences(pts):
    for spec in (harmonic_coulomb(0.5), MOLECULE):
        others = pts[1:]
        distances = [np.linalg.norm(pts[0] - z) for z in others]
        distances += [np.linalg.norm(pts[0] - np.array(n.position)) for n in spec.nuclei]
        if min(distances) < 0.2:
            continue
        step = 1e-5
        numeric = np.array([
            (_scalar(spec, pts[0] + step * e, others) - _scalar(spec, pts[0] - step * e, others))
            / (2 * step)
            for e in np.eye(3)
        ])
        exact = gradient_terms(spec, pts[0], others)
        scale = max(1.0, np.abs(exact).max())
        assert np.abs(numeric - exact).max() <= 1e-6 * scale


@given(points, st.permutations(range(4)))
def test_total_potential_permutation_symmetric(pts, perm):
    if min(np.linalg.norm(pts[i] - pts[j]) for i in range(4) for j in range(i)) < 1e-3:
        return
    spec = harmonic_coulomb(0.5)
    assert total_potential(spec, pts[list(perm)]) == pytest.approx(total_potential(spec, pts), rel=1e-12)


@given(points)
def test_pair_energy_double_counting(pts):
    if min(np.linalg.norm(pts[i] - pts[j]) for i in range(4) for j in range(i)) < 1e-3:
        return
    spec = harmonic_coulomb(0.5)
    pairs = sum(0.5 / np.linalg.norm(pts[i] - pts[j]) for i in range(4) for j in range(i))
    external = sum(0.5 * float(p @ p) for p in pts)
    assert total_potential(spec, pts) == pytest.approx(external + pairs, rel=1e-12)
    assert total_potential(harmonic(), pts) == pytest.approx(external, rel=1e-14)


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)), arrays(np.float64, 3, elements=st.floats(-1, 1)))
def test_kernel_matches_reference(y, direction):
    for spec in (harmonic(), MOLECULE,
                 PotentialSpec(PotentialKind.CUSTOM_SEPARABLE, frequencies=(1.0, 2.0, 0.5), quartic=0.1)):
        if any(np.linalg.norm(y - np.array(n.position)) < 0.05 for n in spec.nuclei):
            continue
        pos, charges = spec.nuclei_arrays(3)
        value, slope, ok = kern.external_value_grad_dot(y, direction, spec.omega_squared(3),
                                                        spec.quartic, pos, charges)
        assert ok
        assert value == pytest.approx(external_term(spec, y), rel=1e-12, abs=1e-12)
        assert slope == pytest.approx(float(gradient_terms(spec, y, []) @ direction), rel=1e-10, abs=1e-12)


def test_nuclei_factor():
    assert nuclei_factor(harmonic(), 2.0).value == 1.0
    one = PotentialSpec(PotentialKind.MOLECULAR_COULOMB, nuclei=(Nucleus((0.0, 0.0), 3.0),))
    assert nuclei_factor(one, 2.0).value == 1.0
    factor = nuclei_factor(MOLECULE, 2.0)
    assert factor.nuclear_energy == pytest.approx(2.0 / 1.4)
    assert factor.log_value == pytest.approx(-2.0 * 2.0 / 1.4)


def test_validation():
    with pytest.raises(ConfigurationError):
        harmonic_coulomb(-0.1)
    with pytest.raises(ConfigurationError):
        PotentialSpec(PotentialKind.HARMONIC, coupling=0.5)
    with pytest.raises(ConfigurationError):
        PotentialSpec(PotentialKind.MOLECULAR_COULOMB,
                      nuclei=(Nucleus((0.0,), 1.0), Nucleus((0.0,), 1.0)))
    with pytest.raises(ConfigurationError):
        PotentialSpec(PotentialKind.MOLECULAR_COULOMB, nuclei=(Nucleus((0.0,), -1.0),))
    with pytest.raises(ConfigurationError):
        MOLECULE.check_dimension(2)
    with pytest.raises(ConfigurationError):
        PotentialSpec.from_dict({"kind": "Harmonic", "sigma": 1})
    assert harmonic().is_separable and not harmonic_coulomb(0.5).is_separable


def test_dict_round_trip():
    for spec in (harmonic(), harmonic_coulomb(0.5), MOLECULE,
                 PotentialSpec(PotentialKind.CUSTOM_SEPARABLE, frequencies=(1.0, 2.0), quartic=0.3)):
        assert PotentialSpec.from_dict(spec.to_dict()) == spec
    assert PotentialSpec.from_dict({"kind": "HarmonicCoulomb", "lambda": 0.5}) == harmonic_coulomb(0.5)
    assert math.isclose(PotentialSpec.from_dict({"kind": "HarmonicCoulomb", "lambda": 0.5}).coupling, 0.5)
