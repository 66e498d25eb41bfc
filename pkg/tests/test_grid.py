import numpy as np
import pytest

from hylosol.grid import (BoxGrid3, Field, GridMismatchError, IncommensurateShiftError,
                          NonFiniteFieldError, RadialGrid, integrate, laplacian, translate)


def test_radial_nodes_are_cell_centred():
    g = RadialGrid(16, 4.0)
    assert g.r[0] == pytest.approx(0.125)
    assert np.allclose(np.diff(g.r), 0.25)
    # shell faces reproduce the quadrature weights exactly
    vol = 4 * np.pi / 3 * np.diff(g.faces**3)
    assert np.allclose(vol, g.weights, rtol=1e-13)


def test_integrate_zero_and_constant_box():
    box = BoxGrid3((16, 16, 16), (4.0, 4.0, 4.0))
    assert integrate(Field(box, np.zeros(box.shape))) == 0.0
    assert integrate(Field(box, np.ones(box.shape))) == pytest.approx(64.0, rel=1e-14)


def test_radial_quadrature_is_second_order():
    # midpoint nodes are spectrally accurate on the even Gaussian integrand
    g = RadialGrid(256, 8.0)
    assert integrate(Field(g, np.exp(-g.r**2))) == pytest.approx(np.pi**1.5, rel=1e-12)
    # on a profile with a kink at the origin the rate is still at least O(dr^2)
    errs = []
    for n in (64, 128, 256):
        g = RadialGrid(n, 60.0)
        errs.append(abs(integrate(Field(g, np.exp(-g.r))) - 8 * np.pi))
    for a, b in zip(errs, errs[1:]):
        assert a / b > 3.5


def test_non_finite_values_report_index():
    g = RadialGrid(16, 1.0)
    v = np.zeros(16)
    v[5] = np.nan
    with pytest.raises(NonFiniteFieldError) as info:
        Field(g, v)
    assert info.value.index == 5


def test_field_is_immutable_and_shape_checked():
    g = RadialGrid(16, 1.0)
    f = Field(g, np.ones(16))
    with pytest.raises(ValueError):
        f.values[0] = 2.0
    with pytest.raises(GridMismatchError):
        Field(g, np.ones(17))


def test_box_laplacian_exact_on_fourier_mode():
    box = BoxGrid3((32, 16, 16), (5.0, 3.0, 3.0))
    x = box.coords[0]
    f = np.broadcast_to(np.cos(2 * np.pi * x / 5.0), box.shape)
    lap = laplacian(Field(box, f)).values
    assert np.max(np.abs(lap + (2 * np.pi / 5.0) ** 2 * f)) < 1e-12
    assert np.max(np.abs(box.laplacian(np.full(box.shape, 3.0)))) < 1e-12


def test_radial_laplacian_of_gaussian():
    errs = []
    for n in (400, 800):
        g = RadialGrid(n, 8.0)
        r = g.r
        exact = (4 * r**2 - 6) * np.exp(-r**2)
        errs.append(np.max(np.abs(g.laplacian(np.exp(-r**2)) - exact)))
    assert errs[1] < 1e-3
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_translate_is_a_permutation():
    box = BoxGrid3((16, 16, 16), (4.0, 4.0, 4.0))
    rng = np.random.default_rng(0)
    f = Field(box, rng.standard_normal(box.shape))
    assert np.array_equal(translate(f, (0, 0, 0)).values, f.values)
    g = translate(f, (3, -2, 5))
    assert integrate(Field(box, g.values**2)) == integrate(Field(box, f.values**2))
    assert np.array_equal(translate(g, (-3, 2, -5)).values, f.values)
    # T_z u(x) = u(x + A z)
    assert g.values[0, 0, 0] == f.values[3, 14, 5]


def test_translate_lattice_periods():
    box = BoxGrid3((16, 16, 16), (4.0, 4.0, 4.0))
    f = Field(box, np.arange(box.size, dtype=float))
    a = translate(f, (1, 0, 0), periods=(1.0, 1.0, 1.0))
    assert np.array_equal(a.values, translate(f, (4, 0, 0)).values)
    with pytest.raises(IncommensurateShiftError):
        translate(f, (1, 0, 0), periods=(0.3, 1.0, 1.0))


def test_grid_validation():
    with pytest.raises(ValueError):
        BoxGrid3((24, 16, 16), (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        RadialGrid(8, 1.0)
    with pytest.raises(ValueError):
        RadialGrid(64, 0.0)
