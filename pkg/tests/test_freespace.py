import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modehom.freespace import (
    MplcDesign,
    PhasePlane,
    apply_plane,
    load_design,
    propagate,
    quantize,
    save_design,
    transfer_matrix,
    transfer_metrics,
)
from modehom.modefield import LG, GridMismatchError, GridSpec, build_basis, inner_product, lg_field

WL = 810e-9
W0 = 0.6e-3
GRID = GridSpec()
SMALL = GridSpec(nx=128, ny=128, dx=40e-6, dy=40e-6)


def rms(a):
    return np.sqrt(np.mean(np.abs(a) ** 2))


def test_zero_distance_is_identity():
    f = lg_field(1, 0, W0, GRID, WL)
    assert propagate(f, 0.0) is f


def test_rayleigh_range_radius():
    zr = np.pi * W0**2 / WL
    f = propagate(lg_field(0, 0, W0, GRID, WL), zr)
    X, _ = GRID.mesh()
    I = f.intensity() / f.intensity().sum()
    radius = 2 * np.sqrt(np.sum(I * X * X))
    assert radius / W0 == pytest.approx(np.sqrt(2), rel=1e-6)
    assert abs(f.power() - 1) < 1e-6


@pytest.mark.parametrize("ell,p", [(1, 0), (-2, 0), (2, 1)])
def test_propagation_matches_analytic_mode(ell, p):
    # independent check of the Gouy phase and curvature conventions
    num = propagate(lg_field(ell, p, W0, GRID, WL), 0.8)
    ana = lg_field(ell, p, W0, GRID, WL, z=0.8)
    ov = inner_product(ana, num)
    assert abs(ov) > 1 - 1e-12
    # the residual phase is the non-paraxial part of the exact kernel
    assert abs(np.angle(ov)) < 1e-6
    assert rms(num.amplitude - ana.amplitude) / rms(ana.amplitude) < 1e-6


def test_forward_backward():
    f = lg_field(2, 1, W0, GRID, WL)
    back = propagate(propagate(f, 0.8), -0.8)
    assert rms(back.amplitude - f.amplitude) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(-1024, 1600), st.integers(-1024, 1600))
def test_propagation_composes(na, nb):
    # dyadic distances so that a + b is exact in floating point
    a, b = na / 1024, nb / 1024
    f = lg_field(1, 1, W0, SMALL, WL)
    one = propagate(f, a + b)
    two = propagate(propagate(f, a), b)
    assert rms(one.amplitude - two.amplitude) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 2.0), st.integers(-2, 2))
def test_propagation_preserves_power(d, ell):
    f = lg_field(ell, 0, W0, SMALL, WL)
    assert abs(propagate(f, d).power() - f.power()) < 1e-9


def test_quantize_examples():
    raw = np.zeros(SMALL.shape)
    raw[0, :4] = [0.0, np.pi, 2 * np.pi - 1e-3, np.pi / 2]
    lv = quantize(raw, SMALL).levels
    assert lv[0, :4].tolist() == [0, 128, 0, 64]
    assert quantize(raw).grid.shape == SMALL.shape


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (16, 16), elements=st.floats(-50, 50)))
def test_quantization_error_bound(raw):
    q = quantize(raw).phase()
    err = np.angle(np.exp(1j * (q - raw)))
    assert np.abs(err).max() <= np.pi / 256 + 1e-9


def test_apply_plane():
    f = lg_field(1, 0, W0, GRID, WL)
    blank = PhasePlane.blank(GRID)
    assert np.array_equal(apply_plane(f, blank).amplitude, f.amplitude)
    flip = PhasePlane(GRID, np.full(GRID.shape, 128, np.uint8))
    assert np.allclose(apply_plane(f, flip).amplitude, -f.amplitude)
    lossy = PhasePlane.blank(GRID, efficiency=0.75)
    assert apply_plane(f, lossy).power() == pytest.approx(0.5625 * f.power(), rel=1e-12)
    with pytest.raises(GridMismatchError):
        apply_plane(f, PhasePlane.blank(SMALL))


def test_plane_validation():
    with pytest.raises(ValueError):
        PhasePlane(GRID, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        PhasePlane(GRID, np.full(GRID.shape, 300))


def identity_design(ells=(-1, 1), grid=GRID, planes=3, spacing=0.8):
    specs = [LG(l, 0, W0) for l in ells]
    b_in = build_basis(specs, grid, WL)
    b_out = build_basis(specs, grid, WL, spacing * (planes - 1))
    return MplcDesign(tuple(PhasePlane.blank(grid) for _ in range(planes)), spacing, b_in, b_out, (WL,))


def test_identity_design_gives_identity():
    m = transfer_matrix(identity_design((-2, -1, 1, 2)), WL)
    assert np.abs(m.transfer - np.eye(4)).max() < 1e-6
    assert m.mode_independent_loss < 1e-9
    assert m.fidelity == pytest.approx(1, abs=1e-9)


def test_design_validation():
    d = identity_design()
    with pytest.raises(ValueError):
        MplcDesign((), 0.8, d.basis_in, d.basis_out, (WL,))
    with pytest.raises(ValueError):
        MplcDesign(d.planes, 0.0, d.basis_in, d.basis_out, (WL,))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transfer_is_passive(seed):
    rng = np.random.default_rng(seed)
    d = identity_design(grid=SMALL)
    planes = tuple(PhasePlane(SMALL, rng.integers(0, 256, SMALL.shape)) for _ in range(3))
    design = MplcDesign(planes, 0.8, d.basis_in, d.basis_out, (WL,))
    m = transfer_matrix(design, WL)
    assert np.linalg.svd(m.transfer, compute_uv=False).max() <= 1 + 1e-9
    for x in (m.mode_independent_loss, m.in_space_error, m.fidelity):
        assert 0 <= x <= 1


def test_transfer_metrics_definitions():
    U = np.array([[1, -1], [1, 1]]) / np.sqrt(2)
    m = transfer_metrics(0.9 * U, WL, U)
    assert m.mode_independent_loss == pytest.approx(0.19)
    assert m.in_space_error == pytest.approx(0)
    assert m.fidelity == pytest.approx(1)
    # pure crosstalk: all power stays in the space, none on target
    m = transfer_metrics(np.array([[0, 1], [1, 0]]), WL, np.eye(2))
    assert m.in_space_error == pytest.approx(1)
    assert m.mode_independent_loss == pytest.approx(0)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    d = identity_design(grid=SMALL)
    planes = tuple(PhasePlane(SMALL, rng.integers(0, 256, SMALL.shape), 0.75) for _ in range(3))
    design = MplcDesign(planes, 0.8, d.basis_in, d.basis_out, (WL, 805e-9), np.eye(2))
    save_design(design, tmp_path / "des")
    assert sorted(p.name for p in (tmp_path / "des").iterdir()) == [
        "design.json",
        "plane_00.pgm",
        "plane_01.pgm",
        "plane_02.pgm",
    ]
    back = load_design(tmp_path / "des")
    for a, b in zip(design.planes, back.planes):
        assert np.array_equal(a.levels, b.levels) and a.efficiency == b.efficiency
    assert back.wavelengths == design.wavelengths
    assert np.array_equal(back.target, design.target)
    t1, t2 = transfer_matrix(design, WL).transfer, transfer_matrix(back, WL).transfer
    assert np.array_equal(t1, t2)
