"""Lattice, transform, quadrature and cutoff behavior."""

import numpy as np
import pytest

from slab import grid as gr
from slab.errors import InvalidSize, SingularAtOrigin


def random_field(g, seed=0):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    return gr.Field(g, vals, "x")


def test_grid_basic_arithmetic():
    g = gr.make_grid(2, 8, 4.0)
    assert g.h == pytest.approx(1.0)
    assert g.h * g.N == pytest.approx(2 * g.L)
    assert g.dxi == pytest.approx(np.pi / g.L)
    assert g.nyquist == pytest.approx(np.pi * g.N / (2 * g.L))
    # offset grid never samples x = 0
    assert np.min(g.radius()) > 0


def test_grid_frequency_spacing():
    g = gr.make_grid(2, 128, 32 * np.pi, offset=False)
    assert g.dxi == pytest.approx(1.0 / 32.0)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(InvalidSize):
        gr.make_grid(1, 7, 1.0, offset=False)


@pytest.mark.parametrize("N", [32, 64, 128])
def test_transform_roundtrip_and_plancherel(N):
    g = gr.make_grid(2, N, 8.0)
    f = random_field(g, seed=N)
    fh = gr.transform(f)
    back = gr.inverse_transform(fh)
    assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(
        np.abs(f.values))
    # discrete Plancherel: both norms carry their quadrature weights
    assert fh.norm() == pytest.approx(f.norm(), rel=1e-12)


def test_transform_gaussian_pair():
    g = gr.make_grid(2, 128, 12.0)
    x = g.coord_stack()
    f = gr.Field(g, np.exp(-np.sum(x**2, axis=-1) / 2.0) + 0j, "x")
    fh = gr.transform(f)
    xi = g.freq_stack()
    ref = 2 * np.pi * np.exp(-np.sum(xi**2, axis=-1) / 2.0)
    assert np.max(np.abs(fh.values - ref)) <= 1e-8


def test_plane_wave_is_lattice_delta():
    g = gr.make_grid(2, 32, 8.0)
    k = np.array([g.dxi * 3, -g.dxi * 5])
    x = g.coord_stack()
    f = gr.Field(g, np.exp(1j * x @ k), "x")
    fh = gr.transform(f)
    mag = np.abs(fh.values)
    idx = np.unravel_index(np.argmax(mag), mag.shape)
    xi_peak = g.freq_stack()[idx]
    assert np.allclose(xi_peak, k)
    rest = mag.copy()
    rest[idx] = 0.0
    assert np.max(rest) <= 1e-10 * mag[idx]


def test_weighted_norm_m0_is_quadrature_l2():
    g = gr.make_grid(2, 32, 8.0)
    f = random_field(g, seed=3)
    direct = np.sqrt(g.h**g.n) * np.linalg.norm(f.values)
    assert gr.weighted_norm(f, 0.0) == pytest.approx(direct, rel=1e-14)


def test_weighted_norm_against_reference_quadrature():
    # separable Gaussian with weight <x>^{-3/2}; reference via dense 1D
    # tensor quadrature far off the lattice
    g = gr.make_grid(2, 128, 16.0)
    x = g.coord_stack()
    f = gr.Field(g, np.exp(-np.sum(x**2, axis=-1) / 2.0) + 0j, "x")
    val = gr.weighted_norm(f, -1.5)

    t = np.linspace(-16.0, 16.0, 4001)
    dt = t[1] - t[0]
    X, Y = np.meshgrid(t, t, indexing="ij")
    w = (1.0 + X**2 + Y**2) ** (-1.5 / 2.0)
    ref = np.sqrt(np.sum((w * np.exp(-(X**2 + Y**2) / 2.0))**2) * dt * dt)
    assert val == pytest.approx(ref, abs=1e-6)


def test_weighted_norm_refinement_stable():
    vals = []
    for N in (128, 256):
        g = gr.make_grid(2, N, 16.0)
        x = g.coord_stack()
        f = gr.Field(g, np.exp(-np.sum(x**2, axis=-1) / 2.0) + 0j, "x")
        vals.append(gr.weighted_norm(f, 1.0))
    assert abs(vals[1] - vals[0]) < 1e-6


def test_sample_singular():
    g = gr.make_grid(2, 32, 8.0)
    ones = gr.sample_singular(g, 0.0)
    assert np.allclose(ones.values, 1.0)
    w = gr.sample_singular(g, -0.5)
    assert np.all(np.isfinite(w.values))
    r = g.radius()
    assert np.argmax(np.abs(w.values)) == np.argmin(r)
    g0 = gr.make_grid(2, 32, 8.0, offset=False)
    with pytest.raises(SingularAtOrigin):
        gr.sample_singular(g0, -0.5)


def test_mass_fraction_monotone():
    g = gr.make_grid(2, 64, 8.0)
    x = g.coord_stack()
    f = gr.Field(g, np.exp(-np.sum(x**2, axis=-1)) + 0j, "x")
    fr = [gr.mass_fraction(f, r) for r in (1.0, 2.0, 4.0)]
    assert fr[0] < fr[1] < fr[2] <= 1.0
    assert fr[2] > 0.999


def test_cutoff_ranges_and_plateaus():
    ann = gr.annular(1.0, 2.0, 5.0, 6.0)
    g = gr.make_grid(2, 64, 8.0)
    vals = ann.on_freqs(g)
    assert np.min(vals) >= 0.0 and np.max(vals) <= 1.0
    r = g.freq_radius()
    core = (r >= 2.0) & (r <= 5.0)
    assert np.allclose(vals[core], 1.0)
    outside = (r <= 1.0) | (r >= 6.0)
    assert np.allclose(vals[outside], 0.0)

    bump = gr.radial_bump(1.0, 2.0)
    bvals = bump.on_coords(g)
    assert np.allclose(bvals[g.radius() <= 1.0], 1.0)
    assert np.allclose(bvals[g.radius() >= 2.0], 0.0)


def test_scalar_profile_and_analytic_kinds():
    prof = gr.scalar_profile(1.0, 2.0, 3.0, 4.0)
    t = np.linspace(0.0, 5.0, 101)
    v = prof(t)
    assert np.all((v >= 0.0) & (v <= 1.0))
    assert np.allclose(v[(t >= 2.0) & (t <= 3.0)], 1.0)

    ap = gr.analytic_profile(3.0, 1.0, power=8)
    assert ap(np.array(3.0)) == pytest.approx(1.0)
    assert ap(np.array(6.0)) < 1e-200 or ap(np.array(6.0)) < 1e-6
    with pytest.raises(ValueError):
        gr.analytic_profile(3.0, 1.0, power=7)


def test_conic_cutoff_axis_selectivity():
    cone = gr.conic((1.0, 0.0), 0.9, 0.7)
    on_axis = cone(np.array([[4.0, 0.0]]))
    off_axis = cone(np.array([[0.0, 4.0]]))
    assert on_axis[0] == pytest.approx(1.0)
    assert off_axis[0] == pytest.approx(0.0)


def test_field_serialization_roundtrip(tmp_path):
    g = gr.make_grid(2, 32, 8.0)
    f = random_field(g, seed=11)
    path = tmp_path / "field.bin"
    gr.save_field(f, path)
    back = gr.load_field(path)
    assert back.grid.N == g.N and back.grid.L == g.L
    # complex64 storage loses double precision, nothing more
    assert np.max(np.abs(back.values - f.values)) <= 1e-5


def test_export_slice_csv(tmp_path):
    g = gr.make_grid(2, 16, 4.0)
    f = random_field(g, seed=5)
    path = tmp_path / "slice.csv"
    gr.export_slice_csv(f, path, axis=0)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == g.N + 1  # header plus one row per sample


def test_offgrid_evaluation_matches_lattice():
    g = gr.make_grid(2, 64, 8.0)
    x = g.coord_stack()
    f = gr.Field(g, np.exp(-np.sum(x**2, axis=-1) / 2.0) + 0j, "x")
    fh = gr.transform(f)
    targets = g.freq_stack().reshape(-1, 2)[[10, 100, 1000]]
    vals = gr.eval_offgrid(f, targets)
    assert np.max(np.abs(vals - fh.values.reshape(-1)[[10, 100, 1000]])) \
        <= 1e-10
    pts = x.reshape(-1, 2)[[7, 77, 777]]
    fv = gr.eval_field_offgrid(f, pts)
    assert np.max(np.abs(fv - f.values.reshape(-1)[[7, 77, 777]])) <= 1e-10
