import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_subarrays.beampattern import (NO_SIDELOBE, PatternField, attributes_from_positions,
                                          batch_ellipse, batch_msll, directivity,
                                          directivity_sinc, ebp_rho, element_pattern,
                                          evaluate_pattern, extract_msll, hpbc_widths,
                                          mainlobe_ellipse, pattern_at, uv_axis)
from sparse_subarrays.errors import DegenerateGeometry, InvalidArgument
from sparse_subarrays.geometry import expand_super_array


def test_uv_axis_has_exact_zero():
    a = uv_axis(256)
    assert a[128] == 0.0 and a[0] == -1.0 and len(a) == 256


def test_pattern_matches_direct_sum(compact_D):
    f = evaluate_pattern(compact_D, 128, 1.3)
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, 128, size=(2, 20))
    direct = pattern_at(compact_D, 1.3 * f.axis[j], 1.3 * f.axis[i])
    assert np.allclose(f.samples[i, j], direct, atol=1e-12)
    assert f.samples[64, 64] == 1.0


def test_pattern_validates_input(compact_D):
    with pytest.raises(InvalidArgument):
        evaluate_pattern(compact_D, 32)
    with pytest.raises(InvalidArgument):
        evaluate_pattern(compact_D, 128, rho=2.5)


def test_single_subarray_sidelobe_is_dirichlet(layout):
    # 4-element uniform line: first sidelobe of |sin(4x)/(4 sin x)|^2
    x = np.linspace(0.5, 1.2, 200001)
    af = (np.sin(4 * x) / (4 * np.sin(x))) ** 2
    peak = af[(x > np.pi / 4) & (x < np.pi / 2)].max()
    expected = 10 * np.log10(peak)
    got = extract_msll(evaluate_pattern(layout.offsets, 1024, 1.0), eps=2)
    assert got == pytest.approx(expected, abs=0.05)


def test_no_sidelobe_returns_sentinel():
    D = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
    assert extract_msll(evaluate_pattern(D, 64)) == NO_SIDELOBE


def test_ellipse_matches_exact_half_power(compact_D):
    ell = mainlobe_ellipse(compact_D)
    bmax, bmin, _ = hpbc_widths(compact_D)
    # uniform aperture: quadratic model sqrt(6)/(kL) vs exact 0.4429/L
    ratio = np.sqrt(6) / (2 * np.pi * 0.44295)
    assert ell.bw_max / bmax == pytest.approx(ratio, abs=0.01)
    assert ell.bw_min / bmin == pytest.approx(ratio, abs=0.01)
    assert ell.bw_doa == pytest.approx(np.hypot(ell.bw_max, ell.bw_min))


def test_ellipse_matches_pattern_curvature(compact_D):
    ell = mainlobe_ellipse(compact_D)
    h = 1e-4
    for i in range(2):
        p = ell.axes[:, i]
        r = pattern_at(compact_D, h * p[0], h * p[1])
        curv = 2 * (1 - r) / h ** 2
        s = np.sin(np.deg2rad([ell.bw_max, ell.bw_min][i]) / 2)
        # the quadratic model reaches 1/2 at s
        assert 0.5 * curv * s ** 2 == pytest.approx(0.5, rel=1e-4)


def test_ellipse_rejects_collinear():
    D = np.column_stack([np.arange(8.0), np.zeros(8)])
    with pytest.raises(DegenerateGeometry):
        mainlobe_ellipse(D)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0, 2 * np.pi))
def test_ellipse_rotation_invariant(seed, th):
    rng = np.random.default_rng(seed)
    D = rng.uniform(-3, 3, size=(20, 2))
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    a, b = mainlobe_ellipse(D), mainlobe_ellipse(D @ R.T + 1.0)
    assert a.bw_max == pytest.approx(b.bw_max, rel=1e-9)
    assert a.ecc == pytest.approx(b.ecc, abs=1e-9)


def test_directivity_matches_sinc_closed_form(layout, compact_D):
    for D in (layout.offsets, compact_D):
        got = directivity(evaluate_pattern(D, 64, 1.0))
        assert got == pytest.approx(directivity_sinc(D), abs=1e-4)


def test_directivity_half_wave_line():
    # half-wavelength uniform line: mutual terms vanish, directivity = N
    D = np.column_stack([0.5 * np.arange(10.0), np.zeros(10)])
    assert directivity_sinc(D) == pytest.approx(10.0, abs=1e-9)
    assert directivity(evaluate_pattern(D, 64)) == pytest.approx(10.0, abs=1e-4)


def test_directivity_needs_unexpanded_pattern(compact_D):
    with pytest.raises(InvalidArgument):
        directivity(evaluate_pattern(compact_D, 64, 1.5))


def test_binary_round_trip(tmp_path, compact_D):
    f = evaluate_pattern(compact_D, 64, 1.5)
    p = tmp_path / "p.bin"
    f.to_binary(p)
    g = PatternField.from_binary(p)
    assert g.rho == 1.5 and np.array_equal(g.samples, f.samples)
    assert p.stat().st_size == 16 + 8 * 64 * 64


def test_batch_msll_matches_reference(layout):
    rng = np.random.default_rng(1)
    centers = rng.uniform(-8, 8, size=(6, 8, 2))
    rho = ebp_rho(30)
    got = batch_msll(centers, layout, 128, rho, 2, element_pattern(layout, 128, rho))
    for c, m in zip(centers, got):
        D = (c[:, None, :] + layout.offsets).reshape(-1, 2)
        assert m == pytest.approx(extract_msll(evaluate_pattern(D, 128, rho)), abs=1e-3)


def test_batch_ellipse_matches_positions(layout):
    rng = np.random.default_rng(2)
    centers = rng.uniform(-8, 8, size=(5, 8, 2))
    bw, ecc, bmax, bmin = batch_ellipse(centers, layout)
    for i, c in enumerate(centers):
        D = (c[:, None, :] + layout.offsets).reshape(-1, 2)
        ell = mainlobe_ellipse(D)
        assert bw[i] == pytest.approx(ell.bw_doa, rel=1e-9)
        assert ecc[i] == pytest.approx(ell.ecc, abs=1e-9)


def test_attributes_of_compact(layout, compact):
    a = attributes_from_positions(expand_super_array(compact, layout), 512)
    assert a.bw_doa == pytest.approx(12.2, abs=0.1)
    assert a.msll == pytest.approx(-12.8, abs=0.1)
    assert a.csv_row().count(",") == 5


def test_single_element_is_isotropic():
    f = evaluate_pattern(np.zeros((1, 2)), 64)
    assert np.allclose(f.samples, 1.0)
    assert directivity(f) == pytest.approx(0.0, abs=1e-9)


def test_ura_is_dirichlet_product(layout):
    f = evaluate_pattern(layout.offsets, 128, 1.0)
    u = f.axis[None, :]
    v = f.axis[:, None]

    def dirichlet(n, d, x):
        num = np.sin(n * np.pi * d * x)
        den = n * np.sin(np.pi * d * x)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(np.abs(den) < 1e-12, 1.0, num / den)
        return r ** 2

    expected = dirichlet(4, 0.5, u) * dirichlet(4, 0.6, v)
    assert np.allclose(f.samples, expected, atol=1e-12)


def test_two_element_half_wave_has_no_sidelobe():
    D = np.array([[-0.25, 0.0], [0.25, 0.0]])
    assert extract_msll(evaluate_pattern(D, 256, 1.0)) == NO_SIDELOBE


def test_pattern_point_symmetry(compact_D):
    f = evaluate_pattern(compact_D, 128, 1.5)
    R = f.samples
    c = f.center_index
    # with axis -1 + 2i/n, index c + m and c - m are mirror images
    inner = R[1:, 1:]
    assert np.allclose(inner, inner[::-1, ::-1], atol=1e-12)
    assert R.max() == R[c, c] == 1.0


def test_dilation_narrows_beam(compact_D):
    a = mainlobe_ellipse(compact_D)
    b = mainlobe_ellipse(2 * compact_D)
    assert b.bw_max < a.bw_max and b.bw_min < a.bw_min
    assert b.bw_max == pytest.approx(a.bw_max / 2, rel=0.01)


def test_square_array_has_zero_ecc():
    g = np.arange(6) * 0.5
    D = np.array([(x, y) for x in g for y in g])
    assert mainlobe_ellipse(D).ecc == pytest.approx(0.0, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.5), st.floats(0, 2 * np.pi))
def test_ebp_contains_steered_patterns(r0, phi0):
    # a pattern steered anywhere in the ROI, seen inside the unit disc, is the
    # EBP read at (u - u0) / rho; the nearest sample differs by at most the
    # pattern's Lipschitz constant times half a cell diagonal
    rng = np.random.default_rng(0)
    D = rng.uniform(-2, 2, size=(12, 2))
    D -= D.mean(axis=0)
    rho = ebp_rho(30)
    u0 = r0 * np.array([np.cos(phi0), np.sin(phi0)])
    pts = rng.uniform(-1, 1, size=(400, 2))
    pts = pts[np.hypot(*pts.T) <= 1]
    steered = pattern_at(D, pts[:, 0] - u0[0], pts[:, 1] - u0[1])
    diff = (pts - u0) / rho
    assert np.all(np.abs(diff) <= 1.0)
    n = 256
    f = evaluate_pattern(D, n, rho)
    j = np.clip(np.round((diff[:, 0] + 1) * n / 2).astype(int), 0, n - 1)
    i = np.clip(np.round((diff[:, 1] + 1) * n / 2).astype(int), 0, n - 1)
    lip = 2 * 2 * np.pi * np.hypot(*D.T).max()
    tol = lip * rho * np.sqrt(2) / n
    assert np.all(np.abs(f.samples[i, j] - steered) <= tol)


@pytest.mark.slow
def test_msll_grid_stability(layout, compact_D):
    from sparse_subarrays.benchmarks import naive_array
    naive = expand_super_array(naive_array(layout), layout, check=False)
    rho = ebp_rho(30)
    for D in (compact_D, naive):
        a = extract_msll(evaluate_pattern(D, 512, rho))
        b = extract_msll(evaluate_pattern(D, 1024, rho))
        assert abs(a - b) < 0.2
