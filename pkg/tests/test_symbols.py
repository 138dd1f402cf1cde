import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from weylcalc.errors import CoverageError, ResolutionError, SymbolError
from weylcalc.grid import PhaseGrid, load_symbol, read_container, save_symbol
from weylcalc.metric import constant_weight, get_metric, japanese_weight
from weylcalc.symbols import (BUILTINS, check_elliptic, confinement_norm, gaussian_bump,
                              partition_of_unity, refine, sample, seminorm_S)

# dx = 1/32: fine enough for probe steps of ball radius / 8 with r = 1
FINE = PhaseGrid.square(4.0, 256)
EUC = get_metric("euclidean")
SHU = get_metric("shubin")


def node(grid, x, xi):
    return int(np.argmin(np.abs(grid.x - x))), int(np.argmin(np.abs(grid.xi - xi)))


# ---------------------------------------------------------------- sampling

def test_sample_identity_and_pointwise_values():
    g = PhaseGrid.square(4.0, 64)
    I2 = sample(lambda x, xi: np.broadcast_to(np.eye(2), x.shape + (2, 2)), g)
    assert I2.d == 2 and np.array_equal(I2.values, np.broadcast_to(np.eye(2), I2.values.shape))
    h = sample("harmonic", g)
    assert h.scalar[node(g, 1.0, 2.0)] == 5.0
    assert sample("annihilation", g).scalar[node(g, 0.0, 0.0)] == 0.0


def test_sample_errors():
    g = PhaseGrid.square(4.0, 64)
    with pytest.raises(SymbolError):
        sample("no-such-symbol", g)
    with pytest.raises(SymbolError), np.errstate(divide="ignore", invalid="ignore"):
        sample(lambda x, xi: 1.0 / x, g)      # x = 0 is a node


def test_builtins_are_finite_everywhere_on_a_box():
    g = PhaseGrid.square(8.0, 64)
    for name in BUILTINS:
        assert np.all(np.isfinite(sample(name, g).values))


def test_symbolgrid_is_immutable():
    a = sample("gaussian", PhaseGrid.square(4.0, 64))
    with pytest.raises(ValueError):
        a.values[0, 0, 0, 0] = 1.0


def test_container_round_trip(tmp_path):
    g = PhaseGrid.fourier(8.0, 64)
    a = sample("rotation-2x2", g)
    p = tmp_path / "a.wgc"
    save_symbol(p, a)
    with open(p, "rb") as fh:
        head = fh.read(16)
    assert head[:8] == b"WEYLCALC"
    b = load_symbol(p)
    assert b.grid == g and b.d == 2
    # complex64 payload
    assert np.max(np.abs(b.values - a.values)) <= 1e-6 * np.max(np.abs(a.values))
    arr, meta = read_container(p)
    assert meta["dtype"] == "complex64-le" and list(arr.shape) == meta["shape"]


def test_refine_reproduces_band_limited_symbol():
    g = PhaseGrid.square(6.0, 64)
    a = sample("gaussian", g)
    f = refine(a, 2, 2)
    ref = sample("gaussian", f.grid)
    core = f.grid.core_mask()
    assert (f - ref).sup_norm(core) <= 1e-6


# ---------------------------------------------------------------- seminorms

def test_seminorm_of_one():
    one = sample("one", FINE)
    for k in range(4):
        assert seminorm_S(one, None, SHU, k) == pytest.approx(1.0, abs=1e-12)


def test_seminorm_annihilation_shubin_order_one_in_range():
    a = sample("annihilation", FINE)
    v = seminorm_S(a, japanese_weight(1.0), SHU, 1)
    assert 1.0 - 1e-9 <= v <= 3.0


@pytest.mark.parametrize("name", ["gaussian", "annihilation", "perturbed-identity", "harmonic"])
def test_seminorm_grid_consistency(name):
    a = [seminorm_S(sample(name, PhaseGrid.square(4.0, N)), None, EUC, 2) for N in (256, 512)]
    assert a[0] == pytest.approx(a[1], rel=0.05)


@settings(max_examples=15, deadline=None)
@given(st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False,
                          allow_infinity=False))
def test_seminorm_homogeneous_and_monotone(c):
    a = sample("gaussian", FINE)
    vals = [seminorm_S(a, None, EUC, k) for k in range(3)]
    assert vals[0] <= vals[1] <= vals[2]
    assert seminorm_S(c * a, None, EUC, 2) == pytest.approx(abs(c) * vals[2], rel=1e-10)


def test_seminorm_refuses_coarse_grids():
    with pytest.raises(ResolutionError):
        seminorm_S(sample("gaussian", PhaseGrid.fourier(8.0, 64)), None, SHU, 1)


# ---------------------------------------------------------------- confinement

def test_confinement_norm_zero_and_bump():
    assert confinement_norm(sample("zero", FINE), [0, 0], 1.0, EUC, 2) == 0.0
    Y = np.array([1.0, 0.5])
    bump = sample(lambda x, xi: gaussian_bump(np.stack([x, xi], -1), Y, np.eye(2), 1.0), FINE)
    assert confinement_norm(bump, Y, 1.0, EUC, 0) <= 1.0


def test_confinement_norm_translation_invariant_for_euclidean():
    vals = []
    for Y in ([0.0, 0.0], [1.5, -2.0], [-2.0, 1.0]):
        Y = np.array(Y)
        b = sample(lambda x, xi: gaussian_bump(np.stack([x, xi], -1), Y, np.eye(2), 1.0), FINE)
        vals.append(confinement_norm(b, Y, 1.0, EUC, 2))
    assert max(vals) <= 1.05 * min(vals)


# ---------------------------------------------------------------- partitions

def test_partition_euclidean_centers_on_grid_nodes():
    g = PhaseGrid.square(4.0, 32)
    fam = partition_of_unity(g, EUC, 1.0, centers=g.points().reshape(-1, 2), cellvol=g.cell,
                             confinement_k=None)
    assert fam.sum_residual(g) <= 1e-12


def test_partition_shubin_box_four():
    g = PhaseGrid.square(4.0, 64)
    fam = partition_of_unity(g, SHU, 1.0, confinement_k=None)
    assert fam.sum_residual(g) <= 1e-12


def test_partition_single_wide_center():
    g = PhaseGrid.square(4.0, 32)
    fam = partition_of_unity(g, EUC, 100.0, centers=[[0.0, 0.0]], cellvol=1.0, confinement_k=None)
    assert len(fam) == 1 and fam.sum_residual(g) <= 1e-12


def test_partition_coverage_error():
    g = PhaseGrid.square(4.0, 32)
    with pytest.raises(CoverageError):
        partition_of_unity(g, EUC, 0.05, centers=[[0.0, 0.0]], cellvol=1.0, confinement_k=None)


def test_uniform_confinement_independent_of_center():
    fam = partition_of_unity(FINE, EUC, 1.0, confinement_k=None)
    idx = [i for i, c in enumerate(fam.centers) if np.linalg.norm(c) < 3][:6]
    vals = [confinement_norm(fam.member(i, FINE), fam.centers[i], 1.0, EUC, 2) for i in idx]
    assert max(vals) <= 1.10 * min(vals)


# ---------------------------------------------------------------- ellipticity

def test_annihilation_elliptic_with_margin():
    g = PhaseGrid.square(6.0, 128)
    rep = check_elliptic(sample("annihilation", g), japanese_weight(1.0), 1.0)
    assert rep.passed
    assert rep.margin >= 1 / np.sqrt(2) - 1e-3


def test_one_elliptic_with_unit_constant():
    rep = check_elliptic(sample("one", PhaseGrid.square(6.0, 64)), constant_weight(), 1.0)
    assert rep.passed and rep.C == pytest.approx(1.0) and rep.inverse_bound == pytest.approx(1.0)


def test_directional_degenerate_fails_on_xi_axis():
    rep = check_elliptic(sample("x", PhaseGrid.square(6.0, 64)), japanese_weight(1.0), 1.0)
    assert not rep.passed
    assert rep.locus and all(abs(x) < 1e-12 for x, _ in rep.locus)


def test_elliptic_rejects_bad_radius():
    with pytest.raises(ValueError):
        check_elliptic(sample("one", PhaseGrid.square(2.0, 64)), None, 5.0)


@settings(max_examples=200, deadline=None)
@given(arrays(complex, (2, 2), elements=st.complex_numbers(max_magnitude=10, allow_nan=False,
                                                           allow_infinity=False)))
def test_det_inverse_norm_equivalence_two_by_two(A):
    det = abs(np.linalg.det(A))
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] < 1e-6 * max(s[0], 1e-300) or det == 0.0:      # singular, or det underflows
        return
    inv = 1.0 / s[-1]
    # 1/||A|| <= ||A^{-1}|| <= c ||A||^{d-1} / |det A| with c = 1 for d = 2
    assert 1.0 / s[0] <= inv * (1 + 1e-10)
    assert inv <= s[0] / det * (1 + 1e-9)


def test_det_equivalence_on_elliptic_symbols():
    g = PhaseGrid.square(6.0, 64)
    for name, d in (("annihilation", 1), ("rotation-2x2", 2), ("annihilation-2x2", 2)):
        a = sample(name, g)
        P = g.points()
        out = np.linalg.norm(P, axis=-1) > 1.0
        v = a.values[out]
        det = np.abs(np.linalg.det(v))
        s = np.linalg.svd(v, compute_uv=False)
        assert np.all(1 / s[:, 0] <= 1 / s[:, -1] * (1 + 1e-12))
        assert np.all(1 / s[:, -1] <= s[:, 0] ** (d - 1) / det * (1 + 1e-9))
