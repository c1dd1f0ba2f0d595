"""Dimension estimators, interpolation, and the smoothness score."""
import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcae.analysis import (
    DimEstimate,
    estimate_dim_cumvar,
    dim_report_dict,
    interpolate,
    latent_variances,
    mle_dim,
    save_dim_report,
    save_variance_csv,
    smoothness,
)
from pcae.datasets import gen_swiss_roll
from pcae.network import decode, encode, init_model


# ------------------------------------------------------------- latent variances


def test_latent_variances_constant_encoder_is_zero():
    m = init_model([3, 2], [2, 3], seed=0)
    for layer in m.encoder_layers:
        layer.W[:] = 0.0
    m.encoder_layers[-1].b[:] = [1.0, -2.0]
    X = np.random.default_rng(1).normal(size=(3, 50))
    assert np.all(latent_variances(m, X) == 0.0)


def test_latent_variances_identity_on_whitened_data():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(2, 500)) * np.array([[3.0], [0.5]])
    X = X - X.mean(axis=1, keepdims=True)
    C = X @ X.T / X.shape[1]
    vals, vecs = np.linalg.eigh(C)
    X = vecs @ np.diag(vals**-0.5) @ vecs.T @ X
    m = init_model([2, 2], [2, 2], seed=0)
    m.encoder_layers[0].W[:] = np.eye(2)
    m.encoder_layers[0].b[:] = 0.0
    v = latent_variances(m, X)
    assert np.allclose(v, 1.0, atol=1e-10)


def test_latent_variances_sum_is_covariance_trace():
    m = init_model([4, 5, 3], [3, 5, 4], seed=3)
    X = np.random.default_rng(4).normal(size=(4, 60))
    v = latent_variances(m, X)
    Z = encode(m, X)
    centered = Z - Z.mean(axis=1, keepdims=True)
    assert abs(v.sum() - np.trace(centered @ centered.T / Z.shape[1])) < 1e-12


def test_latent_variances_needs_two_samples():
    m = init_model([2, 2], [2, 2], seed=0)
    with pytest.raises(ValueError, match="at least 2"):
        latent_variances(m, np.zeros((2, 1)))


# ------------------------------------------------------------- cumulative criterion


def test_cumvar_all_in_first_coordinate():
    est = estimate_dim_cumvar([1.0, 0.0, 0.0], tau=0.99)
    assert est.k == 1


def test_cumvar_boundary_hit_counts():
    # cumulative shares (0.5, 0.8, 0.95, 0.99, 1.0); 0.99 >= 0.99 at k=4
    est = estimate_dim_cumvar([0.5, 0.3, 0.15, 0.04, 0.01], tau=0.99)
    assert est.k == 4
    assert est.cumulative[3] / est.cumulative[-1] >= est.tau
    assert est.cumulative[2] / est.cumulative[-1] < est.tau


def test_cumvar_descending_flag_sorts_profile():
    v = [0.01, 0.5, 0.3, 0.15, 0.04]
    est = estimate_dim_cumvar(v, tau=0.99, descending=True)
    assert est.k == 4
    assert est.variance_profile.tolist() == sorted(v, reverse=True)
    # index order on the same numbers needs the full run to reach 99%
    assert estimate_dim_cumvar(v, tau=0.99).k == 5


def test_cumvar_domain_errors():
    with pytest.raises(ValueError, match="all zero"):
        estimate_dim_cumvar([0.0, 0.0], tau=0.9)
    with pytest.raises(ValueError, match="nonnegative"):
        estimate_dim_cumvar([1.0, -0.5], tau=0.9)
    with pytest.raises(ValueError, match="in \\(0, 1\\)"):
        estimate_dim_cumvar([1.0], tau=1.0)


@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=16),
    st.floats(min_value=0.05, max_value=0.95),
    st.floats(min_value=0.05, max_value=0.95),
)
@settings(max_examples=80, deadline=None)
def test_cumvar_monotone_in_tau(vs, t1, t2):
    if sum(vs) <= 0.0:
        return
    lo, hi = min(t1, t2), max(t1, t2)
    assert estimate_dim_cumvar(vs, lo).k <= estimate_dim_cumvar(vs, hi).k


@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=16),
    st.floats(min_value=0.1, max_value=100.0),
)
@settings(max_examples=60, deadline=None)
def test_cumvar_scale_invariant(vs, c):
    if max(vs) < 1e-6:  # keep the scaled copy clear of subnormal underflow
        return
    v = np.asarray(vs)
    assert estimate_dim_cumvar(v, 0.9).k == estimate_dim_cumvar(c * v, 0.9).k


def test_dim_estimate_validates_k():
    with pytest.raises(ValueError, match="outside"):
        DimEstimate(k=3, tau=0.9, variance_profile=[1.0], cumulative=[1.0])


# ------------------------------------------------------------- MLE estimator


def test_mle_line_segment_near_one():
    rng = np.random.default_rng(11)
    direction = np.array([1.0, 2.0, -0.5])
    direction /= np.linalg.norm(direction)
    X = direction[:, None] * rng.uniform(0.0, 3.0, size=2000)
    est = mle_dim(X, k_neighbors=10)
    assert 0.8 <= est <= 1.2


def test_mle_disc_near_two():
    rng = np.random.default_rng(13)
    n = 2000
    r = np.sqrt(rng.uniform(0.0, 1.0, size=n))
    th = rng.uniform(0.0, 2 * np.pi, size=n)
    flat = np.vstack([r * np.cos(th), r * np.sin(th), np.zeros((3, n))])
    Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    est = mle_dim(Q @ flat, k_neighbors=10)
    assert 1.7 <= est <= 2.3


@pytest.mark.parametrize("k", [5, 20])
def test_mle_swiss_roll_near_two(k):
    X = gen_swiss_roll(2000, noise_sd=0.0, seed=7).samples
    est = mle_dim(X, k_neighbors=k)
    assert 1.7 <= est <= 2.4


def test_mle_warns_and_excludes_duplicates(caplog):
    rng = np.random.default_rng(17)
    X = rng.normal(size=(3, 40))
    X[:, 1] = X[:, 0]  # one duplicated point
    with caplog.at_level(logging.WARNING, logger="pcae.analysis"):
        est = mle_dim(X, k_neighbors=3)
    assert "excluded 2 points" in caplog.text
    assert np.isfinite(est)


def test_mle_rejects_degenerate_calls():
    X = np.random.default_rng(0).normal(size=(2, 20))
    with pytest.raises(ValueError, match=">= 3"):
        mle_dim(X, k_neighbors=2)
    with pytest.raises(ValueError, match="more samples"):
        mle_dim(X[:, :5], k_neighbors=5)
    dup = np.zeros((2, 6))
    with pytest.raises(ValueError, match="duplicate neighbor"):
        mle_dim(dup, k_neighbors=3)


# ------------------------------------------------------------- interpolation


def test_interpolate_endpoints_only():
    za, zb = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
    codes = interpolate(za, zb, 1)
    assert len(codes) == 2
    assert np.array_equal(codes[0], za)
    assert np.array_equal(codes[1], zb)


def test_interpolate_midpoint():
    codes = interpolate([0.0, 0.0], [2.0, 0.0], 2)
    assert np.array_equal(codes[1], [1.0, 0.0])


def test_interpolate_equal_gaps():
    rng = np.random.default_rng(19)
    za, zb = rng.normal(size=4), rng.normal(size=4)
    m = 7
    codes = interpolate(za, zb, m)
    assert len(codes) == m + 1
    expected = np.linalg.norm(zb - za) / m
    for a, b in zip(codes, codes[1:]):
        assert abs(np.linalg.norm(b - a) - expected) < 1e-12
    assert np.array_equal(codes[-1], zb)


def test_interpolate_validation():
    with pytest.raises(ValueError, match=">= 1"):
        interpolate([0.0], [1.0], 0)
    with pytest.raises(ValueError, match="same shape"):
        interpolate([0.0, 1.0], [1.0], 2)


# ------------------------------------------------------------- smoothness


def test_smoothness_linear_model_is_zero():
    # affine maps turn equal latent steps into equal output steps exactly
    m = init_model([4, 2], [2, 4], seed=5)
    X = np.random.default_rng(23).normal(size=(4, 30))
    rep = smoothness(m, X, N=20, m=6, seed=1)
    assert rep.score < 1e-10


def test_smoothness_identical_endpoints_zero():
    col = np.array([[1.0], [2.0], [3.0]])
    X = np.hstack([col, col])
    m = init_model([3, 4, 2], [2, 4, 3], seed=6)
    rep = smoothness(m, X, N=1, m=5, seed=0)
    # convex weights carry ~1e-16 rounding into the codes, squaring to ~1e-33
    assert rep.score < 1e-30


def test_smoothness_matches_brute_force():
    model = init_model([3, 6, 2], [2, 6, 3], seed=7)
    X = np.random.default_rng(29).normal(size=(3, 40))
    N, m, seed = 15, 8, 3
    rep = smoothness(model, X, N=N, m=m, seed=seed)

    rng = np.random.default_rng(seed)
    acc = []
    for _ in range(N):
        i, j = rng.choice(40, size=2, replace=False)
        Z = encode(model, X[:, [i, j]])
        za, zb = Z[:, 0], Z[:, 1]
        dists = []
        prev = None
        for t in range(m + 1):
            code = (1.0 - t / m) * za + (t / m) * zb
            out = decode(model, code[:, None])[:, 0]
            if prev is not None:
                dists.append(float(np.linalg.norm(out - prev)))
            prev = out
        acc.append(float(np.var(dists)))
    assert abs(rep.score - np.mean(acc)) < 1e-12
    assert np.allclose(rep.per_pair, acc, atol=1e-12)
    assert rep.pair_count == N and rep.steps == m


def test_smoothness_orientation_invariant_per_pair():
    model = init_model([3, 5, 2], [2, 5, 3], seed=8)
    X = np.random.default_rng(31).normal(size=(3, 10))
    Z = encode(model, X[:, [2, 7]])
    m = 6

    def pair_var(za, zb):
        codes = np.stack(interpolate(za, zb, m), axis=1)
        decoded = decode(model, codes)
        return float(np.var(np.linalg.norm(np.diff(decoded, axis=1), axis=0)))

    assert abs(pair_var(Z[:, 0], Z[:, 1]) - pair_var(Z[:, 1], Z[:, 0])) < 1e-12


def test_smoothness_validation():
    m = init_model([2, 2], [2, 2], seed=0)
    X = np.zeros((2, 5))
    with pytest.raises(ValueError, match="at least 2 samples"):
        smoothness(m, X[:, :1], N=1, m=2)
    with pytest.raises(ValueError, match="N must be"):
        smoothness(m, X, N=0, m=2)
    with pytest.raises(ValueError, match="m must be"):
        smoothness(m, X, N=1, m=1)


# ------------------------------------------------------------- report files


def test_dim_report_json_round_trip(tmp_path):
    est = estimate_dim_cumvar([0.6, 0.3, 0.1], tau=0.85)
    path = tmp_path / "dim.json"
    save_dim_report(est, path)
    got = json.loads(path.read_text())
    assert got == dim_report_dict(est)
    assert got["k"] == est.k and got["tau"] == 0.85
    assert len(got["variances"]) == 3


def test_variance_csv_round_trip(tmp_path):
    v = np.array([0.5, 0.25, 1e-17])
    path = tmp_path / "profile.csv"
    save_variance_csv(path, v)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "coordinate,variance"
    got = [float(line.split(",")[1]) for line in lines[1:]]
    assert got == v.tolist()
