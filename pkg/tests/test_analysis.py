import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from arbstyle.analysis import (
    box_stats,
    check_disjoint,
    cross_dataset_study,
    generalization_study,
    gram_distance,
    gram_proximity_study,
    grid_offsets,
    identity_embedding,
    interpolate_embedding,
    linear_regression,
    paired_t_test,
    pca,
    pca_grid_embeddings,
    pca_grid_stylize,
    percentile,
    records_csv,
    scaling_experiment,
    silhouette,
    style_grams,
    summary_csv,
    tsne,
)
from arbstyle.data import synthetic_corpus
from arbstyle.errors import InvalidArgument
from arbstyle.gradcheck import TINY_CONFIG
from arbstyle.model import StyleTransferModel
from arbstyle.training import train_joint

CFG = TINY_CONFIG.replace(budget=2, log_every=0, augment=False)


@pytest.fixture(scope="module")
def corpus():
    return synthetic_corpus("content", 2, 8, 0), synthetic_corpus("style", 4, 8, 1)


@pytest.fixture(scope="module")
def model(corpus):
    contents, styles = corpus
    return StyleTransferModel.from_checkpoint(train_joint(CFG, contents, styles[:2]))


# -- percentiles and summaries ---------------------------------------------------------

def test_percentile_of_one_to_hundred():
    xs = list(range(1, 101))
    assert percentile(xs, 10) == pytest.approx(10.9, abs=1e-12)
    assert percentile(xs, 90) == pytest.approx(90.1, abs=1e-12)
    assert box_stats(xs)["median"] == 50.5


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0, 100))
def test_percentile_matches_sort_oracle(xs, q):
    assert percentile(xs, q) == oracles.percentile_sorted(xs, q)


def test_percentile_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        percentile([], 50)
    with pytest.raises(InvalidArgument):
        percentile([1.0], 101)


# -- paired t-test -------------------------------------------------------------------

def test_t_test_trivial_cases():
    assert paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 1.0)
    t, p = paired_t_test([1.0, 2.0], [0.0, 1.0])
    assert t == math.inf and p == 0.0
    with pytest.raises(InvalidArgument):
        paired_t_test([1.0], [2.0])
    with pytest.raises(InvalidArgument):
        paired_t_test([1.0, 2.0], [2.0])


def test_t_test_small_example():
    t, p = paired_t_test([1.0, 1.0, 1.0, -1.0], [0.0, 0.0, 0.0, 0.0])
    assert t == pytest.approx(1.0, abs=1e-15)
    assert p == pytest.approx(oracles.t_two_sided_p(1.0, 3), abs=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_t_test_matches_integration_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    a = rng.normal(size=n)
    b = a + rng.normal(rng.normal(0, 0.5), rng.uniform(0.1, 2), size=n)
    t, p = paired_t_test(a, b)
    d = a - b
    assert t == pytest.approx(d.mean() / (d.std(ddof=1) / math.sqrt(n)), rel=1e-12)
    assert abs(p - oracles.t_two_sided_p(t, n - 1)) <= 1e-8
    t2, p2 = paired_t_test(b, a)
    assert t2 == -t and p2 == p


# -- regression and silhouette -------------------------------------------------------

def test_regression_collinear_and_oracle():
    fit = linear_regression([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0])
    assert fit["r2"] == 1.0 and fit["slope"] == 2.0 and fit["intercept"] == 1.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=12)
        y = 3 * x + rng.normal(size=12)
        fit = linear_regression(x, y)
        slope, intercept, r2 = oracles.regression(list(x), list(y))
        assert abs(fit["r2"] - r2) <= 1e-10
        assert fit["slope"] == pytest.approx(slope, rel=1e-10)
        assert fit["intercept"] == pytest.approx(intercept, rel=1e-9, abs=1e-12)
    with pytest.raises(InvalidArgument):
        linear_regression([1.0, 1.0], [0.0, 2.0])


def test_silhouette_separated_clusters():
    pts = np.array([[0.0, 0], [0, 0.1], [10, 0], [10, 0.1]])
    assert silhouette(pts, [0, 0, 1, 1]) > 0.98
    with pytest.raises(InvalidArgument):
        silhouette(pts, [0, 0, 0, 0])


# -- embedding-space operations ----------------------------------------------------------

def test_interpolation_arithmetic():
    a, b = np.zeros(5), np.full(5, 2.0)
    np.testing.assert_array_equal(interpolate_embedding(a, b, 0.5).values.data, np.ones(5))
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=7), rng.normal(size=7)
    out = interpolate_embedding(a, b, 0.3).values.data
    np.testing.assert_array_equal(out, [(1 - 0.3) * x + 0.3 * y for x, y in zip(a, b)])
    assert interpolate_embedding(a, b, 0.0).values.data.tobytes() == a.tobytes()
    assert interpolate_embedding(a, b, 1.0).values.data.tobytes() == b.tobytes()
    with pytest.raises(InvalidArgument):
        interpolate_embedding(a, b[:3], 0.5)
    with pytest.raises(InvalidArgument):
        interpolate_embedding(a, b, 1.5)


def test_identity_endpoint_stylization_is_bitwise(model, corpus):
    contents, styles = corpus
    c = contents[0].image
    ident = identity_embedding(c, model)
    np.testing.assert_array_equal(ident.values.data, identity_embedding(c, model).values.data)
    mixed = interpolate_embedding(ident, model.embed(styles[0].image), 0.0)
    a = model.render(c, mixed.values.data)
    b = model.render(c, ident.values.data)
    assert a.tobytes() == b.tobytes()


def test_pca_axis_aligned_points():
    res = pca(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]), k=2)
    np.testing.assert_allclose(np.abs(res.components[0]), [1.0, 0.0], atol=1e-15)
    assert res.explained_variance[1] == pytest.approx(0.0, abs=1e-15)


def test_pca_matches_covariance_eigen_oracle():
    X = np.random.default_rng(3).normal(size=(10, 6)) * np.array([5, 3, 2, 1, 0.5, 0.2])
    res = pca(X)
    C = np.cov(X, rowvar=False)
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals)[::-1]
    for i in range(res.components.shape[0]):
        ref = vecs[:, order[i]]
        assert abs(abs(ref @ res.components[i]) - 1) <= 1e-10
        assert res.explained_variance[i] == pytest.approx(vals[order[i]], rel=1e-10)
    comps = res.components
    np.testing.assert_allclose(comps @ comps.T, np.eye(len(comps)), atol=1e-10)
    assert np.all(np.diff(res.explained_variance) <= 1e-12)
    assert res.explained_variance.sum() == pytest.approx(np.trace(C), abs=1e-8)
    np.testing.assert_allclose(res.projections.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(res.reconstruct(), X, atol=1e-8)


def test_pca_degenerate_and_bounds():
    res = pca(np.ones((4, 3)), k=2)
    assert res.degenerate and np.all(res.explained_variance == 0)
    np.testing.assert_allclose(res.components @ res.components.T, np.eye(2), atol=1e-12)
    with pytest.raises(InvalidArgument):
        pca(np.ones((3, 5)), k=3)


def test_grid_offsets():
    np.testing.assert_array_equal(grid_offsets(5, 4.0), [-4, -2, 0, 2, 4])
    np.testing.assert_array_equal(grid_offsets(1, 4.0), [0])


def test_pca_grid_center_is_mean(model, corpus):
    contents, styles = corpus
    embs = [model.embed(s.image)[0] for s in styles]
    grid, res = pca_grid_embeddings(embs, 4.0, 5)
    assert grid[2, 2].tobytes() == res.mean.tobytes()
    sigma = np.sqrt(res.explained_variance)
    np.testing.assert_allclose(grid[0, 4], res.mean - 4 * sigma[0] * res.components[0]
                               + 4 * sigma[1] * res.components[1], atol=1e-12)
    images, _ = pca_grid_stylize(embs, contents[0].image, model, 4.0, 1)
    assert len(images) == 1 and images[0][0].tobytes() == model.render(contents[0].image, res.mean[None]).tobytes()
    with pytest.raises(InvalidArgument):
        pca_grid_embeddings(embs[:2])


# -- t-SNE -------------------------------------------------------------------------

def test_tsne_equilateral_symmetry():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    res = tsne(pts, perplexity=2.0, iters=300, rng=np.random.default_rng(0))
    d = [np.linalg.norm(res.layout[i] - res.layout[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    assert max(d) <= 1.05 * min(d)


def test_tsne_preconditions():
    with pytest.raises(InvalidArgument):
        tsne(np.zeros((5, 2)), perplexity=5.0)
    with pytest.raises(InvalidArgument):
        tsne(np.zeros((1, 2)), perplexity=1.0)


def test_tsne_is_seeded():
    X = np.random.default_rng(0).normal(size=(12, 4))
    a = tsne(X, perplexity=3.0, iters=50, rng=np.random.default_rng(5))
    b = tsne(X, perplexity=3.0, iters=50, rng=np.random.default_rng(5))
    assert a.layout.tobytes() == b.layout.tobytes() and len(a.kl_trace) == 51


# -- studies ------------------------------------------------------------------------

def test_generalization_identical_groups(model, corpus):
    contents, styles = corpus
    res = generalization_study(model, styles[:2], styles[:2], contents)
    assert res.group_sizes == {"observed": 4, "unobserved": 4}
    assert res.summaries["observed"]["content_loss"] == res.summaries["unobserved"]["content_loss"]
    assert res.summaries["observed"]["style_loss"] == res.summaries["unobserved"]["style_loss"]


def test_single_pair_summary_is_the_loss_report(model, corpus):
    contents, styles = corpus
    res = generalization_study(model, styles[:1], styles[1:2], contents[:1])
    rep = model.evaluate(contents[0].image, styles[0].image)
    obs = res.summaries["observed"]
    assert obs["content_loss"]["mean"] == obs["content_loss"]["median"] == rep.content_loss
    assert obs["style_loss"]["mean"] == rep.style_loss and obs["style_loss"]["std"] == 0
    text = summary_csv(res).decode()
    assert text.startswith("section,group,metric,statistic,value\n")
    assert records_csv(res).decode().count("\n") == 3


def test_gram_distance_is_a_metric_on_samples(model, corpus):
    _, styles = corpus
    grams = [style_grams(model.net, s.image) for s in styles]
    for i, gi in enumerate(grams):
        assert gram_distance(gi, gi) == 0
        for gj in grams[i + 1:]:
            assert gram_distance(gi, gj) == gram_distance(gj, gi) > 0


def test_proximity_training_style_has_zero_distance(model, corpus):
    contents, styles = corpus
    res = gram_proximity_study(model, styles[:2], [styles[1], styles[2], styles[3]], contents)
    first = res.records[0]
    assert first.gram_distance == 0 and first.nearest_train == 1
    assert res.regression is not None and set(res.regression) == {"slope", "intercept", "r2"}
    assert "regression" in summary_csv(res).decode()


def test_scaling_single_count(corpus):
    contents, styles = corpus
    out = scaling_experiment(CFG.replace(augment=True), [2], styles[2:], contents, train_styles=styles)
    assert list(out.results) == [2]
    assert out.checkpoints[2].config.augment is False
    assert {r["group"] for r in out.box_rows()} == {"observed", "unobserved"}
    with pytest.raises(InvalidArgument):
        scaling_experiment(CFG, [2, 1], styles[2:], contents, train_styles=styles)


def test_cross_study_same_model_and_disjointness(model, corpus):
    contents, styles = corpus
    res = cross_dataset_study(model, model, styles[2:3], styles[3:4], contents)
    assert list(res.summaries) == ["trained(A),test(A)", "trained(B),test(A)",
                                   "trained(B),test(B)", "trained(A),test(B)"]
    assert res.summaries["trained(A),test(A)"] == res.summaries["trained(B),test(A)"]
    with pytest.raises(InvalidArgument, match="training corpus"):
        check_disjoint({"A": model}, styles[:1])
    with pytest.raises(InvalidArgument):
        cross_dataset_study(model, model, styles[:1], styles[3:4], contents)


def test_baseline_comparison_runs_paired_tests(model, corpus):
    from arbstyle.analysis import baseline_comparison
    from arbstyle.training import train_adain_baseline

    contents, styles = corpus
    adain = StyleTransferModel.from_checkpoint(train_adain_baseline(CFG, contents, styles[:2]))
    res = baseline_comparison(model, adain, styles[:2], contents[:1], steps=3)
    assert res.group_sizes == {"proposed": 2, "adain": 2, "direct": 2}
    assert set(res.tests) == {f"proposed-vs-{o}/{m}" for o in ("adain", "direct")
                              for m in ("content_loss", "style_loss")}
    for name, tp in res.tests.items():
        a = [r.style_loss if "style" in name else r.content_loss for r in res.group("proposed")]
        b = [r.style_loss if "style" in name else r.content_loss for r in res.group(name.split("-vs-")[1].split("/")[0])]
        assert (tp["t"], tp["p"]) == paired_t_test(a, b)
