import dataclasses

import numpy as np
import pytest

from oracles import scalar_model_probs
from stlstm.data.samples import SequenceSample, collate
from stlstm.model import ModelConfig, Network, forward_fill, gradient_check, static_delta_adjust, static_dense_embed

TINY = dict(hidden_dense=4, hidden_sparse=4, d_dense=3, d_delta=2, n_sparse=2, d_static_dense=3, d_static_delta=1,
            embedding_dim=3, num_classes=3)


def make_batch(cfg: ModelConfig, B=3, T=5, seed=0, mask_p=0.4, static_delta=None):
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(B):
        masks = rng.random((T, cfg.n_sparse)) < mask_p
        masks[0] = True
        sd = rng.uniform(0, 2, cfg.d_static_delta) if static_delta is None else np.full(cfg.d_static_delta, static_delta)
        samples.append(
            SequenceSample(
                dense=rng.normal(size=(T, cfg.d_dense)),
                delta=rng.uniform(0, 2, (T, cfg.d_delta)),
                masks=masks,
                values=np.where(masks, rng.normal(size=(T, cfg.n_sparse)), 0.0),
                static_dense=np.eye(cfg.d_static_dense)[rng.integers(cfg.d_static_dense)] if cfg.d_static_dense else np.zeros(0),
                static_delta=sd,
                label=int(rng.integers(cfg.num_classes)),
            )
        )
    return collate(samples)


def perturbed(net, seed=1, scale=0.2):
    rng = np.random.default_rng(seed)
    out = {}
    for k, v in net.params.items():
        p = v + scale * rng.normal(size=v.shape)
        out[k] = np.abs(p) if k.endswith("alpha") else p
    return out


class TestForward:
    def test_zero_decoder_gives_uniform(self):
        net = Network(ModelConfig(**TINY))
        net.params["decoder.W"][:] = 0
        probs, _ = net.forward(make_batch(net.config))
        np.testing.assert_allclose(probs, 1 / 3, atol=1e-15)

    def test_probabilities_are_a_distribution(self):
        net = Network(ModelConfig(**TINY))
        net.params = perturbed(net, scale=2.0)
        probs, _ = net.forward(make_batch(net.config, B=6))
        assert np.all((probs >= 0) & (probs <= 1))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_scalar_oracle(self):
        cfg = ModelConfig(**dict(TINY, aggregation="average", n_sparse=2, seed=4))
        net = Network(cfg)
        net.params = perturbed(net, seed=5)
        batch = make_batch(cfg, B=2, T=5, seed=6)
        probs = net.predict_proba(batch)
        for b in range(2):
            sample = {
                "dense": batch.dense[b].tolist(),
                "delta": batch.delta[b].tolist(),
                "masks": batch.masks[b].tolist(),
                "values": batch.values[b].tolist(),
                "static_dense": batch.static_dense[b].tolist(),
                "static_delta": batch.static_delta[b].tolist(),
            }
            ref = scalar_model_probs(net.params, sample, cfg.hidden_dense, cfg.hidden_sparse, cfg.n_sparse, cfg.n_upper)
            np.testing.assert_allclose(probs[b], ref, atol=1e-10, rtol=0)

    def test_dim_mismatch_rejected(self):
        net = Network(ModelConfig(**TINY))
        batch = make_batch(dataclasses.replace(net.config, d_dense=2))
        with pytest.raises(ValueError, match="feature dims"):
            net.forward(batch)

    def test_stale_cache_rejected(self):
        net = Network(ModelConfig(**TINY))
        batch = make_batch(net.config)
        logits, cache = net.logits(batch)
        with pytest.raises(RuntimeError):
            net.backward(cache, np.ones_like(logits), params=dict(net.params))
        with pytest.raises(RuntimeError):
            net.backward(None, np.ones_like(logits))

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            ModelConfig(**dict(TINY, num_classes=1))
        with pytest.raises(ValueError):
            ModelConfig(**dict(TINY, embedding_dim=0))
        with pytest.raises(ValueError):
            ModelConfig(**dict(TINY, cell="gru"))
        with pytest.raises(ValueError):
            ModelConfig.from_dict(dict(TINY, bogus=1))


class TestStaticHeads:
    def test_embed_zero_weights(self):
        b = np.array([0.3, -0.2])
        np.testing.assert_array_equal(static_dense_embed(np.array([[1.0, 0.0, 0.0]]), np.zeros((3, 2)), b), np.tanh(b)[None])

    def test_embed_selects_column(self):
        W = np.arange(6.0).reshape(3, 2) / 10
        b = np.array([0.1, 0.2])
        out = static_dense_embed(np.array([[0.0, 1.0, 0.0]]), W, b)
        np.testing.assert_allclose(out[0], np.tanh(W[1] + b), atol=1e-15)

    def test_delta_adjust_identities(self):
        rng = np.random.default_rng(7)
        h = rng.uniform(-1, 1, (4, 5))
        W, b = rng.normal(size=(5, 5)), rng.normal(size=5)
        out, _ = static_delta_adjust(h, np.zeros((4, 1)), W, b, np.ones(1))
        assert np.array_equal(out, h)
        out, _ = static_delta_adjust(h, np.full((4, 1), 9.0), np.zeros((5, 5)), np.zeros(5), np.ones(1))
        assert np.array_equal(out, h)

    def test_delta_adjust_scalar_oracle(self):
        import math

        rng = np.random.default_rng(8)
        h = rng.uniform(-1, 1, 3)
        W, b, a = rng.normal(size=(3, 3)), rng.normal(size=3), np.array([0.8])
        out, _ = static_delta_adjust(h[None], np.array([[2.5]]), W, b, a)
        g = 1 / math.log(math.e + 0.8 * 2.5)
        for j in range(3):
            s = math.tanh(sum(h[i] * W[i, j] for i in range(3)) + b[j])
            assert out[0, j] == pytest.approx((h[j] - s) + s * g, abs=1e-12)

    def test_zero_static_delta_matches_head_disabled(self):
        cfg = ModelConfig(**TINY)
        net = Network(cfg)
        net.params = perturbed(net)
        off = Network(dataclasses.replace(cfg, use_static_delta=False))
        off.params = {k: v for k, v in net.params.items() if not k.startswith("static_delta.")}
        batch = make_batch(cfg, static_delta=0.0)
        assert np.array_equal(net.predict_proba(batch), off.predict_proba(batch))

    def test_disabled_heads_have_no_tensors(self):
        cfg = ModelConfig(**dict(TINY, use_static_dense=False, use_static_delta=False))
        names = set(Network(cfg).params)
        assert not any(n.startswith(("embed.", "static_delta.")) for n in names)
        assert Network(cfg).params["decoder.W"].shape[0] == 8

    def test_static_alpha_gradient_zero_at_zero_delta(self):
        cfg = ModelConfig(**TINY)
        net = Network(cfg)
        net.params = perturbed(net)
        batch = make_batch(cfg, static_delta=0.0)
        _, grads = net.loss_and_grad(batch)
        assert np.array_equal(grads["static_delta.alpha"], np.zeros(1))
        assert gradient_check(net, batch)["static_delta.alpha"] < 1e-4


class TestReductionsAndInvariances:
    def test_stlstm_without_sparse_equals_tlstm(self):
        base = dict(TINY, n_sparse=0)
        a = Network(ModelConfig(**dict(base, cell="stlstm")))
        b = Network(ModelConfig(**dict(base, cell="tlstm")))
        assert set(a.params) == set(b.params)
        b.params = a.params = perturbed(a)
        batch = make_batch(a.config)
        assert np.array_equal(a.predict_proba(batch), b.predict_proba(batch))

    def test_same_seed_same_init_across_reducible_cells(self):
        base = dict(TINY, n_sparse=0)
        a = Network(ModelConfig(**dict(base, cell="stlstm"))).params
        b = Network(ModelConfig(**dict(base, cell="tlstm"))).params
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_relabeling_invariance(self):
        cfg = ModelConfig(**dict(TINY, n_sparse=3, hidden_sparse=2))
        net = Network(cfg)
        net.params = perturbed(net)
        batch = make_batch(cfg, seed=9)
        perm = np.array([2, 0, 1])
        p = dict(net.params)
        for k in ("l0.Wsp_h", "l0.Wsp_x", "l0.bsp"):
            p[k] = net.params[k][perm]
        hs = cfg.hidden_sparse
        blocks = net.params["l0.W_ah"].reshape(3, hs, hs)
        p["l0.W_ah"] = blocks[perm].reshape(3 * hs, hs)
        permuted = dataclasses.replace(batch, masks=batch.masks[:, :, perm], values=batch.values[:, :, perm])
        np.testing.assert_allclose(net.predict_proba(batch), net.predict_proba(permuted, p), atol=1e-14, rtol=0)

    def test_forward_fill(self):
        values = np.array([[[1.0], [0.0], [0.0], [4.0], [0.0]]])
        masks = values != 0
        np.testing.assert_array_equal(forward_fill(values, masks)[0, :, 0], [1, 1, 1, 4, 4])


class TestGradients:
    @pytest.mark.parametrize("cell", ["lstm", "tlstm", "stlstm"])
    def test_full_model_gradient_check(self, cell):
        cfg = ModelConfig(**dict(TINY, cell=cell))
        net = Network(cfg)
        net.params = perturbed(net)
        report = gradient_check(net, make_batch(cfg, T=5))
        assert set(report) == set(net.params)
        assert max(report.values()) < 1e-4, report

    @pytest.mark.parametrize("mode", ["average", "max"])
    def test_gradient_check_other_aggregations(self, mode):
        cfg = ModelConfig(**dict(TINY, aggregation=mode, n_upper=0))
        net = Network(cfg)
        net.params = perturbed(net)
        assert max(gradient_check(net, make_batch(cfg)).values()) < 1e-4

    def test_corrupted_gradient_detected(self):
        cfg = ModelConfig(**TINY)
        net = Network(cfg)
        batch = make_batch(cfg)
        _, grads = net.loss_and_grad(batch)
        grads["decoder.b"] = grads["decoder.b"] + 0.1
        assert gradient_check(net, batch, analytic=grads)["decoder.b"] > 1e-2


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = ModelConfig(**TINY)
        net = Network(cfg)
        net.params = perturbed(net)
        net.save(tmp_path / "m.npz", {"epoch": 3})
        back, meta = Network.load(tmp_path / "m.npz")
        assert back.config == cfg
        assert meta["epoch"] == 3
        for k, v in net.params.items():
            assert back.params[k].dtype == v.dtype
            assert np.array_equal(back.params[k], v)
        net.save(tmp_path / "again.npz", {"epoch": 3})
        assert (tmp_path / "m.npz").read_bytes() == (tmp_path / "again.npz").read_bytes()

    def test_mismatched_tensors_rejected(self, tmp_path):
        from stlstm.io import save_npz

        net = Network(ModelConfig(**TINY))
        params = dict(net.params)
        params.pop("decoder.b")
        save_npz(tmp_path / "bad.npz", params, {"model_config": net.config.to_dict()})
        with pytest.raises(ValueError):
            Network.load(tmp_path / "bad.npz")
