import numpy as np
import pytest
import torch

from tumorsynth.autoencoder import (
    AEConfig,
    Codebook,
    LatentTensor,
    ae_loss,
    build_autoencoder,
    decode,
    encode,
    quantize,
    train_autoencoder,
)
from tumorsynth.volumes import TumorMask, Volume
from tumorsynth.volumes.grid import ContractError

torch.set_num_threads(2)

CFG = AEConfig(f=4, latent_channels=4, codebook_size=16, widths=(8, 8), seed=0)


@pytest.fixture(scope="module")
def model():
    return build_autoencoder(CFG)


def _patch(seed=0, shape=(16, 16, 16)):
    rng = np.random.default_rng(seed)
    return Volume(rng.random(shape).astype(np.float32), normalized=True)


class TestEncode:
    def test_shape_arithmetic(self, model):
        z = encode(model, _patch(shape=(32, 32, 32)))
        assert tuple(z.data.shape) == (4, 8, 8, 8)
        assert z.downsample_factor == 4

    def test_deterministic(self, model):
        a = encode(model, _patch(1))
        b = encode(model, _patch(1))
        torch.testing.assert_close(a.data, b.data, rtol=0, atol=0)

    def test_zero_mask_is_identity_context(self, model):
        v = _patch(2)
        empty = TumorMask(np.zeros(v.shape, dtype=np.uint8))
        a = encode(model, v)
        b = encode(model, v, mask=empty)
        torch.testing.assert_close(a.data, b.data, rtol=0, atol=0)

    def test_indivisible_dims_rejected(self, model):
        with pytest.raises(ContractError):
            encode(model, Volume(np.zeros((15, 16, 16), dtype=np.float32), normalized=True))

    def test_unnormalized_volume_rejected(self, model):
        with pytest.raises(ContractError):
            encode(model, Volume(np.full((16, 16, 16), 100.0, dtype=np.float32)))


class TestQuantize:
    def _latent(self, data):
        return LatentTensor(
            torch.as_tensor(data, dtype=torch.float64),
            downsample_factor=4,
            source_shape=tuple(4 * s for s in data.shape[1:]),
        )

    def test_exact_entry_match(self):
        entries = np.arange(8, dtype=np.float64).reshape(4, 2).repeat(2, axis=1)[:, :2]
        entries = np.array([[0.0, 0], [1, 1], [2, 2], [3, 3]])
        cb = Codebook(entries)
        z = self._latent(np.full((2, 2, 2, 2), 3.0))
        z_q, idx, losses = quantize(z, cb)
        assert np.all(idx == 3)
        assert losses["codebook"] == 0.0
        assert losses["commitment"] == 0.0
        torch.testing.assert_close(z_q.data, z.data)

    def test_nearest_in_l2_hand_case(self):
        # site at 0.4 * ones is nearer to the zero entry than the ones entry
        cb = Codebook(np.stack([np.zeros(3), np.ones(3)]))
        z = self._latent(np.full((3, 1, 1, 1), 0.4))
        _, idx, _ = quantize(z, cb)
        assert idx.flatten()[0] == 0

    def test_idempotent_on_quantized_input(self, model):
        z = encode(model, _patch(3))
        cb = Codebook(model.codebook.detach().numpy())
        z_q, _, _ = quantize(
            LatentTensor(z.data.double(), 4, z.source_shape), cb
        )
        z_qq, _, losses = quantize(z_q, cb)
        torch.testing.assert_close(z_qq.data, z_q.data, rtol=0, atol=0)
        assert losses["codebook"] == 0.0

    def test_dim_mismatch_rejected(self):
        cb = Codebook(np.zeros((4, 3)))
        with pytest.raises(ContractError):
            quantize(self._latent(np.zeros((2, 1, 1, 1))), cb)

    def test_nearest_neighbor_optimality_brute_force(self):
        rng = np.random.default_rng(7)
        entries = rng.standard_normal((64, 4))
        cb = Codebook(entries)
        z = self._latent(rng.standard_normal((4, 3, 3, 3)))
        _, idx, _ = quantize(z, cb)
        flat = z.data.numpy().reshape(4, -1).T
        for site, chosen in zip(flat, idx.flatten()):
            dists = [np.sum((site - e) ** 2) for e in entries]
            assert dists[chosen] <= min(dists) + 1e-12


class TestDecode:
    def test_shape_arithmetic(self, model):
        z = encode(model, _patch(shape=(32, 32, 32)))
        out = decode(model, z)
        assert out.shape == (32, 32, 32)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_round_trip_shape_for_divisible_sizes(self, model):
        for shape in ((16, 16, 16), (16, 32, 16), (32, 16, 32)):
            z = encode(model, _patch(shape=shape))
            assert decode(model, z).shape == shape

    def test_channel_mismatch_rejected(self, model):
        bad = LatentTensor(torch.zeros(3, 4, 4, 4), 4, (16, 16, 16))
        with pytest.raises(ContractError):
            decode(model, bad)


class TestTraining:
    def _dataset(self, n=12):
        from tumorsynth.volumes import PhantomSpec, make_phantom

        data = []
        for seed in range(n):
            spec = PhantomSpec(
                "liver", ("hypodense",) if seed % 2 else ("hyperenhancing",),
                (8, 8, 8), (3.0, 3.0, 3.0), seed, shape=(16, 16, 16),
            )
            v, _, _ = make_phantom(spec)
            data.append(v)
        return data

    def test_zero_steps_is_noop(self):
        ds = self._dataset(4)
        model, metrics = train_autoencoder(ds, CFG, steps=0)
        ref = build_autoencoder(CFG)
        for p, q in zip(model.parameters(), ref.parameters()):
            torch.testing.assert_close(p, q, rtol=0, atol=0)
        assert metrics == []

    def test_loss_decreases(self):
        ds = self._dataset(8)
        model, metrics = train_autoencoder(ds, CFG, steps=60, lr=3e-3, log_every=10)
        assert metrics[-1]["recon"] < metrics[0]["recon"]

    def test_fixed_seed_reproduces_trajectory(self):
        ds = self._dataset(4)
        torch.set_num_threads(1)
        try:
            _, m1 = train_autoencoder(ds, CFG, steps=10, lr=1e-3, log_every=5)
            _, m2 = train_autoencoder(ds, CFG, steps=10, lr=1e-3, log_every=5)
        finally:
            torch.set_num_threads(2)
        assert m1 == m2

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train_autoencoder([], CFG, steps=1)


class TestGradientCheck:
    def test_ae_loss_matches_finite_differences(self):
        """Analytic grads vs central differences on decoder + codebook weights.

        The straight-through estimator intentionally decouples encoder
        gradients from the true piecewise-constant loss surface, so the
        check samples coordinates where the analytic gradient is exact:
        decoder parameters and codebook entries.
        """
        from fdcheck import central_diff_check

        cfg = AEConfig(f=2, latent_channels=2, codebook_size=4, widths=(4,), seed=3)
        model = build_autoencoder(cfg).double()
        rng = np.random.default_rng(0)
        batch = torch.from_numpy(rng.random((1, 1, 8, 8, 8))).double()

        def loss_fn():
            total, *_ = ae_loss(model, batch, cfg.commitment_beta)
            return total

        params = [
            ("codebook", model.codebook),
            *[(f"decoder.{n}", p) for n, p in model.decoder.named_parameters()],
        ]
        failures = central_diff_check(loss_fn, params, n_coords=16, seed=11)
        assert not failures, failures

    def test_encoder_grads_exact_without_quantizer(self):
        """With the quantizer bypassed the full model is differentiable."""
        from fdcheck import central_diff_check

        cfg = AEConfig(f=2, latent_channels=2, codebook_size=4, widths=(4,), seed=5)
        model = build_autoencoder(cfg).double()
        rng = np.random.default_rng(2)
        batch = torch.from_numpy(rng.random((1, 1, 8, 8, 8))).double()

        def loss_fn():
            recon = model.decoder(model.encoder(batch))
            return torch.mean((recon - batch) ** 2)

        params = list(model.encoder.named_parameters())
        failures = central_diff_check(loss_fn, params, n_coords=8, seed=4)
        assert not failures, failures
