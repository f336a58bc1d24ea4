import numpy as np
import pytest
from numpy.testing import assert_allclose

from driftsampler.exceptions import InvalidInputError, NumericError
from driftsampler.net import (
    AdamState,
    Architecture,
    GeneratorParams,
    adam_step,
    forward,
    init_params,
    load_checkpoint,
    mse_loss_and_grads,
    param_names,
    save_checkpoint,
)

SMALL = Architecture(latent_dim=3, hidden_width=8, num_blocks=2, output_dim=2)


def test_architecture_validation():
    with pytest.raises(InvalidInputError):
        Architecture(latent_dim=0)
    with pytest.raises(InvalidInputError):
        Architecture(activation="relu")


class TestInit:
    def test_deterministic(self):
        a = init_params(SMALL, 7)
        b = init_params(SMALL, 7)
        assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)

    def test_seeds_differ(self):
        a = init_params(SMALL, 0)
        b = init_params(SMALL, 1)
        assert any(not np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_initial_output_spread(self, seed):
        params = init_params(Architecture(), seed)
        z = np.random.default_rng(1000 + seed).standard_normal((10000, 32))
        std = forward(params, z).std(axis=0)
        assert np.all(std >= 0.5) and np.all(std <= 2.0)


class TestForward:
    def test_zero_params_zero_output(self):
        p = init_params(SMALL, 0)
        for k in p.tensors:
            p.tensors[k][:] = 0.0
        z = np.random.default_rng(0).standard_normal((6, 3))
        assert np.abs(forward(p, z)).max() == 0.0

    def test_no_cross_batch_coupling(self):
        p = init_params(SMALL, 2)
        z = np.random.default_rng(1).standard_normal((9, 3))
        full = forward(p, z)
        # changing every other row leaves row 4 bit-identical
        z2 = z.copy()
        z2[[0, 1, 2, 3, 5, 6, 7, 8]] += 3.0
        assert np.array_equal(forward(p, z2)[4], full[4])
        # a batch of one agrees up to BLAS reduction-order differences
        assert_allclose(forward(p, z[4:5])[0], full[4], rtol=1e-13)

    def test_regression_fixture(self):
        # recorded from the first implementation that passed the gradient checks
        p = init_params(SMALL, 11)
        z = np.linspace(-1.0, 1.0, 12).reshape(4, 3)
        got = forward(p, z)
        expected = np.array(FORWARD_FIXTURE)
        assert_allclose(got, expected, rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        p = init_params(SMALL, 0)
        with pytest.raises(InvalidInputError):
            forward(p, np.zeros((5, 4)))


class TestLossAndGrads:
    def test_zero_at_optimum(self):
        p = init_params(SMALL, 3)
        z = np.random.default_rng(3).standard_normal((7, 3))
        loss, grads = mse_loss_and_grads(p, z, forward(p, z))
        assert loss == 0.0
        assert all(np.abs(g).max() == 0.0 for g in grads.values())

    @pytest.mark.parametrize("case", range(20))
    def test_gradients_match_finite_differences(self, case):
        rng = np.random.default_rng(100 + case)
        arch = Architecture(
            latent_dim=int(rng.integers(2, 5)),
            hidden_width=int(rng.integers(4, 9)),
            num_blocks=int(rng.integers(1, 4)),
            output_dim=int(rng.integers(1, 4)),
        )
        p = init_params(arch, case)
        n = int(rng.integers(2, 7))
        z = rng.standard_normal((n, arch.latent_dim))
        tgt = rng.standard_normal((n, arch.output_dim))
        _, grads = mse_loss_and_grads(p, z, tgt)
        h = 1e-5
        for name in param_names(arch):
            tensor = p.tensors[name]
            flat_idx = rng.integers(0, tensor.size, size=min(6, tensor.size))
            for fi in np.unique(flat_idx):
                idx = np.unravel_index(fi, tensor.shape)
                orig = tensor[idx]
                tensor[idx] = orig + h
                lp, _ = mse_loss_and_grads(p, z, tgt)
                tensor[idx] = orig - h
                lm, _ = mse_loss_and_grads(p, z, tgt)
                tensor[idx] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(grads[name][idx] - fd) <= 1e-4 * max(1.0, abs(fd))

    def test_duplicated_rows_invariant(self):
        p = init_params(SMALL, 4)
        z = np.random.default_rng(4).standard_normal((5, 3))
        tgt = np.random.default_rng(5).standard_normal((5, 2))
        loss, grads = mse_loss_and_grads(p, z, tgt)
        loss2, grads2 = mse_loss_and_grads(p, np.tile(z, (2, 1)), np.tile(tgt, (2, 1)))
        assert loss2 == pytest.approx(loss, rel=1e-12)
        for k in grads:
            assert_allclose(grads2[k], grads[k], rtol=1e-10, atol=1e-14)

    def test_target_shape_mismatch(self):
        p = init_params(SMALL, 0)
        z = np.zeros((4, 3))
        with pytest.raises(InvalidInputError):
            mse_loss_and_grads(p, z, np.zeros((3, 2)))


class TestAdam:
    def test_zero_grads_leave_params(self):
        p = init_params(SMALL, 6)
        st = AdamState.create(p, lr=1e-3)
        g = {k: np.zeros_like(v) for k, v in p.tensors.items()}
        st2, p2 = adam_step(st, p, g)
        assert st2.step == 1
        assert all(np.array_equal(p2.tensors[k], p.tensors[k]) for k in p.tensors)

    def test_single_step_formula(self):
        p = init_params(SMALL, 7)
        st = AdamState.create(p, lr=1e-3)
        g = {k: np.full_like(v, -0.25) for k, v in p.tensors.items()}
        _, p2 = adam_step(st, p, g)
        # from zero moments: delta = -lr * g / (|g| + eps)
        expected = -1e-3 * (-0.25) / (0.25 + 1e-8)
        for k in p.tensors:
            assert_allclose(p2.tensors[k] - p.tensors[k], expected, rtol=1e-12)

    def test_constant_gradient_step_bounded(self):
        p = init_params(SMALL, 8)
        st = AdamState.create(p, lr=1e-3)
        g = {k: np.full_like(v, 0.7) for k, v in p.tensors.items()}
        prev = p
        for _ in range(50):
            st, p = adam_step(st, p, g)
            delta = np.abs(p.tensors["w_in"] - prev.tensors["w_in"]).max()
            assert delta <= 1e-3 * (1.0 + 1e-6)
            prev = p

    def test_descent_on_random_instances(self):
        for case in range(20):
            rng = np.random.default_rng(200 + case)
            p = init_params(SMALL, case)
            z = rng.standard_normal((8, 3))
            tgt = rng.standard_normal((8, 2))
            st = AdamState.create(p, lr=1e-3)
            loss, grads = mse_loss_and_grads(p, z, tgt)
            _, p2 = adam_step(st, p, grads)
            loss2, _ = mse_loss_and_grads(p2, z, tgt)
            assert loss2 < loss

    def test_nonfinite_grads_rejected(self):
        p = init_params(SMALL, 9)
        st = AdamState.create(p)
        g = {k: np.zeros_like(v) for k, v in p.tensors.items()}
        g["w_in"][0, 0] = np.nan
        with pytest.raises(NumericError):
            adam_step(st, p, g)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = init_params(SMALL, 10)
        path = str(tmp_path / "ck.bin")
        save_checkpoint(p, path, {"seed": 10, "step": 0})
        q, side = load_checkpoint(path)
        assert q.arch == SMALL
        assert all(np.array_equal(q.tensors[k], p.tensors[k]) for k in p.tensors)
        assert side["seed"] == 10 and side["arch"]["num_blocks"] == 2

    def test_byte_determinism(self, tmp_path):
        p = init_params(SMALL, 10)
        a, b = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        save_checkpoint(p, a, {"seed": 10})
        save_checkpoint(p, b, {"seed": 10})
        assert open(a, "rb").read() == open(b, "rb").read()
        assert open(a + ".json").read() == open(b + ".json").read()

    def test_arch_mismatch_rejected(self, tmp_path):
        p = init_params(SMALL, 1)
        path = str(tmp_path / "ck.bin")
        save_checkpoint(p, path)
        with pytest.raises(InvalidInputError):
            load_checkpoint(path, expect_arch=Architecture())

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "junk.bin")
        with open(path, "wb") as f:
            f.write(b"NOTACKPT" + b"\0" * 64)
        with pytest.raises(InvalidInputError):
            load_checkpoint(path)

    def test_truncation_rejected(self, tmp_path):
        p = init_params(SMALL, 1)
        path = str(tmp_path / "ck.bin")
        save_checkpoint(p, path)
        blob = open(path, "rb").read()
        with open(path, "wb") as f:
            f.write(blob[:-16])
        with pytest.raises(InvalidInputError):
            load_checkpoint(path)

    def test_sidecar_disagreement_rejected(self, tmp_path):
        import json

        p = init_params(SMALL, 1)
        path = str(tmp_path / "ck.bin")
        save_checkpoint(p, path)
        side = json.load(open(path + ".json"))
        side["arch"]["hidden_width"] = 999
        json.dump(side, open(path + ".json", "w"))
        with pytest.raises(InvalidInputError):
            load_checkpoint(path)


FORWARD_FIXTURE = [
    [0.6624365458252602, 0.15807329316327348],
    [0.34926079817574357, 0.019180864633807502],
    [0.2705416551206336, -0.035853426276466094],
    [0.380188795262804, 0.015398062580351679],
]
