# Copyright 2025 The Skillchain Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Test cases for the nn package."""

import math
import unittest

import numpy as np

from skillchain.errors import (
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    InputError,
    UsageError,
)
from skillchain.nn import autodiff as ad
from skillchain.nn import serialization
from skillchain.nn.attention import (
    AttentionEncoder,
    attention_encode,
    attention_weights,
    fit_window,
    sinusoidal_positions,
)
from skillchain.nn.autodiff import GradientTape
from skillchain.nn.layers import (
    DenseParams,
    GaussianPolicyHead,
    gaussian_log_prob,
    gaussian_sample,
    mlp_forward,
)
from skillchain.nn.optim import Adam, clip_by_global_norm, global_norm


def numeric_gradients(loss_fn, arrays, eps=1e-5):
    """Central finite differences of `loss_fn(arrays)` for every entry."""
    grads = {}
    for name, value in arrays.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            saved = value[idx]
            value[idx] = saved + eps
            hi = loss_fn(arrays)
            value[idx] = saved - eps
            lo = loss_fn(arrays)
            value[idx] = saved
            grad[idx] = (hi - lo) / (2.0 * eps)
        grads[name] = grad
    return grads


def max_relative_error(a, b):
    return max(
        float(
            np.max(
                np.abs(a[k] - b[k])
                / np.maximum(np.abs(a[k]) + np.abs(b[k]), 1e-8)
            )
        )
        for k in a
    )


def naive_encode(enc, window):
    """Straight-line numpy version of the attention encoder."""
    x = fit_window(window, enc.window_length)
    a = enc.arrays
    h = x @ a["w_in"] + a["b_in"]
    if enc.positional:
        h = h + sinusoidal_positions(len(x), enc.width)
    heads = []
    for i in range(enc.heads):
        q, k, v = h @ a["wq"][i], h @ a["wk"][i], h @ a["wv"][i]
        s = q @ k.T / math.sqrt(enc.head_width)
        e = np.exp(s - s.max(axis=1, keepdims=True))
        heads.append((e / e.sum(axis=1, keepdims=True)) @ v)
    mixed = np.concatenate(heads, axis=1)
    p = mixed @ a["pool"]
    w = np.exp(p - p.max())
    w = w / w.sum()
    pooled = np.sum(w * mixed, axis=0)
    return pooled @ a["w_out"] + a["b_out"]


class TestAutodiff(unittest.TestCase):
    """Test cases for reverse-mode differentiation."""

    def test_quadratic(self):
        """Tests that the gradient of sum(w^2) is 2w."""
        w = np.array([[1.0, -2.0], [0.5, 3.0]])
        with GradientTape() as tape:
            leaves = tape.watch({"w": w})
            loss = ad.sum(ad.square(leaves["w"]))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads["w"], 2.0 * w)

    def test_constant_loss_has_zero_gradient(self):
        """Tests that a loss independent of the leaves gives zeros."""
        with GradientTape() as tape:
            tape.watch({"w": np.ones(3)})
            loss = ad.as_node(np.array(4.0))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads["w"], np.zeros(3))

    def test_backward_requires_scalar(self):
        """Tests that a non-scalar root is rejected."""
        with GradientTape() as tape:
            leaves = tape.watch({"w": np.ones(3)})
            out = leaves["w"] * 2.0
        with self.assertRaises(UsageError, msg="Vector roots should fail"):
            tape.backward(out)

    def test_mlp_matches_finite_differences(self):
        """Tests MLP gradients against central differences over seeds."""
        for seed in range(20):
            rng = np.random.default_rng(seed)
            activation = "tanh" if seed % 2 else "elu"
            params = DenseParams.init((3, 5, 2), rng, activation=activation)
            x = rng.normal(size=(4, 3))

            def loss_fn(arrays):
                p = DenseParams(params.sizes, params.activations, arrays)
                return float(np.sum(mlp_forward(p, x) ** 2))

            with GradientTape() as tape:
                out = mlp_forward(params, x, tape=tape)
                loss = ad.sum(ad.square(out))
            analytic = tape.backward(loss)
            numeric = numeric_gradients(loss_fn, params.arrays)
            self.assertLess(
                max_relative_error(analytic, numeric),
                1e-4,
                f"MLP gradient mismatch for seed {seed}",
            )

    def test_attention_matches_finite_differences(self):
        """Tests attention encoder gradients against central differences."""
        rng = np.random.default_rng(3)
        enc = AttentionEncoder.init(3, rng, width=4, heads=2, window_length=3)
        x = rng.normal(size=(2, 3, 3))

        def loss_fn(arrays):
            e = enc.copy()
            e.arrays = arrays
            return float(np.sum(attention_encode(e, x) ** 2))

        with GradientTape() as tape:
            out = attention_encode(enc, x, tape=tape)
            loss = ad.sum(ad.square(out))
        analytic = tape.backward(loss)
        numeric = numeric_gradients(loss_fn, enc.arrays)
        self.assertLess(max_relative_error(analytic, numeric), 1e-4)


class TestLayers(unittest.TestCase):
    """Test cases for dense networks and the Gaussian head."""

    def test_zero_weights_output_activation_of_bias(self):
        """Tests that zero weights yield the activated biases."""
        params = DenseParams.init(
            (2, 3, 1), np.random.default_rng(0), activation="tanh"
        )
        params.arrays["w0"][:] = 0.0
        params.arrays["w1"][:] = 0.0
        params.arrays["b0"][:] = 0.5
        params.arrays["b1"][:] = -0.25
        out = mlp_forward(params, np.array([7.0, -3.0]))
        np.testing.assert_allclose(out, [-0.25])

    def test_identity_layer(self):
        """Tests a single identity layer without activation."""
        params = DenseParams(
            (2, 2), ("none",), {"w0": np.eye(2), "b0": np.zeros(2)}
        )
        np.testing.assert_array_equal(
            mlp_forward(params, np.array([1.0, 2.0])), [1.0, 2.0]
        )

    def test_matches_hand_rolled_forward(self):
        """Tests a random two-layer net against explicit matrix products."""
        rng = np.random.default_rng(1)
        params = DenseParams.init((4, 6, 3), rng, activation="tanh")
        x = rng.normal(size=(5, 4))
        a = params.arrays
        expected = np.tanh(x @ a["w0"] + a["b0"]) @ a["w1"] + a["b1"]
        np.testing.assert_allclose(
            mlp_forward(params, x), expected, atol=1e-12
        )

    def test_input_width_mismatch(self):
        """Tests that a wrong input width raises ConfigError."""
        params = DenseParams.init((4, 2), np.random.default_rng(0))
        with self.assertRaises(ConfigError):
            mlp_forward(params, np.zeros(3))

    def test_gaussian_log_prob_analytic(self):
        """Tests log-densities at the mean and one sigma away."""
        half_log_2pi = 0.5 * math.log(2.0 * math.pi)
        self.assertAlmostEqual(
            float(gaussian_log_prob(np.zeros(1), np.zeros(1), np.zeros(1))),
            -half_log_2pi,
            places=12,
        )
        log_std = np.log(np.array([0.5]))
        value = gaussian_log_prob(np.array([1.0]), log_std, np.array([1.5]))
        self.assertAlmostEqual(
            float(value), -math.log(0.5) - half_log_2pi - 0.5, places=12
        )

    def test_gaussian_sample_mean(self):
        """Tests the Monte-Carlo mean of many samples."""
        head = GaussianPolicyHead.init(2, init_std=0.8)
        mean = np.tile([0.3, -0.2], (100_000, 1))
        samples, _ = gaussian_sample(head, mean, np.random.default_rng(0))
        bound = 4.0 * 0.8 / math.sqrt(100_000)
        np.testing.assert_array_less(
            np.abs(samples.mean(axis=0) - [0.3, -0.2]), bound
        )


class TestAttention(unittest.TestCase):
    """Test cases for the window encoder."""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_identical_steps_attend_uniformly(self):
        """Tests that repeated observations give uniform attention."""
        enc = AttentionEncoder.init(
            3, self.rng, width=4, heads=2, window_length=5, positional=False
        )
        window = np.tile(self.rng.normal(size=3), (5, 1))
        np.testing.assert_allclose(attention_weights(enc, window), 0.2)

    def test_single_step_window(self):
        """Tests that one step reduces attention to the value projection."""
        enc = AttentionEncoder.init(
            3, self.rng, width=4, heads=2, window_length=1
        )
        obs = self.rng.normal(size=(1, 3))
        a = enc.arrays
        h = obs @ a["w_in"] + a["b_in"] + sinusoidal_positions(1, 4)
        mixed = np.concatenate([h @ a["wv"][i] for i in range(2)], axis=1)
        expected = mixed[0] @ a["w_out"] + a["b_out"]
        np.testing.assert_allclose(
            attention_encode(enc, obs), expected, atol=1e-12
        )
        np.testing.assert_allclose(attention_weights(enc, obs), 1.0)

    def test_matches_naive_oracle(self):
        """Tests a three-step window against a separate implementation."""
        enc = AttentionEncoder.init(
            4, self.rng, width=6, heads=3, window_length=3
        )
        window = self.rng.normal(size=(3, 4))
        np.testing.assert_allclose(
            attention_encode(enc, window),
            naive_encode(enc, window),
            atol=1e-10,
        )

    def test_fit_window_pads_with_first_observation(self):
        """Tests front padding of short windows and truncation of long."""
        window = np.arange(4, dtype=float)[:, None] + 1.0
        fitted = fit_window(window, 10)
        np.testing.assert_array_equal(
            fitted[:, 0], [1.0] * 7 + [2.0, 3.0, 4.0]
        )
        np.testing.assert_array_equal(fit_window(window, 1)[:, 0], [4.0])
        with self.assertRaises(InputError):
            fit_window(np.zeros((0, 3)), 5)

    def test_heads_must_divide_width(self):
        """Tests that an indivisible width is rejected."""
        with self.assertRaises(ConfigError):
            AttentionEncoder.init(3, self.rng, width=5, heads=2)


class TestOptim(unittest.TestCase):
    """Test cases for Adam and gradient clipping."""

    def test_zero_gradient_keeps_parameters(self):
        """Tests that a zero gradient changes nothing but the moments."""
        adam = Adam()
        params = {"w": np.array([1.0, -1.0])}
        adam.m["w"] = np.array([1.0, 1.0])
        updated, stats = adam.step(params, {"w": np.zeros(2)}, lr=0.0)
        np.testing.assert_array_equal(updated["w"], params["w"])
        np.testing.assert_allclose(adam.m["w"], [0.9, 0.9])
        self.assertFalse(stats.rejected)

    def test_zero_learning_rate_is_identity(self):
        """Tests that lr=0 returns the parameters unchanged."""
        params = {"w": np.array([0.5, 2.0])}
        updated, _ = Adam().step(params, {"w": np.array([3.0, -1.0])}, 0.0)
        np.testing.assert_array_equal(updated["w"], params["w"])

    def test_constant_gradient_steps_by_lr(self):
        """Tests that bias correction makes unit gradients step by lr."""
        adam = Adam()
        params = {"w": np.zeros(1)}
        for _ in range(50):
            previous = params["w"].copy()
            params, _ = adam.step(params, {"w": np.ones(1)}, 0.01)
            self.assertAlmostEqual(
                float(previous[0] - params["w"][0]), 0.01, places=6
            )

    def test_non_finite_gradient_is_rejected(self):
        """Tests that NaN gradients leave parameters untouched."""
        adam = Adam()
        params = {"w": np.ones(2)}
        updated, stats = adam.step(
            params, {"w": np.array([np.nan, 1.0])}, 0.1
        )
        self.assertTrue(stats.rejected)
        np.testing.assert_array_equal(updated["w"], params["w"])
        self.assertEqual(adam.steps, 0, "Rejected steps should not count")

    def test_clip_by_global_norm(self):
        """Tests joint clipping across arrays."""
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = clip_by_global_norm(grads, 1.0)
        self.assertAlmostEqual(norm, 5.0)
        self.assertAlmostEqual(global_norm(clipped), 1.0, places=9)
        same, _ = clip_by_global_norm(grads, 10.0)
        np.testing.assert_array_equal(same["a"], grads["a"])


class TestSerialization(unittest.TestCase):
    """Test cases for the checkpoint container."""

    def setUp(self):
        self.arrays = {
            "b/w": np.arange(6, dtype=float).reshape(2, 3),
            "a/empty": np.zeros(0),
            "c": np.array([np.pi]),
        }
        self.blob = serialization.dumps_arrays(self.arrays, {"k": [1, 2.5]})

    def test_round_trip_is_byte_identical(self):
        """Tests that re-encoding a decoded container gives the same bytes."""
        arrays, meta = serialization.loads_arrays(self.blob)
        self.assertEqual(list(arrays), list(self.arrays))
        np.testing.assert_array_equal(arrays["b/w"], self.arrays["b/w"])
        self.assertEqual(
            serialization.dumps_arrays(arrays, meta), self.blob
        )

    def test_truncated_blob(self):
        """Tests that every truncation raises CheckpointError."""
        for cut in (3, 12, len(self.blob) // 2, len(self.blob) - 1):
            with self.assertRaises(CheckpointError, msg=f"cut at {cut}"):
                serialization.loads_arrays(self.blob[:cut])

    def test_version_mismatch(self):
        """Tests that another format version asks for migration."""
        blob = bytearray(self.blob)
        blob[4:6] = (serialization.FORMAT_VERSION + 1).to_bytes(2, "little")
        with self.assertRaises(CheckpointVersionError):
            serialization.loads_arrays(bytes(blob))

    def test_bad_magic(self):
        """Tests that foreign files are rejected."""
        with self.assertRaises(CheckpointError):
            serialization.loads_arrays(b"JUNK" + self.blob[4:])


if __name__ == "__main__":
    unittest.main()
