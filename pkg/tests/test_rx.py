import itertools
import math

import numpy as np
import pytest

from lowres_mimo.errors import CapacityError, NumericError
from lowres_mimo.quant import NoiseModel, etf_complex, make_quantizer, quantize_complex
from lowres_mimo.rx import (
    NLD_AWARE,
    build_table,
    candidate_indices,
    complexity_bruteforce,
    complexity_naive,
    detect_bruteforce_ml,
    detect_quadratic,
    inverse_gram,
    mrc,
)
from lowres_mimo.signals import iid_channel, los_channel, make_qam, sample_noise


def direct_ml(h, s_o, qam, gain=1.0):
    """argmin ||s_o - g H x||^2 by plain enumeration."""
    k = h.shape[1]
    best, best_d = None, np.inf
    for combo in itertools.product(range(qam.n_qam), repeat=k):
        x = qam.symbols[list(combo)]
        d = np.sum(np.abs(s_o - gain * h @ x) ** 2)
        if d < best_d:
            best, best_d = combo, d
    return best


class TestMrc:
    def test_sum(self):
        assert mrc(np.ones((4, 1)), np.ones(4))[0] == 4

    def test_orthogonal(self):
        h = np.array([[1, 1], [1, -1], [1j, 1j], [1j, -1j]]) / 2
        x = np.array([0.3 - 1j, -2 + 0.5j])
        np.testing.assert_allclose(mrc(h, h @ x), (h.conj().T @ h) @ x, atol=1e-14)

    def test_scalar_oracle(self):
        h = [1, 1j]
        s = [1 + 1j, 1 - 1j]
        oracle = sum(complex(hm).conjugate() * sm for hm, sm in zip(h, s))
        assert oracle == 0
        assert mrc(np.array(h)[:, None], np.array(s))[0] == pytest.approx(oracle, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mrc(np.ones((4, 1)), np.ones(3))


class TestTable:
    def test_naive_single_user(self):
        h = los_channel(8, 0.4)
        qam = make_qam(4)
        table = build_table(h, qam)
        assert len(table) == 4
        np.testing.assert_allclose(table.predictions[:, 0], 8 * qam.symbols, atol=1e-12)
        assert table.a_matrix[0, 0] == pytest.approx(1 / 8)

    def test_candidate_order(self):
        idx = candidate_indices(4, 2)
        assert [tuple(r) for r in idx] == list(itertools.product(range(4), repeat=2))

    def test_inverse_residual(self):
        h = iid_channel(6, 3, np.random.default_rng(4))
        a = inverse_gram(h)
        assert np.linalg.norm(a @ h.gram() - np.eye(3)) <= 1e-9

    def test_nld_aware_definition(self):
        h = iid_channel(5, 2, np.random.default_rng(1))
        qam = make_qam(4)
        q = make_quantizer(2)
        noise = NoiseModel(0.3)
        table = build_table(h, qam, 1.7, NLD_AWARE, q, noise)
        for i, x in enumerate(table.candidates):
            expected = h.entries.conj().T @ etf_complex(q, noise, 1.7 * h.entries @ x)
            np.testing.assert_allclose(table.predictions[i], expected, atol=1e-12)

    def test_fine_quantization_matches_naive(self):
        h = los_channel(8, 0.9)
        qam = make_qam(16)
        gain = 1000.0
        naive = build_table(h, qam, gain)
        nld = build_table(h, qam, gain, NLD_AWARE, make_quantizer(12), NoiseModel(1e-12))
        rel = np.abs(nld.predictions - naive.predictions) / np.abs(naive.predictions)
        assert rel.max() < 1e-3

    def test_nld_requires_quantizer(self):
        with pytest.raises(ValueError):
            build_table(los_channel(4, 0.1), make_qam(4), mode=NLD_AWARE)

    def test_capacity(self):
        h = iid_channel(8, 4, np.random.default_rng(0))
        with pytest.raises(CapacityError):
            build_table(h, make_qam(256))

    def test_singular(self):
        col = np.exp(1j * np.arange(4))
        with pytest.raises(NumericError):
            build_table(np.stack([col, col], axis=1), make_qam(4))


class TestDetectQuadratic:
    def setup_method(self):
        rng = np.random.default_rng(12)
        self.h = iid_channel(6, 2, rng)
        self.table = build_table(self.h, make_qam(4))

    def test_exact_prediction(self):
        for i in (0, 5, 15):
            res = detect_quadratic(self.table, self.table.predictions[i])
            assert res.candidate == i
            assert res.metric == pytest.approx(0, abs=1e-20)
            assert res.symbol_indices == tuple(self.table.indices[i])

    def test_scalar_a_invariance(self):
        h = los_channel(16, 0.2)
        table = build_table(h, make_qam(16))
        rng = np.random.default_rng(3)
        for _ in range(50):
            y = rng.standard_normal(1) * 5 + 1j * rng.standard_normal(1) * 5
            base = detect_quadratic(table, y).candidate
            for scale in (1e-3, 1.0, 7.5):
                scaled = table.__class__(table.indices, table.candidates, table.predictions,
                                         table.a_matrix * scale, table.mode)
                assert detect_quadratic(scaled, y).candidate == base

    def test_perturbation_below_half_distance(self):
        pred, a = self.table.predictions, self.table.a_matrix
        # minimum pairwise distance in the A-weighted norm, by brute force
        dmin = min(math.sqrt(((pred[i] - pred[j]).conj() @ a @ (pred[i] - pred[j])).real)
                   for i in range(len(pred)) for j in range(i + 1, len(pred)))
        rng = np.random.default_rng(8)
        for i in range(len(pred)):
            eps = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            eps *= 0.49 * dmin / math.sqrt((eps.conj() @ a @ eps).real)
            assert detect_quadratic(self.table, pred[i] + eps).candidate == i

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            detect_quadratic(self.table, np.zeros(3))

    def test_charged_multiplies_independent_of_m(self):
        qam = make_qam(64)
        charged = set()
        for m in (8, 64, 1024):
            table = build_table(los_channel(m, 0.3), qam)
            charged.add(detect_quadratic(table, np.zeros(1)).complexity_charged)
        assert charged == {64 * (1 + 1)}


class TestNaiveEquivalence:
    def test_mrc_domain_equals_direct(self):
        rng = np.random.default_rng(2024)
        qam = make_qam(4)
        for trial in range(300):
            m = int(rng.integers(2, 9))
            k = int(rng.integers(1, 3))
            h = iid_channel(m, k, rng).entries
            s_o = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            table = build_table(h, qam)
            res = detect_quadratic(table, mrc(h, s_o))
            assert res.symbol_indices == direct_ml(h, s_o, qam)


class TestBruteforce:
    def test_single_antenna_hand_oracle(self):
        q = make_quantizer(1)
        qam = make_qam(4)
        h = np.array([[0.8 * np.exp(0.3j)]])
        for sigma2 in (0.05, 0.5, 3.0):
            for s_o in (1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j):
                probs = []
                for x in qam.symbols:
                    s = h[0, 0] * x
                    pr = lambda v, o: 0.5 * (1 + math.erf(o * v / math.sqrt(2 * sigma2)))
                    probs.append(pr(s.real, s_o.real) * pr(s.imag, s_o.imag))
                res = detect_bruteforce_ml(h, [s_o], q, NoiseModel(sigma2), qam)
                assert res.candidate == int(np.argmax(probs))
                assert res.metric == pytest.approx(math.log(max(probs)), rel=1e-12)

    def test_underflow_guard(self):
        q = make_quantizer(1)
        qam = make_qam(4)
        h = np.ones((64, 1))
        noise = NoiseModel(1e-8)
        s_o = quantize_complex(q, h[:, 0] * qam.symbols[2])
        res = detect_bruteforce_ml(h, s_o, q, noise, qam)
        assert res.candidate == 2
        assert np.isfinite(res.metric)

    def test_agrees_with_naive_at_12_bits(self):
        rng = np.random.default_rng(77)
        q = make_quantizer(12)
        qam = make_qam(16)
        gain = 200.0
        agree = 0
        n = 1000
        for _ in range(n):
            h = iid_channel(8, 1, rng)
            noise = NoiseModel(gain ** 2 * 0.01)
            x = qam.symbols[rng.integers(16)]
            s_o = quantize_complex(q, gain * h.entries[:, 0] * x + sample_noise(noise, 8, rng))
            bf = detect_bruteforce_ml(h, s_o, q, noise, qam, gain)
            nv = detect_quadratic(build_table(h, qam, gain), mrc(h, s_o))
            agree += bf.candidate == nv.candidate
        assert agree >= 999

    def test_invalid_output(self):
        with pytest.raises(ValueError):
            detect_bruteforce_ml(np.ones((2, 1)), [1 + 1j, 0.3 + 1j], make_quantizer(1),
                                 NoiseModel(1.0), make_qam(4))

    def test_charged(self):
        res = detect_bruteforce_ml(np.ones((16, 1)), np.ones(16) * (1 + 1j), make_quantizer(1),
                                   NoiseModel(1.0), make_qam(64))
        assert res.complexity_charged == complexity_bruteforce(16, 1, 64)


class TestPermutation:
    @pytest.mark.parametrize("bits", [1, 3])
    def test_all_detectors(self, bits):
        rng = np.random.default_rng(bits)
        q = make_quantizer(bits)
        qam = make_qam(16)
        noise = NoiseModel(0.4)
        for _ in range(20):
            h = iid_channel(7, 2, rng).entries
            x = qam.symbols[rng.integers(16, size=2)]
            s_o = quantize_complex(q, h @ x + sample_noise(noise, 7, rng))
            perm = rng.permutation(7)
            for mode in ("naive", NLD_AWARE):
                a = detect_quadratic(build_table(h, qam, 1.0, mode, q, noise), mrc(h, s_o))
                b = detect_quadratic(build_table(h[perm], qam, 1.0, mode, q, noise), mrc(h[perm], s_o[perm]))
                assert a.candidate == b.candidate
            a = detect_bruteforce_ml(h, s_o, q, noise, qam)
            b = detect_bruteforce_ml(h[perm], s_o[perm], q, noise, qam)
            assert a.candidate == b.candidate


class TestComplexity:
    @pytest.mark.parametrize("args, naive, brute", [
        ((1024, 1, 64), 1152, 131072),
        ((1, 1, 1), 3, 2),
        ((32, 2, 4), 160, 32 * 3 * 16),
        ((2, 1, 2), 6, 8),
    ])
    def test_values(self, args, naive, brute):
        assert complexity_naive(*args) == naive
        assert complexity_bruteforce(*args) == brute

    def test_ratio(self):
        assert complexity_bruteforce(1024, 1, 64) / complexity_naive(1024, 1, 64) == pytest.approx(113.78, abs=0.01)

    def test_single_candidate(self):
        for m, k in ((5, 1), (9, 3)):
            assert complexity_naive(m, k, 1) == m * k + k * k + k

    def test_overflow(self):
        with pytest.raises(CapacityError):
            complexity_bruteforce(1024, 16, 256)
        with pytest.raises(CapacityError):
            complexity_naive(1, 16, 256)

    def test_invalid(self):
        with pytest.raises(ValueError):
            complexity_naive(0, 1, 4)
