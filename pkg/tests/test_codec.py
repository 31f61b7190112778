import numpy as np
import pytest

from phaseagg import turns
from phaseagg.codec import (
    FecConfig,
    QuantizationConfig,
    bits_to_digits,
    decode_sum,
    demodulate_nearest,
    dequantize_mean,
    digits_to_bits,
    fec_decode,
    fec_encode,
    modulate,
    quantize,
)
from phaseagg.errors import (
    CorruptedAggregateError,
    FramingError,
    InvalidDigitError,
    InvalidGradientError,
    ResidualMaskError,
)


def cfg_for(levels=5, clients=4, clip=1.0):
    return QuantizationConfig.with_auto_modulus(clip=clip, levels=levels,
                                                max_clients=clients)


class TestQuantizationConfig:
    def test_auto_modulus_headroom(self):
        cfg = cfg_for(levels=5, clients=4)
        # 4 clients * 4 max digit = 16 < modulus, next power of two is 32
        assert cfg.modulus == 32
        cfg.require_headroom(4)
        with pytest.raises(ValueError):
            cfg.require_headroom(8)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            QuantizationConfig(clip=1.0, levels=4, modulus=24)

    def test_rejects_modulus_above_grid(self):
        with pytest.raises(ValueError):
            QuantizationConfig(clip=1.0, levels=4, modulus=2**33)

    def test_rejects_bad_clip(self):
        with pytest.raises(ValueError):
            QuantizationConfig(clip=0.0, levels=4, modulus=16)
        with pytest.raises(ValueError):
            QuantizationConfig(clip=float("nan"), levels=4, modulus=16)

    def test_step_is_exact(self):
        cfg = QuantizationConfig(clip=1.0, levels=4, modulus=16)
        assert cfg.step * cfg.modulus == turns.MODULUS


class TestQuantize:
    def test_endpoints_and_midpoint(self):
        cfg = cfg_for(levels=5)
        out = quantize([-1.0, 0.0, 1.0], cfg)
        assert list(out.digits) == [0, 2, 4]

    def test_hand_value(self):
        # (0.3 + 1) * 4 / 2 = 2.6 rounds to 3; brute force over the bins agrees
        cfg = cfg_for(levels=5)
        assert quantize([0.3], cfg).digits[0] == 3
        centers = [k * 2 / 4 - 1 for k in range(5)]
        brute = int(np.argmin([abs(0.3 - c) for c in centers]))
        assert brute == 3

    def test_clamps_out_of_range(self):
        cfg = cfg_for(levels=5)
        assert quantize([2.0], cfg).digits[0] == 4
        assert quantize([-7.5], cfg).digits[0] == 0

    def test_rejects_non_finite(self):
        cfg = cfg_for()
        with pytest.raises(InvalidGradientError):
            quantize([np.nan], cfg)
        with pytest.raises(InvalidGradientError):
            quantize([np.inf, 0.0], cfg)

    def test_stochastic_rounding_needs_rng_and_stays_in_range(self):
        cfg = QuantizationConfig(clip=1.0, levels=5, modulus=32, stochastic=True)
        with pytest.raises(ValueError):
            quantize([0.3], cfg)
        gen = np.random.default_rng(0)
        digits = quantize(np.linspace(-1, 1, 1000), cfg, rng=gen).digits
        assert digits.min() >= 0 and digits.max() <= 4

    def test_error_bound(self):
        cfg = cfg_for(levels=9)
        gen = np.random.default_rng(3)
        g = gen.uniform(-2, 2, size=500)
        digits = quantize(g, cfg).digits
        recovered = digits * (2 * cfg.clip / (cfg.levels - 1)) - cfg.clip
        assert np.all(np.abs(recovered - np.clip(g, -1, 1)) <= cfg.clip / (cfg.levels - 1) + 1e-12)


class TestDequantizeMean:
    def test_all_minimum(self):
        cfg = cfg_for(levels=5)
        assert dequantize_mean([0], 4, cfg)[0] == -1.0

    def test_symmetric_midpoint(self):
        cfg = cfg_for(levels=5)
        assert dequantize_mean([8], 4, cfg)[0] == 0.0

    def test_matches_per_client_average(self):
        cfg = cfg_for(levels=5)
        gen = np.random.default_rng(4)
        for _ in range(50):
            digits = gen.integers(0, 5, size=(4, 6))
            mean = dequantize_mean(digits.sum(axis=0), 4, cfg)
            per_client = (digits * (2 * cfg.clip / 4) - cfg.clip).mean(axis=0)
            assert np.allclose(mean, per_client, atol=1e-12)

    def test_rejects_out_of_range_sums(self):
        cfg = cfg_for(levels=5)
        with pytest.raises(CorruptedAggregateError):
            dequantize_mean([17], 4, cfg)
        with pytest.raises(CorruptedAggregateError):
            dequantize_mean([-1], 4, cfg)


class TestModulateDecode:
    def test_zero_digit_is_zero_phase(self):
        cfg = cfg_for()
        assert modulate([0], cfg).symbols[0] == 0

    def test_qpsk_point(self):
        cfg = QuantizationConfig(clip=1.0, levels=2, modulus=4)
        assert modulate([1], cfg).symbols[0] == 2**30

    def test_rejects_digit_out_of_range(self):
        cfg = cfg_for(levels=5)
        with pytest.raises(InvalidDigitError):
            modulate([5], cfg)

    def test_single_client_roundtrip(self):
        cfg = cfg_for(levels=5)
        gen = np.random.default_rng(5)
        for _ in range(1000):
            digits = gen.integers(0, 5, size=8)
            sym = modulate(digits, cfg)
            assert np.array_equal(decode_sum(sym.symbols, cfg), digits)

    def test_roundtrip_across_level_counts(self):
        gen = np.random.default_rng(6)
        for levels in [2, 3, 4, 7, 16, 33, 64]:
            cfg = QuantizationConfig.with_auto_modulus(1.0, levels, max_clients=1)
            digits = gen.integers(0, levels, size=32)
            assert np.array_equal(decode_sum(modulate(digits, cfg).symbols, cfg), digits)

    def test_plaintext_sum_oracle(self):
        cfg = QuantizationConfig(clip=1.0, levels=4, modulus=8)
        total = turns.vector_total([modulate([d], cfg).symbols for d in (1, 2, 3)])
        assert decode_sum(total, cfg)[0] == 6

    def test_linearity_against_brute_force(self):
        gen = np.random.default_rng(7)
        for _ in range(25):
            clients = int(gen.integers(2, 9))
            dim = int(gen.integers(1, 9))
            levels = int(gen.integers(2, 9))
            cfg = QuantizationConfig.with_auto_modulus(1.0, levels, max_clients=clients)
            digits = gen.integers(0, levels, size=(clients, dim))
            total = turns.vector_total([modulate(row, cfg).symbols for row in digits])
            assert np.array_equal(decode_sum(total, cfg), digits.sum(axis=0))

    def test_off_grid_raises_residual_mask(self):
        cfg = cfg_for(levels=5)
        sym = modulate([1, 2], cfg).symbols.copy()
        sym[1] += 1
        with pytest.raises(ResidualMaskError):
            decode_sum(sym, cfg)

    def test_decode_all_zero(self):
        cfg = cfg_for()
        assert np.array_equal(decode_sum(np.zeros(4, dtype=np.uint64), cfg),
                              np.zeros(4, dtype=np.int64))

    def test_demodulate_nearest(self):
        cfg = QuantizationConfig(clip=1.0, levels=4, modulus=16)
        sym = modulate([3], cfg).symbols
        assert demodulate_nearest(sym, cfg)[0] == 3
        assert demodulate_nearest(sym + np.uint64(cfg.step // 4), cfg)[0] == 3
        # just past the halfway point rounds to the next constellation index
        assert demodulate_nearest(sym + np.uint64(cfg.step // 2), cfg)[0] == 4


class TestBitsAndFec:
    def test_digit_bit_roundtrip(self):
        cfg = cfg_for(levels=5)
        gen = np.random.default_rng(8)
        digits = gen.integers(0, 5, size=40)
        bits = digits_to_bits(digits, cfg)
        assert bits.size == 40 * cfg.bits_per_digit
        assert np.array_equal(bits_to_digits(bits, cfg), digits)

    def test_payload_bits(self):
        assert cfg_for(levels=5).payload_bits(10) == 30
        assert cfg_for(levels=16).payload_bits(10) == 40

    def test_identity_scheme(self):
        fec = FecConfig(scheme="none")
        bits = np.array([1, 0, 1, 1], dtype=np.uint8)
        assert np.array_equal(fec_encode(bits, fec), bits)
        assert np.array_equal(fec_decode(bits, fec), bits)
        assert fec.redundancy_bits(16) == 0

    def test_repetition_three(self):
        fec = FecConfig(scheme="repetition", repeat=3)
        encoded = fec_encode([1, 0], fec)
        assert list(encoded) == [1, 1, 1, 0, 0, 0]
        assert list(fec_decode(encoded, fec)) == [1, 0]
        assert fec.redundancy_bits(2) == 4

    def test_roundtrip_random_strings(self):
        gen = np.random.default_rng(9)
        for fec in [FecConfig("none"), FecConfig("repetition", 2),
                    FecConfig("repetition", 5)]:
            for _ in range(334):
                bits = gen.integers(0, 2, size=int(gen.integers(1, 64))).astype(np.uint8)
                assert np.array_equal(fec_decode(fec_encode(bits, fec), fec), bits)

    def test_framing_error(self):
        fec = FecConfig(scheme="repetition", repeat=3)
        with pytest.raises(FramingError):
            fec_decode([1, 1], fec)

    def test_invalid_scheme(self):
        with pytest.raises(ValueError):
            FecConfig(scheme="hamming")
        with pytest.raises(ValueError):
            FecConfig(scheme="repetition", repeat=1)
