from fractions import Fraction

import numpy as np
import pytest

from oracles import box_lsq_distance, decode_naive, epsilon_exact
from tracelab.channel import ChannelParams, SourceString
from tracelab.cpoly import DiskSpec, max_modulus_on_circle
from tracelab.littlewood import GuardrailError, kappa_frac_sample
from tracelab.meantrace import exact_mean_trace_deletion, exact_mean_trace_general
from tracelab.reconstruct import (
    BoxLSQ,
    ReconstructionConfig,
    all_sources,
    bruteforce_decode,
    end_to_end,
    epsilon_del_bruteforce,
    epsilon_frac,
    reconstruct_bruteforce,
    reconstruct_mean_based,
    required_cost,
    samples_for_accuracy,
)


def test_epsilon_single_bit():
    for delta in (0.0, 0.3, 0.9):
        assert epsilon_del_bruteforce(1, delta).epsilon == pytest.approx(2 * (1 - delta))


@pytest.mark.parametrize("n,delta", [(2, Fraction(1, 2)), (3, Fraction(3, 10)), (5, Fraction(7, 10))])
def test_epsilon_matches_exact_rational_scan(n, delta):
    got = epsilon_del_bruteforce(n, float(delta))
    ref = epsilon_exact(n, delta)
    assert got.epsilon == pytest.approx(float(ref), rel=1e-12)
    assert got.method == "bruteforce"


def test_epsilon_positive_and_sandwiched():
    unit = DiskSpec(0.0, 1.0)
    for n in range(1, 9):
        for delta in (0.0, 0.2, 0.5, 0.8):
            eps = epsilon_del_bruteforce(n, delta)
            assert eps.epsilon > 0
            mm = max_modulus_on_circle(exact_mean_trace_deletion(eps.argmin, delta).values, unit)
            half = eps.epsilon / 2
            assert mm.value <= half * (1 + 1e-12)
            assert half <= np.sqrt(n) * mm.upper


def test_epsilon_guardrail():
    with pytest.raises(GuardrailError):
        epsilon_del_bruteforce(15, 0.5)


def test_epsilon_frac_properties():
    rng = np.random.default_rng(0)
    for n, delta in [(1, 0.4), (4, 0.3), (7, 0.6)]:
        frac = epsilon_frac(n, delta)
        eps = epsilon_del_bruteforce(n, delta)
        # the fractional class contains every canonical {-1,0,1} vector
        assert frac.epsilon <= eps.epsilon * (1 + 1e-9)
        assert frac.epsilon > 0
        # the LP argmin attains the value and random feasible points never beat it
        mu = exact_mean_trace_deletion(frac.argmin, delta).values
        assert 2 * np.abs(mu).sum() == pytest.approx(frac.epsilon, rel=1e-7)
        for _ in range(200):
            d = int(rng.integers(n))
            b = np.concatenate([np.zeros(d), [1.0], rng.uniform(-1, 1, n - d - 1)])
            assert 2 * np.abs(exact_mean_trace_deletion(b, delta).values).sum() >= frac.epsilon - 1e-9


def test_required_cost():
    assert required_cost(2.0) == 1
    assert required_cost(0.01) == 200
    assert required_cost(0.3) == 7
    eps = epsilon_del_bruteforce(8, 0.5)
    assert required_cost(eps) == int(np.ceil(2 / eps.epsilon))
    with pytest.raises(ValueError):
        required_cost(0.0)


def test_samples_for_accuracy_bound_holds():
    n, target = 6, 0.3
    m = samples_for_accuracy(n, target)
    # worst case per-entry variance is 1/m
    assert n * 3 / np.sqrt(m) < target


def test_box_lsq_matches_scipy():
    rng = np.random.default_rng(1)
    for K in (1, 2, 3, 6, 9):
        G = rng.normal(size=(40, K)) + 1j * rng.normal(size=(40, K))
        d = 3 * (rng.normal(size=40) + 1j * rng.normal(size=40))
        solver = BoxLSQ(d, G)
        solver.run(4000)
        upper, lower = solver.bounds()
        ref = np.array([box_lsq_distance(d[i], G[i]) for i in range(40)])
        assert np.all(lower <= ref + 1e-9)
        assert np.all(ref <= upper + 1e-12)
        assert np.abs(upper - ref).max() <= 1e-6


def test_box_lsq_collinear_generators():
    # all generators real: the image of the box is a segment
    G = np.array([[1.0, 0.5, -0.25]], dtype=complex)
    for d, want in [(1.0 + 0j, 0.0), (2.5 + 0j, 0.75), (1.0 + 2j, 2.0)]:
        solver = BoxLSQ(np.array([d]), G)
        solver.run(500)
        upper, lower = solver.bounds()
        assert upper[0] == pytest.approx(want, abs=1e-8)
        assert lower[0] == pytest.approx(want, abs=1e-8)


def test_decoder_single_bit():
    for h in (1, -1):
        for delta in (0.0, 0.4):
            rep = reconstruct_mean_based([(1 - delta) * h], delta, 1, ReconstructionConfig(threshold=1))
            assert list(rep.recovered.bits) == [h]
            assert rep.margins[0] > 0 and not rep.flagged


def test_decoder_tie_goes_to_plus_and_is_flagged():
    rep = reconstruct_mean_based([0.0], 0.5, 1, ReconstructionConfig(threshold=1))
    assert list(rep.recovered.bits) == [1]
    assert rep.flags == ["tie"] and rep.margins[0] == 0


def test_decoder_exact_input_n12():
    rng = np.random.default_rng(12)
    cfg = ReconstructionConfig(s=512, threshold=1.0)
    for _ in range(50):
        x = SourceString.random(12, rng)
        rep = reconstruct_mean_based(exact_mean_trace_deletion(x, 0.2).values, 0.2, 12, cfg)
        assert rep.recovered == x
        assert len(rep.margins) == 12 and np.all(rep.margins > 0)


def test_decoder_agrees_with_bruteforce_small():
    for delta in (0.1, 0.5):
        for n in (2, 4, 5):
            for x in all_sources(n):
                mu = exact_mean_trace_deletion(x, delta).values
                rep = reconstruct_mean_based(mu, delta, n, ReconstructionConfig(threshold=1))
                assert np.array_equal(rep.recovered.bits, x)


def test_margins_exceed_fractional_floor():
    # every margin must beat rho times a floor on the chill-polynomial minimum
    n, delta = 6, 0.3
    floor = kappa_frac_sample(1 - delta, n, 200, np.random.default_rng(0)).floor
    cfg = ReconstructionConfig(threshold=1.0)
    for x in all_sources(n)[::7]:
        rep = reconstruct_mean_based(exact_mean_trace_deletion(x, delta).values, delta, n, cfg)
        assert rep.margins.min() >= (1 - delta) * floor - cfg.tol


def test_nonconvergence_is_flagged():
    x = SourceString("+-+--+-+")
    mu = exact_mean_trace_deletion(x, 0.5).values
    rep = reconstruct_mean_based(mu, 0.5, 8, ReconstructionConfig(max_iters=1, threshold=1))
    assert any(f == "nonconvergence" for f in rep.flags)
    assert all(rep.margins[i] == 0 for i, f in enumerate(rep.flags) if f == "nonconvergence")


def test_default_threshold_is_half_frac_gap():
    rep = reconstruct_mean_based(exact_mean_trace_deletion([1, -1, 1], 0.3).values, 0.3, 3)
    assert rep.threshold == pytest.approx(epsilon_frac(3, 0.3).epsilon / 2)


def test_config_validation():
    with pytest.raises(ValueError):
        ReconstructionConfig(s=4)
    with pytest.raises(ValueError):
        ReconstructionConfig(tol=0)
    with pytest.raises(ValueError):
        ReconstructionConfig(threshold=-1)


def test_general_channel_decoding():
    params = ChannelParams(0.2, 0.15, 0.1)
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = SourceString.random(7, rng)
        mu = exact_mean_trace_general(x, params).values
        rep = reconstruct_mean_based(mu, None, 7, ReconstructionConfig(), params=params)
        assert rep.recovered == x


def test_bruteforce_exact_and_naive():
    rng = np.random.default_rng(4)
    for n in (1, 3, 6):
        for _ in range(5):
            x = SourceString.random(n, rng)
            mu = exact_mean_trace_deletion(x, 0.4).values
            assert reconstruct_bruteforce(mu, 0.4, n) == x
            noisy = mu + rng.normal(scale=0.2, size=n)
            ref, _ = decode_naive(noisy, 0.4, n)
            assert np.array_equal(bruteforce_decode(noisy, 0.4, n).recovered.bits, ref)


def test_bruteforce_tie_is_lexicographic_and_flagged():
    delta = 0.3
    a = exact_mean_trace_deletion([-1, 1], delta).values
    b = exact_mean_trace_deletion([1, -1], delta).values
    res = bruteforce_decode((a + b) / 2, delta, 2)
    assert res.tied
    assert list(res.recovered.bits) == [-1, 1]


def test_bruteforce_guardrail():
    with pytest.raises(GuardrailError):
        bruteforce_decode(np.zeros(21), 0.1, 21)


def test_end_to_end_noiseless_channel():
    x = SourceString("+--+-++-")
    rep = end_to_end(x, ChannelParams(), 1, ReconstructionConfig(delta=0.0, threshold=1), seed=0)
    assert rep.success and rep.l1_deviation == 0


def test_end_to_end_estimates_delta():
    x = SourceString("+-++--+-+-")
    rep = end_to_end(x, ChannelParams(0.2), 200_000, ReconstructionConfig(threshold=1), seed=5)
    assert abs(rep.extra["delta_used"] - 0.2) < 0.01
    assert rep.success


def test_end_to_end_more_traces_help():
    rng = np.random.default_rng(6)
    cfg = ReconstructionConfig(delta=0.2, threshold=1)
    sources = [SourceString.random(10, rng) for _ in range(20)]
    few = sum(end_to_end(x, ChannelParams(0.2), 10, cfg, seed=i).success
              for i, x in enumerate(sources))
    many = sum(end_to_end(x, ChannelParams(0.2), 100_000, cfg, seed=i).success
               for i, x in enumerate(sources))
    assert many == 20
    assert few < many


def test_report_json():
    rep = reconstruct_mean_based(exact_mean_trace_deletion([1, -1], 0.1).values, 0.1, 2,
                                 ReconstructionConfig(threshold=1))
    data = rep.to_dict()
    assert data["schema"] == "v1" and data["recovered"] == "+-"
    assert len(data["margins"]) == 2
