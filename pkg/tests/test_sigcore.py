import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from conftest import cnoise
from dronerf import sigcore
from dronerf.errors import DegenerateInputError, InvalidInputError
from dronerf.sigcore import BurstMask, IqFrame, SnrSpec


# IqFrame / BurstMask --------------------------------------------------------
def test_iqframe_validates():
    with pytest.raises(InvalidInputError):
        IqFrame(np.array([1, np.nan], dtype=complex), 1.0)
    with pytest.raises(InvalidInputError):
        IqFrame(np.ones(4, complex), 0.0)
    with pytest.raises(InvalidInputError):
        IqFrame(np.ones((2, 2), complex), 1.0)
    f = IqFrame(np.ones(8), 10.0)
    assert f.samples.dtype == np.complex64 and f.length == 8 and f.duration_s == pytest.approx(0.8)


def test_burstmask_roundtrip_and_rejects_overlap():
    flags = np.zeros(20, bool)
    flags[2:5] = flags[9:10] = flags[15:20] = True
    m = BurstMask.from_bool(flags)
    assert m.intervals == ((2, 5), (9, 10), (15, 20))
    assert m.count == 9
    assert np.array_equal(m.to_bool(), flags)
    with pytest.raises(InvalidInputError):
        BurstMask(((0, 5), (4, 6)), 10)
    with pytest.raises(InvalidInputError):
        BurstMask(((0, 11),), 10)


def test_snr_k_factor():
    assert SnrSpec(-20).k_factor == pytest.approx(0.01, rel=1e-15)
    assert SnrSpec(0).k_factor == 1.0
    assert SnrSpec(30).k_factor == pytest.approx(1000.0, rel=1e-15)


# decimate -------------------------------------------------------------------
def test_decimate_dc_and_rate():
    f = IqFrame(np.ones(4096, np.complex128), 56e6)
    d = sigcore.decimate(f, 4)
    assert d.length == 1024
    assert d.sample_rate_hz == 14e6
    assert np.max(np.abs(d.samples - 1)) < 1e-6


def test_decimate_rejects_bad_args():
    f = IqFrame(np.ones(100, complex), 1.0)
    with pytest.raises(InvalidInputError):
        sigcore.decimate(f, 3)
    with pytest.raises(InvalidInputError):
        sigcore.decimate(f, 1)


def test_decimate_stopband_tone_matches_filter_response():
    q, n = 4, 1 << 14
    new_nyq = 0.5 / q  # cycles/sample at the input rate
    f0 = 1.1 * new_nyq  # beyond the new Nyquist, inside the stopband
    x = np.exp(2j * np.pi * f0 * np.arange(n))
    y = sigcore.decimate(IqFrame(x, 1.0), q).samples
    mid = y[len(y) // 4 : 3 * len(y) // 4]
    atten_db = 10 * np.log10(np.mean(np.abs(mid) ** 2))
    # oracle: filtfilt applies |H|^2 of the designed filter
    _, h = signal.sosfreqz(sigcore.decimation_filter(q), worN=[2 * np.pi * f0])
    expected = 20 * np.log10(np.abs(h[0]) ** 2)
    assert atten_db <= -30
    assert atten_db == pytest.approx(expected, abs=1.0)


@given(st.floats(0.0, 0.7))
def test_decimate_passband_tone_keeps_amplitude(frac):
    q, n = 4, 8192
    f0 = frac * 0.5 / q * 0.95
    x = np.exp(2j * np.pi * f0 * np.arange(n))
    y = sigcore.decimate(IqFrame(x, 1.0), q).samples
    mid = np.abs(y[n // 16 : -n // 16])
    ripple = 10 ** (2 * sigcore.CHEBY_RIPPLE_DB / 20)  # filtfilt doubles the ripple in dB
    assert mid.max() <= ripple * 1.001 and mid.min() >= 1 / ripple / 1.001


# detect_bursts ----------------------------------------------------------------
def test_detect_bursts_zero_frame_is_empty():
    m = sigcore.detect_bursts(IqFrame(np.zeros(512, complex), 1.0))
    assert m.intervals == ()


def test_detect_bursts_recovers_block():
    x = np.zeros(8192, complex)
    x[1000:3000] = 1.0
    m = sigcore.detect_bursts(IqFrame(x, 1.0), smooth_window=64, rel_threshold=0.5)
    assert len(m.intervals) == 1
    a, b = m.intervals[0]
    assert abs(a - 1000) <= 64 and abs(b - 3000) <= 64


def test_detect_bursts_matches_bruteforce_predicate(rng):
    x = cnoise(rng, 3000)
    w, thr = 31, 0.5
    m = sigcore.detect_bursts(IqFrame(x, 1.0), w, thr)
    e = np.abs(x) ** 2
    sm = np.array([e[max(0, i - (w - 1) // 2) : i + w // 2 + 1].mean() for i in range(len(x))])
    assert np.array_equal(m.to_bool(), sm > thr * sm.max())
    for a, b in m.intervals:
        assert sm[a:b].mean() > thr * sm.max()


@given(st.floats(0, 2 * np.pi), st.integers(0, 2**31))
def test_detect_bursts_phase_invariant(phi, seed):
    r = np.random.default_rng(seed)
    x = cnoise(r, 1024)
    x[300:500] *= 5
    f = IqFrame(x, 1.0)
    g = IqFrame(x * np.exp(1j * phi), 1.0)
    assert sigcore.detect_bursts(f, 33).intervals == sigcore.detect_bursts(g, 33).intervals


def test_detect_bursts_rejects_bad_params():
    f = IqFrame(np.ones(16, complex), 1.0)
    with pytest.raises(InvalidInputError):
        sigcore.detect_bursts(f, 0)
    with pytest.raises(InvalidInputError):
        sigcore.detect_bursts(f, 5, 1.0)


# segment selection ----------------------------------------------------------
def test_segment_has_burst_examples():
    assert sigcore.segment_has_burst(0.002, 1.0, 0.001)
    assert not sigcore.segment_has_burst(0.0, 3.0)
    with pytest.raises(InvalidInputError):
        sigcore.segment_has_burst(1.0, 0.0)


def test_select_burst_segments_known_schedule(rng):
    seg, n_seg = 1024, 10
    x = np.zeros(seg * n_seg, complex)
    for j in (1, 4, 8):
        a = j * seg + 200
        x[a : a + 400] = cnoise(rng, 400)
    assert sigcore.select_burst_segments(IqFrame(x, 1.0), seg, smooth_window=33) == [1, 4, 8]


# normalisations ---------------------------------------------------------------
def test_carrier_power_examples():
    f = IqFrame(np.full(64, 2.0 + 0j), 1.0)
    assert np.allclose(sigcore.normalize_carrier_power(f, BurstMask.full(64)).samples, 1.0)
    x = np.zeros(64, complex)
    x[:32] = 3.0
    m = BurstMask(((0, 32),), 64)
    y = sigcore.normalize_carrier_power(IqFrame(x, 1.0), m).samples
    assert np.allclose(y[:32], 1.0) and np.all(y[32:] == 0)


def test_carrier_power_degenerate():
    f = IqFrame(np.zeros(16, complex), 1.0)
    with pytest.raises(DegenerateInputError):
        sigcore.normalize_carrier_power(f, BurstMask((), 16))
    with pytest.raises(DegenerateInputError):
        sigcore.normalize_carrier_power(f, BurstMask.full(16))
    with pytest.raises(DegenerateInputError):
        sigcore.normalize_mean_power(f)


def _random_mask(r, n):
    flags = r.random(n) < 0.3
    flags[r.integers(n)] = True
    return BurstMask.from_bool(flags)


@given(st.integers(0, 2**31), st.sampled_from([np.complex64, np.complex128]))
def test_carrier_power_post_state(seed, dtype):
    r = np.random.default_rng(seed)
    n = int(r.integers(8, 600))
    x = cnoise(r, n) * r.uniform(0.01, 100)
    m = _random_mask(r, n)
    y = sigcore.normalize_carrier_power(IqFrame(x.astype(dtype), 1.0), m)
    assert y.samples.dtype == dtype
    p = np.abs(y.samples.astype(np.complex128)[m.to_bool()]) ** 2
    tol = 1e-9 if dtype == np.complex128 else 1e-6
    assert p.mean() == pytest.approx(1.0, rel=tol)
    z = sigcore.normalize_carrier_power(y, m)
    assert np.max(np.abs(z.samples - y.samples)) <= (1e-12 if dtype == np.complex128 else 1e-6)


@given(st.integers(0, 2**31))
def test_mean_power_post_state_and_idempotence(seed):
    r = np.random.default_rng(seed)
    x = cnoise(r, int(r.integers(4, 2000))) * r.uniform(1e-3, 1e3)
    y = sigcore.normalize_mean_power(IqFrame(x, 1.0))
    assert np.mean(np.abs(y.samples) ** 2) == pytest.approx(1.0, rel=1e-9)
    z = sigcore.normalize_mean_power(y)
    assert np.max(np.abs(z.samples - y.samples)) < 1e-12


def test_mean_power_examples(rng):
    y = sigcore.normalize_mean_power(IqFrame(np.full(32, 0.5 + 0j), 1.0)).samples
    assert np.allclose(y, 1.0)
    w = sigcore.normalize_mean_power(IqFrame(cnoise(rng, 4096), 1.0))
    assert w.mean_power() == pytest.approx(1.0, rel=1e-12)


# mixing -------------------------------------------------------------------------
def test_mix_zero_db_is_plain_average(rng):
    x, n = cnoise(rng, 256), cnoise(rng, 256)
    y = sigcore.mix_at_snr(IqFrame(x, 1.0), IqFrame(n, 1.0), SnrSpec(0.0)).samples
    assert np.allclose(y, (x + n) / np.sqrt(2), rtol=0, atol=1e-15)


@given(st.integers(0, 2**31), st.floats(-40, 40), st.sampled_from([np.complex64, np.complex128]))
def test_mix_matches_scalar_oracle(seed, snr, dtype):
    r = np.random.default_rng(seed)
    n = 64
    x, w = cnoise(r, n, dtype), cnoise(r, n, dtype)
    y = sigcore.mix_at_snr(IqFrame(x, 1.0), IqFrame(w, 1.0), SnrSpec(snr)).samples
    k = 10.0 ** (snr / 10.0)
    sk, d = np.sqrt(k), np.sqrt(k + 1.0)
    for i in range(n):
        re = (sk * float(x[i].real) + float(w[i].real)) / d
        im = (sk * float(x[i].imag) + float(w[i].imag)) / d
        expect = np.array(complex(re, im)).astype(dtype)
        assert y[i] == expect


def test_mix_rejects_mismatch():
    with pytest.raises(InvalidInputError):
        sigcore.mix_at_snr(IqFrame(np.ones(4, complex), 1.0), IqFrame(np.ones(5, complex), 1.0), SnrSpec(0))


@pytest.mark.parametrize("snr", [-10.0, 0.0, 10.0])
def test_mix_measured_snr(rng, snr):
    n = 1 << 14
    x = np.zeros(n, complex)
    x[4000:9000] = np.exp(1j * rng.uniform(0, 2 * np.pi, 5000))
    mask = BurstMask(((4000, 9000),), n)
    xh = sigcore.normalize_carrier_power(IqFrame(x, 1.0), mask)
    nh = sigcore.normalize_mean_power(IqFrame(cnoise(rng, n), 1.0))
    k = SnrSpec(snr).k_factor
    sig_part = np.sqrt(k) * xh.samples / np.sqrt(k + 1)
    noise_part = nh.samples / np.sqrt(k + 1)
    measured = 10 * np.log10(np.mean(np.abs(sig_part[4000:9000]) ** 2) / np.mean(np.abs(noise_part) ** 2))
    assert abs(measured - snr) <= 0.5
    y = sigcore.mix_at_snr(xh, nh, SnrSpec(snr)).samples
    assert np.allclose(y, sig_part + noise_part)
