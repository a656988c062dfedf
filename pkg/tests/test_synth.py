import numpy as np
import pytest

from rfcontrast import synth
from rfcontrast.synth import (DeviceProfile, DomainProfile, DeviceRanges,
                              identity_domain, sample_device_profiles,
                              sample_domain_profiles, synthesize_capture,
                              clean_qpsk_waveform)

FS = 1_000_000.0


def zero_profile(seed=5):
    return DeviceProfile(device_id=0, seed=seed)


class TestSamplers:
    def test_cardinality_and_ids(self):
        profiles = sample_device_profiles(15, seed=7)
        assert len(profiles) == 15
        assert [p.device_id for p in profiles] == list(range(15))

    def test_deterministic_in_seed(self):
        assert sample_device_profiles(2, 0) == sample_device_profiles(2, 0)
        assert sample_domain_profiles(3, 5) == sample_domain_profiles(3, 5)

    def test_single_device_rejected(self):
        with pytest.raises(ValueError):
            sample_device_profiles(1, seed=0)

    def test_profiles_pairwise_distinct(self):
        profiles = sample_device_profiles(10, seed=3)
        for i, a in enumerate(profiles):
            for b in profiles[i + 1:]:
                fields = ("iq_gain_imbalance", "iq_phase_imbalance", "dc_offset_i",
                          "dc_offset_q", "cfo_hz", "pa_cubic_coeff")
                assert any(getattr(a, f) != getattr(b, f) for f in fields)

    def test_default_sampler_respects_bounds(self):
        ranges = DeviceRanges()
        for p in sample_device_profiles(20, seed=11):
            assert abs(p.iq_gain_imbalance) <= 1.0
            assert abs(p.iq_phase_imbalance) <= 0.05
            assert abs(p.dc_offset_i) <= 0.02 and abs(p.dc_offset_q) <= 0.02
            assert abs(p.pa_cubic_coeff) <= 0.1
            # jittered grid can poke slightly past the nominal extremes
            assert abs(p.cfo_hz) <= 1.5 * ranges.max_cfo_hz

    def test_domain_taps_unit_energy(self):
        for d in sample_domain_profiles(4, seed=9):
            energy = sum(abs(t) ** 2 for t in d.channel_taps)
            assert abs(energy - 1.0) <= 1e-9

    def test_bad_taps_rejected(self):
        with pytest.raises(ValueError):
            DomainProfile(day_id=0, channel_taps=(1.0, 0.5))
        with pytest.raises(ValueError):
            DomainProfile(day_id=0, channel_taps=tuple([1 / 3] * 9))


class TestSynthesize:
    def test_zero_impairments_identity_gives_clean_qpsk(self):
        cap = synthesize_capture(zero_profile(), identity_domain(), 2000, FS, seed=1)
        clean = clean_qpsk_waveform(2000, seed=1, profile_seed=5)
        assert np.array_equal(cap.samples, clean.astype(np.complex64))
        assert cap.num_samples == 2000

    def test_cfo_quarter_fs_rotates_clean_waveform(self):
        profile = DeviceProfile(device_id=1, cfo_hz=FS / 4, seed=5)
        cap = synthesize_capture(profile, identity_domain(), 2000, FS, seed=1)
        clean = clean_qpsk_waveform(2000, seed=1, profile_seed=5)
        expected = clean * np.exp(1j * np.pi * np.arange(2000) / 2)
        np.testing.assert_allclose(cap.samples[:8], expected[:8].astype(np.complex64),
                                   rtol=0, atol=1e-6)
        np.testing.assert_allclose(cap.samples, expected.astype(np.complex64),
                                   rtol=0, atol=1e-6)

    def test_snr_calibration_20db(self):
        n = 1_200_000
        noisy = synthesize_capture(zero_profile(), DomainProfile(day_id=1, snr_db=20.0, seed=4),
                                   n, FS, seed=1)
        quiet = synthesize_capture(zero_profile(), identity_domain(day_id=1, seed=4),
                                   n, FS, seed=1)
        noise = noisy.samples.astype(np.complex128) - quiet.samples.astype(np.complex128)
        noise_db = 10 * np.log10(np.mean(np.abs(noise) ** 2))
        assert abs(noise_db - (-20.0)) <= 0.5

    def test_deterministic_bitwise(self):
        profile = sample_device_profiles(2, seed=0)[1]
        domain = sample_domain_profiles(2, seed=0)[1]
        a = synthesize_capture(profile, domain, 4000, FS, seed=3)
        b = synthesize_capture(profile, domain, 4000, FS, seed=3)
        assert np.array_equal(a.samples, b.samples)

    def test_impairment_stage_independent_of_day(self):
        # identity domains on different days (different day_id and seed) must
        # yield bit-identical captures: day randomness only enters via noise
        profile = sample_device_profiles(2, seed=0)[0]
        a = synthesize_capture(profile, identity_domain(day_id=0, seed=11), 4000, FS, seed=3)
        b = synthesize_capture(profile, identity_domain(day_id=1, seed=99), 4000, FS, seed=3)
        assert np.array_equal(a.samples, b.samples)

    def test_same_device_different_day_statistically_alike(self):
        profile = sample_device_profiles(2, seed=0)[0]
        domains = sample_domain_profiles(2, seed=1)
        a = synthesize_capture(profile, domains[0], 100_000, FS, seed=3)
        b = synthesize_capture(profile, domains[1], 100_000, FS, seed=3)
        assert not np.array_equal(a.samples, b.samples)  # domain effects applied
        pa = np.mean(np.abs(a.samples.astype(np.complex128)) ** 2)
        pb = np.mean(np.abs(b.samples.astype(np.complex128)) ** 2)
        # bulk gain differs by design; normalized fourth moments stay close
        ka = np.mean(np.abs(a.samples) ** 4) / pa ** 2
        kb = np.mean(np.abs(b.samples) ** 4) / pb ** 2
        assert abs(ka - kb) < 0.2

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            synthesize_capture(zero_profile(), identity_domain(), 999, FS, seed=0)
        with pytest.raises(ValueError):
            synthesize_capture(zero_profile(), identity_domain(), 2000, 0.0, seed=0)

    def test_all_samples_finite(self):
        profile = sample_device_profiles(3, seed=2)[2]
        domain = sample_domain_profiles(2, seed=2)[1]
        cap = synthesize_capture(profile, domain, 2000, FS, seed=0)
        assert np.all(np.isfinite(cap.samples.view(np.float32)))


class TestWaveform:
    def test_unit_power(self):
        x = clean_qpsk_waveform(50_000, seed=0, profile_seed=1)
        assert abs(np.mean(np.abs(x) ** 2) - 1.0) < 1e-9

    def test_rrc_taps_unit_energy(self):
        taps = synth.root_raised_cosine(8, 0.35, 8)
        assert len(taps) == 65
        assert abs(np.sum(taps ** 2) - 1.0) < 1e-12
