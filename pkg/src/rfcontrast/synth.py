"""Synthetic IQ capture generator.

Emulates a fleet of transmitters whose hardware impairments act as per-device
fingerprints, plus day-specific channel/noise conditions that shift the data
distribution between recording days. Stands in for a physical testbed so the
full pipeline can run on a desk.

All randomness flows from explicit seeds; every function here is pure and safe
to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SAMPLES_PER_SYMBOL = 8
RRC_ROLLOFF = 0.35
RRC_SPAN_SYMBOLS = 8


@dataclass(frozen=True)
class DeviceProfile:
    """Per-device hardware impairments; the fingerprint the models must learn.

    Magnitude conventions: gain imbalance in dB, phase imbalance in radians,
    DC offsets as amplitude relative to the unit-power waveform, CFO in Hz,
    PA coefficient dimensionless (applied as x + c*x*|x|^2).
    """

    device_id: int
    iq_gain_imbalance: float = 0.0
    iq_phase_imbalance: float = 0.0
    dc_offset_i: float = 0.0
    dc_offset_q: float = 0.0
    cfo_hz: float = 0.0
    pa_cubic_coeff: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.device_id < 0:
            raise ValueError(f"device_id must be >= 0, got {self.device_id}")


@dataclass(frozen=True)
class DomainProfile:
    """Per-day channel and receiver conditions shared by all devices that day.

    channel_taps must have unit total energy so snr_db is well-defined.
    snr_db may be math.inf, meaning no additive noise.
    """

    day_id: int
    snr_db: float = math.inf
    channel_taps: tuple = ((1 + 0j),)
    gain_db: float = 0.0
    cfo_drift_hz: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.day_id < 0:
            raise ValueError(f"day_id must be >= 0, got {self.day_id}")
        taps = np.asarray(self.channel_taps, dtype=np.complex128)
        if not 1 <= taps.size <= 8:
            raise ValueError(f"channel_taps length must be in 1..8, got {taps.size}")
        energy = float(np.sum(np.abs(taps) ** 2))
        if abs(energy - 1.0) > 1e-9:
            raise ValueError(f"channel_taps must have unit energy, got {energy!r}")


def identity_domain(day_id: int = 0, seed: int = 0) -> DomainProfile:
    """Domain that applies no channel, gain, noise, or CFO drift."""
    return DomainProfile(day_id=day_id, snr_db=math.inf, channel_taps=((1 + 0j),),
                         gain_db=0.0, cfo_drift_hz=0.0, seed=seed)


@dataclass
class RawCapture:
    """One device's contiguous recording on one day, as complex64 samples."""

    device_id: int
    day_id: int
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex64)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(self.samples.view(np.float32))):
            raise ValueError("capture contains non-finite samples")

    @property
    def num_samples(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class DeviceRanges:
    """Sampling ranges for the default device-profile sampler.

    Chosen so a supervised CNN separates devices easily within one day but
    degrades when the day (channel/noise) changes; see DomainRanges.
    """

    gain_imbalance_db: tuple = (0.2, 1.0)
    phase_imbalance_rad: tuple = (0.01, 0.05)
    dc_offset: tuple = (0.005, 0.02)
    max_cfo_hz: float = 40_000.0
    pa_cubic: tuple = (0.02, 0.1)


@dataclass(frozen=True)
class DomainRanges:
    """Sampling ranges for the default domain-profile sampler.

    Day-to-day shift comes from noise level, channel coloring, bulk gain and a
    small CFO drift (small relative to the inter-device CFO spacing, as a real
    oscillator drifts far less than device-to-device variation).
    """

    snr_db_high: float = 24.0
    snr_db_low: float = 15.0
    num_taps: int = 3
    echo_magnitudes: tuple = (0.25, 0.12)
    gain_db: tuple = (-6.0, 6.0)
    max_cfo_drift_hz: float = 300.0


def sample_device_profiles(num_devices: int, seed: int,
                           ranges: DeviceRanges = DeviceRanges()) -> list[DeviceProfile]:
    """Draw a deterministic fleet of distinct device profiles.

    CFO values sit on a jittered grid spanning +-max_cfo_hz (shuffled across
    devices) so every pair of devices has a clearly separated oscillator
    offset; the remaining impairments are drawn uniformly with random sign.
    """
    if num_devices < 2:
        raise ValueError(f"need at least 2 devices for classification, got {num_devices}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F1D]))

    grid = np.linspace(-ranges.max_cfo_hz, ranges.max_cfo_hz, num_devices)
    spacing = grid[1] - grid[0]
    cfo = rng.permutation(grid) + rng.uniform(-0.2, 0.2, size=num_devices) * spacing

    def signed(lo: float, hi: float) -> float:
        return float(rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi))

    profiles = []
    for dev in range(num_devices):
        profiles.append(DeviceProfile(
            device_id=dev,
            iq_gain_imbalance=signed(*ranges.gain_imbalance_db),
            iq_phase_imbalance=signed(*ranges.phase_imbalance_rad),
            dc_offset_i=signed(*ranges.dc_offset),
            dc_offset_q=signed(*ranges.dc_offset),
            cfo_hz=float(cfo[dev]),
            pa_cubic_coeff=signed(*ranges.pa_cubic),
            seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return profiles


def sample_domain_profiles(num_days: int, seed: int,
                           ranges: DomainRanges = DomainRanges()) -> list[DomainProfile]:
    """Draw one domain profile per day, deterministic in seed.

    SNR steps from snr_db_high on day 0 down to snr_db_low on the last day, so
    consecutive days always present a genuine noise-level shift; taps, gain and
    CFO drift are redrawn per day.
    """
    if num_days < 1:
        raise ValueError(f"need at least 1 day, got {num_days}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0_77A1]))
    if num_days == 1:
        snrs = [ranges.snr_db_high]
    else:
        snrs = np.linspace(ranges.snr_db_high, ranges.snr_db_low, num_days)

    profiles = []
    for day in range(num_days):
        taps = [1.0 + 0j]
        for mag in ranges.echo_magnitudes[:ranges.num_taps - 1]:
            phase = rng.uniform(0, 2 * np.pi)
            taps.append(mag * rng.uniform(0.5, 1.5) * np.exp(1j * phase))
        taps = np.asarray(taps, dtype=np.complex128)
        taps /= np.sqrt(np.sum(np.abs(taps) ** 2))
        profiles.append(DomainProfile(
            day_id=day,
            snr_db=float(snrs[day]),
            channel_taps=tuple(complex(t) for t in taps),
            gain_db=float(rng.uniform(*ranges.gain_db)),
            cfo_drift_hz=float(rng.uniform(-ranges.max_cfo_drift_hz, ranges.max_cfo_drift_hz)),
            seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return profiles


def root_raised_cosine(sps: int, rolloff: float, span_symbols: int) -> np.ndarray:
    """Unit-energy root-raised-cosine FIR taps (span_symbols*sps+1 taps)."""
    n = span_symbols * sps
    t = (np.arange(n + 1) - n / 2) / sps
    beta = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 + beta * (4 / np.pi - 1)
        elif beta > 0 and abs(abs(ti) - 1 / (4 * beta)) < 1e-12:
            h[i] = (beta / np.sqrt(2)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                                          + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        else:
            num = np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))
            den = np.pi * ti * (1 - (4 * beta * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h ** 2))


def clean_qpsk_waveform(num_samples: int, seed: int, profile_seed: int) -> np.ndarray:
    """Pulse-shaped QPSK at SAMPLES_PER_SYMBOL samples/symbol, unit mean power.

    This is the pristine transmit waveform before any impairment; the symbol
    stream depends only on (seed, profile_seed) so reruns with different
    domains reuse the same transmission.
    """
    if num_samples < 1000:
        raise ValueError(f"num_samples must be >= 1000, got {num_samples}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, profile_seed, 0x59B0]))
    sps = SAMPLES_PER_SYMBOL
    num_symbols = math.ceil(num_samples / sps) + 2 * RRC_SPAN_SYMBOLS
    bits = rng.integers(0, 2, size=(num_symbols, 2))
    symbols = ((2 * bits[:, 0] - 1) + 1j * (2 * bits[:, 1] - 1)) / np.sqrt(2)

    upsampled = np.zeros(num_symbols * sps, dtype=np.complex128)
    upsampled[::sps] = symbols
    taps = root_raised_cosine(sps, RRC_ROLLOFF, RRC_SPAN_SYMBOLS)
    shaped = np.convolve(upsampled, taps)
    delay = (len(taps) - 1) // 2
    x = shaped[delay:delay + num_samples]
    return x / np.sqrt(np.mean(np.abs(x) ** 2))


def apply_device_impairments(x: np.ndarray, profile: DeviceProfile,
                             cfo_drift_hz: float, sample_rate_hz: float) -> np.ndarray:
    """PA nonlinearity, IQ gain/phase imbalance, DC offset, then CFO rotation."""
    y = x + profile.pa_cubic_coeff * x * np.abs(x) ** 2

    # gain imbalance split evenly between rails; phase imbalance leaks I into Q
    g = 10 ** (profile.iq_gain_imbalance / 40.0)
    phi = profile.iq_phase_imbalance
    i = g * y.real
    q = (1 / g) * (np.cos(phi) * y.imag + np.sin(phi) * y.real)
    y = i + 1j * q

    y = y + (profile.dc_offset_i + 1j * profile.dc_offset_q)

    f_norm = (profile.cfo_hz + cfo_drift_hz) / sample_rate_hz
    n = np.arange(y.size)
    return y * np.exp(2j * np.pi * f_norm * n)


def apply_domain_effects(x: np.ndarray, domain: DomainProfile,
                         noise_rng: np.random.Generator) -> np.ndarray:
    """FIR channel, bulk gain, then circularly-symmetric Gaussian noise."""
    taps = np.asarray(domain.channel_taps, dtype=np.complex128)
    y = np.convolve(x, taps)[:x.size]
    y = y * 10 ** (domain.gain_db / 20.0)
    if not math.isinf(domain.snr_db):
        signal_power = np.mean(np.abs(y) ** 2)
        noise_power = signal_power / 10 ** (domain.snr_db / 10.0)
        scale = np.sqrt(noise_power / 2.0)
        y = y + scale * (noise_rng.standard_normal(y.size)
                         + 1j * noise_rng.standard_normal(y.size))
    return y


def synthesize_capture(profile: DeviceProfile, domain: DomainProfile,
                       num_samples: int, sample_rate_hz: float,
                       seed: int) -> RawCapture:
    """Generate one transmission: clean QPSK -> device impairments -> domain.

    Deterministic in (seed, profile.seed, domain.seed). The symbol stream and
    impairment stage never consume domain randomness, so regenerating with an
    identity domain reproduces the pre-channel waveform of any day exactly.
    """
    if sample_rate_hz <= 0:
        raise ValueError(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    if num_samples < 1000:
        raise ValueError(f"num_samples must be >= 1000, got {num_samples}")

    x = clean_qpsk_waveform(num_samples, seed, profile.seed)
    x = apply_device_impairments(x, profile, domain.cfo_drift_hz, sample_rate_hz)
    noise_rng = np.random.default_rng(
        np.random.SeedSequence([seed, profile.seed, domain.seed, 0x401E]))
    x = apply_domain_effects(x, domain, noise_rng)
    return RawCapture(device_id=profile.device_id, day_id=domain.day_id,
                      samples=x.astype(np.complex64), sample_rate_hz=sample_rate_hz)
