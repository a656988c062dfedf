"""Capture container format and Set/Capture/frame construction.

A dataset directory holds one `.iq` binary per recorded transmission plus a
single `metadata.json` sidecar describing every file. The binary format is
interleaved little-endian 32-bit floats (I0, Q0, I1, Q1, ...).

Frames are windowed out of raw captures without copying tricks: frame i of a
capture covers raw samples [i*W, (i+1)*W) of its slice, stored as a 2xW
float32 matrix (row 0 = I, row 1 = Q). Standardization for model input is a
separate step (`standardize_frame`); captures keep the raw values so the
window partition reconstructs the recording exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .synth import RawCapture

METADATA_NAME = "metadata.json"
FORMAT_TAG = "rfcontrast-iq-v1"


class FormatError(Exception):
    """Raised when a dataset directory or .iq file violates the container format."""


@dataclass
class IQFrame:
    """A 2xW float32 window of IQ data; row 0 = I, row 1 = Q."""

    data: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] != 2:
            raise ValueError(f"frame data must have shape (2, W), got {self.data.shape}")
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("frame contains non-finite entries")

    @property
    def window(self) -> int:
        return int(self.data.shape[1])


@dataclass
class Capture:
    """Ordered frames from one device's transmission in one recording slice."""

    device_id: int
    day_id: int
    set_index: int
    transmission_id: int
    frames: list[IQFrame]


@dataclass
class CaptureSet:
    """One capture per device at a fixed time offset within a day's recording."""

    day_id: int
    set_index: int
    captures: list[Capture]

    def __post_init__(self):
        ids = [c.device_id for c in self.captures]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate device_id in capture set: {sorted(ids)}")
        for c in self.captures:
            if c.day_id != self.day_id or c.set_index != self.set_index:
                raise ValueError(
                    f"capture (device {c.device_id}) day/set {c.day_id}/{c.set_index} "
                    f"does not match set {self.day_id}/{self.set_index}")

    @property
    def num_devices(self) -> int:
        return len(self.captures)

    @property
    def total_frames(self) -> int:
        return sum(len(c.frames) for c in self.captures)


@dataclass
class LabeledFrame:
    frame: IQFrame
    device_label: int
    transmission_id: int


class TransmissionIdAllocator:
    """Hands out experiment-unique transmission ids, one per capture."""

    def __init__(self, start: int = 0):
        self._next = start

    def allocate(self) -> int:
        tid = self._next
        self._next += 1
        return tid


def capture_file_name(device_id: int, day_id: int) -> str:
    return f"dev{device_id:03d}_day{day_id:02d}.iq"


def write_capture(capture: RawCapture, path: str | Path, set_index: int = 0) -> Path:
    """Write one capture binary and register it in the directory's metadata.

    The sidecar is rewritten atomically-enough for the single-writer contract;
    an existing entry for the same file name is replaced.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    interleaved = np.empty(2 * capture.num_samples, dtype="<f4")
    interleaved[0::2] = capture.samples.real
    interleaved[1::2] = capture.samples.imag
    interleaved.tofile(path)

    meta_path = path.parent / METADATA_NAME
    if meta_path.exists():
        meta = _load_metadata(meta_path)
    else:
        meta = {"format": FORMAT_TAG, "captures": []}
    meta["captures"] = [e for e in meta["captures"] if e["file_name"] != path.name]
    meta["captures"].append({
        "device_id": capture.device_id,
        "day_id": capture.day_id,
        "set_index": set_index,
        "sample_rate_hz": capture.sample_rate_hz,
        "num_samples": capture.num_samples,
        "file_name": path.name,
    })
    meta["captures"].sort(key=lambda e: e["file_name"])
    meta_path.write_text(json.dumps(meta, indent=2))
    return path


def _load_metadata(meta_path: Path) -> dict:
    if not meta_path.exists():
        raise FormatError(f"missing metadata file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt metadata file {meta_path}: {exc}") from exc
    if meta.get("format") != FORMAT_TAG or "captures" not in meta:
        raise FormatError(f"corrupt metadata file {meta_path}: unrecognized structure")
    return meta


def read_capture(path: str | Path) -> RawCapture:
    """Read one capture binary back, validating length against the sidecar."""
    path = Path(path)
    meta = _load_metadata(path.parent / METADATA_NAME)
    entry = next((e for e in meta["captures"] if e["file_name"] == path.name), None)
    if entry is None:
        raise FormatError(f"{path.name} not listed in {path.parent / METADATA_NAME}")
    if not path.exists():
        raise FormatError(f"missing capture file: {path}")

    raw = np.fromfile(path, dtype="<f4")
    if raw.size != 2 * entry["num_samples"]:
        raise FormatError(
            f"{path}: expected {2 * entry['num_samples']} floats "
            f"({entry['num_samples']} complex samples), found {raw.size}")
    samples = np.ascontiguousarray(raw).view("<c8")
    return RawCapture(device_id=entry["device_id"], day_id=entry["day_id"],
                      samples=samples, sample_rate_hz=entry["sample_rate_hz"])


def save_dataset(captures: list[RawCapture], directory: str | Path) -> Path:
    """Write a full dataset directory, one .iq per (device, day)."""
    directory = Path(directory)
    for cap in captures:
        write_capture(cap, directory / capture_file_name(cap.device_id, cap.day_id))
    return directory


def load_dataset(directory: str | Path) -> list[RawCapture]:
    """Read every capture listed in a dataset directory's metadata."""
    directory = Path(directory)
    meta = _load_metadata(directory / METADATA_NAME)
    return [read_capture(directory / e["file_name"]) for e in meta["captures"]]


def build_capture_set(raw_captures: list[RawCapture], set_index: int,
                      frames_per_capture: int, window: int,
                      id_allocator: TransmissionIdAllocator,
                      offset_frames: int | None = None) -> CaptureSet:
    """Window one Set out of raw day recordings.

    Set s starts at offset_frames = s * frames_per_capture by default, so the
    Sets of a day partition the recording into disjoint slices. Each capture
    receives a fresh transmission id.
    """
    if offset_frames is None:
        offset_frames = set_index * frames_per_capture
    if not raw_captures:
        raise ValueError("no raw captures given")
    device_ids = [c.device_id for c in raw_captures]
    if len(set(device_ids)) != len(device_ids):
        raise ValueError(f"duplicate device in raw captures: {sorted(device_ids)}")
    day_ids = {c.day_id for c in raw_captures}
    if len(day_ids) != 1:
        raise ValueError(f"raw captures span multiple days: {sorted(day_ids)}")

    needed = (offset_frames + frames_per_capture) * window
    captures = []
    for raw in sorted(raw_captures, key=lambda c: c.device_id):
        if raw.num_samples < needed:
            raise ValueError(
                f"device {raw.device_id}: capture has {raw.num_samples} samples, "
                f"set {set_index} needs {needed}")
        start = offset_frames * window
        chunk = raw.samples[start:start + frames_per_capture * window]
        frames = []
        for i in range(frames_per_capture):
            sl = chunk[i * window:(i + 1) * window]
            frames.append(IQFrame(data=np.stack([sl.real, sl.imag]), frame_index=i))
        captures.append(Capture(device_id=raw.device_id, day_id=raw.day_id,
                                set_index=set_index,
                                transmission_id=id_allocator.allocate(),
                                frames=frames))
    return CaptureSet(day_id=raw_captures[0].day_id, set_index=set_index,
                      captures=captures)


def make_domain_pair(source: CaptureSet, target: CaptureSet):
    """Split a (source, target) Set pair into labeled and unlabeled streams.

    Target frames expose only (frame, transmission_id): device labels never
    cross the domain boundary. Requires the two Sets to come from different
    days, which is what makes the pair a domain-shift experiment.
    """
    if source.day_id == target.day_id:
        raise ValueError(
            f"source and target must come from different days, both are day {source.day_id}")
    src_tids = {c.transmission_id for c in source.captures}
    tgt_tids = {c.transmission_id for c in target.captures}
    if src_tids & tgt_tids:
        raise ValueError(f"transmission ids overlap across domains: {sorted(src_tids & tgt_tids)}")

    labeled_source = [
        LabeledFrame(frame=f, device_label=c.device_id, transmission_id=c.transmission_id)
        for c in source.captures for f in c.frames
    ]
    unlabeled_target = [
        (f, c.transmission_id)
        for c in target.captures for f in c.frames
    ]
    return labeled_source, unlabeled_target


def standardize_frame(frame: IQFrame) -> IQFrame:
    """Zero-mean unit-variance copy, statistics over both rows jointly.

    Applied at load time before augmentation/encoding so the encoder cannot
    key on bulk gain, the domain effect the pipeline wants suppressed.
    """
    data = frame.data.astype(np.float64)
    std = data.std()
    if std == 0.0:
        std = 1.0
    out = (data - data.mean()) / std
    return IQFrame(data=out.astype(np.float32), frame_index=frame.frame_index)


def reconstruct_samples(capture: Capture) -> np.ndarray:
    """Re-interleave a capture's frames back into complex64 samples."""
    parts = []
    for f in capture.frames:
        parts.append(f.data[0] + 1j * f.data[1])
    return np.concatenate(parts).astype(np.complex64)
