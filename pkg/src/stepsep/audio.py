"""Mono 16-bit PCM WAV I/O and the waveform record."""

import wave
from dataclasses import dataclass

import numpy as np


class AudioFormatError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray  # float32/float64, nominal range [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise AudioFormatError("mono required: expected 1-D sample array")
        if self.sample_rate <= 0:
            raise AudioFormatError("sample_rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("non-finite sample values")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate


def write_wav(path, w: Waveform):
    """Write mono 16-bit little-endian PCM."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path, expect_rate=None) -> Waveform:
    """Read mono 16-bit PCM; reject anything else with a clear error."""
    try:
        fh = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise AudioFormatError("not a PCM WAV file: %s (%s)" % (path, exc))
    with fh:
        if fh.getnchannels() != 1:
            raise AudioFormatError(
                "mono required, file has %d channels: %s" % (fh.getnchannels(), path)
            )
        if fh.getsampwidth() != 2:
            raise AudioFormatError(
                "16-bit PCM required, file has %d-byte samples: %s"
                % (fh.getsampwidth(), path)
            )
        rate = fh.getframerate()
        if expect_rate is not None and rate != expect_rate:
            raise AudioFormatError(
                "sample rate mismatch: file is %d Hz, expected %d Hz" % (rate, expect_rate)
            )
        pcm = np.frombuffer(fh.readframes(fh.getnframes()), dtype="<i2")
    return Waveform(pcm.astype(np.float32) / 32768.0, rate)
