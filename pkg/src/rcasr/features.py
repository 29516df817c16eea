"""Audio front end: 16 kHz mono speech to normalized 39-dim feature matrices.

Pipeline: pre-emphasis (0.97) -> 25 ms Hamming frames every 10 ms -> power
spectrum (FFT 512) -> 26-triangle mel filterbank over 0-8 kHz -> log (floored
at 1e-10) -> DCT-II -> 13 cepstra with c0 replaced by log frame energy ->
delta and delta-delta appended (regression window 2, edges replicated) ->
per-dimension corpus normalization -> optional zero padding to a max length.

The c0 := log-energy substitution is one reading of "log energy
coefficients"; it is applied uniformly and recorded here on purpose.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
FRAME_LENGTH = 400        # 25 ms at 16 kHz
FRAME_SHIFT = 160         # 10 ms hop
FFT_SIZE = 512
N_MELS = 26
N_CEPS = 13
N_FEATURES = 39           # 13 cepstra + 13 deltas + 13 delta-deltas
PREEMPHASIS = 0.97
LOG_FLOOR = 1e-10
DELTA_WINDOW = 2


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"non-positive sample rate {self.sample_rate}")


def hamming_window(length=FRAME_LENGTH):
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))


_HAMMING = hamming_window()


def frame_count(n_samples):
    return (n_samples - FRAME_LENGTH) // FRAME_SHIFT + 1


def frame_and_window(clip, preemphasis=PREEMPHASIS):
    """Slice a clip into Hamming-windowed frames of 400 samples every 160.

    The trailing partial frame is dropped.  Set preemphasis=0 to window the
    raw signal.
    """
    x = clip.samples
    if x.size < FRAME_LENGTH:
        raise ValueError(
            f"clip of {x.size} samples is shorter than one {FRAME_LENGTH}-sample frame"
        )
    if preemphasis:
        x = np.concatenate([x[:1], x[1:] - preemphasis * x[:-1]])
    n = frame_count(x.size)
    idx = np.arange(FRAME_LENGTH)[None, :] + FRAME_SHIFT * np.arange(n)[:, None]
    return x[idx] * _HAMMING[None, :]


def power_spectrum(frame, fft_size=FFT_SIZE):
    spec = np.fft.rfft(frame, n=fft_size)
    return (spec.real ** 2 + spec.imag ** 2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, fft_size=FFT_SIZE, sample_rate=SAMPLE_RATE,
                   f_min=0.0, f_max=None):
    """Triangular mel filters as an (n_mels, fft_size//2 + 1) weight matrix."""
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    bins = np.floor((fft_size + 1) * mel_to_hz(mel_points) / sample_rate).astype(int)
    fbank = np.zeros((n_mels, fft_size // 2 + 1))
    for m in range(1, n_mels + 1):
        left, center, right = bins[m - 1], bins[m], bins[m + 1]
        for k in range(left, center):
            fbank[m - 1, k] = (k - left) / max(center - left, 1)
        for k in range(center, right):
            fbank[m - 1, k] = (right - k) / max(right - center, 1)
    return fbank


def filter_centers_hz(n_mels=N_MELS, sample_rate=SAMPLE_RATE, f_min=0.0, f_max=None):
    """Center frequency of each mel filter, in Hz."""
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    return mel_to_hz(mel_points)[1:-1]


def dct_matrix(n_out, n_in):
    """Orthonormal DCT-II basis, rows are output coefficients."""
    k = np.arange(n_out)[:, None]
    m = np.arange(n_in)[None, :]
    mat = np.cos(np.pi * k * (2 * m + 1) / (2.0 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    return mat


_FBANK = mel_filterbank()
_DCT = dct_matrix(N_CEPS, N_MELS)


def mfcc(frame):
    """13 cepstral coefficients of one windowed frame; c0 is log frame energy."""
    power = power_spectrum(frame)
    energies = _FBANK @ power
    log_energies = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = _DCT @ log_energies
    ceps[0] = np.log(max(float(np.sum(frame ** 2)), LOG_FLOOR))
    return ceps


def mfcc_matrix(clip, preemphasis=PREEMPHASIS):
    frames = frame_and_window(clip, preemphasis=preemphasis)
    return np.stack([mfcc(f) for f in frames])


def deltas(coeffs, window=DELTA_WINDOW):
    """Append regression deltas and delta-deltas: T x D -> T x 3D.

    Delta_t = sum_n n*(c_{t+n} - c_{t-n}) / (2 * sum_n n^2) with edge frames
    replicated; the second derivative is the delta of the delta.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))

    def one(track):
        padded = np.concatenate([
            np.repeat(track[:1], window, axis=0),
            track,
            np.repeat(track[-1:], window, axis=0),
        ])
        denom = 2.0 * sum(n * n for n in range(1, window + 1))
        out = np.zeros_like(track)
        for n in range(1, window + 1):
            out += n * (padded[window + n:window + n + len(track)]
                        - padded[window - n:window - n + len(track)])
        return out / denom

    d1 = one(coeffs)
    d2 = one(d1)
    return np.concatenate([coeffs, d1, d2], axis=1)


def extract(clip, preemphasis=PREEMPHASIS):
    """Full front end for one clip: T x 39 unnormalized features."""
    return deltas(mfcc_matrix(clip, preemphasis=preemphasis))


# -- corpus-level normalization ----------------------------------------------

@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray
    clamped_dims: tuple = field(default_factory=tuple)


def normalize_corpus(mats):
    """Zero-mean/unit-variance each column over all frames of `mats`.

    Returns the normalized matrices plus the stats, which should be reused
    verbatim on held-out data.  Zero-variance columns are clamped to
    std = 1 and recorded.
    """
    if not mats:
        raise ValueError("normalize_corpus: need at least one matrix")
    pooled = np.concatenate([np.asarray(m, dtype=np.float64) for m in mats])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    constant = pooled.max(axis=0) == pooled.min(axis=0)
    clamped = tuple(int(i) for i in np.nonzero(constant)[0])
    if clamped:
        log.warning("normalize_corpus: zero variance in dims %s, std clamped to 1", clamped)
        std = std.copy()
        std[constant] = 1.0
        mean = mean.copy()
        mean[constant] = pooled[0, constant]
    stats = FeatureStats(mean=mean, std=std, clamped_dims=clamped)
    return [apply_stats(m, stats) for m in mats], stats


def apply_stats(mat, stats):
    return (np.asarray(mat, dtype=np.float64) - stats.mean) / stats.std


def pad_to_length(mat, t_max):
    """Zero-pad rows up to t_max; returns (padded, valid_length)."""
    mat = np.asarray(mat)
    t = mat.shape[0]
    if t > t_max:
        raise ValueError(f"matrix of {t} frames exceeds t_max={t_max}")
    if t == t_max:
        return mat, t
    pad = np.zeros((t_max - t, mat.shape[1]), dtype=mat.dtype)
    return np.concatenate([mat, pad]), t


def unpad(mat, valid_length):
    return np.asarray(mat)[:valid_length]


# -- file formats -------------------------------------------------------------

def read_wav(path):
    """Read 16-bit PCM mono WAV into samples scaled to [-1, 1)."""
    import wave

    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav(path, clip):
    import wave

    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def save_feature_dump(path, mat):
    """Plain-text dump: header "T 39", then T whitespace-separated rows."""
    mat = np.asarray(mat, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_feature_dump(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: malformed feature dump header")
        t, d = int(header[0]), int(header[1])
        rows = []
        for i, line in enumerate(fh, start=2):
            vals = line.split()
            if not vals:
                continue
            if len(vals) != d:
                raise ValueError(f"{path}:{i}: expected {d} values, got {len(vals)}")
            rows.append([float(v) for v in vals])
    if len(rows) != t:
        raise ValueError(f"{path}: header claims {t} rows, found {len(rows)}")
    return np.asarray(rows, dtype=np.float64)


def save_stats(path, stats):
    """Stats as a 2 x D text matrix: mean row then std row."""
    with open(path, "w") as fh:
        for row in (stats.mean, stats.std):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_stats(path):
    with open(path) as fh:
        mean = np.asarray([float(v) for v in fh.readline().split()])
        std = np.asarray([float(v) for v in fh.readline().split()])
    if mean.size != std.size or mean.size == 0:
        raise ValueError(f"{path}: malformed stats file")
    return FeatureStats(mean=mean, std=std)
