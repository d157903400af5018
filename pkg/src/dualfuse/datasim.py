"""Synthetic multimodal corpus generator.

Produces labeled windows for M sensor modalities with class-conditional
signal patterns, exact-quota noise injection, exact-quota modality
masking, and ground-truth abrupt-shift events preceding abnormal-class
segments. Everything is deterministic per seed.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

CORPUS_MAGIC = b"DUALD1"

NOISE_KINDS = ("additive-gaussian", "occlusion-zeroing", "baseline-wander")


@dataclass
class ModalitySpec:
    name: str
    window: int
    channels: int
    encoder: str = "conv"  # "conv" for time series, "mlp" for the visual proxy
    noise_kind: str = "additive-gaussian"
    noise_scale: float = 1.0  # per-modality multiplier on drawn magnitudes

    def validate(self):
        if self.window <= 0:
            raise ValueError(f"modality {self.name}: window length must be positive")
        if self.channels <= 0:
            raise ValueError(f"modality {self.name}: channel count must be positive")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"modality {self.name}: unknown noise kind {self.noise_kind!r}")
        if self.encoder not in ("conv", "mlp"):
            raise ValueError(f"modality {self.name}: unknown encoder kind {self.encoder!r}")


def default_modalities():
    return [
        ModalitySpec("physio", window=64, channels=2, encoder="conv",
                     noise_kind="additive-gaussian"),
        ModalitySpec("visual", window=16, channels=32, encoder="mlp",
                     noise_kind="additive-gaussian"),
        ModalitySpec("inertial", window=64, channels=3, encoder="conv",
                     noise_kind="baseline-wander", noise_scale=0.5),
    ]


@dataclass
class CorpusSpec:
    n_samples: int = 3000
    n_classes: int = 3
    modalities: list = field(default_factory=default_modalities)
    noise_rate: float = 0.5
    missing_rate: float = 0.0
    missing_modality: int = 1
    fluctuation_rate: float = 0.5
    history: int = 8
    run_len: int = 10
    noise_magnitude: tuple = (4.0, 9.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if len(self.modalities) < 2:
            raise ValueError("need at least 2 modalities")
        for rate, name in [
            (self.noise_rate, "noise_rate"),
            (self.missing_rate, "missing_rate"),
            (self.fluctuation_rate, "fluctuation_rate"),
        ]:
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {rate}")
        if not 0 <= self.missing_modality < len(self.modalities):
            raise ValueError(f"missing_modality {self.missing_modality} out of range")
        for m in self.modalities:
            m.validate()

    @property
    def n_modalities(self):
        return len(self.modalities)


@dataclass
class Corpus:
    """Ordered stream of multimodal samples backed by dense arrays."""

    spec: CorpusSpec
    labels: np.ndarray            # (N,) int
    windows: list                 # per modality: (N, W_m, C_m) float64
    present: np.ndarray           # (N, M) bool
    noise_levels: np.ndarray      # (N, M) float64, ground-truth magnitudes
    fluct_flags: np.ndarray       # (N,) bool

    @property
    def n(self):
        return len(self.labels)

    @property
    def n_modalities(self):
        return len(self.windows)

    def history_ids(self, i):
        """Identifiers of the T samples preceding i, front-padded at the start."""
        t = self.spec.history
        ids = [max(0, j) for j in range(i - t, i)]
        return ids

    def subset(self, idx):
        idx = np.asarray(idx)
        return Corpus(
            spec=self.spec,
            labels=self.labels[idx].copy(),
            windows=[w[idx].copy() for w in self.windows],
            present=self.present[idx].copy(),
            noise_levels=self.noise_levels[idx].copy(),
            fluct_flags=self.fluct_flags[idx].copy(),
        )

    def copy(self):
        return self.subset(np.arange(self.n))

    def split(self, train_frac):
        """Block-aligned index split into (train_idx, test_idx)."""
        cut = int(round(self.n * train_frac / self.spec.run_len)) * self.spec.run_len
        cut = min(max(cut, 1), self.n - 1)
        return np.arange(cut), np.arange(cut, self.n)


def _quota(n, rate):
    return int(round(n * rate))


def plan_label_runs(n, c, run_len, rng):
    """Split the per-class window quotas into shuffled runs of ~run_len.

    Class counts land within +-1 of n/c by construction.
    """
    base, rem = divmod(n, c)
    quotas = [base + (1 if k < rem else 0) for k in range(c)]
    runs = []
    for cls, quota in enumerate(quotas):
        while quota > 0:
            size = min(run_len, quota)
            runs.append((cls, size))
            quota -= size
    order = rng.permutation(len(runs))
    return [runs[i] for i in order]


def _physio_source(cls, length, window, rng):
    # the only modality that separates the two abnormal classes
    t = np.arange(length)
    freqs = [3.0, 4.0, 5.0]
    amps = [1.0, 1.25, 0.8]
    biases = [0.0, 0.2, -0.2]
    slow = [1.0, 1.5, 2.0]
    f = freqs[cls % len(freqs)]
    phase = rng.uniform(0, 2 * np.pi)
    ch0 = amps[cls % len(amps)] * np.sin(2 * np.pi * f * t / window + phase)
    ch0 = ch0 + 0.2 * np.sin(2 * np.pi * 1.7 * t / window + phase * 0.7)
    ch1 = biases[cls % len(biases)] + 0.5 * np.sin(
        2 * np.pi * slow[cls % len(slow)] * t / window + phase
    )
    src = np.stack([ch0, ch1], axis=1)
    return src + 0.12 * rng.standard_normal(src.shape)


def _visual_source(cls, length, templates, rng):
    # template for class 0 is far from the shared abnormal direction;
    # classes 1 and 2 sit close together (visual is blind on that split)
    drift = rng.standard_normal(templates.shape[1])
    drift *= 0.4 / max(np.linalg.norm(drift), 1e-12)
    ramp = np.linspace(0.0, 1.0, length)[:, None]
    src = templates[cls][None, :] + ramp * drift[None, :]
    return src + 0.12 * rng.standard_normal(src.shape)


def _inertial_source(cls, length, window, rng):
    # classes 1 and 2 share nearly identical dynamics; class 0 is distinct
    t = np.arange(length)
    freq_table = np.array(
        [[2.0, 4.0, 6.0], [4.5, 2.5, 5.5], [4.65, 2.65, 5.65]]
    )
    amp = [1.0, 0.95, 1.0][cls % 3]
    bias = [0.35, -0.2, -0.2][cls % 3]
    phase = rng.uniform(0, 2 * np.pi, size=3)
    chans = [
        bias + amp * np.sin(2 * np.pi * freq_table[cls % 3][k] * t / window + phase[k])
        for k in range(3)
    ]
    src = np.stack(chans, axis=1)
    return src + 0.12 * rng.standard_normal(src.shape)


def _source_for(mod, cls, run_len, window, templates, rng):
    stride = max(window // 2, 1)
    length = stride * (run_len + 1)
    if mod.encoder == "mlp":
        base = _visual_source(cls, length, templates, rng)
    elif mod.name == "physio":
        base = _physio_source(cls, length, window, rng)
    else:
        base = _inertial_source(cls, length, window, rng)
    if base.shape[1] < mod.channels:
        reps = int(np.ceil(mod.channels / base.shape[1]))
        base = np.tile(base, (1, reps))
    return base[:, : mod.channels]


def generate(spec: CorpusSpec) -> Corpus:
    """Build the corpus: class-conditional signals, windows with 50% overlap
    inside each run, abrupt-shift onsets for a quota of abnormal runs, then
    exact-quota noise injection and modality masking."""
    ss = np.random.SeedSequence(spec.seed)
    rng_layout, rng_signal, rng_noise, rng_missing = (
        np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(4)
    )

    n, m_count = spec.n_samples, spec.n_modalities
    runs = plan_label_runs(n, spec.n_classes, spec.run_len, rng_layout)

    # Which abnormal-class runs open with an abrupt biomarker shift.
    abnormal_runs = [i for i, (cls, _) in enumerate(runs) if cls != 0]
    k_fluct = _quota(len(abnormal_runs), spec.fluctuation_rate)
    fluct_runs = set(
        abnormal_runs[i] for i in rng_layout.permutation(len(abnormal_runs))[:k_fluct]
    )

    templates = rng_signal.standard_normal((spec.n_classes, 32))
    templates /= np.linalg.norm(templates, axis=1, keepdims=True)
    if spec.n_classes >= 3:
        # abnormal classes share one visual direction, split only slightly
        center = rng_signal.standard_normal(32)
        center /= np.linalg.norm(center)
        split = rng_signal.standard_normal(32)
        split /= np.linalg.norm(split)
        templates[1] = center + 0.02 * split
        templates[2] = center - 0.02 * split

    labels = np.empty(n, dtype=np.int64)
    fluct_flags = np.zeros(n, dtype=bool)
    windows = [
        np.zeros((n, mod.window, mod.channels)) for mod in spec.modalities
    ]

    pos = 0
    for run_idx, (cls, run_size) in enumerate(runs):
        shift = None
        if run_idx in fluct_runs:
            shift = rng_signal.uniform(1.2, 2.2)
        for mi, mod in enumerate(spec.modalities):
            src = _source_for(mod, cls, run_size, mod.window, templates, rng_signal)
            stride = max(mod.window // 2, 1)
            if shift is not None and mod.name == "physio":
                # abrupt biomarker onset: a brief burst that looks like
                # moderate sensor noise within one window (only the stable
                # history reveals it is a one-off event), plus a decaying
                # level shift that marks the physiological change itself
                span = min(3 * stride, len(src))
                decay = np.linspace(1.0, 0.0, span)[:, None]
                burst = shift * rng_signal.standard_normal((span, src.shape[1]))
                src[:span] += burst * decay
                src[:span, 0] += 0.55 * shift * decay[:, 0]
            for j in range(run_size):
                windows[mi][pos + j] = src[j * stride : j * stride + mod.window]
        labels[pos : pos + run_size] = cls
        if shift is not None:
            fluct_flags[pos] = True
            if run_size > 1:
                fluct_flags[pos + 1] = True
        pos += run_size

    corpus = Corpus(
        spec=spec,
        labels=labels,
        windows=windows,
        present=np.ones((n, m_count), dtype=bool),
        noise_levels=np.zeros((n, m_count)),
        fluct_flags=fluct_flags,
    )

    apply_noise(corpus, spec.noise_rate, rng=rng_noise)
    mask_missing(corpus, spec.missing_modality, spec.missing_rate, rng=rng_missing)
    return corpus


def inject_noise(window, kind, magnitude, rng):
    """Return a corrupted copy of one (W, C) window.

    additive-gaussian: iid noise with std=magnitude; occlusion-zeroing:
    zeroes a contiguous 20-60% span of time steps; baseline-wander: adds a
    slow half-period drift of amplitude=magnitude.
    """
    if magnitude < 0:
        raise ValueError(f"noise magnitude must be nonnegative, got {magnitude}")
    out = np.array(window, copy=True)
    if magnitude == 0:
        return out
    w = out.shape[0]
    if kind == "additive-gaussian":
        out += magnitude * rng.standard_normal(out.shape)
    elif kind == "occlusion-zeroing":
        frac = 0.2 + 0.4 * min(magnitude / 4.0, 1.0)
        span = max(int(np.ceil(frac * w)), 1)
        start = int(rng.integers(0, w - span + 1))
        out[start : start + span] = 0.0
    elif kind == "baseline-wander":
        phase = rng.uniform(0, 2 * np.pi)
        ramp = magnitude * np.sin(np.pi * np.arange(w) / w + phase)
        out += ramp[:, None]
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return out


EPISODE_LEN = (5, 12)


def _noise_episodes(n, k, rng, lo_hi=EPISODE_LEN):
    """Contiguous episode spans covering exactly k of n samples.

    Interference arrives in stretches (a dark underpass, a windy stretch of
    road), so corruption persists across neighboring windows; lengths are
    drawn from lo_hi and separated by random clean gaps.
    """
    if k <= 0:
        return []
    lens = []
    left = k
    while left > 0:
        size = min(int(rng.integers(lo_hi[0], lo_hi[1] + 1)), left)
        lens.append(size)
        left -= size
    gaps = rng.multinomial(n - k, np.full(len(lens) + 1, 1.0 / (len(lens) + 1)))
    episodes = []
    pos = 0
    for size, gap in zip(lens, gaps[:-1]):
        pos += gap
        episodes.append((pos, size))
        pos += size
    return episodes


def apply_noise(corpus, rate, rng=None, seed=None, modalities=None):
    """Corrupt an exact quota of samples in place, in contiguous episodes.

    Each episode hits one modality at one magnitude; episodes cycle through
    the target modalities so every modality receives a share. Magnitudes
    come from the spec range and are recorded as ground truth.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    spec = corpus.spec
    if modalities is None:
        modalities = list(range(spec.n_modalities))
    k = _quota(corpus.n, rate)
    lo, hi = spec.noise_magnitude
    for ep_idx, (start, size) in enumerate(_noise_episodes(corpus.n, k, rng)):
        mi = modalities[ep_idx % len(modalities)]
        mod = spec.modalities[mi]
        mag = rng.uniform(lo, hi) * mod.noise_scale
        for i in range(start, start + size):
            if not corpus.present[i, mi]:
                continue
            corpus.windows[mi][i] = inject_noise(
                corpus.windows[mi][i], mod.noise_kind, mag, rng
            )
            corpus.noise_levels[i, mi] = mag
    return corpus


def mask_missing(corpus, modality_id, rate, rng=None, seed=None):
    """Mark an exact quota of one modality's windows absent, zeroing them."""
    if not 0 <= modality_id < corpus.n_modalities:
        raise ValueError(f"unknown modality id {modality_id}")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {rate}")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    k = _quota(corpus.n, rate)
    chosen = np.sort(rng.permutation(corpus.n)[:k])
    corpus.present[chosen, modality_id] = False
    corpus.windows[modality_id][chosen] = 0.0
    corpus.noise_levels[chosen, modality_id] = 0.0
    return corpus


def degrade(corpus, noise_rate, missing_rate, missing_modality, seed):
    """Return a fresh degraded view of a (clean) corpus for one sweep cell."""
    view = corpus.copy()
    ss = np.random.SeedSequence(seed)
    rng_n, rng_m = (np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(2))
    apply_noise(view, noise_rate, rng=rng_n)
    mask_missing(view, missing_modality, missing_rate, rng=rng_m)
    return view


# -- corpus file io ----------------------------------------------------------

def save_corpus(path, corpus):
    spec = corpus.spec
    manifest = json.dumps(
        {
            "n": corpus.n,
            "n_classes": spec.n_classes,
            "history": spec.history,
            "run_len": spec.run_len,
            "seed": spec.seed,
            "noise_rate": spec.noise_rate,
            "missing_rate": spec.missing_rate,
            "missing_modality": spec.missing_modality,
            "fluctuation_rate": spec.fluctuation_rate,
            "noise_magnitude": list(spec.noise_magnitude),
            "modalities": [
                {
                    "name": m.name,
                    "window": m.window,
                    "channels": m.channels,
                    "encoder": m.encoder,
                    "noise_kind": m.noise_kind,
                }
                for m in spec.modalities
            ],
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        m_count = corpus.n_modalities
        for i in range(corpus.n):
            fh.write(struct.pack("<hB", int(corpus.labels[i]), int(corpus.fluct_flags[i])))
            for mi in range(m_count):
                fh.write(struct.pack("<Bd", int(corpus.present[i, mi]),
                                     float(corpus.noise_levels[i, mi])))
            for mi in range(m_count):
                fh.write(np.ascontiguousarray(corpus.windows[mi][i], dtype="<f8").tobytes())


def load_corpus(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CORPUS_MAGIC))
        if magic != CORPUS_MAGIC:
            raise ValueError(f"{path}: bad corpus magic {magic!r}")
        (mlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(mlen).decode("utf-8"))
        mods = [
            ModalitySpec(
                name=m["name"],
                window=m["window"],
                channels=m["channels"],
                encoder=m["encoder"],
                noise_kind=m["noise_kind"],
            )
            for m in meta["modalities"]
        ]
        spec = CorpusSpec(
            n_samples=meta["n"],
            n_classes=meta["n_classes"],
            modalities=mods,
            noise_rate=meta["noise_rate"],
            missing_rate=meta["missing_rate"],
            missing_modality=meta["missing_modality"],
            fluctuation_rate=meta["fluctuation_rate"],
            history=meta["history"],
            run_len=meta["run_len"],
            noise_magnitude=tuple(meta["noise_magnitude"]),
            seed=meta["seed"],
        )
        n = meta["n"]
        m_count = len(mods)
        labels = np.empty(n, dtype=np.int64)
        fluct = np.zeros(n, dtype=bool)
        present = np.ones((n, m_count), dtype=bool)
        levels = np.zeros((n, m_count))
        windows = [np.zeros((n, m.window, m.channels)) for m in mods]
        for i in range(n):
            lab, fl = struct.unpack("<hB", fh.read(3))
            labels[i] = lab
            fluct[i] = bool(fl)
            for mi in range(m_count):
                pres, lvl = struct.unpack("<Bd", fh.read(9))
                present[i, mi] = bool(pres)
                levels[i, mi] = lvl
            for mi, m in enumerate(mods):
                count = m.window * m.channels
                buf = fh.read(8 * count)
                windows[mi][i] = np.frombuffer(buf, dtype="<f8").reshape(m.window, m.channels)
    return Corpus(
        spec=spec,
        labels=labels,
        windows=windows,
        present=present,
        noise_levels=levels,
        fluct_flags=fluct,
    )


def clean_twin_spec(spec: CorpusSpec) -> CorpusSpec:
    """Same underlying signals and labels, but no injected noise or masking.

    Generation draws layout and signal randomness from streams separate
    from noise/masking, so the clean twin shares its base data with the
    degraded corpus of the same seed.
    """
    return replace(spec, noise_rate=0.0, missing_rate=0.0)
