"""Ground-truth generation: initial-condition families, full-physics
trajectories, and the dataset file format."""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import physics as ph
from .errors import (
    ChecksumMismatch,
    CountExceedsFamily,
    DatasetIoError,
    FormatVersionMismatch,
    NonFiniteState,
)
from .reliability import GrfSpec, grf_initial_conditions
from .rng import stream

DATASET_MAGIC = b"DPDS"
DATASET_VERSION = 1

IC_KINDS = ("cosine", "sine", "square2d", "shape2d", "grf", "explicit")


@dataclass(frozen=True)
class IcFamily:
    """One initial-condition family.

    kind        cosine:   u0 = a cos(0.5 z pi x)
                sine:     u0 = a sin(e pi x)
                square2d: plateau value on [0.5, 1.5]^2, background 1
                shape2d:  square / triangle / circle plateau, background 1
                grf:      zero-mean Gaussian random field draw
                explicit: fixed array of fields
    count       how many fields this family contributes
    amplitudes  tuple of values (enumerated grid) or ("uniform", lo, hi)
    frequencies tuple of z / e values to pair with the amplitudes
    """

    kind: str
    count: int
    amplitudes: tuple = ()
    frequencies: tuple = ()
    shape: str = "square"
    grf: GrfSpec = None
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in IC_KINDS:
            raise ValueError(f"unknown IC kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind in ("cosine", "sine"):
            return (f"{self.kind}(count={self.count}, amplitudes={self.amplitudes}, "
                    f"frequencies={self.frequencies})")
        if self.kind == "square2d":
            return f"square2d(count={self.count}, value={self.amplitudes})"
        if self.kind == "shape2d":
            return f"shape2d(count={self.count}, shape={self.shape}, value={self.amplitudes})"
        if self.kind == "grf":
            return f"grf(count={self.count}, kernel={self.grf.kernel})"
        return f"explicit(count={self.count})"


def _is_uniform(amplitudes):
    return len(amplitudes) == 3 and amplitudes[0] == "uniform"


def _draw_params(family, count, rng):
    """(amplitude, frequency) pairs: enumerated without replacement, or drawn."""
    freqs = family.frequencies or (1,)
    if _is_uniform(family.amplitudes):
        lo, hi = float(family.amplitudes[1]), float(family.amplitudes[2])
        amps = rng.uniform(lo, hi, size=count)
        fs = np.asarray(freqs, dtype=np.float64)[rng.integers(0, len(freqs), size=count)]
        return amps, fs
    combos = [(a, f) for a in family.amplitudes for f in freqs]
    if count > len(combos):
        raise CountExceedsFamily(
            f"{family.kind} family has {len(combos)} members, requested {count}")
    if count < len(combos):
        picked = rng.choice(len(combos), size=count, replace=False)
        combos = [combos[i] for i in sorted(picked)]
    arr = np.asarray(combos, dtype=np.float64)
    return arr[:, 0], arr[:, 1]


def _plateau_mask(kind, x, y):
    gx, gy = np.meshgrid(x, y)  # (ny, nx)
    if kind == "square":
        return (gx >= 0.5) & (gx <= 1.5) & (gy >= 0.5) & (gy <= 1.5)
    if kind == "square_large":
        return (gx >= 0.4) & (gx <= 1.6) & (gy >= 0.4) & (gy <= 1.6)
    if kind == "circle":
        return (gx - 1.0) ** 2 + (gy - 1.0) ** 2 <= 0.5 ** 2
    if kind == "triangle":
        # vertices (0.5, 0.5), (1.5, 0.5), (1.0, 1.5)
        inside = gy >= 0.5
        inside &= gy <= 0.5 + 2.0 * (gx - 0.5)
        inside &= gy <= 0.5 - 2.0 * (gx - 1.5)
        return inside
    raise ValueError(f"unknown 2d shape {kind!r}")


def sample_ics(family: IcFamily, count: int, spec: ph.PdeSpec, seed: int,
               stream_index: int = 0, purpose: str = "data") -> np.ndarray:
    """Draw `count` initial fields, shaped (count,) + spec.state_shape().

    `purpose` selects the RNG stream family ("data" for training draws,
    "test" for evaluation draws) so the two never share a stream.
    """
    rng = stream(seed, purpose, stream_index)
    if family.kind in ("cosine", "sine"):
        if spec.is_2d:
            raise ValueError(f"{family.kind} ICs are 1D only")
        x = spec.grid()
        amps, fs = _draw_params(family, count, rng)
        phase = 0.5 * np.pi * np.outer(fs, x) if family.kind == "cosine" \
            else np.pi * np.outer(fs, x)
        wave = np.cos(phase) if family.kind == "cosine" else np.sin(phase)
        fields = amps[:, None] * wave
        return fields[:, None, :]
    if family.kind in ("square2d", "shape2d"):
        x, y = spec.grid()
        shape = "square" if family.kind == "square2d" else family.shape
        mask = _plateau_mask(shape, x, y)
        if _is_uniform(family.amplitudes):
            vals = rng.uniform(float(family.amplitudes[1]), float(family.amplitudes[2]),
                               size=count)
        else:
            if count > len(family.amplitudes):
                raise CountExceedsFamily(
                    f"{family.kind} family has {len(family.amplitudes)} members, "
                    f"requested {count}")
            vals = np.asarray(family.amplitudes[:count], dtype=np.float64)
        fields = np.where(mask[None], vals[:, None, None], 1.0)
        return np.broadcast_to(fields[:, None], (count, 2) + mask.shape).copy()
    if family.kind == "grf":
        return grf_initial_conditions(family.grf, spec, count, seed, stream_index)
    # explicit
    vals = np.asarray(family.values, dtype=np.float64)
    if count > vals.shape[0]:
        raise CountExceedsFamily(
            f"explicit family has {vals.shape[0]} members, requested {count}")
    return vals[:count].reshape((count,) + spec.state_shape()).copy()


def sample_families(families, spec: ph.PdeSpec, seed: int,
                    purpose: str = "data") -> np.ndarray:
    """Concatenate draws from several families; each gets its own substream."""
    blocks = [sample_ics(fam, fam.count, spec, seed, stream_index=i, purpose=purpose)
              for i, fam in enumerate(families)]
    return np.concatenate(blocks, axis=0)


@dataclass
class Dataset:
    """Full-physics trajectories.  trajectories[i][0] is the i-th IC."""

    spec: ph.PdeSpec
    trajectories: np.ndarray  # (N, Nt+1, C) + spatial
    seed: int
    family_desc: str

    @property
    def ics(self) -> np.ndarray:
        return self.trajectories[:, 0]

    @property
    def n_samples(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_steps(self) -> int:
        return self.trajectories.shape[1] - 1

    def __eq__(self, other):
        return (isinstance(other, Dataset)
                and self.spec == other.spec
                and self.seed == other.seed
                and self.family_desc == other.family_desc
                and np.array_equal(self.trajectories, other.trajectories))


def generate(spec: ph.PdeSpec, families, n: int, nt: int, seed: int,
             purpose: str = "data", substeps: int = 1) -> Dataset:
    """Solve the complete physics for every sampled IC, storing all steps."""
    if tuple(spec.terms) != spec.full_terms:
        raise ValueError(
            f"ground truth needs the full term set {spec.full_terms}, got {spec.terms}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if isinstance(families, IcFamily):
        families = [families]
    ics = sample_families(families, spec, seed, purpose=purpose)
    if ics.shape[0] != n:
        raise ValueError(f"families yield {ics.shape[0]} ICs, expected n={n}")
    # substeps > 1 is the fine-reference mode: integrate at dt/substeps and
    # store every substeps-th state
    step_spec = spec if substeps == 1 else ph.replace_dt(spec, spec.dt / substeps)
    states = np.empty((n, nt + 1) + spec.state_shape())
    states[:, 0] = ics
    u = ics
    for t in range(nt):
        for _ in range(substeps):
            u = ph.euler_step_values(u, step_spec, check_blowup=False)
        peaks = np.max(np.abs(u.reshape(n, -1)), axis=1)
        bad = ~np.isfinite(peaks) | (peaks > ph.BLOWUP_LIMIT)
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise NonFiniteState(
                f"sample {idx} blew up at step {t + 1} while generating ground truth")
        states[:, t + 1] = u
    desc = "; ".join(f.describe() for f in families)
    return Dataset(spec, states, seed, desc)


# ---------------------------------------------------------------------------
# file format: magic, version, JSON header, float64 payload, then the first
# 64 bits of the payload's SHA-256 as checksum

def _spec_doc(spec: ph.PdeSpec) -> dict:
    return {
        "benchmark": spec.benchmark,
        "params": dict(spec.params),
        "terms": list(spec.terms),
        "bc": spec.bc,
        "bc_value": spec.bc_value,
        "domain": list(spec.domain),
        "nx": spec.nx,
        "ny": spec.ny,
        "dt": spec.dt,
        "advection": spec.advection_scheme,
    }


def spec_from_doc(doc: dict) -> ph.PdeSpec:
    return ph.PdeSpec(
        benchmark=doc["benchmark"],
        params=dict(doc["params"]),
        terms=tuple(doc["terms"]),
        bc=doc["bc"],
        bc_value=doc["bc_value"],
        domain=tuple(doc["domain"]),
        nx=doc["nx"],
        ny=doc["ny"],
        dt=doc["dt"],
        advection_scheme=doc.get("advection", "central"),
    )


def save(dataset: Dataset, path):
    spec = dataset.spec
    header = {
        "spec": _spec_doc(spec),
        "n": dataset.n_samples,
        "nt": dataset.n_steps,
        "dx": spec.dx,
        "dy": spec.dy if spec.is_2d else None,
        "seed": dataset.seed,
        "family": dataset.family_desc,
        "shape": list(dataset.trajectories.shape),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    arr = np.ascontiguousarray(dataset.trajectories, dtype="<f8")
    try:
        with open(path, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(struct.pack("<II", DATASET_VERSION, len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<Q", arr.nbytes))
            # written (and hashed) per sample: full-scale 2D payloads run to
            # gigabytes and must not be duplicated through tobytes()
            digest = hashlib.sha256()
            for sample in arr:
                chunk = sample.tobytes()
                digest.update(chunk)
                fh.write(chunk)
            fh.write(struct.pack("<Q", int.from_bytes(digest.digest()[:8], "little")))
    except OSError as exc:
        raise DatasetIoError(f"cannot write dataset to {path}: {exc}") from exc


def load(path) -> Dataset:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DatasetIoError(f"cannot read dataset from {path}: {exc}") from exc
    with fh:
        magic = fh.read(4)
        if magic != DATASET_MAGIC:
            raise DatasetIoError(f"not a dataset file: magic {magic!r}")
        raw = fh.read(8)
        if len(raw) < 8:
            raise ChecksumMismatch("file truncated inside the header")
        version, blob_len = struct.unpack("<II", raw)
        if version > DATASET_VERSION:
            raise FormatVersionMismatch(
                f"dataset format version {version} is newer than supported "
                f"{DATASET_VERSION}")
        blob = fh.read(blob_len)
        raw = fh.read(8)
        if len(blob) < blob_len or len(raw) < 8:
            raise ChecksumMismatch("file truncated inside the header")
        header = json.loads(blob.decode())
        (payload_len,) = struct.unpack("<Q", raw)
        shape = tuple(header["shape"])
        expected = int(np.prod(shape)) * 8
        if payload_len != expected:
            raise ChecksumMismatch(
                f"payload length {payload_len} does not match shape {shape}")
        trajectories = np.empty(shape)
        digest = hashlib.sha256()
        flat = trajectories.reshape(shape[0], -1)
        per_sample = flat.shape[1] * 8
        for i in range(shape[0]):
            chunk = fh.read(per_sample)
            if len(chunk) < per_sample:
                raise ChecksumMismatch("file truncated inside the payload")
            digest.update(chunk)
            flat[i] = np.frombuffer(chunk, dtype="<f8")
        raw = fh.read(8)
        if len(raw) < 8:
            raise ChecksumMismatch("file truncated inside the payload")
        (stored,) = struct.unpack("<Q", raw)
        if int.from_bytes(digest.digest()[:8], "little") != stored:
            raise ChecksumMismatch("payload checksum does not match")
    return Dataset(spec_from_doc(header["spec"]), trajectories,
                   header["seed"], header["family"])
