"""Dataset I/O, preprocessing, augmentation and the synthetic generator.

Binary tensor format "VXT1" (little-endian):

    magic  4 bytes b"VXT1"
    dtype  u8   0 = float32, 1 = uint8 (label maps)
    rank   u8
    extents rank x u64
    payload row-major values

Manifests are CSV files with header ``image,mask,case_id``; paths are
relative to the manifest's directory.  Images are (1, *spatial) float32 in
[0,1]; masks are uint8 label maps of the same spatial extents.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, GenerationError, ShapeError
from .rng import derive_rng

VXT_MAGIC = b"VXT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.uint8): 1}


def save_tensor(path, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(arr)
    code = _DTYPE_CODES.get(a.dtype)
    if code is None:
        raise DataFormatError(f"VXT stores float32 or uint8, got {a.dtype}")
    with open(path, "wb") as fh:
        fh.write(VXT_MAGIC)
        fh.write(struct.pack("<BB", code, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != VXT_MAGIC:
        raise DataFormatError(f"bad VXT magic in {path} at byte 0")
    if len(buf) < 6:
        raise DataFormatError(f"truncated VXT header in {path} at byte {len(buf)}")
    code, rank = buf[4], buf[5]
    if code not in _DTYPES:
        raise DataFormatError(f"unknown VXT dtype code {code} at byte 4")
    off = 6
    if len(buf) < off + 8 * rank:
        raise DataFormatError(f"truncated VXT extents in {path} at byte {len(buf)}")
    shape = struct.unpack_from(f"<{rank}Q", buf, off)
    off += 8 * rank
    dt = _DTYPES[code]
    n = int(np.prod(shape)) if rank else 1
    expected = off + n * dt.itemsize
    if len(buf) != expected:
        raise DataFormatError(
            f"VXT payload length mismatch in {path}: expected {expected} bytes, "
            f"found {len(buf)} (payload starts at byte {off})"
        )
    return np.frombuffer(buf, dtype=dt, count=n, offset=off).reshape(shape).copy()


# ---------------------------------------------------------------------------
# samples and manifests


@dataclass
class Sample:
    image: np.ndarray      # (1, *spatial) float32 in [0, 1]
    mask: np.ndarray       # (*spatial) uint8
    case_id: str

    def validate(self, num_classes: int | None = None) -> None:
        if self.image.shape[1:] != self.mask.shape:
            raise ShapeError(
                f"{self.case_id}: image {self.image.shape} and mask "
                f"{self.mask.shape} extents disagree"
            )
        if self.image.min() < 0 or self.image.max() > 1:
            raise DataFormatError(
                f"{self.case_id}: image values outside [0, 1]"
            )
        if num_classes is not None and self.mask.max() >= num_classes:
            raise ConfigError(
                f"{self.case_id}: mask label {self.mask.max()} exceeds "
                f"num_classes {num_classes}"
            )


@dataclass
class ManifestEntry:
    image_path: str
    mask_path: str
    case_id: str


def load_manifest(path) -> list[ManifestEntry]:
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["image", "mask", "case_id"]:
                raise DataFormatError(
                    f"manifest {path} must start with header 'image,mask,case_id', "
                    f"got {header}"
                )
            for row in reader:
                if not row:
                    continue
                if len(row) != 3:
                    raise DataFormatError(f"manifest row {row} must have 3 fields")
                entries.append(
                    ManifestEntry(
                        os.path.join(base, row[0]), os.path.join(base, row[1]), row[2]
                    )
                )
    except OSError as exc:
        raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc
    return entries


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "mask", "case_id"])
        for e in entries:
            w.writerow(
                [os.path.relpath(e.image_path, base), os.path.relpath(e.mask_path, base), e.case_id]
            )


def load_sample(entry: ManifestEntry, num_classes: int | None = None) -> Sample:
    image = load_tensor(entry.image_path)
    mask = load_tensor(entry.mask_path)
    if image.ndim == mask.ndim:
        image = image[None] if image.shape[0] != 1 else image
    s = Sample(image.astype(np.float32), mask.astype(np.uint8), entry.case_id)
    s.validate(num_classes)
    return s


# ---------------------------------------------------------------------------
# preprocessing


def window_normalize(image: np.ndarray, lo: float = -170.0, hi: float = 250.0) -> np.ndarray:
    """Clamp intensities to [lo, hi] and rescale to [0, 1].

    Defaults suit CT Hounsfield units; use lo=0, hi=255 for 8-bit sources.
    """
    if lo >= hi:
        raise ConfigError(f"window requires lo < hi, got [{lo}, {hi}]")
    x = np.clip(np.asarray(image, dtype=np.float32), lo, hi)
    return (x - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# augmentation


def augment(sample: Sample, seed: int, crop=None, pad_multiple: int | None = None) -> Sample:
    """Random flips, a 90-degree rotation in the principal plane, optional
    random crop followed by zero padding to a divisibility target.

    The identical geometric transform is applied to image and mask (the mask
    by pure reindexing, i.e. nearest neighbor).  Deterministic in the seed.
    """
    rng = derive_rng(seed, "aug")
    img = sample.image
    mask = sample.mask
    rank = mask.ndim
    for ax in range(rank):
        if rng.random() < 0.5:
            img = np.flip(img, axis=1 + ax)
            mask = np.flip(mask, axis=ax)
    if mask.shape[-1] == mask.shape[-2]:
        k = int(rng.integers(0, 4))
    else:
        # quarter turns would swap the extents of a non-square plane; only
        # the shape-preserving half turn stays available
        k = int(rng.integers(0, 2)) * 2
    if k:
        img = np.rot90(img, k, axes=(img.ndim - 2, img.ndim - 1))
        mask = np.rot90(mask, k, axes=(rank - 2, rank - 1))
    if crop is not None:
        crop = tuple(int(c) for c in crop)
        if len(crop) != rank or any(c > s for c, s in zip(crop, mask.shape)):
            raise ConfigError(
                f"crop {crop} exceeds sample extents {mask.shape}"
            )
        origin = tuple(int(rng.integers(0, s - c + 1)) for c, s in zip(crop, mask.shape))
        sl = tuple(slice(o, o + c) for o, c in zip(origin, crop))
        img = img[(slice(None),) + sl]
        mask = mask[sl]
    if pad_multiple:
        pads = [(0, (-s) % pad_multiple) for s in mask.shape]
        if any(p[1] for p in pads):
            img = np.pad(img, [(0, 0)] + pads)
            mask = np.pad(mask, pads)
    out = Sample(np.ascontiguousarray(img), np.ascontiguousarray(mask), sample.case_id)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# synthetic dataset


def _ellipsoid_field(shape, center, radii, angle, rng_axis=None) -> np.ndarray:
    """Normalized squared radius rho(x) of a rotated ellipsoid; inside <= 1."""
    rank = len(shape)
    coords = np.stack(
        np.meshgrid(*[np.arange(s, dtype=np.float64) for s in shape], indexing="ij"),
        axis=-1,
    ) - np.asarray(center)
    if rank == 2:
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
    else:
        # rotation about a principal axis keeps things simple and is still
        # a random orientation of the in-plane axes
        c, s = math.cos(angle), math.sin(angle)
        axis = rng_axis if rng_axis is not None else 0
        rot = np.eye(3)
        others = [i for i in range(3) if i != axis]
        rot[others[0], others[0]] = c
        rot[others[0], others[1]] = -s
        rot[others[1], others[0]] = s
        rot[others[1], others[1]] = c
    local = coords @ rot.T
    return ((local / np.asarray(radii)) ** 2).sum(axis=-1)


def synth_case(shape, num_classes: int, rng, noise_std: float = 0.05,
               max_tries: int = 100):
    """One synthetic case: soft-edged ellipsoid per foreground class on a
    noisy background; class g has mean intensity g/num_classes."""
    rank = len(shape)
    min_extent = min(shape)
    intensity = np.zeros(shape, dtype=np.float64)
    occupied = np.zeros(shape, dtype=bool)
    mask = np.zeros(shape, dtype=np.uint8)
    n_vox = int(np.prod(shape))
    for g in range(1, num_classes):
        placed = False
        for _ in range(max_tries):
            center = [rng.uniform(0.2 * s, 0.8 * s) for s in shape]
            # long-tailed radii mimic organ-size variability
            radii = np.clip(
                rng.lognormal(math.log(0.17 * min_extent), 0.4, size=rank),
                2.5,
                0.45 * min_extent,
            )
            angle = rng.uniform(0, math.pi)
            axis = int(rng.integers(0, 3)) if rank == 3 else None
            rho = _ellipsoid_field(shape, center, radii, angle, axis)
            hard = rho <= 1.0
            frac = hard.sum() / n_vox
            # soft edge: intensity ramps to zero just outside the labeled
            # region, so the mask boundary sits near full class intensity
            soft = np.clip((1.1 - np.sqrt(np.maximum(rho, 0.0))) / 0.12, 0.0, 1.0)
            if frac < 0.01 or frac > 0.30:
                continue
            if (occupied & (soft > 0)).any():
                continue
            intensity += soft * (g / num_classes)
            occupied |= soft > 0
            mask[hard] = g
            placed = True
            break
        if not placed:
            raise GenerationError(
                f"could not place a non-overlapping region for class {g} "
                f"in {max_tries} tries"
            )
    image = intensity + rng.normal(0.0, noise_std, size=shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image[None], mask


def synth_dataset(n_cases: int, spatial, num_classes: int, seed: int, out_dir) -> str:
    """Write n_cases image/mask VXT pairs plus a manifest; returns its path."""
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    spatial = tuple(int(s) for s in spatial)
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(n_cases):
        rng = derive_rng(seed, "synth", i)
        image, mask = synth_case(spatial, num_classes, rng)
        case_id = f"case{i:04d}"
        img_path = os.path.join(out_dir, f"{case_id}_img.vxt")
        mask_path = os.path.join(out_dir, f"{case_id}_mask.vxt")
        save_tensor(img_path, image)
        save_tensor(mask_path, mask)
        entries.append(ManifestEntry(img_path, mask_path, case_id))
    manifest_path = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest_path, entries)
    return manifest_path


def split_train_test(entries: list[ManifestEntry], fraction: float = 0.8, seed: int = 0):
    """Deterministic shuffled split by case; sizes round(fraction*n)/remainder."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    if len(entries) < 2:
        raise ConfigError(f"need at least 2 cases to split, got {len(entries)}")
    order = derive_rng(seed, "split").permutation(len(entries))
    n_train = int(round(fraction * len(entries)))
    n_train = min(max(n_train, 1), len(entries) - 1)
    train = [entries[i] for i in order[:n_train]]
    test = [entries[i] for i in order[n_train:]]
    assert not {e.case_id for e in train} & {e.case_id for e in test}
    return train, test
