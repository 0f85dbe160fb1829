"""Manifest files, the synthetic dataset generator and the batch iterator.

On-disk layout::

    <root>/<split>.csv
    <root>/<split>/<ClassName>/<file>.ppm

The manifest is UTF-8 CSV with header ``image_path,label``; paths are
relative to the directory holding the manifest. Optional ``#`` directive
lines before the header declare the label order and split::

    # labels: Angioectasia,Bleeding,Normal
    # split: validation
"""

from __future__ import annotations

import colorsys
import csv
import io
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import FormatError, ValidationError
from .images import AugmentationPolicy, augment, decode_image, normalize, resize, write_image

HEADER = ["image_path", "label"]
SPLITS = ("train", "validation")


@dataclass
class DatasetManifest:
    records: list[tuple[str, str]]
    class_names: list[str]
    split: str = "train"
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        if len(set(self.class_names)) != len(self.class_names):
            raise ValidationError("class_names contains duplicates")
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")
        index = {c: i for i, c in enumerate(self.class_names)}
        bad = [(i, lab) for i, (_, lab) in enumerate(self.records) if lab not in index]
        if bad:
            raise ValidationError(f"labels outside {self.class_names}: {bad}")
        self._index = index

    def __len__(self) -> int:
        return len(self.records)

    def label_index(self, label: str) -> int:
        return self._index[label]

    def labels(self) -> np.ndarray:
        return np.array([self._index[lab] for _, lab in self.records], dtype=np.int64)

    def path(self, i: int) -> Path:
        return self.root / self.records[i][0]


def load_manifest(path: str | os.PathLike, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    declared: list[str] | None = None
    split = "train"
    header_seen = False
    records: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if not header_seen and line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key = key.strip().lower()
            if key == "labels":
                declared = next(csv.reader([value.strip()]))
                declared = [d.strip() for d in declared]
            elif key == "split":
                split = value.strip()
            continue
        row = next(csv.reader([line]))
        if not header_seen:
            if [c.strip() for c in row] != HEADER:
                unknown = [c for c in row if c.strip() not in HEADER]
                raise FormatError(f"{path}:{lineno}: expected header {','.join(HEADER)}, unknown columns {unknown}")
            header_seen = True
            continue
        if len(row) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        records.append((row[0].strip(), row[1].strip()))
    if not header_seen:
        raise FormatError(f"{path}: missing header line {','.join(HEADER)}")
    if not records:
        raise ValidationError(f"{path}: no records")

    if declared is not None:
        class_names = declared
        bad = [(i + 1, lab) for i, (_, lab) in enumerate(records) if lab not in declared]
        if bad:
            raise ValidationError(f"{path}: rows with labels outside the declared set {declared}: {bad}")
    else:
        class_names = list(dict.fromkeys(lab for _, lab in records))
    manifest = DatasetManifest(records, class_names, split, path.parent)
    if check_files:
        missing = [p for p, _ in records if not (manifest.root / p).is_file()]
        if missing:
            raise FileNotFoundError(f"{path}: {len(missing)} image(s) not found, first: {missing[0]}")
    return manifest


def render_manifest(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    buf.write("# labels: " + ",".join(manifest.class_names) + "\n")
    buf.write(f"# split: {manifest.split}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    writer.writerows(manifest.records)
    return buf.getvalue()


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    Path(path).write_text(render_manifest(manifest), encoding="utf-8")


# ----------------------------------------------------------------------------
# synthetic data


def _slug(name: str) -> str:
    return name.lower().replace(" ", "_")


def synth_image(class_index: int, num_classes: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One frame for ``class_index``: class hue, class-indexed stripes, noise."""
    hue = class_index / num_classes
    base = np.array(colorsys.hsv_to_rgb(hue, 0.8, 0.85))
    fx = 1 + class_index % 3
    fy = class_index // 3
    yy, xx = np.mgrid[0:size, 0:size] / size
    phase = rng.uniform(0, 2 * np.pi)
    pattern = 0.5 + 0.5 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    img = base * (0.75 + 0.25 * pattern[..., None])
    img = img + rng.normal(0.0, 0.03, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_dataset(
    class_names: Sequence[str],
    per_class: int,
    image_size: int,
    seed: int,
    out_dir: str | os.PathLike,
    split: str = "train",
) -> DatasetManifest:
    """Write ``per_class`` PPM frames per class and the split manifest."""
    if per_class < 1:
        raise ValidationError("per_class must be >= 1")
    if image_size < 1:
        raise ValidationError("image_size must be >= 1")
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}")
    root = Path(out_dir)
    records = []
    for c, name in enumerate(class_names):
        folder = root / split / name
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            rng = np.random.default_rng([seed, c, i])
            rel = f"{split}/{name}/{_slug(name)}_{i:04d}.ppm"
            write_image(root / rel, synth_image(c, len(class_names), image_size, rng))
            records.append((rel, name))
    manifest = DatasetManifest(records, list(class_names), split, root)
    write_manifest(manifest, root / f"{split}.csv")
    return manifest


# ----------------------------------------------------------------------------
# batching


def load_record(
    manifest: DatasetManifest,
    i: int,
    image_size: int,
    policy: AugmentationPolicy | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    path = manifest.path(i)
    try:
        img = decode_image(path)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e
    except OSError as e:
        raise OSError(f"{path}: {e}") from e
    img = resize(img, image_size)
    if policy is not None:
        img = augment(img, policy, rng)
    return normalize(img)


def epoch_order(n: int, shuffle_seed: int | None) -> np.ndarray:
    if shuffle_seed is None:
        return np.arange(n)
    return np.random.default_rng(shuffle_seed).permutation(n)


def batch_iterator(
    manifest: DatasetManifest,
    batch_size: int,
    image_size: int,
    shuffle_seed: int | None = None,
    policy: AugmentationPolicy | None = None,
    epoch: int = 0,
    workers: int = 0,
    prefetch: int = 2,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images [B, S, S, 3], labels [B])`` covering the manifest once.

    The record at stream position ``k`` is augmented with an RNG seeded from
    ``(policy.seed, epoch, k)``, so output does not depend on ``workers``.
    """
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    order = epoch_order(len(manifest), shuffle_seed)
    labels = manifest.labels()
    chunks = [order[s : s + batch_size] for s in range(0, len(order), batch_size)]
    starts = range(0, len(order), batch_size)

    def build(start: int, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        imgs = []
        for offset, i in enumerate(idx):
            rng = None
            if policy is not None:
                rng = np.random.default_rng([policy.seed, epoch, start + offset])
            imgs.append(load_record(manifest, int(i), image_size, policy, rng))
        return np.stack(imgs), labels[idx]

    if workers <= 0:
        for start, idx in zip(starts, chunks):
            yield build(start, idx)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        jobs = iter(zip(starts, chunks))
        for start, idx in jobs:
            pending.append(pool.submit(build, start, idx))
            if len(pending) > prefetch:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
