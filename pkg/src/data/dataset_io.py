"""
Dataset ingestion: IDX files, image directories, resizing and subsetting.
"""
import gzip
import logging
import os
from typing import List, Optional, Tuple

import cv2
import numpy as np
from joblib import Parallel, delayed

from core.exceptions import (CapacityError, ConsistencyError, FormatError,
                             ParameterError)
from core.utils import derive_rng, load_image_file, ensure_directory_exists
from data.models import ImageTensor, LabeledDataset

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

IMAGE_EXTENSIONS = ('.png', '.pgm', '.ppm', '.pnm', '.bmp')


def _open_binary(path: str):
    if path.endswith('.gz'):
        return gzip.open(path, 'rb')
    return open(path, 'rb')


def _read_idx(path: str, magic: int, ndims: int) -> Tuple[Tuple[int, ...], bytes]:
    """Read an unsigned-byte IDX file, returning (dims, payload)."""
    try:
        with _open_binary(path) as f:
            raw = f.read()
    except (OSError, EOFError) as e:
        raise FormatError(f"{path}: cannot read IDX file: {e}") from e
    header_len = 4 * (1 + ndims)
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated IDX header")
    header = np.frombuffer(raw[:header_len], dtype='>u4')
    if int(header[0]) != magic:
        raise FormatError(
            f"{path}: bad IDX magic 0x{int(header[0]):08x}, expected 0x{magic:08x}")
    dims = tuple(int(v) for v in header[1:])
    payload = raw[header_len:]
    if len(payload) != int(np.prod(dims, dtype=np.int64)):
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes, header promises "
            f"{int(np.prod(dims, dtype=np.int64))}")
    return dims, payload


def load_idx(images_path: str, labels_path: Optional[str] = None) -> LabeledDataset:
    """
    Load an IDX image file (and optional label file).

    Args:
        images_path: IDX3 unsigned-byte image file, optionally gzipped
        labels_path: IDX1 unsigned-byte label file

    Returns:
        LabeledDataset with pixels scaled to [0, 1]
    """
    (count, rows, cols), payload = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)

    labels = None
    if labels_path is not None:
        (label_count,), label_payload = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
        if label_count != count:
            raise ConsistencyError(
                f"{label_count} labels for {count} images")
        labels = np.frombuffer(label_payload, dtype=np.uint8).astype(int).tolist()

    name = os.path.basename(images_path)
    images = [
        ImageTensor(pixels[i].astype(np.float64)[:, :, None] / 255.0,
                    source_index=i, dataset_id=name,
                    label=labels[i] if labels is not None else None)
        for i in range(count)
    ]
    logger.info("loaded %d images of %dx%d from %s", count, rows, cols, images_path)
    return LabeledDataset(images=images, labels=labels, name=name)


def write_idx(dataset: LabeledDataset, images_path: str,
              labels_path: Optional[str] = None) -> None:
    """Write a single-channel dataset back to IDX files."""
    if dataset.images and dataset.image_shape[2] != 1:
        raise ConsistencyError("IDX images must have exactly one channel")
    rows, cols = dataset.image_shape[:2] if dataset.images else (0, 0)
    pixels = np.rint(dataset.as_array() * 255.0).astype(np.uint8) if dataset.images \
        else np.zeros((0,), dtype=np.uint8)

    ensure_directory_exists(os.path.dirname(images_path))
    with open(images_path, 'wb') as f:
        f.write(np.array([IDX_IMAGES_MAGIC, len(dataset), rows, cols], dtype='>u4').tobytes())
        f.write(pixels.tobytes())
    if labels_path is not None:
        if dataset.labels is None:
            raise ConsistencyError("dataset has no labels to write")
        with open(labels_path, 'wb') as f:
            f.write(np.array([IDX_LABELS_MAGIC, len(dataset)], dtype='>u4').tobytes())
            f.write(np.asarray(dataset.labels, dtype=np.uint8).tobytes())


def _list_image_files(root: str) -> List[str]:
    found = []
    for directory, _, files in os.walk(root):
        for filename in files:
            if filename.lower().endswith(IMAGE_EXTENSIONS):
                found.append(os.path.relpath(os.path.join(directory, filename), root))
    # Byte order of relative paths, independent of locale
    found.sort(key=lambda rel: rel.replace(os.sep, '/').encode('utf-8'))
    return found


def _decode(root: str, rel: str, channels: int):
    try:
        return load_image_file(os.path.join(root, rel), channels), None
    except FormatError as e:
        return None, str(e)


def load_image_dir(root: str, class_from_subdir: bool = False, channels: int = 1,
                   size: Optional[Tuple[int, int]] = None,
                   n_jobs: int = 1) -> LabeledDataset:
    """
    Load every PNG/PGM/BMP image below a directory.

    Args:
        root: Directory to scan recursively
        class_from_subdir: Derive labels from first-level subdirectory names
        channels: 1 (luma) or 3 (RGB)
        size: Optional (height, width) every image is resized to
        n_jobs: Decoding workers

    Returns:
        LabeledDataset ordered by relative path
    """
    if not os.path.isdir(root):
        raise FormatError(f"{root} is not a directory")

    rel_paths = _list_image_files(root)
    decoded = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_decode)(root, rel, channels) for rel in rel_paths)

    failures = [(rel, err) for rel, (_, err) in zip(rel_paths, decoded) if err]
    if failures:
        listing = "; ".join(f"{rel}: {err}" for rel, err in failures)
        raise FormatError(f"{len(failures)} undecodable files: {listing}", failures)

    arrays = [array for array, _ in decoded]
    if size is not None:
        arrays = [_resize_array(array, size[0], size[1]) for array in arrays]
    shapes = sorted({array.shape for array in arrays})
    if len(shapes) > 1:
        raise ConsistencyError(
            f"images in {root} have mixed shapes {shapes}; request a resize")

    labels = None
    if class_from_subdir:
        classes = []
        for rel in rel_paths:
            parts = rel.replace(os.sep, '/').split('/')
            if len(parts) < 2:
                raise ConsistencyError(f"{rel} is not inside a class subdirectory")
            classes.append(parts[0])
        class_ids = {name: i for i, name in
                     enumerate(sorted(set(classes), key=lambda s: s.encode('utf-8')))}
        labels = [class_ids[name] for name in classes]

    name = os.path.basename(os.path.normpath(root))
    images = [
        ImageTensor(array, source_index=i, dataset_id=name,
                    label=labels[i] if labels is not None else None)
        for i, array in enumerate(arrays)
    ]
    logger.info("loaded %d images from %s", len(images), root)
    return LabeledDataset(images=images, labels=labels, name=name)


def _resize_array(array: np.ndarray, h: int, w: int) -> np.ndarray:
    if array.shape[:2] == (h, w):
        return array.copy()
    resized = cv2.resize(array, (w, h), interpolation=cv2.INTER_LINEAR)
    if resized.ndim == 2:
        resized = resized[:, :, None]
    return np.clip(resized, 0.0, 1.0)


def resize_bilinear(d: LabeledDataset, h: int, w: int) -> LabeledDataset:
    """Bilinearly resample every image to h x w, keeping channels."""
    if h < 1 or w < 1:
        raise ParameterError(f"target size must be at least 1x1, got {h}x{w}")
    images = [
        ImageTensor(_resize_array(image.data, h, w), source_index=image.source_index,
                    dataset_id=image.dataset_id, label=image.label)
        for image in d.images
    ]
    return LabeledDataset(images=images, labels=d.labels, name=d.name)


def stratified_subset(d: LabeledDataset, per_class: int, seed: int) -> LabeledDataset:
    """
    Pick exactly per_class items of every class.

    Args:
        d: Labeled dataset
        per_class: Items kept per class
        seed: Master seed; the selection depends only on it

    Returns:
        Subset in original dataset order
    """
    if d.labels is None:
        raise ConsistencyError("stratified subsetting requires labels")
    if per_class < 1:
        raise ParameterError(f"per_class must be >= 1, got {per_class}")

    labels = d.label_array()
    rng = derive_rng(seed, "dataset/stratified_subset")
    chosen = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if members.size < per_class:
            raise CapacityError(int(label), int(members.size), per_class)
        if members.size == per_class:
            chosen.append(members)
        else:
            chosen.append(rng.choice(members, size=per_class, replace=False))
    keep = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=int)

    return LabeledDataset(
        images=[d.images[i] for i in keep],
        labels=[d.labels[i] for i in keep],
        name=f"{d.name}[{per_class}/class]",
    )


def load_dataset(descriptor: dict, base_dir: str = "", n_jobs: int = 1) -> LabeledDataset:
    """
    Load the dataset a config descriptor names.

    Relative paths resolve against base_dir. An optional "resize": [h, w]
    entry resamples every image after loading.
    """
    from data.synthetic import load_synthetic

    def resolve(path):
        return path if os.path.isabs(path) else os.path.join(base_dir, path)

    fmt = descriptor.get('format')
    if fmt == 'idx':
        labels = descriptor.get('labels')
        dataset = load_idx(resolve(descriptor['images']),
                           resolve(labels) if labels else None)
    elif fmt == 'image_dir':
        dataset = load_image_dir(resolve(descriptor['root']),
                                 class_from_subdir=bool(descriptor.get('class_from_subdir', False)),
                                 channels=int(descriptor.get('channels', 1)),
                                 n_jobs=n_jobs)
    elif fmt == 'synthetic':
        dataset = load_synthetic(descriptor)
    else:
        raise FormatError(f"unknown dataset format '{fmt}'")

    size = descriptor.get('resize')
    if size:
        dataset = resize_bilinear(dataset, int(size[0]), int(size[1]))
    return dataset
