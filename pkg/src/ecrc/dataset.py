"""Image-folder ingestion, preprocessing and the synthetic dataset generator.

On-disk layout::

    root/<class_name>/<image file>      # PGM (P5) or 8-bit PNG
    root/train.txt, root/test.txt       # "<relative path> <class name>" per line

Class indices are assigned 1..c over the sorted class directory names, so
every split of one tree shares the same label map.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, InvalidArgumentError, ShapeError

LUMINANCE = (0.299, 0.587, 0.114)
IMAGE_SUFFIXES = (".pgm", ".png")
_FORMATS = {"PPM", "PNG"}


@dataclass(frozen=True, eq=False)
class LabeledImageSet:
    images: np.ndarray  # (n, H, W) in [0, 1]
    labels: np.ndarray  # (n,) in 1..c
    class_names: tuple
    sources: tuple = ()

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[0] == 0:
            raise DataError("an image set needs at least one image of fixed extents")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError("images and labels are not parallel")
        present = set(np.unique(self.labels).tolist())
        if present != set(range(1, len(self.class_names) + 1)):
            raise DataError(f"labels {sorted(present)} are not contiguous 1..{len(self.class_names)}")

    def __len__(self):
        return self.images.shape[0]

    @property
    def class_count(self):
        return len(self.class_names)

    @property
    def image_shape(self):
        return self.images.shape[1:]


@dataclass(frozen=True)
class PreprocessSpec:
    target_height: int | None = None
    target_width: int | None = None
    crop: tuple | None = None  # (top, left, height, width)
    luminance: tuple = LUMINANCE


def decode_image(path, luminance=LUMINANCE):
    """Read a PGM or PNG as a float grayscale array scaled to [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in _FORMATS:
                raise DataError(f"{path}: unsupported image format {im.format}")
            im.load()
            mode = im.mode
            if mode == "P":
                im, mode = im.convert("RGBA"), "RGBA"
            arr = np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"{path}: cannot decode image ({exc})") from exc
    if mode == "L":
        return arr / 255.0
    if mode in ("I", "I;16", "I;16B"):
        return arr / 65535.0
    if mode == "LA":
        return arr[..., 0] / 255.0
    if mode in ("RGB", "RGBA"):
        return arr[..., :3] @ np.asarray(luminance, dtype=np.float64) / 255.0
    raise DataError(f"{path}: unsupported pixel mode {mode}")


def resize_bilinear(image, height, width):
    """Corner-aligned bilinear resampling.

    Target pixel i samples source row ``i * (H - 1) / (h - 1)``; a target
    extent of 1 samples the source center.
    """
    image = np.asarray(image, dtype=np.float64)
    if height < 1 or width < 1:
        raise InvalidArgumentError(f"target extents must be >= 1, got {height}x{width}")
    if image.shape == (height, width):
        return image.copy()

    def coords(src, dst):
        if dst == 1:
            return np.array([(src - 1) / 2.0])
        return np.arange(dst) * ((src - 1) / (dst - 1))

    def split(pos, src):
        lo = np.clip(np.floor(pos).astype(int), 0, src - 1)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, pos - lo

    r0, r1, fr = split(coords(image.shape[0], height), image.shape[0])
    c0, c1, fc = split(coords(image.shape[1], width), image.shape[1])
    fr, fc = fr[:, None], fc[None, :]
    top = image[np.ix_(r0, c0)] * (1 - fc) + image[np.ix_(r0, c1)] * fc
    bottom = image[np.ix_(r1, c0)] * (1 - fc) + image[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bottom * fr


def preprocess(image, spec):
    """Crop, then resize. Intensity scaling happens at decode time only."""
    image = np.asarray(image, dtype=np.float64)
    if spec.crop is not None:
        top, left, h, w = spec.crop
        if top < 0 or left < 0 or top + h > image.shape[0] or left + w > image.shape[1] or h < 1 or w < 1:
            raise ShapeError(f"crop {spec.crop} falls outside image extents {image.shape}")
        image = image[top:top + h, left:left + w]
    if spec.target_height is not None or spec.target_width is not None:
        h = spec.target_height or image.shape[0]
        w = spec.target_width or image.shape[1]
        image = resize_bilinear(image, h, w)
    return image


def class_directories(root):
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset root is not a directory")
    names = sorted(p.name for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if len(names) == 0:
        raise DataError(f"{root}: no class subdirectories")
    return names


def read_manifest(path):
    """Parse ``<relative path> <class name>`` lines; '#' starts a comment."""
    entries = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.rsplit(None, 1)
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected '<path> <class name>'")
        entries.append((parts[0], parts[1]))
    return entries


def load_image_folder(root, manifest=None, spec=PreprocessSpec()):
    """Load a split of an image-folder dataset.

    ``manifest`` is a manifest path (absolute or relative to ``root``), or
    None to take every image under every class directory.
    """
    root = Path(root)
    names = class_directories(root)
    index = {name: i + 1 for i, name in enumerate(names)}
    if manifest is None:
        entries = []
        for name in names:
            files = sorted(p for p in (root / name).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
            entries += [(str(p.relative_to(root)), name) for p in files]
    else:
        manifest = Path(manifest)
        entries = read_manifest(manifest if manifest.is_absolute() else root / manifest)
        entries.sort()

    for rel, cls in entries:
        if cls not in index:
            raise DataError(f"{rel}: unknown class {cls!r} (no directory under {root})")
    for name in names:
        if not any(cls == name for _, cls in entries):
            raise DataError(f"{root / name}: class has no images in this split")

    images, labels = [], []
    for rel, cls in entries:
        path = root / rel
        if not path.is_file():
            raise DataError(f"{path}: listed image does not exist")
        image = preprocess(decode_image(path, spec.luminance), spec)
        if images and image.shape != images[0].shape:
            raise DataError(f"{path}: extents {image.shape} differ from {images[0].shape}; set a target size")
        images.append(image)
        labels.append(index[cls])
    return LabeledImageSet(images=np.array(images), labels=np.array(labels, dtype=np.int64),
                           class_names=tuple(names), sources=tuple(rel for rel, _ in entries))


def _template(rng, height, width, coarse=4):
    field = rng.random((coarse, coarse))
    return resize_bilinear(field, height, width)


def generate_synthetic(class_count, per_class, height=24, width=24, noise=0.05, seed=0,
                       test_per_class=None):
    """Smooth random class templates plus i.i.d. Gaussian pixel noise.

    Returns ``(train, test)``; the two splits use disjoint noise draws.
    """
    if class_count < 2:
        raise InvalidArgumentError("synthetic data needs at least two classes")
    if per_class < 1 or height < 1 or width < 1 or noise < 0:
        raise InvalidArgumentError("per_class and extents must be >= 1 and noise >= 0")
    test_per_class = per_class if test_per_class is None else test_per_class
    if test_per_class < 1:
        raise InvalidArgumentError("test_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    templates = [_template(rng, height, width) for _ in range(class_count)]
    names = tuple(f"class_{j:0{len(str(class_count))}d}" for j in range(1, class_count + 1))

    def draw(count):
        images = np.array([t for t in templates for _ in range(count)])
        if noise > 0:
            images = np.clip(images + noise * rng.standard_normal(images.shape), 0.0, 1.0)
        labels = np.repeat(np.arange(1, class_count + 1), count)
        return LabeledImageSet(images=images, labels=labels, class_names=names)

    return draw(per_class), draw(test_per_class)


def write_image_folder(root, train, test):
    """Write both splits as 8-bit PGM files plus train.txt / test.txt."""
    root = Path(root)
    for split, data in (("train", train), ("test", test)):
        lines = []
        for i, (image, label) in enumerate(zip(data.images, data.labels)):
            name = data.class_names[label - 1]
            rel = Path(name) / f"{split}_{i:05d}.pgm"
            (root / name).mkdir(parents=True, exist_ok=True)
            pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(pixels).save(root / rel)
            lines.append(f"{rel.as_posix()} {name}")
        (root / f"{split}.txt").write_text("\n".join(lines) + "\n")
    return root
