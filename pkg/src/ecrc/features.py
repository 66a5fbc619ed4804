"""Random convolutional feature extraction.

One stage of filter bank -> rectification -> local contrast normalization ->
pooling. Every kernel in the bank yields one feature channel; the ensemble
trains one classifier per channel.

Images and feature maps are plain 2-D float64 numpy arrays.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import InvalidArgumentError, ShapeError

# Scaled tanh of LeCun et al., the nonlinearity used for the experiments.
DEFAULT_GAIN = 1.7159
DEFAULT_INNER_SCALE = 0.6667
DEFAULT_AMPLITUDE = 0.001


@dataclass(frozen=True, eq=False)
class FilterBank:
    """k random kernels stacked as a ``(k, l1, l2)`` array."""

    filters: np.ndarray
    gain: float = DEFAULT_GAIN
    inner_scale: float = DEFAULT_INNER_SCALE
    seed: int = 0
    amplitude: float = DEFAULT_AMPLITUDE

    def __post_init__(self):
        filters = np.array(self.filters, dtype=np.float64)
        if filters.ndim != 3 or filters.shape[0] < 1:
            raise ShapeError(f"filters must be a non-empty (k, l1, l2) stack, got {filters.shape}")
        filters.setflags(write=False)
        object.__setattr__(self, "filters", filters)

    @property
    def count(self):
        return self.filters.shape[0]

    @property
    def kernel_shape(self):
        return self.filters.shape[1:]


@dataclass(frozen=True)
class LcnSpec:
    """Gaussian-window local contrast normalization parameters.

    ``sigma`` defaults to ``window / 4``.
    """

    window: int = 9
    floor_constant: float = 1e-4
    sigma: float | None = None

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidArgumentError(f"LCN window must be odd and >= 3, got {self.window}")
        if not self.floor_constant > 0:
            raise InvalidArgumentError("LCN floor_constant must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise InvalidArgumentError("LCN sigma must be positive")

    @cached_property
    def weights(self):
        sigma = self.sigma if self.sigma is not None else self.window / 4.0
        offsets = np.arange(self.window) - self.window // 2
        g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
        w = np.outer(g, g)
        w /= w.sum()
        w.setflags(write=False)
        return w


@dataclass(frozen=True)
class PoolingSpec:
    mode: str = "max"
    size: int = 2

    def __post_init__(self):
        if self.mode not in ("max", "average"):
            raise InvalidArgumentError(f"pooling mode must be 'max' or 'average', got {self.mode!r}")
        if int(self.size) != self.size or self.size < 1:
            raise InvalidArgumentError(f"pooling size must be an integer >= 1, got {self.size}")


def generate_filter_bank(count, height=5, width=5, amplitude=DEFAULT_AMPLITUDE,
                         gain=DEFAULT_GAIN, inner_scale=DEFAULT_INNER_SCALE, seed=0):
    """Draw ``count`` kernels i.i.d. uniform on ``[-amplitude, amplitude]``.

    The same arguments always give a bit-identical bank.
    """
    if count < 1 or height < 1 or width < 1:
        raise InvalidArgumentError(
            f"count and kernel extents must be >= 1, got count={count}, {height}x{width}")
    if not amplitude > 0:
        raise InvalidArgumentError(f"amplitude must be positive, got {amplitude}")
    rng = np.random.default_rng(seed)
    filters = rng.uniform(-amplitude, amplitude, size=(count, height, width))
    return FilterBank(filters, gain=float(gain), inner_scale=float(inner_scale),
                      seed=int(seed), amplitude=float(amplitude))


def _as_image(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"expected a 2-D grayscale image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise InvalidArgumentError("image contains non-finite intensities")
    return image


def filter_layer(image, bank, channels=None):
    """Valid cross-correlation with each kernel followed by the scaled tanh.

    Returns a ``(k, n1 - l1 + 1, n2 - l2 + 1)`` stack, or only the selected
    ``channels`` when given.
    """
    image = _as_image(image)
    l1, l2 = bank.kernel_shape
    if image.shape[0] < l1 or image.shape[1] < l2:
        raise ShapeError(f"image {image.shape} is smaller than kernel {(l1, l2)}")
    filters = bank.filters if channels is None else bank.filters[channels]
    windows = sliding_window_view(image, (l1, l2))
    response = np.einsum("ijab,kab->kij", windows, filters)
    return bank.gain * np.tanh(bank.inner_scale * response)


def rectify(feature_map):
    return np.abs(feature_map)


def local_contrast_normalize(feature_map, spec):
    """Subtractive then divisive normalization under a Gaussian window.

    Borders are zero padded and the window is renormalized by the weight
    that falls inside the map, so a constant map normalizes to zero
    everywhere. Accepts a single map or a stack of maps along the leading
    axis; the window never mixes different maps.
    """
    x = np.asarray(feature_map, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ShapeError(f"expected a map or a stack of maps, got shape {x.shape}")
    if min(x.shape[-2:]) < spec.window:
        raise ShapeError(f"map extents {x.shape[-2:]} are smaller than LCN window {spec.window}")
    w = spec.weights
    coverage = ndimage.correlate(np.ones(x.shape[-2:]), w, mode="constant", cval=0.0)
    if x.ndim == 3:
        w = w[None]

    def local_average(a):
        return ndimage.correlate(a, w, mode="constant", cval=0.0) / coverage

    v = x - local_average(x)
    local_var = local_average(v * v)
    # correlate can return tiny negatives from rounding
    sigma = np.sqrt(np.maximum(local_var, 0.0))
    return v / np.maximum(spec.floor_constant, sigma)


def pool(feature_map, spec):
    """Non-overlapping ``p x p`` max or mean pooling; ragged edges are dropped."""
    x = np.asarray(feature_map, dtype=np.float64)
    p = spec.size
    h, w = x.shape[-2] // p, x.shape[-1] // p
    tiles = x[..., : h * p, : w * p].reshape(*x.shape[:-2], h, p, w, p)
    if spec.mode == "max":
        return tiles.max(axis=(-3, -1))
    return tiles.mean(axis=(-3, -1))


def feature_length(image_shape, kernel_shape, pool_size):
    n1, n2 = image_shape
    l1, l2 = kernel_shape
    return ((n1 - l1 + 1) // pool_size) * ((n2 - l2 + 1) // pool_size)


def extract_features(image, bank, lcn, pooling, channels=None):
    """Run the full stage for every (or the selected) channel.

    Returns a ``(k, D)`` array, one flattened row-major vector per channel.
    """
    maps = filter_layer(image, bank, channels)
    maps = local_contrast_normalize(rectify(maps), lcn)
    pooled = pool(maps, pooling)
    return pooled.reshape(pooled.shape[0], -1)


def extract_channel(image, bank, lcn, pooling, channel):
    if not 0 <= channel < bank.count:
        raise InvalidArgumentError(f"channel {channel} out of range for a bank of {bank.count}")
    return extract_features(image, bank, lcn, pooling, channels=[channel])[0]
