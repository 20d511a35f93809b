"""Extreme learning machine classification trained by a multi-RHS least-squares solve.

A random sigmoid hidden layer maps each input to ``h(xi)``; the output
weights X minimize ``||H X - Y||_F`` with Y the +-1 one-vs-rest targets.
"""

import math
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.special import expit

from .directions import QuasiNewton
from .errors import DimensionError, NotTrainedError, ParseError
from .matrix_io import _HEADER as _MAT_HEADER
from .problem import LsProblem, make_rng, qr_solve
from .sketch import SparseRademacher
from .solver import Harmonic, StoppingRule, run_multi_rhs

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
MODEL_MAGIC = b"ELM1"
MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class ImageDataset:
    """Feature vectors (one per row) with integer class labels.

    IDX images are flattened row-major and scaled to [0, 1]; synthetic data
    uses ``width = d, height = 1``.
    """

    images: np.ndarray
    labels: np.ndarray
    width: int
    height: int
    n_classes: Optional[int] = None

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 2 or images.shape[1] != self.width * self.height:
            raise DimensionError(
                f"images must be N x {self.width * self.height}, got {images.shape}")
        if images.shape[0] != labels.shape[0]:
            raise DimensionError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"labels must lie in 0..{n_classes - 1}")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", n_classes)

    @property
    def d(self):
        return self.width * self.height

    def __len__(self):
        return self.labels.shape[0]


def write_idx(images_path, labels_path, pixels, labels):
    """Write uint8 images (N x rows x cols) and labels in IDX layout."""
    pixels = np.asarray(pixels)
    labels = np.asarray(labels)
    if pixels.ndim != 3:
        raise DimensionError("pixels must be N x rows x cols")
    n, rows, cols = pixels.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())


def _read_idx_file(path, magic, ndim):
    data = Path(path).read_bytes()
    head = 4 * (1 + ndim)
    if len(data) < 4:
        raise ParseError(f"{path}: truncated header ({len(data)} bytes)")
    got = struct.unpack_from(">I", data)[0]
    if got != magic:
        raise ParseError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(data) < head:
        raise ParseError(f"{path}: truncated header ({len(data)} bytes)")
    dims = struct.unpack_from(">" + "I" * ndim, data, 4)
    need = head + math.prod(dims)
    if len(data) < need:
        raise ParseError(f"{path}: truncated payload, need {need} bytes, have {len(data)}")
    if len(data) > need:
        raise ParseError(f"{path}: {len(data) - need} trailing bytes after payload")
    return np.frombuffer(data, dtype=np.uint8, offset=head).reshape(dims)


def read_idx(images_path, labels_path, n_classes=10):
    """Read an IDX image/label pair; pixels are scaled by 1/255."""
    pixels = _read_idx_file(images_path, IMAGE_MAGIC, 3)
    labels = _read_idx_file(labels_path, LABEL_MAGIC, 1)
    if pixels.shape[0] != labels.shape[0]:
        raise ParseError(
            f"count mismatch: {pixels.shape[0]} images, {labels.shape[0]} labels")
    n, rows, cols = pixels.shape
    if labels.size and labels.max() >= n_classes:
        raise ParseError(f"label {int(labels.max())} out of range for {n_classes} classes")
    return ImageDataset(pixels.reshape(n, rows * cols) / 255.0, labels.astype(np.int64),
                        cols, rows, n_classes)


def beta22(rng):
    """Beta(2, 2) draw: the median of three independent uniforms."""
    return float(np.median(rng.random(3)))


def augment_rotate(img, width, height, rng, eta=None):
    """Rotate a flattened raster by 20 (eta - 0.5) degrees, eta ~ Beta(2, 2).

    Rotation is about the raster centre with bilinear interpolation; samples
    falling outside the frame read 0.
    """
    if eta is None:
        eta = beta22(rng)
    angle = math.radians(20.0 * (eta - 0.5))
    raster = np.asarray(img, dtype=np.float64).reshape(height, width)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    c, s = math.cos(angle), math.sin(angle)
    # inverse map: output pixel -> source location
    src_x = c * (xx - cx) + s * (yy - cy) + cx
    src_y = -s * (xx - cx) + c * (yy - cy) + cy
    out = map_coordinates(raster, [src_y, src_x], order=1, mode="constant", cval=0.0)
    return out.reshape(-1)


def augment_dataset(dataset, n_rotations, seed=0):
    """Original images followed by ``n_rotations`` rotated copies of each."""
    rng = make_rng(seed)
    images = [dataset.images]
    for _ in range(n_rotations):
        images.append(np.array([augment_rotate(img, dataset.width, dataset.height, rng)
                                for img in dataset.images]))
    labels = np.tile(dataset.labels, n_rotations + 1)
    return ImageDataset(np.vstack(images), labels, dataset.width, dataset.height,
                        dataset.n_classes)


def make_blobs(m, d=10, n_classes=2, seed=0, separation=3.0, centers_seed=0):
    """Gaussian clusters with unit spread; centres depend only on ``centers_seed``.

    Class labels cycle so the classes are balanced.
    """
    centers = make_rng(centers_seed).standard_normal((n_classes, d))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    rng = make_rng(seed)
    labels = np.arange(m) % n_classes
    feats = centers[labels] + rng.standard_normal((m, d))
    return ImageDataset(feats, labels, d, 1, n_classes)


@dataclass(frozen=True, eq=False)
class ElmModel:
    d_weights: np.ndarray
    biases: np.ndarray
    out_weights: Optional[np.ndarray] = None
    report: object = None

    @property
    def n_hidden(self):
        return self.d_weights.shape[0]

    @property
    def d(self):
        return self.d_weights.shape[1]

    @property
    def n_classes(self):
        return None if self.out_weights is None else self.out_weights.shape[1]


def init_hidden(n_hidden, d, seed=0, weight_range=(-1.0, 1.0), bias_range=(0.0, 1.0)):
    if n_hidden < 1 or d < 1:
        raise ValueError("n_hidden and d must be positive")
    rng = make_rng(seed)
    weights = rng.uniform(weight_range[0], weight_range[1], size=(n_hidden, d))
    biases = rng.uniform(bias_range[0], bias_range[1], size=n_hidden)
    return ElmModel(weights, biases)


def hidden_matrix(model, xs):
    """Rows h(xi) = 1 / (1 + exp(-d_j^T xi + delta_j)) for each row xi."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.d:
        raise DimensionError(f"inputs must be N x {model.d}, got {xs.shape}")
    # einsum rather than BLAS so a row's bits do not depend on the batch size
    return expit(np.einsum("ij,kj->ik", xs, model.d_weights) - model.biases)


def feature_map(model, xi):
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    if xi.shape[0] != model.d:
        raise DimensionError(f"input has {xi.shape[0]} features, model expects {model.d}")
    return hidden_matrix(model, xi[None, :])[0]


def target_matrix(labels, n_classes):
    """y_ij = 1 if c_i = j (0-based) else -1."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    y = -np.ones((labels.shape[0], n_classes))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


def build_training(model, dataset):
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return hidden_matrix(model, dataset.images), target_matrix(dataset.labels, dataset.n_classes)


@dataclass(frozen=True)
class SqnConfig:
    """Solver settings for ELM training; ``p=None`` means p = ell."""

    ell: int = 50
    p: Optional[int] = None
    lambda1: float = 1e-5
    max_iters: int = 1000
    tol: Optional[float] = 1e-4
    window: int = 10
    mode: str = "both"
    seed: int = 0


def train(model, dataset, method="sqn", config=SqnConfig()):
    """Fit output weights; ``method`` is ``'sqn'`` or ``'qr'`` (direct baseline)."""
    h, y = build_training(model, dataset)
    if h.shape[0] < h.shape[1]:
        warnings.warn(f"{h.shape[0]} training rows < {h.shape[1]} hidden nodes; "
                      "H cannot have full column rank", stacklevel=2)
    if method == "qr":
        return replace(model, out_weights=qr_solve(h, y), report=None)
    if method != "sqn":
        raise ValueError(f"unknown training method {method!r}")
    m = h.shape[0]
    p = config.ell if config.p is None else config.p
    spec = SparseRademacher(m, config.ell, min(p, m))
    rule = StoppingRule(config.max_iters, config.tol, config.window, config.mode)
    x, report = run_multi_rhs(LsProblem(h, y), spec, Harmonic(1.0),
                              QuasiNewton(config.lambda1), rule, seed=config.seed)
    return replace(model, out_weights=x, report=report)


def _require_trained(model):
    if model.out_weights is None:
        raise NotTrainedError("model has no output weights; train it first")


def predict(model, xs):
    _require_trained(model)
    # argmax returns the first maximum, i.e. ties go to the smaller class index
    return np.argmax(hidden_matrix(model, xs) @ model.out_weights, axis=1)


def classify(model, xi):
    xi = np.asarray(xi, dtype=np.float64).reshape(1, -1)
    return int(predict(model, xi)[0])


def accuracy(model, dataset):
    """1 - misclassified / total."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    wrong = int(np.count_nonzero(predict(model, dataset.images) != dataset.labels))
    return 1.0 - wrong / len(dataset)


def _pack_matrix(mat):
    mat = np.asarray(mat, dtype=np.float64)
    return _MAT_HEADER.pack(*mat.shape) + np.ascontiguousarray(mat, dtype="<f8").tobytes()


def save_model(model, path):
    """Container: b'ELM1', u32 version, u32 n_hidden, u32 d (little-endian),
    then d_weights, biases (n_hidden x 1) and out_weights (0 x 0 if untrained)
    in the binary matrix layout."""
    out = model.out_weights if model.out_weights is not None else np.zeros((0, 0))
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<III", MODEL_VERSION, model.n_hidden, model.d))
        fh.write(_pack_matrix(model.d_weights))
        fh.write(_pack_matrix(model.biases.reshape(-1, 1)))
        fh.write(_pack_matrix(out))


def load_model(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MODEL_MAGIC:
        raise ParseError(f"{path}: not an ELM1 model file")
    version, n_hidden, d = struct.unpack_from("<III", data, 4)
    if version != MODEL_VERSION:
        raise ParseError(f"{path}: unsupported model version {version}")
    pos = 16
    mats = []
    for _ in range(3):
        if len(data) < pos + _MAT_HEADER.size:
            raise ParseError(f"{path}: truncated matrix header")
        rows, cols = _MAT_HEADER.unpack_from(data, pos)
        pos += _MAT_HEADER.size
        end = pos + 8 * rows * cols
        if len(data) < end:
            raise ParseError(f"{path}: truncated matrix payload")
        mats.append(np.frombuffer(data[pos:end], dtype="<f8").astype(np.float64).reshape(rows, cols))
        pos = end
    if pos != len(data):
        raise ParseError(f"{path}: trailing bytes")
    weights, biases, out = mats
    if weights.shape != (n_hidden, d) or biases.shape != (n_hidden, 1):
        raise ParseError(f"{path}: matrix shapes disagree with header")
    return ElmModel(weights, biases.reshape(-1), out if out.size else None)
