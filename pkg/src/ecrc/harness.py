"""Experiment runner: train/evaluate, repeat over filter draws, sweep, report."""

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import ensemble
from .dataset import PreprocessSpec, generate_synthetic, load_image_folder
from .errors import InvalidArgumentError, NumericError, RankError
from .features import LcnSpec, PoolingSpec, feature_length

log = logging.getLogger(__name__)

AXES = ("ensemble_size", "pca_dim", "weighting")
FORMATS = ("human", "delimited", "structured")
DELIMITED_HEADER = ("axis", "value", "mean_accuracy", "std_accuracy", "repeats", "status")


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset: "synthetic" or an image-folder root with train/test manifests
    dataset: str = "synthetic"
    train_manifest: str = "train.txt"
    test_manifest: str = "test.txt"
    synthetic_classes: int = 10
    synthetic_per_class: int = 5
    synthetic_test_per_class: int = 5
    synthetic_noise: float = 0.05
    image_height: int | None = None
    image_width: int | None = None
    crop: str | None = None  # "top,left,height,width"
    channels: int = 64
    filter_height: int = 5
    filter_width: int = 5
    filter_amplitude: float = 0.001
    gain: float = 1.7159
    inner_scale: float = 0.6667
    lcn_window: int = 9
    lcn_floor: float = 1e-4
    pooling_mode: str = "max"
    pooling_size: int = 2
    pca_dim: int = 300
    lam: float = 1e-3
    normalize: bool = True
    seed: int = 0
    weighting: str = "weighted"
    repeats: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.channels < 1:
            raise InvalidArgumentError("channels must be >= 1")
        if self.repeats < 1:
            raise InvalidArgumentError("repeats must be >= 1")
        if self.weighting not in ensemble.WEIGHTINGS:
            raise InvalidArgumentError(f"weighting must be one of {ensemble.WEIGHTINGS}")
        if self.pca_dim < 1:
            raise InvalidArgumentError("pca_dim must be >= 1")
        # constructs the specs to validate them
        self.lcn_spec()
        self.pooling_spec()

    def lcn_spec(self):
        return LcnSpec(window=self.lcn_window, floor_constant=self.lcn_floor)

    def pooling_spec(self):
        return PoolingSpec(mode=self.pooling_mode, size=self.pooling_size)

    def preprocess_spec(self):
        crop = None
        if self.crop:
            try:
                crop = tuple(int(v) for v in self.crop.split(","))
            except ValueError:
                crop = ()
            if len(crop) != 4:
                raise InvalidArgumentError(f"crop must be 'top,left,height,width', got {self.crop!r}")
        return PreprocessSpec(target_height=self.image_height, target_width=self.image_width, crop=crop)

    def ensemble_config(self, repeat=0):
        return ensemble.EnsembleConfig(
            channels=self.channels, filter_height=self.filter_height, filter_width=self.filter_width,
            filter_amplitude=self.filter_amplitude, gain=self.gain, inner_scale=self.inner_scale,
            lcn=self.lcn_spec(), pooling=self.pooling_spec(), pca_dim=self.pca_dim, lam=self.lam,
            normalize=self.normalize, seed=self.seed + repeat)


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(f):
    kind = f.type.__name__ if isinstance(f.type, type) else str(f.type)
    base = {"int": int, "float": float, "bool": _parse_bool, "str": str}
    for name, conv in base.items():
        if kind.startswith(name):
            optional = "None" in kind
            return lambda text: None if optional and text.strip().lower() in ("", "none") else conv(text.strip())
    raise TypeError(kind)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def config_from_mapping(mapping):
    kwargs = {}
    for key, value in mapping.items():
        if key not in _FIELDS:
            raise InvalidArgumentError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = _converter(_FIELDS[key])(value)
            except ValueError as exc:
                raise InvalidArgumentError(f"bad value for {key}: {exc}") from exc
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def parse_config(text):
    """Flat ``key=value`` lines; '#' starts a comment."""
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidArgumentError(f"config line {lineno}: expected key=value")
        mapping[key.strip()] = value.strip()
    return config_from_mapping(mapping)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(config):
    return "".join(f"{k}={'none' if v is None else v}\n" for k, v in asdict(config).items())


def load_data(config):
    """(train, test) image sets described by the config."""
    if config.dataset == "synthetic":
        return generate_synthetic(
            config.synthetic_classes, config.synthetic_per_class,
            height=config.image_height or 24, width=config.image_width or 24,
            noise=config.synthetic_noise, seed=config.seed,
            test_per_class=config.synthetic_test_per_class)
    spec = config.preprocess_spec()
    train = load_image_folder(config.dataset, config.train_manifest, spec)
    test = load_image_folder(config.dataset, config.test_manifest, spec)
    return train, test


@dataclass
class ExperimentReport:
    config: dict
    class_names: tuple
    confusion: np.ndarray  # (c, c) counts, rows true class, columns predicted
    repeat_accuracies: list
    diagnostics: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def correct(self):
        return int(np.trace(self.confusion))

    @property
    def total(self):
        return int(self.confusion.sum())

    @property
    def accuracy(self):
        return self.correct / self.total

    @property
    def per_class_accuracy(self):
        rows = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), rows, out=np.zeros(len(rows)), where=rows > 0)

    @property
    def mean_accuracy(self):
        return float(np.mean(self.repeat_accuracies))

    @property
    def std_accuracy(self):
        if len(self.repeat_accuracies) < 2:
            return 0.0
        return float(np.std(self.repeat_accuracies, ddof=1))

    def to_dict(self):
        return {
            "config": self.config,
            "class_names": list(self.class_names),
            "accuracy": self.accuracy,
            "correct": self.correct,
            "total": self.total,
            "per_class_accuracy": self.per_class_accuracy.tolist(),
            "confusion": self.confusion.tolist(),
            "repeat_accuracies": list(self.repeat_accuracies),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "timings": dict(self.timings),
            "diagnostics": self.diagnostics,
        }


def evaluate(model, test, weighting="weighted", workers=1, repeat=0):
    """Classify every test image; returns (confusion, diagnostics)."""
    c = model.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    decisions = ensemble.classify_batch(model, test.images, weighting, workers)
    diagnostics = []
    for i, (decision, truth) in enumerate(zip(decisions, test.labels)):
        confusion[truth - 1, decision.label - 1] += 1
        diagnostics.append({
            "repeat": repeat,
            "index": i,
            "true": int(truth),
            "predicted": decision.label,
            "weights": decision.weights.tolist(),
            "margins": decision.margins.tolist(),
            "fused": decision.fused.tolist(),
        })
    return confusion, diagnostics


def report_for_model(model, test, weighting="weighted", workers=1, config=None):
    start = time.perf_counter()
    confusion, diagnostics = evaluate(model, test, weighting, workers)
    elapsed = time.perf_counter() - start
    return ExperimentReport(
        config=dict(config or model.metadata.get("experiment", {})),
        class_names=tuple(model.class_names or test.class_names),
        confusion=confusion,
        repeat_accuracies=[np.trace(confusion) / confusion.sum()],
        diagnostics=diagnostics,
        timings={"classify": elapsed, "total": elapsed})


def check_feasible(config, train):
    """Reason string if the config cannot run on this training set, else None."""
    shape = train.image_shape
    if shape[0] < config.filter_height or shape[1] < config.filter_width:
        return f"image {shape} smaller than filter {config.filter_height}x{config.filter_width}"
    maps = (shape[0] - config.filter_height + 1, shape[1] - config.filter_width + 1)
    if min(maps) < config.lcn_window:
        return f"feature map {maps} smaller than LCN window {config.lcn_window}"
    length = feature_length(shape, (config.filter_height, config.filter_width), config.pooling_size)
    limit = min(length, len(train) - 1)
    if config.pca_dim > limit:
        return f"pca_dim {config.pca_dim} exceeds feasible maximum {limit} (feature length {length}, {len(train)} training images)"
    return None


def train_model(config, train, repeat=0):
    reason = check_feasible(config, train)
    if reason:
        raise InvalidArgumentError(reason)
    model = ensemble.train_ensemble(train.images, train.labels, config.ensemble_config(repeat),
                                    class_names=train.class_names, workers=config.workers)
    return replace(model, metadata={"experiment": asdict(config)})


def run_experiment(config, data=None):
    """Train and evaluate ``config.repeats`` times with seeds seed, seed+1, ...

    Filter banks are redrawn every repeat; the data stays fixed.
    """
    t0 = time.perf_counter()
    train, test = data if data is not None else load_data(config)
    timings = {"load": time.perf_counter() - t0, "train": 0.0, "classify": 0.0}
    c = train.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    accuracies, diagnostics = [], []
    for r in range(config.repeats):
        t = time.perf_counter()
        model = train_model(config, train, repeat=r)
        timings["train"] += time.perf_counter() - t
        t = time.perf_counter()
        conf, diag = evaluate(model, test, config.weighting, config.workers, repeat=r)
        timings["classify"] += time.perf_counter() - t
        confusion += conf
        accuracies.append(np.trace(conf) / conf.sum())
        diagnostics.extend(diag)
        log.info("repeat %d/%d accuracy %.6f", r + 1, config.repeats, accuracies[-1])
    timings["total"] = time.perf_counter() - t0
    return ExperimentReport(config=asdict(config), class_names=train.class_names, confusion=confusion,
                            repeat_accuracies=[float(a) for a in accuracies],
                            diagnostics=diagnostics, timings=timings)


@dataclass
class SweepPoint:
    axis: str
    value: object
    report: ExperimentReport | None = None
    skipped: str | None = None


def _axis_config(config, axis, value):
    if axis == "ensemble_size":
        return replace(config, channels=int(value))
    if axis == "pca_dim":
        return replace(config, pca_dim=int(value))
    if axis == "weighting":
        return replace(config, weighting=str(value))
    raise InvalidArgumentError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def parse_axis_values(axis, text):
    items = [v.strip() for v in text.split(",") if v.strip()]
    if axis == "weighting":
        return items
    if axis not in AXES:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    try:
        return [int(v) for v in items]
    except ValueError as exc:
        raise InvalidArgumentError(f"{axis} values must be integers: {text!r}") from exc


def sweep(config, axis, values, data=None):
    """One report per value, all sharing the same seeds and data."""
    if axis not in AXES:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    data = data if data is not None else load_data(config)
    points = []
    for value in values:
        try:
            point_config = _axis_config(config, axis, value)
        except InvalidArgumentError as exc:
            points.append(SweepPoint(axis, value, skipped=str(exc)))
            continue
        reason = check_feasible(point_config, data[0])
        if reason is None:
            try:
                points.append(SweepPoint(axis, value, report=run_experiment(point_config, data)))
                continue
            except (RankError, NumericError) as exc:
                reason = str(exc)
        log.warning("skipping %s=%s: %s", axis, value, reason)
        points.append(SweepPoint(axis, value, skipped=reason))
    return points


def _rows(obj):
    if isinstance(obj, ExperimentReport):
        return [SweepPoint("none", "", report=obj)]
    return list(obj)


def _point_dict(point):
    d = {"axis": point.axis, "value": point.value, "skipped": point.skipped}
    d["report"] = point.report.to_dict() if point.report is not None else None
    return d


def emit_report(obj, fmt="human", include_timing=False):
    """Render a report or a list of sweep points as bytes.

    Delimited output omits wall-clock timing unless ``include_timing`` is
    set, so that identical runs give identical bytes.
    """
    if fmt not in FORMATS:
        raise InvalidArgumentError(f"format must be one of {FORMATS}, got {fmt!r}")
    points = _rows(obj)
    if fmt == "structured":
        doc = _point_dict(points[0])["report"] if isinstance(obj, ExperimentReport) else \
            {"points": [_point_dict(p) for p in points]}
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    if fmt == "delimited":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = DELIMITED_HEADER + (("seconds",) if include_timing else ())
        writer.writerow(header)
        for p in points:
            if p.report is None:
                row = [p.axis, p.value, "", "", "", f"skipped: {p.skipped}"]
                if include_timing:
                    row.append("")
            else:
                r = p.report
                row = [p.axis, p.value, f"{r.mean_accuracy:.6f}", f"{r.std_accuracy:.6f}",
                       len(r.repeat_accuracies), "ok"]
                if include_timing:
                    row.append(f"{r.timings.get('total', 0.0):.6f}")
            writer.writerow(row)
        return buf.getvalue().encode()
    return _human(obj, points, include_timing).encode()


def _human(obj, points, include_timing):
    lines = []
    if isinstance(obj, ExperimentReport):
        r = obj
        lines.append(f"accuracy      {r.accuracy:.6f}  ({r.correct}/{r.total})")
        lines.append(f"mean +- std   {r.mean_accuracy:.6f} +- {r.std_accuracy:.6f} over {len(r.repeat_accuracies)} repeat(s)")
        lines.append("per-class accuracy:")
        width = max(len(n) for n in r.class_names)
        for name, acc in zip(r.class_names, r.per_class_accuracy):
            lines.append(f"  {name:<{width}}  {acc:.6f}")
        if include_timing:
            lines.append("timings (s): " + ", ".join(f"{k}={v:.3f}" for k, v in r.timings.items()))
        return "\n".join(lines) + "\n"
    lines.append(f"{'axis':<14} {'value':>10} {'mean_acc':>10} {'std':>10}  status")
    for p in points:
        if p.report is None:
            lines.append(f"{p.axis:<14} {str(p.value):>10} {'-':>10} {'-':>10}  skipped: {p.skipped}")
        else:
            lines.append(f"{p.axis:<14} {str(p.value):>10} {p.report.mean_accuracy:>10.6f} "
                         f"{p.report.std_accuracy:>10.6f}  ok")
    return "\n".join(lines) + "\n"
