"""CSV ingestion, preprocessing, MNAR corruption helpers, and the plain-text
serialization formats for models, classifiers, and missingness functions.

CSV is the single interchange format: a header row, numeric fields, a binary
label column, and a configurable token (default "NA", empty fields allowed)
for missing entries.  Floats are written with ``repr`` so round-trips are
lossless.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import (
    ConstantProb,
    Dataset,
    DataError,
    EPS_PHI,
    FeatureMap,
    HalfspaceIndicator,
    LogLinearRatioModel,
    LogisticScalar,
    MissingnessFunction,
    Zero,
)
from .naive_bayes import NaiveBayesRatioModel
from .np_classify import NpClassifier, ThresholdResult

# ---------------------------------------------------------------------------
# CSV ingestion / emission
# ---------------------------------------------------------------------------


def _parse_field(
    text: str, missing_token: str, allow_empty: bool, row_num: int, col: str
) -> float:
    t = text.strip()
    if t == missing_token or (allow_empty and t == ""):
        return math.nan
    try:
        v = float(t)
    except ValueError:
        raise DataError(
            f"row {row_num}: field {col!r} is neither numeric nor the "
            f"missing token {missing_token!r}: {text!r}"
        ) from None
    if not math.isfinite(v):
        raise DataError(f"row {row_num}: field {col!r} must be finite, got {text!r}")
    return v


def read_dataset_csv(
    path,
    missing_token: str = "NA",
    label_column: str = "label",
    allow_empty: bool = True,
) -> tuple[Dataset, Dataset]:
    """Read a labelled CSV into a (class0, class1) dataset pair."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty CSV: a header row is required") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
        feature_cols = [(i, name) for i, name in enumerate(header) if i != label_idx]
        rows0, rows1 = [], []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"row {row_num}: expected {len(header)} fields, got {len(row)}"
                )
            label_text = row[label_idx].strip()
            if label_text not in ("0", "1"):
                raise DataError(
                    f"row {row_num}: label must be 0 or 1, got {label_text!r}"
                )
            values = [
                _parse_field(row[i], missing_token, allow_empty, row_num, name)
                for i, name in feature_cols
            ]
            (rows1 if label_text == "1" else rows0).append(values)
    if not rows0 or not rows1:
        raise DataError("both classes must be present in the file")
    return (
        Dataset(np.array(rows0, dtype=float), 0),
        Dataset(np.array(rows1, dtype=float), 1),
    )


def write_dataset_csv(
    path,
    class0: Dataset,
    class1: Dataset,
    missing_token: str = "NA",
    feature_names: list[str] | None = None,
    label_column: str = "label",
) -> None:
    d = class0.dim
    if class1.dim != d:
        raise DataError("class dimensions differ")
    names = feature_names or [f"f{j}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [label_column])
        for ds in (class0, class1):
            for row in ds.values:
                writer.writerow(
                    [missing_token if math.isnan(v) else repr(float(v)) for v in row]
                    + [str(ds.label)]
                )


def write_table_csv(path, rows: list[dict], meta: dict | None = None) -> None:
    """Write experiment rows with a leading comment line recording the config."""
    if not rows:
        raise DataError("no rows to write")
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        if meta is not None:
            items = " ".join(f"{k}={v}" for k, v in sorted(meta.items()))
            fh.write(f"# {items}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: (repr(float(v)) if isinstance(v, float) else v)
                    for k, v in row.items()
                }
            )


def read_table_csv(path) -> tuple[list[dict], dict]:
    """Read a table written by ``write_table_csv`` (comment line optional)."""
    meta: dict = {}
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for item in first[1:].strip().split():
                if "=" in item:
                    k, v = item.split("=", 1)
                    meta[k] = v
            body = fh.read()
        else:
            body = first + fh.read()
    reader = csv.DictReader(io.StringIO(body))
    rows = []
    for row in reader:
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = int(v)
            except (TypeError, ValueError):
                try:
                    parsed[k] = float(v)
                except (TypeError, ValueError):
                    parsed[k] = v
        rows.append(parsed)
    return rows, meta


def config_hash(config: dict) -> str:
    """Short stable digest of a configuration mapping."""
    payload = json.dumps(
        {str(k): str(v) for k, v in config.items()}, sort_keys=True
    ).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Preprocessing: trim -> impute -> normalize
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransformRecord:
    """Per-column preprocessing state fitted on training data, reusable on
    calibration/test data."""

    trim_lo: np.ndarray  # -inf where unbounded
    trim_hi: np.ndarray
    impute_values: np.ndarray  # nan where imputation is off
    shift: np.ndarray  # 0 where normalization is off
    scale: np.ndarray  # 1 where normalization is off


def _apply_record(values: np.ndarray, rec: TransformRecord) -> np.ndarray:
    out = values.copy()
    out = np.clip(out, rec.trim_lo, rec.trim_hi)
    for j in range(out.shape[1]):
        if not math.isnan(rec.impute_values[j]):
            col = out[:, j]
            col[np.isnan(col)] = rec.impute_values[j]
    out = (out - rec.shift) / rec.scale
    return out


def preprocess(
    class0: Dataset,
    class1: Dataset,
    trim: dict[int, tuple[float, float]] | None = None,
    mean_impute: bool = False,
    normalize: bool = False,
) -> tuple[Dataset, Dataset, TransformRecord]:
    """Ordered pipeline trim -> impute -> normalize on a training pair.

    Means and scales are computed on the training pair only (pooled over both
    classes, observed entries); apply the returned record to calibration or
    test data with ``apply_transform``.  Mean imputation fills the entries
    missing at this point in the pipeline -- run it before any synthetic
    corruption so induced missing marks stay missing for the estimators.
    """
    d = class0.dim
    if class1.dim != d:
        raise DataError("class dimensions differ")
    trim = trim or {}
    for j in trim:
        if not 0 <= j < d:
            raise DataError(f"trim bound for column {j} outside dimension {d}")
    trim_lo = np.full(d, -np.inf)
    trim_hi = np.full(d, np.inf)
    for j, (lo, hi) in trim.items():
        trim_lo[j], trim_hi[j] = lo, hi
    pooled = np.vstack([class0.values, class1.values])
    pooled = np.clip(pooled, trim_lo, trim_hi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        col_means = np.nanmean(pooled, axis=0)
    impute_values = col_means if mean_impute else np.full(d, np.nan)
    if mean_impute and np.isnan(col_means).any():
        raise DataError("cannot mean-impute a column with no observed entries")
    if normalize:
        filled = pooled.copy()
        if mean_impute:
            for j in range(d):
                col = filled[:, j]
                col[np.isnan(col)] = col_means[j]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            shift = np.nanmean(filled, axis=0)
            scale = np.nanstd(filled, axis=0, ddof=0)
        flat = scale <= 0.0
        if flat.any():
            warnings.warn(
                f"zero-variance column(s) {np.flatnonzero(flat).tolist()} left "
                "unscaled",
                RuntimeWarning,
                stacklevel=2,
            )
            scale = np.where(flat, 1.0, scale)
    else:
        shift = np.zeros(d)
        scale = np.ones(d)
    rec = TransformRecord(
        trim_lo=trim_lo,
        trim_hi=trim_hi,
        impute_values=impute_values,
        shift=shift,
        scale=scale,
    )
    return (
        Dataset(_apply_record(class0.values, rec), 0),
        Dataset(_apply_record(class1.values, rec), 1),
        rec,
    )


def apply_transform(dataset: Dataset, rec: TransformRecord) -> Dataset:
    return Dataset(_apply_record(dataset.values, rec), dataset.label)


# ---------------------------------------------------------------------------
# Corruption
# ---------------------------------------------------------------------------


def corrupt_dataset(
    dataset: Dataset, phi: MissingnessFunction, seed: int | np.random.Generator
) -> Dataset:
    """Apply a missingness function to one dataset, deterministic per seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Dataset(phi.corrupt(dataset.values, rng), dataset.label)


def solve_target_proportion(
    column: np.ndarray, target: float, slope: float = 1.0, tau: int = -1
) -> LogisticScalar:
    """Find the logistic intercept whose expected missing fraction on the
    column matches ``target`` to within 0.005 (by bisection)."""
    if not 0.0 <= target < 1.0 - EPS_PHI:
        raise DataError(
            f"target proportion {target} is unattainable (must be < {1 - EPS_PHI})"
        )
    column = np.asarray(column, dtype=float)
    column = column[~np.isnan(column)]
    if column.size == 0:
        raise DataError("cannot calibrate a proportion on an all-missing column")

    def realized(a0: float) -> float:
        return float(LogisticScalar(a0=a0, a1=slope, tau=tau).prob(column).mean())

    # phi is monotone in a0 (direction depends on tau); expand until bracketed.
    lo, hi = -1.0, 1.0
    for _ in range(200):
        f_lo, f_hi = realized(lo), realized(hi)
        if min(f_lo, f_hi) <= target <= max(f_lo, f_hi):
            break
        lo *= 2.0
        hi *= 2.0
        if hi > 1e12:
            raise DataError("failed to bracket the target proportion")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = realized(mid)
        if abs(f_mid - target) <= 0.0025:
            return LogisticScalar(a0=mid, a1=slope, tau=tau)
        if (f_mid < target) == (realized(lo) < target):
            lo = mid
        else:
            hi = mid
    raise DataError("bisection failed to reach the target proportion")


def rwe_preset(
    dataset: Dataset, rng: np.random.Generator
) -> MissingnessFunction:
    """Per-feature logistic missingness with a random tail per iteration.

    For each feature j: tau_j uniform on {-1, +1}, intercept -mean_j/sd_j and
    slope 1/sd_j computed from the observed entries of the column, so the
    missing probability at the column mean is 1/2.
    """
    entries = []
    for j in range(dataset.dim):
        col = dataset.column(j)
        col = col[~np.isnan(col)]
        if col.size == 0:
            raise DataError(f"column {j} has no observed entries")
        mu = float(col.mean())
        sd = float(col.std(ddof=0))
        if sd <= 0.0:
            warnings.warn(
                f"column {j} has zero spread; using unit slope", RuntimeWarning
            )
            sd = 1.0
        tau = -1 if rng.random() < 0.5 else 1
        entries.append(LogisticScalar(a0=-mu / sd, a1=1.0 / sd, tau=tau))
    return MissingnessFunction.per_coordinate(entries)


# ---------------------------------------------------------------------------
# Plain-text key-value formats
# ---------------------------------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for line_num, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise DataError(f"config line {line_num}: expected 'key = value'")
            k, v = stripped.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _write_kv(fh, items) -> None:
    for k, v in items:
        fh.write(f"{k} = {v}\n")


def _fmt_floats(a) -> str:
    return ",".join(repr(float(x)) for x in np.atleast_1d(a))


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",")], dtype=float)


def missingness_to_text(phi: MissingnessFunction) -> str:
    if phi.joint:
        raise DataError(
            "only per-coordinate missingness functions have a text form"
        )
    lines = [f"dims = {phi.dim}"]
    for j, e in enumerate(phi.entries):
        if isinstance(e, Zero):
            lines.append(f"{j} = zero")
        elif isinstance(e, ConstantProb):
            lines.append(f"{j} = constant {repr(e.p)}")
        elif isinstance(e, LogisticScalar):
            lines.append(f"{j} = logistic {repr(e.a0)} {repr(e.a1)} {e.tau}")
        elif isinstance(e, HalfspaceIndicator) and e.direction.shape == (1,):
            side = "above" if e.direction[0] > 0 else "below"
            level = e.level / e.direction[0]
            lines.append(f"{j} = step {repr(float(level))} {repr(e.p)} {side}")
        else:
            raise DataError(f"entry {j} has no text form: {type(e).__name__}")
    return "\n".join(lines) + "\n"


def missingness_from_text(text: str) -> MissingnessFunction:
    entries_by_index: dict[int, object] = {}
    dims = None
    for line_num, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, _, rest = stripped.partition("=")
        key, rest = key.strip(), rest.strip()
        if key == "dims":
            dims = int(rest)
            continue
        j = int(key)
        parts = rest.split()
        kind = parts[0]
        if kind == "zero":
            entries_by_index[j] = Zero()
        elif kind == "constant":
            entries_by_index[j] = ConstantProb(p=float(parts[1]))
        elif kind == "logistic":
            entries_by_index[j] = LogisticScalar(
                a0=float(parts[1]), a1=float(parts[2]), tau=int(parts[3])
            )
        elif kind == "step":
            level, p, side = float(parts[1]), float(parts[2]), parts[3]
            direction = np.array([1.0 if side == "above" else -1.0])
            entries_by_index[j] = HalfspaceIndicator(
                direction=direction,
                level=level if side == "above" else -level,
                p=p,
            )
        else:
            raise DataError(f"line {line_num}: unknown missingness kind {kind!r}")
    if dims is None:
        dims = (max(entries_by_index) + 1) if entries_by_index else 0
    if dims < 1:
        raise DataError("missingness file declares no coordinates")
    entries = [entries_by_index.get(j, Zero()) for j in range(dims)]
    return MissingnessFunction.per_coordinate(entries)


def _feature_map_items(fmap: FeatureMap, prefix: str = "") -> list[tuple[str, str]]:
    if fmap.kind == "custom":
        raise DataError("custom feature maps are not serializable")
    return [
        (f"{prefix}feature_map", fmap.kind),
        (f"{prefix}input_dim", str(fmap.input_dim)),
    ]


def _feature_map_from(kind: str, input_dim: int) -> FeatureMap:
    if kind == "identity":
        return FeatureMap.identity(input_dim)
    if kind == "identity-squares":
        return FeatureMap.identity_plus_squares(input_dim)
    raise DataError(f"unknown feature map kind {kind!r}")


def model_to_text(model) -> str:
    buf = io.StringIO()
    if isinstance(model, LogLinearRatioModel):
        items = [("kind", "log-linear")]
        items += _feature_map_items(model.feature_map)
        items.append(("theta", _fmt_floats(model.theta)))
        if model.normalizer is not None:
            items.append(("normalizer", repr(float(model.normalizer))))
        items.append(("converged", str(model.converged).lower()))
        _write_kv(buf, items)
    elif isinstance(model, NaiveBayesRatioModel):
        items = [("kind", "naive-bayes"), ("dims", str(model.dim))]
        for j, sub in enumerate(model.per_dim):
            items += _feature_map_items(sub.feature_map, prefix=f"dim{j}.")
            items.append((f"dim{j}.theta", _fmt_floats(sub.theta)))
            if sub.normalizer is not None:
                items.append((f"dim{j}.normalizer", repr(float(sub.normalizer))))
            items.append((f"dim{j}.converged", str(sub.converged).lower()))
        _write_kv(buf, items)
    else:
        raise DataError(f"cannot serialize model of type {type(model).__name__}")
    return buf.getvalue()


def _kv_from_text(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        k, _, v = stripped.partition("=")
        out[k.strip()] = v.strip()
    return out


def model_from_text(text: str):
    kv = _kv_from_text(text)
    kind = kv.get("kind")
    if kind == "log-linear":
        fmap = _feature_map_from(kv["feature_map"], int(kv["input_dim"]))
        return LogLinearRatioModel(
            theta=_parse_floats(kv["theta"]),
            feature_map=fmap,
            normalizer=float(kv["normalizer"]) if "normalizer" in kv else None,
            converged=kv.get("converged", "true") == "true",
        )
    if kind == "naive-bayes":
        dims = int(kv["dims"])
        subs = []
        for j in range(dims):
            fmap = _feature_map_from(
                kv[f"dim{j}.feature_map"], int(kv[f"dim{j}.input_dim"])
            )
            subs.append(
                LogLinearRatioModel(
                    theta=_parse_floats(kv[f"dim{j}.theta"]),
                    feature_map=fmap,
                    normalizer=float(kv[f"dim{j}.normalizer"])
                    if f"dim{j}.normalizer" in kv
                    else None,
                    converged=kv.get(f"dim{j}.converged", "true") == "true",
                )
            )
        return NaiveBayesRatioModel(per_dim=tuple(subs))
    raise DataError(f"unknown model kind {kind!r}")


def classifier_to_text(clf: NpClassifier) -> str:
    if clf.model is None:
        raise DataError("only classifiers built from ratio models are serializable")
    buf = io.StringIO()
    p = clf.provenance
    _write_kv(
        buf,
        [
            ("kind", "np-classifier"),
            ("method", clf.method),
            ("alpha", repr(float(clf.alpha))),
            ("delta", repr(float(clf.delta))),
            ("transform", clf.transform),
            ("threshold", repr(float(clf.threshold))),
            ("i_star", "none" if p.order_index is None else str(p.order_index)),
            ("margin", "none" if p.margin is None else repr(float(p.margin))),
            ("margin_constant", repr(float(clf.margin_constant))),
            ("degenerate", str(p.degenerate).lower()),
            ("all_missing", str(p.all_missing).lower()),
            ("non_paper_margin", str(clf.non_paper).lower()),
            ("calibration_size", str(p.calibration_size)),
        ],
    )
    for line in model_to_text(clf.model).splitlines():
        k, _, v = line.partition(" = ")
        buf.write(f"model.{k} = {v}\n")
    return buf.getvalue()


def classifier_from_text(text: str) -> NpClassifier:
    kv = _kv_from_text(text)
    if kv.get("kind") != "np-classifier":
        raise DataError("not a classifier file")
    model_text = "\n".join(
        f"{k[len('model.'):]} = {v}" for k, v in kv.items() if k.startswith("model.")
    )
    model = model_from_text(model_text)
    provenance = ThresholdResult(
        value=float(kv["threshold"]),
        order_index=None if kv["i_star"] == "none" else int(kv["i_star"]),
        degenerate=kv["degenerate"] == "true",
        all_missing=kv["all_missing"] == "true",
        margin=None if kv["margin"] == "none" else float(kv["margin"]),
        calibration_size=int(kv["calibration_size"]),
        method=kv["method"],
    )
    return NpClassifier(
        score_fn=model.log_ratio,
        threshold=float(kv["threshold"]),
        alpha=float(kv["alpha"]),
        delta=float(kv["delta"]),
        method=kv["method"],
        provenance=provenance,
        transform=kv.get("transform", "log"),
        margin_constant=float(kv.get("margin_constant", "16.0")),
        model=model,
    )
