"""Simulated-interaction evaluation: click placement, NoC metrics, baselines.

The simulator starts from an empty prediction and repeatedly clicks the
center of the largest error region until every IoU target is tracked or the
click budget runs out.  "Center" is the pixel of the largest 4-connected
error component farthest from the component's complement (exact Euclidean
distance transform); all ties resolve to the smallest flattened index so
runs are reproducible bit for bit.

Two training-free baselines share the downstream JBU/flood-fill/NN stages
and differ only in the low-res map: the negated attention row, or the
symmetric KL divergence between attention rows.
"""

from __future__ import annotations

import csv
import shutil
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .aggregation import TransitionMatrix, aggregate
from .errors import ValidationError
from .jbu import GuideImage, guide_from_array
from .markov import MarkovParams, apply_temperature
from .segmenter import (
    Label,
    PromptPoint,
    SessionContext,
    add_point,
    build_m2n2_session,
    segment,
)
from .tensor_io import AttentionStack, read_attention_file

KL_CLIP_LO = 1e-5
KL_CLIP_HI = 1.0
_KL_CHUNK_ROWS = 1024


@dataclass(frozen=True)
class EvalConfig:
    max_clicks: int = 20
    iou_targets: tuple[float, ...] = (0.85, 0.90)
    # stop early once all targets are met (NoC unaffected, IoU curve truncated)
    stop_at_targets: bool = False

    def __post_init__(self):
        if self.max_clicks < 1:
            raise ValidationError(f"max_clicks must be >= 1, got {self.max_clicks}")
        for t in self.iou_targets:
            if not 0 < t <= 1:
                raise ValidationError(f"IoU target {t} outside (0, 1]")


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: str
    image_ref: str
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if self.mask.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {self.mask.shape}")


def iou(gt: np.ndarray, pred: np.ndarray) -> float:
    gt = np.asarray(gt, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    union = (gt | pred).sum()
    if union == 0:
        return 1.0
    return float((gt & pred).sum() / union)


def next_click(gt: np.ndarray, pred: np.ndarray) -> PromptPoint:
    """Click at the center of the largest error region.

    Foreground when the region is a false negative, background otherwise.
    The returned point has no session id yet.
    """
    gt = np.asarray(gt, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    if gt.shape != pred.shape:
        raise ValidationError(f"mask shapes differ: {gt.shape} vs {pred.shape}")
    err = gt ^ pred
    if not err.any():
        raise ValidationError("prediction equals ground truth; no error region")

    labels, n = ndimage.label(err)  # default structure is 4-connectivity
    sizes = np.bincount(labels.ravel())[1:]
    cand = np.flatnonzero(sizes == sizes.max()) + 1
    if len(cand) > 1:
        flat = labels.ravel()
        comp = min(cand, key=lambda c: np.flatnonzero(flat == c)[0])
    else:
        comp = int(cand[0])
    inside = labels == comp

    if inside.all():
        dist = np.where(inside, np.inf, -1.0)
    else:
        dist = ndimage.distance_transform_edt(inside)
    idx = int(dist.argmax())  # first occurrence = smallest flattened index
    y, x = divmod(idx, gt.shape[1])
    lab = Label.FOREGROUND if gt[y, x] else Label.BACKGROUND
    return PromptPoint(x=int(x), y=int(y), label=int(lab), id=-1)


@dataclass(frozen=True)
class SimulationResult:
    noc: dict[float, int]
    ious: tuple[float, ...]
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def simulate_instance(record, callback, config: EvalConfig | None = None) -> SimulationResult:
    """Drive one instance's click loop; callback maps a point list to a mask.

    ``record`` is an InstanceRecord or a bare ground-truth mask.  Callback
    exceptions abort the instance into an error record instead of raising.
    """
    config = config or EvalConfig()
    gt = np.asarray(record.mask if hasattr(record, "mask") else record, dtype=bool)
    pred = np.zeros_like(gt)
    points: list[PromptPoint] = []
    ious: list[float] = []
    noc = {t: config.max_clicks for t in config.iou_targets}
    unmet = set(config.iou_targets)
    if (gt == pred).all():  # nothing to segment; zero clicks suffice
        return SimulationResult(noc={t: 0 for t in config.iou_targets}, ious=())

    try:
        for k in range(1, config.max_clicks + 1):
            click = next_click(gt, pred)
            points.append(replace(click, id=len(points)))
            pred = np.asarray(callback(list(points)), dtype=bool)
            if pred.shape != gt.shape:
                raise ValidationError(
                    f"callback returned shape {pred.shape}, expected {gt.shape}"
                )
            val = iou(gt, pred)
            ious.append(val)
            for t in sorted(unmet):
                if val >= t:
                    noc[t] = k
                    unmet.discard(t)
            if (gt == pred).all() or (config.stop_at_targets and not unmet):
                break
    except Exception as e:  # error record, not a crash
        return SimulationResult(noc=noc, ious=tuple(ious), error=f"{type(e).__name__}: {e}")
    return SimulationResult(noc=noc, ious=tuple(ious))


def session_callback(ctx: SessionContext):
    """Adapt a session to the simulator's point-list-to-mask contract.

    Extends the session incrementally when the new list is an extension of
    the current one; otherwise rebuilds from scratch.
    """

    def run(pts: list[PromptPoint]) -> np.ndarray:
        k = len(ctx.points)
        if len(pts) < k or pts[:k] != ctx.points:
            ctx.points.clear()
            ctx.cache.clear()
            k = 0
        for p in pts[k:]:
            add_point(ctx, p)
        return segment(ctx).mask

    return run


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


class BaselineKind(Enum):
    ATTENTION_NN = "attention-nn"
    KL_NN = "kl-nn"


BASELINE_TEMPERATURE = {BaselineKind.ATTENTION_NN: 10.0, BaselineKind.KL_NN: 2.0}


def baseline_map(kind: BaselineKind, A: TransitionMatrix, cell: int) -> np.ndarray:
    """Low-res distance map for one cell under a baseline distance.

    attention-nn: the negated attention row, min-max scaled to [0, 1] (the
    most-attended cell has distance 0).  kl-nn: symmetric KL divergence
    between the cell's clipped row and every other clipped row, min-max
    normalized.  Both skip IPF; the matrix is row stochastic with the
    baseline's temperature already applied.
    """
    if not 0 <= cell < A.n:
        raise ValidationError(f"cell {cell} out of range [0, {A.n})")
    if kind is BaselineKind.ATTENTION_NN:
        d = -A.data[cell].astype(np.float64)
    else:
        p = np.clip(A.data[cell].astype(np.float64), KL_CLIP_LO, KL_CLIP_HI)
        logp = np.log(p)
        d = np.empty(A.n, dtype=np.float64)
        for j0 in range(0, A.n, _KL_CHUNK_ROWS):
            j1 = min(j0 + _KL_CHUNK_ROWS, A.n)
            q = np.clip(A.data[j0:j1].astype(np.float64), KL_CLIP_LO, KL_CLIP_HI)
            d[j0:j1] = ((p - q) * (logp - np.log(q))).sum(axis=1)
    d -= d.min()
    peak = d.max()
    if peak > 0:
        d /= peak
    return d.reshape(A.h, A.w)


def build_baseline_session(
    kind: BaselineKind,
    stack: AttentionStack,
    guide: GuideImage,
    params: MarkovParams | None = None,
    weights: dict[str, float] | None = None,
    lambda_grid_size: int = 256,
) -> SessionContext:
    """Session whose low-res maps come from a baseline distance, not the chain."""
    base = MarkovParams() if params is None else params
    params = replace(base, temperature=BASELINE_TEMPERATURE[kind])
    A = aggregate(stack, weights)
    A = apply_temperature(A, params.temperature, params.epsilon_floor)

    def source(ctx: SessionContext, cell: int):
        return baseline_map(kind, ctx.matrix, cell), 0

    return SessionContext(
        guide=guide,
        matrix=A,
        params=params,
        lambda_grid_size=lambda_grid_size,
        map_source=source,
    )


METHODS = ("m2n2", BaselineKind.ATTENTION_NN.value, BaselineKind.KL_NN.value)


def build_method_session(
    method: str,
    stack: AttentionStack,
    guide: GuideImage,
    params: MarkovParams | None = None,
    weights: dict[str, float] | None = None,
) -> SessionContext:
    if method == "m2n2":
        return build_m2n2_session(stack, guide, params=params, weights=weights)
    for kind in BaselineKind:
        if method == kind.value:
            return build_baseline_session(kind, stack, guide, params=params, weights=weights)
    raise ValidationError(f"unknown method {method!r}, expected one of {METHODS}")


# ---------------------------------------------------------------------------
# Dataset layout and benchmark driver
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ("instance_id", "image", "mask", "attn")


@dataclass(frozen=True)
class InstanceOutcome:
    instance_id: str
    noc: dict[float, int]
    ious: tuple[float, ...]
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class BenchmarkReport:
    method: str
    config: EvalConfig
    outcomes: tuple[InstanceOutcome, ...]

    @property
    def failures(self) -> tuple[InstanceOutcome, ...]:
        return tuple(o for o in self.outcomes if not o.ok)

    def mean_noc(self, target: float) -> float:
        vals = [o.noc[target] for o in self.outcomes if o.ok]
        return float(np.mean(vals)) if vals else float("nan")

    def noc_histogram(self, target: float) -> np.ndarray:
        """Count of instances per click count 1..max_clicks (failures excluded)."""
        out = np.zeros(self.config.max_clicks, dtype=np.int64)
        for o in self.outcomes:
            if o.ok:
                out[min(o.noc[target], self.config.max_clicks) - 1] += 1
        return out

    def miou_curve(self) -> np.ndarray:
        """Mean IoU after click k over instances; short curves hold their last value."""
        out = np.zeros(self.config.max_clicks, dtype=np.float64)
        done = [o for o in self.outcomes if o.ok and o.ious]
        if not done:
            return out
        for o in done:
            vals = np.asarray(o.ious)
            padded = np.full(self.config.max_clicks, vals[-1])
            padded[: len(vals)] = vals
            out += padded
        return out / len(done)


def load_manifest(dataset_dir) -> list[dict[str, str]]:
    root = Path(dataset_dir)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise ValidationError(f"no {MANIFEST_NAME} in {root}")
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"manifest missing column(s) {sorted(missing)}")
        for row in reader:
            rows.append({k: row[k] for k in MANIFEST_FIELDS})
    return rows


def load_mask_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        arr = np.array(img)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    return arr > 0


def load_image(path) -> GuideImage:
    from PIL import Image

    with Image.open(path) as img:
        return guide_from_array(np.array(img.convert("RGB")))


def run_benchmark(
    dataset_dir,
    method: str,
    config: EvalConfig | None = None,
    params: MarkovParams | None = None,
    progress=None,
) -> BenchmarkReport:
    """Evaluate one method over every manifest instance.

    Unreadable instances become error outcomes; the report keeps going.
    ``progress`` (optional) is called with (index, total, outcome).
    """
    config = config or EvalConfig()
    root = Path(dataset_dir)
    rows = load_manifest(root)
    outcomes: list[InstanceOutcome] = []
    stacks: dict[str, AttentionStack] = {}  # attn path -> stack (images repeat)
    for i, row in enumerate(rows):
        iid = row["instance_id"]
        try:
            guide = load_image(root / row["image"])
            gt = load_mask_png(root / row["mask"])
            if gt.shape != (guide.H, guide.W):
                raise ValidationError(
                    f"mask {gt.shape} does not match image {(guide.H, guide.W)}"
                )
            attn_path = str(root / row["attn"])
            if attn_path not in stacks:
                stacks[attn_path] = read_attention_file(attn_path)
            ctx = build_method_session(method, stacks[attn_path], guide, params=params)
            record = InstanceRecord(instance_id=iid, image_ref=row["image"], mask=gt)
            sim = simulate_instance(record, session_callback(ctx), config)
            outcome = InstanceOutcome(iid, sim.noc, sim.ious, sim.error)
        except Exception as e:
            outcome = InstanceOutcome(iid, {t: config.max_clicks for t in config.iou_targets}, (), f"{type(e).__name__}: {e}")
        outcomes.append(outcome)
        if progress is not None:
            progress(i + 1, len(rows), outcome)
    return BenchmarkReport(method=method, config=config, outcomes=tuple(outcomes))


def write_report(report: BenchmarkReport, out_csv) -> None:
    """Per-instance CSV plus derived *_hist.csv and *_miou.csv next to it."""
    out = Path(out_csv)
    targets = report.config.iou_targets
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["instance_id", "error"]
            + [f"noc@{t:g}" for t in targets]
            + [f"iou_click_{k}" for k in range(1, report.config.max_clicks + 1)]
        )
        for o in report.outcomes:
            ious = list(o.ious) + [""] * (report.config.max_clicks - len(o.ious))
            writer.writerow([o.instance_id, o.error or ""] + [o.noc[t] for t in targets] + ious)
        writer.writerow(
            ["MEAN", f"{len(report.failures)} failed"]
            + [f"{report.mean_noc(t):.4f}" for t in targets]
            + list(report.miou_curve().round(6))
        )

    hist_path = out.with_name(out.stem + "_hist.csv")
    with open(hist_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clicks"] + [f"count@{t:g}" for t in targets])
        hists = {t: report.noc_histogram(t) for t in targets}
        for k in range(report.config.max_clicks):
            writer.writerow([k + 1] + [int(hists[t][k]) for t in targets])

    miou_path = out.with_name(out.stem + "_miou.csv")
    with open(miou_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clicks", "mean_iou"])
        for k, v in enumerate(report.miou_curve(), start=1):
            writer.writerow([k, f"{v:.6f}"])


def format_report(report: BenchmarkReport) -> str:
    targets = report.config.iou_targets
    lines = [
        f"method: {report.method}   instances: {len(report.outcomes)}"
        f"   failures: {len(report.failures)}"
    ]
    for t in targets:
        lines.append(f"  mean NoC@{t:g}: {report.mean_noc(t):.3f}")
    for o in report.failures:
        lines.append(f"  FAILED {o.instance_id}: {o.error}")
    return "\n".join(lines)


def import_davis(src, dst, stride: int = 10) -> int:
    """Convert a DAVIS-style tree into the manifest layout; returns instance count.

    Expects <src>/JPEGImages/480p/<seq>/NNNNN.jpg and
    <src>/Annotations/480p/<seq>/NNNNN.png with object ids as positive pixel
    values.  Every ``stride``-th frame of each sequence is taken and each
    object id becomes one instance.  The manifest's attn column points at
    attn/<seq>_<frame>.atn1, to be produced by an exporter.
    """
    from PIL import Image

    src = Path(src)
    dst = Path(dst)
    ann_root = src / "Annotations" / "480p"
    img_root = src / "JPEGImages" / "480p"
    if not ann_root.is_dir():
        raise ValidationError(f"{ann_root} not found; not a DAVIS-style tree")

    (dst / "images").mkdir(parents=True, exist_ok=True)
    (dst / "masks").mkdir(exist_ok=True)
    (dst / "attn").mkdir(exist_ok=True)
    rows = []
    for seq_dir in sorted(p for p in ann_root.iterdir() if p.is_dir()):
        frames = sorted(seq_dir.glob("*.png"))
        for frame_path in frames[::stride]:
            stem = f"{seq_dir.name}_{frame_path.stem}"
            img_src = img_root / seq_dir.name / (frame_path.stem + ".jpg")
            if not img_src.exists():
                continue
            with Image.open(frame_path) as ann:
                ids = np.array(ann)
            if ids.ndim == 3:
                ids = ids[:, :, 0]
            shutil.copyfile(img_src, dst / "images" / (stem + ".jpg"))
            for obj in np.unique(ids):
                if obj == 0:
                    continue
                mask = (ids == obj).astype(np.uint8) * 255
                mask_name = f"{stem}_{int(obj)}.png"
                Image.fromarray(mask).save(dst / "masks" / mask_name)
                rows.append(
                    {
                        "instance_id": f"{stem}_{int(obj)}",
                        "image": f"images/{stem}.jpg",
                        "mask": f"masks/{mask_name}",
                        "attn": f"attn/{stem}.atn1",
                    }
                )
    with open(dst / MANIFEST_NAME, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return len(rows)
