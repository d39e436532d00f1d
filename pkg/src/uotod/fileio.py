"""Problem, cost and plan file formats.

Problem JSON::

    {"predictions": [{"box": [cx, cy, w, h], "class_probs": [...]}, ...],
     "ground_truth": [{"box": [...], "class_id": k}, ...],
     "weights": {"lambda_prob": ..., ...}}

A file may also hold a list of such objects. Cost CSV is an ``Np x M``
matrix under a one-line header; a last header field ``background`` marks
the background column. Plan JSON stores every entry as a hex float so the
round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cost import CostMatrix, CostWeights, GroundTruth, Prediction, build_cost
from .geometry import Box

__all__ = [
    "problem_to_dict",
    "problem_from_dict",
    "load_problems",
    "save_problems",
    "read_cost_csv",
    "write_cost_csv",
    "plan_to_json",
    "plan_from_json",
    "write_plan_csv",
]

BACKGROUND_HEADER = "background"


def problem_to_dict(preds, gts, weights: CostWeights | None = None) -> dict:
    w = CostWeights() if weights is None else weights
    return {
        "predictions": [
            {"box": p.box.as_array().tolist(), "class_probs": p.class_probs.tolist()} for p in preds
        ],
        "ground_truth": [{"box": g.box.as_array().tolist(), "class_id": int(g.class_id)} for g in gts],
        "weights": asdict(w),
    }


def problem_from_dict(d: dict):
    """Return ``(predictions, ground_truths, weights)``."""
    try:
        preds = [Prediction(np.asarray(p["class_probs"], float), Box(*p["box"])) for p in d["predictions"]]
        gts = [GroundTruth(g["class_id"], Box(*g["box"])) for g in d.get("ground_truth", [])]
        weights = CostWeights(**d["weights"]) if d.get("weights") else CostWeights()
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed problem: {exc!r}") from exc
    return preds, gts, weights


def load_problems(path) -> list[CostMatrix]:
    """Cost matrices of every problem in a problem JSON file."""
    data = json.loads(Path(path).read_text())
    items = data if isinstance(data, list) else [data]
    out = []
    for d in items:
        preds, gts, weights = problem_from_dict(d)
        out.append(build_cost(preds, gts, weights))
    return out


def save_problems(path, problems: list[dict]) -> None:
    payload = problems[0] if len(problems) == 1 else problems
    Path(path).write_text(json.dumps(payload, indent=1))


def read_cost_csv(path) -> CostMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header line and at least one row")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cost entry ({exc})") from exc
    if values.ndim != 2 or values.shape[1] != len(header):
        raise ValueError(f"{path}: rows do not match the {len(header)}-column header")
    return CostMatrix(values, background=header[-1].lower() == BACKGROUND_HEADER)


def write_cost_csv(path, cost: CostMatrix) -> None:
    header = [f"gt{j}" for j in range(cost.n_gt)]
    if cost.background:
        header.append(BACKGROUND_HEADER)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([repr(float(x)) for x in row] for row in cost.values)


def plan_to_json(plan: np.ndarray, **extra) -> str:
    p = np.asarray(plan, dtype=float)
    payload = {"shape": list(p.shape), "plan": [[float(x).hex() for x in row] for row in p]}
    payload.update(extra)
    return json.dumps(payload, indent=1)


def plan_from_json(text: str) -> np.ndarray:
    d = json.loads(text)
    plan = np.array([[float.fromhex(x) for x in row] for row in d["plan"]], dtype=float)
    return plan.reshape(d["shape"])


def write_plan_csv(plan: np.ndarray, background: bool = True) -> str:
    p = np.asarray(plan, dtype=float)
    n_gt = p.shape[1] - int(background)
    header = [f"gt{j}" for j in range(n_gt)] + ([BACKGROUND_HEADER] if background else [])
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows([repr(float(x)) for x in row] for row in p)
    return buf.getvalue()
