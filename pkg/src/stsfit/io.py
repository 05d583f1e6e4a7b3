"""Heatmap files (``sts-heatmap/1`` JSON) and JSON helpers for reports."""

from __future__ import annotations

import json
import math

import numpy as np

from stsfit.synth import StsHeatmap

FORMAT = "sts-heatmap/1"


class HeatmapFormatError(ValueError):
    pass


def to_jsonable(obj):
    """Plain-Python copy of ``obj``; numpy scalars/arrays become floats/lists, NaN/inf become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    # json renders floats with repr(), the shortest string that round-trips
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=False, ensure_ascii=False,
                      allow_nan=False) + "\n"


def heatmap_to_dict(hm: StsHeatmap) -> dict:
    return {
        "format": FORMAT,
        "currents_a": hm.currents.tolist(),
        "probe_freqs_hz": hm.probe_freqs.tolist(),
        "s21_real": hm.s21.real.tolist(),
        "s21_imag": hm.s21.imag.tolist(),
        "meta": to_jsonable(hm.meta),
    }


def heatmap_from_dict(d: dict) -> StsHeatmap:
    if not isinstance(d, dict):
        raise HeatmapFormatError("top level must be a JSON object")
    if d.get("format") != FORMAT:
        raise HeatmapFormatError(f"format must be {FORMAT!r}, got {d.get('format')!r}")
    try:
        cur = np.asarray(d["currents_a"], dtype=float)
        fp = np.asarray(d["probe_freqs_hz"], dtype=float)
        re = np.asarray(d["s21_real"], dtype=float)
        im = np.asarray(d["s21_imag"], dtype=float)
    except KeyError as exc:
        raise HeatmapFormatError(f"missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise HeatmapFormatError(f"non-numeric or ragged data: {exc}") from exc
    if re.shape != im.shape:
        raise HeatmapFormatError("s21_real and s21_imag differ in shape")
    meta = d.get("meta", {})
    if not isinstance(meta, dict):
        raise HeatmapFormatError("meta must be an object")
    try:
        return StsHeatmap(cur, fp, re + 1j * im, meta)
    except ValueError as exc:
        raise HeatmapFormatError(str(exc)) from exc


def save_heatmap(path, hm: StsHeatmap) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(heatmap_to_dict(hm), allow_nan=False, ensure_ascii=False))
        fh.write("\n")


def load_heatmap(path) -> StsHeatmap:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise HeatmapFormatError(f"invalid JSON: {exc}") from exc
    return heatmap_from_dict(d)
