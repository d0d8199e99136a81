"""Per-pixel allocation of 3D convolution work in the three grid spaces."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..geometry import CameraGridSpec, CameraModel, NdcGridSpec, TargetGridSpec
from ..lifting import conv_footprint


def imbalance_report(target: TargetGridSpec, ndc: NdcGridSpec, camera: CameraModel, out_dir, K: int = 1) -> dict:
    """Write ``footprint_<space>.csv`` histograms and ``imbalance.json``; returns the summaries.

    All spaces are binned at the decoder stride so their histograms share
    pixel cells.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k, e = camera.intrinsics, camera.extrinsics
    spaces = {
        "target": (target, e),
        "camera": (CameraGridSpec.covering(ndc, k), None),
        "ndc": (ndc, None),
    }
    summary = {}
    for name, (spec, ext) in spaces.items():
        fp = conv_footprint(spec, k, ext, K=K, stride=ndc.stride, with_spread=False)
        with open(out / f"footprint_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("u", "v", "count"))
            w.writerows(fp.rows())
        s = fp.summary
        s.pop("mean_spread_px", None)
        summary[name] = s
    summary["K"] = K
    summary["stride"] = ndc.stride
    (out / "imbalance.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
