"""Running a model over a dataset."""

from __future__ import annotations

import numpy as np

from ..autodiff import no_grad
from ..data.formats import LabelGrid
from ..data.manifest import Sample
from ..geometry import NdcGridSpec, TargetGridSpec
from ..model.network import SscNet
from .metrics import MetricsReport, aggregate


def predict(model: SscNet, sample: Sample, target: TargetGridSpec, ndc: NdcGridSpec) -> LabelGrid:
    with no_grad():
        pred = model(sample.image, sample.camera, target, ndc)
    return LabelGrid(pred.labels, np.zeros(target.dims, bool), model.cfg.num_classes)


def evaluate(model: SscNet, samples: list[Sample], target: TargetGridSpec, ndc: NdcGridSpec) -> MetricsReport:
    preds = [predict(model, s, target, ndc) for s in samples]
    return aggregate(preds, [s.grid for s in samples])
