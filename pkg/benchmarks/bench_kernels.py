"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Shapes follow the desk-scale model: a 3x3x3 convolution over the
32x24x32 NDC volume and the trilinear resample into the 48x32x48 target
grid. The last row times one full forward+backward pass of that model.
"""

import argparse
import json
import time

import numpy as np
from threadpoolctl import threadpool_limits

from ndcscene import kernels, presets
from ndcscene.autodiff import no_grad
from ndcscene.data import generate_scene
from ndcscene.model import SscNet
from ndcscene.model.loss import ssc_loss
from ndcscene.runconfig import RunConfig


def _time(fn, repeat):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases():
    rng = np.random.default_rng(0)
    C, dims, k = 8, (32, 24, 32), 3
    xp = rng.normal(size=(C,) + tuple(n + 2 for n in dims)).astype(np.float32)
    cols = kernels.im2col(xp, (k, k, k), 1, dims)
    n_src, n_out = int(np.prod(dims)), 48 * 32 * 48
    src = rng.normal(size=(C, n_src)).astype(np.float32)
    idx = rng.integers(0, n_src, size=(n_out, 8))
    w = rng.uniform(size=(n_out, 8))
    g = rng.normal(size=(C, n_out)).astype(np.float32)
    yield "im2col 8x34x26x34 k3", lambda: kernels.im2col(xp, (k, k, k), 1, dims)
    yield "col2im 8x34x26x34 k3", lambda: kernels.col2im(cols, xp.shape[1:], 1)
    yield "gather 8ch -> 48x32x48", lambda: kernels.gather_weighted(src, idx, w)
    yield "scatter 48x32x48 -> 8ch", lambda: kernels.scatter_weighted(g, idx, w, n_src)

    cfg = RunConfig.from_dict({})
    net = SscNet(cfg.model)
    scene = generate_scene(cfg.scene_spec(), 0)
    target, ndc = cfg.target(), cfg.ndc()

    def step():
        loss = ssc_loss(net(scene.image, scene.camera, target, ndc).logits, scene.grid)
        loss.backward()
        for p in net.parameters():
            p.zero_grad()

    def forward():
        with no_grad():
            net(scene.image, scene.camera, target, ndc)

    yield "desk model forward", forward
    yield "desk model forward+backward", step


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", metavar="PATH", help="also write the timings as JSON")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the numpy fallback only")
    results = []
    with threadpool_limits(1):
        for name, fn in cases():
            row = {"case": name}
            for b in backends:
                kernels.use_backend(b)
                row[b] = _time(fn, args.repeat)
            results.append(row)
    kernels.use_backend(backends[-1])

    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for row in results:
        line = f"{row['case']:32s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{row['numpy'] / row['cython']:11.2f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backends": backends, "results": results, "desk_target": presets.desk().target.dims}, fh, indent=2)


if __name__ == "__main__":
    main()
