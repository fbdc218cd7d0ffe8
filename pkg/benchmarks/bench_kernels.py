"""Benchmark the compiled kernels against the numpy fallback.

Times the convolution and pooling kernels at the shapes the training loop
actually hits, plus one full model forward/backward per backend.  Run after
building the extension:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from clstack.kernels import reference

try:
    from clstack.kernels import _fast as fast
except ImportError:
    fast = None


def timeit(fn, repeat=200):
    fn()  # warmup
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def bench_kernels():
    rng = np.random.default_rng(0)
    cases = [
        ("conv 12x768 k(4,12,5) s2", "conv", (rng.normal(size=(12, 768)), rng.normal(size=(4, 12, 5)), rng.normal(size=4), 2)),
        ("conv 1x768  k(1,1,15) s2", "conv", (rng.normal(size=(1, 768)), rng.normal(size=(1, 1, 15)), rng.normal(size=1), 2)),
        ("pool 4x382 -> 380", "pool", (rng.normal(size=(4, 382)), 380)),
        ("pool 1x382 -> 380", "pool", (rng.normal(size=(1, 382)), 380)),
    ]
    print(f"{'case':34} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for label, kind, args in cases:
        if kind == "conv":
            x, k, b, stride = args
            ref_fwd = lambda: reference.conv1d_forward(x, k, b, stride)
            g = np.ones_like(ref_fwd())
            ref_bwd = lambda: reference.conv1d_backward(x, k, stride, g)
            if fast:
                fast_fwd = lambda: fast.conv1d_forward(x, k, b, stride)
                fast_bwd = lambda: fast.conv1d_backward(x, k, stride, g)
        else:
            x, target = args
            ref_fwd = lambda: reference.maxpool_forward(x, target)
            _, arg = ref_fwd()
            g = np.ones((x.shape[0], target))
            ref_bwd = lambda: reference.maxpool_backward(arg, g, x.shape[1])
            if fast:
                fast_fwd = lambda: fast.maxpool_forward(x, target)
                fast_bwd = lambda: fast.maxpool_backward(arg, g, x.shape[1])
        for suffix, ref_fn, fast_fn in (
            ("fwd", ref_fwd, fast_fwd if fast else None),
            ("bwd", ref_bwd, fast_bwd if fast else None),
        ):
            t_ref = timeit(ref_fn)
            if fast_fn is None:
                print(f"{label + ' ' + suffix:34} {t_ref * 1e6:8.1f}us {'n/a':>10} {'':>8}")
            else:
                t_fast = timeit(fast_fn)
                print(
                    f"{label + ' ' + suffix:34} {t_ref * 1e6:8.1f}us {t_fast * 1e6:8.1f}us "
                    f"{t_ref / t_fast:7.1f}x"
                )


def bench_model_step():
    import os
    import subprocess
    import sys

    script = (
        "import time, numpy as np\n"
        "from clstack import ops\n"
        "from clstack.autodiff import Tape, Tensor\n"
        "from clstack.kernels import BACKEND\n"
        "from clstack.models import ModelConfig, build_parameters, predict_proba\n"
        "cfg = ModelConfig(n_classes=2)\n"
        "params = build_parameters(cfg, 0)\n"
        "rng = np.random.default_rng(1)\n"
        "stack = Tensor(rng.normal(size=(12, 768)))\n"
        "def step():\n"
        "    with Tape() as tape:\n"
        "        loss = ops.cross_entropy(predict_proba(stack, params, cfg, train=True, rng=rng), 0)\n"
        "        tape.backward(loss)\n"
        "step()\n"
        "t0 = time.perf_counter()\n"
        "for _ in range(20): step()\n"
        "print(f'{BACKEND}: {(time.perf_counter()-t0)/20*1000:.1f} ms per forward+backward')\n"
    )
    print("\nfull cnn-trans-enc sample step (default dims):", flush=True)
    for force_pure in (False, True):
        env = dict(os.environ)
        if force_pure:
            env["CLSTACK_PURE_PYTHON"] = "1"
        sys.stdout.flush()
        subprocess.run([sys.executable, "-c", script], env=env, check=True)


if __name__ == "__main__":
    bench_kernels()
    bench_model_step()
