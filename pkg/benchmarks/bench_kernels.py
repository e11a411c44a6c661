"""Compare the compiled and numpy kernel backends at ConvRef shapes.

Usage: python3 benchmarks/bench_kernels.py [--batch 128] [--repeat 20] [--dtype float32]

Also times one full training step (forward, backward and Adam) per backend,
each in a fresh subprocess so the backend is picked at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from lodohar.nnc import _pykernels

try:
    from lodohar.nnc import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

# (T, C_in, F) for the three conv blocks of ConvRef on a 128 x 6 window
LAYERS = [(128, 6, 32), (64, 32, 64), (32, 64, 128)]
K = 5

STEP = """
import time, numpy as np
from threadpoolctl import threadpool_limits
from lodohar.nnc import conv_ref, init_params, loss_and_grad, adam_step, OptimizerState, kernels
arch = conv_ref(10)
p = init_params(arch, 0, np.{dtype})
st = OptimizerState.for_params(p)
rng = np.random.default_rng(0)
X = rng.normal(size=({batch}, 128, 6)).astype(np.{dtype})
y = rng.integers(0, 10, {batch})
with threadpool_limits(1):
    loss_and_grad(arch, p, X, y)
    t0 = time.perf_counter()
    for _ in range({repeat}):
        _, g = loss_and_grad(arch, p, X, y)
        adam_step(p, g, st)
print(kernels.BACKEND, (time.perf_counter() - t0) / {repeat})
"""


def bench(mod, x, w, b, dout, repeat):
    fwd = min(timeit.repeat(lambda: mod.conv1d_forward(x, w, b), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: mod.conv1d_backward(x, w, dout), number=1, repeat=repeat))
    pool = min(timeit.repeat(lambda: mod.maxpool2_backward(dout, mod.maxpool2_forward(dout)),
                             number=1, repeat=repeat))
    return fwd, bwd, pool


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--dtype", default="float32", choices=("float32", "float64"))
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    dt = np.dtype(args.dtype)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"batch {args.batch}, dtype {dt}, best of {args.repeat}, times in ms")
    print(f"{'layer':<14}{'backend':<9}{'conv fwd':>10}{'conv bwd':>10}{'pool f+b':>10}")
    with threadpool_limits(1):
        for T, C, F in LAYERS:
            x = rng.normal(size=(args.batch, T, C)).astype(dt)
            w = rng.normal(size=(K, C, F)).astype(dt)
            b = rng.normal(size=F).astype(dt)
            dout = rng.normal(size=(args.batch, T, F)).astype(dt)
            for name, mod in backends:
                f, g, p = bench(mod, x, w, b, dout, args.repeat)
                print(f"{f'{T}x{C}->{F}':<14}{name:<9}{f * 1e3:>10.2f}{g * 1e3:>10.2f}{p * 1e3:>10.2f}")

    print("\nfull training step (forward + backward + Adam), ms")
    code = STEP.format(dtype=args.dtype, batch=args.batch, repeat=max(3, args.repeat // 4))
    for name, _ in backends:
        env = dict(os.environ, LODOHAR_KERNELS=name)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        got, sec = out.stdout.split()
        print(f"  {got:<8}{float(sec) * 1e3:>10.2f}")


if __name__ == "__main__":
    main()
