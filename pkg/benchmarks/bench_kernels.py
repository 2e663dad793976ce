"""Benchmark the compiled kernel lane against the pure-numpy fallback.

Times the three hot contraction kernels on representative shapes, then an
end-to-end operator assembly in each lane.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import argparse
import subprocess
import sys
import time

import numpy as np

from dgadapt.kernels import py_ref

try:
    from dgadapt.kernels import _speedups
except ImportError:
    _speedups = None


def _time(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    nloc = 16  # p = 3
    cases = [
        (
            "cell_blocks 4096x25",
            "cell_blocks",
            (rng.standard_normal((4096, 25)), rng.standard_normal((25, nloc)), rng.standard_normal((25, nloc))),
        ),
        (
            "edge_blocks 8192x5",
            "edge_blocks",
            (
                rng.standard_normal((8192, 5)),
                rng.standard_normal((8192, 5, nloc)),
                rng.standard_normal((8192, 5, nloc)),
            ),
        ),
        (
            "block_diag_matvec 4096",
            "block_diag_matvec",
            (rng.standard_normal((4096, nloc, nloc)), rng.standard_normal((4096, nloc))),
        ),
    ]
    print(f"{'kernel':28s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for label, name, args in cases:
        args = tuple(np.ascontiguousarray(a) for a in args)
        t_py = _time(getattr(py_ref, name), args, repeats)
        if _speedups is None:
            print(f"{label:28s} {t_py * 1e3:9.2f}ms {'n/a':>10s} {'n/a':>8s}")
            continue
        t_c = _time(getattr(_speedups, name), args, repeats)
        ref = getattr(py_ref, name)(*args)
        fast = getattr(_speedups, name)(*args)
        assert np.allclose(ref, fast, rtol=1e-12, atol=1e-12)
        print(f"{label:28s} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms {t_py / t_c:7.2f}x")


_ASSEMBLY_SNIPPET = """
import time
from dgadapt.basis import get_basis
from dgadapt.fields import DofLayout
from dgadapt.mesh import QuadForest, uniform_refine
from dgadapt.assembly import assemble_spatial_operator
from dgadapt.problems import example1
from dgadapt import kernels

prob = example1(1e-2)
mesh = uniform_refine(QuadForest(prob.domain).root_view(), 5)
layout = DofLayout(mesh, 3)
basis = get_basis(3)
assemble_spatial_operator(layout, basis, prob, 0.0, 10.0)  # warm up caches
t0 = time.perf_counter()
assemble_spatial_operator(layout, basis, prob, 0.0, 10.0)
print(f"{kernels.BACKEND}: assemble p=3 32x32 mesh {time.perf_counter() - t0:.3f}s")
"""


def bench_assembly():
    for lane in ("python", "compiled"):
        if lane == "compiled" and _speedups is None:
            print("compiled: extension not built, skipped")
            continue
        out = subprocess.run(
            [sys.executable, "-c", _ASSEMBLY_SNIPPET],
            env={"PATH": "/usr/bin:/bin", "DGADAPT_KERNELS": lane},
            capture_output=True,
            text=True,
        )
        sys.stdout.write(out.stdout or out.stderr)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    bench_kernels(args.repeats)
    print()
    bench_assembly()


if __name__ == "__main__":
    main()
