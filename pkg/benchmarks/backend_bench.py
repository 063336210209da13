"""Time the solver under both kernel backends and print the speedup.

The backend is fixed per process, so each one runs in a child interpreter
with GRIDGRAPH_BACKEND pinned. The parent lines the medians up side by
side and cross-checks that both backends land on the same voltages.

    python3 benchmarks/backend_bench.py --case ieee118 --repeat 7
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import subprocess
import sys

BACKENDS = ("numba", "numpy")


def _worker(args) -> int:
    import numpy as np

    from gridgraph import _kernels, caseio, pipeline

    _kernels.warmup()
    case = caseio.load_case(args.case)
    reports = [pipeline.solve_method(case, args.method)
               for _ in range(args.repeat)]
    state = reports[0].state.v
    payload = {
        "backend": _kernels.active_backend(),
        "converged": all(r.converged for r in reports),
        "stage_millis": {stage: [r.stage_millis[stage] for r in reports]
                         for stage in reports[0].stage_millis},
        "total_millis": [r.total_millis for r in reports],
        "state_re": np.real(state).tolist(),
        "state_im": np.imag(state).tolist(),
    }
    json.dump(payload, sys.stdout)
    return 0


def _run_backend(backend: str, args) -> dict:
    env = dict(os.environ, GRIDGRAPH_BACKEND=backend)
    cmd = [sys.executable, os.path.abspath(__file__), "--worker",
           "--case", args.case, "--method", args.method,
           "--repeat", str(args.repeat)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"{backend} worker failed "
                         f"with exit code {proc.returncode}")
    got = json.loads(proc.stdout)
    if got["backend"] != backend:
        raise SystemExit(f"asked for {backend}, worker ran {got['backend']}")
    return got


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--case", default="ieee118")
    parser.add_argument("--method", default="hybrid")
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.repeat < 1:
        parser.error(f"--repeat must be >= 1, got {args.repeat}")
    if args.worker:
        return _worker(args)

    results = {backend: _run_backend(backend, args) for backend in BACKENDS}
    for backend, got in results.items():
        if not got["converged"]:
            sys.stderr.write(f"warning: {backend} run did not converge\n")

    rows = list(results["numba"]["stage_millis"])
    print(f"case: {args.case}  method: {args.method}  repeats: {args.repeat}")
    print(f"{'stage':<10} {'numba_ms':>10} {'numpy_ms':>10} {'speedup':>9}")
    for stage in rows + ["total"]:
        walls = {}
        for backend in BACKENDS:
            got = results[backend]
            samples = (got["total_millis"] if stage == "total"
                       else got["stage_millis"][stage])
            walls[backend] = statistics.median(samples)
        ratio = walls["numpy"] / walls["numba"] if walls["numba"] else 0.0
        print(f"{stage:<10} {walls['numba']:>10.2f} {walls['numpy']:>10.2f} "
              f"{ratio:>8.1f}x")

    gap = max(abs(complex(ar, ai) - complex(br, bi))
              for ar, ai, br, bi in zip(results["numba"]["state_re"],
                                        results["numba"]["state_im"],
                                        results["numpy"]["state_re"],
                                        results["numpy"]["state_im"]))
    print(f"max |dV| between backends: {gap:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
