"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from uvms_transport import _kernels
from uvms_transport.grasp import GraspGeometry
from uvms_transport.object_model import default_object_params
from uvms_transport.uvms_model import default_uvms_params


def cases(be):
    P, O = default_uvms_params(), default_object_params()
    g = GraspGeometry([[0.0, 0.6, 0.0]], [[0.0, 0.0, 0.0]])
    km, ko = P.kernel(be), O.kernel(be)
    kg = be.KernelGrasp(g.offsets[0], g.alphas[0], 0.5, True)
    rng = np.random.default_rng(0)
    q = np.r_[rng.normal(size=3), 0.1 * rng.normal(size=3), 0.3 * rng.normal(size=4)]
    qd = 0.1 * rng.normal(size=10)
    u = rng.normal(size=6)
    U = rng.normal(size=(5, 6))
    return {
        "joint_terms": lambda: be.joint_terms(km, q, qd),
        "flow": lambda: be.flow(km, ko, kg, q, qd, u),
        "rollout (5 blocks x 2 substeps)": lambda: be.rollout(km, ko, kg, q, qd, U, 0.12, 2),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels.python_backend)]
    if _kernels.compiled_backend is not None:
        backends.append(("cython", _kernels.compiled_backend))
    else:
        print("compiled kernels not built; timing the fallback only")
    results = {}
    for name, be in backends:
        for case, fn in cases(be).items():
            n, _ = timeit.Timer(fn).autorange()
            best = min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n
            results.setdefault(case, {})[name] = best
    print(f"{'kernel':<34}{'python':>12}{'cython':>12}{'speed-up':>10}")
    for case, r in results.items():
        c = r.get("cython")
        line = f"{case:<34}{r['python'] * 1e6:>10.1f}us"
        line += f"{c * 1e6:>10.1f}us{r['python'] / c:>9.1f}x" if c else f"{'-':>12}{'-':>10}"
        print(line)


if __name__ == "__main__":
    main()
