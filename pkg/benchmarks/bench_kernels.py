"""Timing of the numba kernels against the numpy fallbacks.

    python benchmarks/bench_kernels.py [--batch 2000] [--repeat 5]

Both backends are imported side by side from ``unifact.kernels`` and checked
for agreement before timing.
"""

import argparse
import time

import numpy as np

from unifact import kernels
from unifact.submersion import symbolic_components


def _best(fn, repeat):
    fn()  # warm-up (JIT compile for the numba path)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _params(rng, B, K, n):
    m = n * (n - 1) // 2
    return rng.normal(size=(B, K, m)) + 1j * rng.normal(size=(B, K, m))


def bench_chain(rng, B, repeat):
    rows = []
    for n, K in [(2, 3), (3, 5), (4, 5), (6, 9)]:
        P = _params(rng, B, K, n)
        r, c = kernels.coord_tables(n)
        a = kernels.chain_product_nb(P, r, c, n, True)
        b = kernels.chain_product_np(P, r, c, n, True)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        t_nb = _best(lambda: kernels.chain_product_nb(P, r, c, n, True), repeat)
        t_np = _best(lambda: kernels.chain_product_np(P, r, c, n, True), repeat)
        rows.append(("chain_product", f"n={n} K={K}", t_nb, t_np))
    return rows


def bench_jacobian(rng, B, repeat):
    rows = []
    for n, K in [(2, 3), (3, 5), (4, 5)]:
        P = _params(rng, B, K, n)
        r, c = kernels.coord_tables(n)
        (pa, ja), (pb, jb) = (kernels.phi_jacobian_nb(P, r, c, n, True),
                              kernels.phi_jacobian_np(P, r, c, n, True))
        assert np.allclose(pa, pb, rtol=1e-12, atol=1e-12)
        assert np.allclose(ja, jb, rtol=1e-12, atol=1e-12)
        t_nb = _best(lambda: kernels.phi_jacobian_nb(P, r, c, n, True), repeat)
        t_np = _best(lambda: kernels.phi_jacobian_np(P, r, c, n, True), repeat)
        rows.append(("phi_jacobian", f"n={n} K={K}", t_nb, t_np))
    return rows


def bench_poly(rng, B, repeat):
    rows = []
    for n, K in [(3, 4), (4, 5)]:
        sys_ = symbolic_components(n, K)
        cp = sys_.components[0].compile(sys_.variables())
        pts = _params(rng, B, K, n).reshape(B, -1)
        assert np.allclose(kernels.eval_poly_batch_nb(cp.coef, cp.idx, pts),
                           kernels.eval_poly_batch_np(cp.coef, cp.idx, pts))
        t_nb = _best(lambda: kernels.eval_poly_batch_nb(cp.coef, cp.idx, pts), repeat)
        t_np = _best(lambda: kernels.eval_poly_batch_np(cp.coef, cp.idx, pts), repeat)
        rows.append(("eval_poly_batch", f"n={n} K={K} terms={len(sys_.components[0])}", t_nb, t_np))
    return rows


def bench_rk4(rng, repeat):
    from unifact.polyring import Poly, VarId

    xs = [Poly.var(VarId.symbol(f"x{i}")) for i in range(1, 5)]
    p = xs[0] * xs[1] + xs[2] * xs[3] + xs[0] * xs[2] * xs[3]
    order = sorted({v for v in p.variables()}, key=lambda v: v.sort_key)
    ci = p.diff(order[0]).compile(order)
    cj = p.diff(order[1]).compile(order)
    x0 = rng.normal(size=4) + 0j
    args = (ci.coef, ci.idx, cj.coef, cj.idx, 0, 1, x0, 0.5 + 0j, 4096)
    assert np.allclose(kernels.rk4_shear_nb(*args), kernels.rk4_shear_np(*args))
    t_nb = _best(lambda: kernels.rk4_shear_nb(*args), repeat)
    t_np = _best(lambda: kernels.rk4_shear_np(*args), repeat)
    return [("rk4_shear", "4 vars, 4096 steps", t_nb, t_np)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    rows = (bench_chain(rng, args.batch, args.repeat) + bench_jacobian(rng, args.batch, args.repeat)
            + bench_poly(rng, args.batch, args.repeat) + bench_rk4(rng, args.repeat))
    print(f"{'kernel':<16} {'case':<28} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for name, case, t_nb, t_np in rows:
        print(f"{name:<16} {case:<28} {1e3 * t_nb:>11.3f} {1e3 * t_np:>11.3f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
