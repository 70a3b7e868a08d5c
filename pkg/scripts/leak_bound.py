"""Measured one-swap viscous perturbation against the local heat-leak bound."""
import argparse

from torusmix.limits import LEAK_C, leak_constant_quadrature, measure_swap_leak


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--nus", type=float, nargs="+", default=[1e-2, 1e-3])
    ap.add_argument("--N", type=int, default=128)
    args = ap.parse_args()
    print(f"C: closed form {LEAK_C:.15f}, quadrature {leak_constant_quadrature():.15f}")
    print("k,nu,N,measured,bound")
    ok = True
    for k in args.levels:
        for nu in args.nus:
            r = measure_swap_leak(k, nu, N=args.N)
            ok &= r["measured"] <= r["bound"]
            print(f"{k},{nu:g},{args.N},{r['measured']:.6e},{r['bound']:.6e}")
    return 0 if ok else 2


if __name__ == "__main__":
    raise SystemExit(main())
