#!/usr/bin/env python3
"""Generate Radau-IIA Butcher tableau coefficients at high precision.

The C++ library ships these coefficients as decimal literals; this script is
the offline generator. Nodes c are the roots of

    d^{s-1}/dx^{s-1} [ x^{s-1} (x - 1)^s ] = 0

(the right-Radau points, c_s = 1). The matrix a comes from the collocation
conditions sum_j a_ij c_j^{q-1} = c_i^q / q for q = 1..s, and b is the last
row of a (the scheme is stiffly accurate).

Usage: python3 generate_radau_tableaux.py > radau_coefficients.inc
"""

import mpmath as mp

mp.mp.dps = 50

DIGITS = 25
STAGES = [1, 2, 3, 4]


def radau_nodes(s):
    x = mp.mpf(1)  # symbol placeholder; we build polynomial coefficients instead
    # p(x) = x^{s-1} (x-1)^s, expand and differentiate s-1 times
    poly = [mp.mpf(0)] * (2 * s)
    # (x-1)^s coefficients
    from math import comb

    for k in range(s + 1):
        poly[k + s - 1] += comb(s, k) * (-1) ** (s - k)
    for _ in range(s - 1):
        poly = [poly[i] * i for i in range(1, len(poly))]
    # highest-degree first for polyroots
    coeffs = list(reversed(poly))
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    roots = mp.polyroots([mp.mpf(c) for c in coeffs], maxsteps=200, extraprec=200)
    roots = sorted(r.real for r in roots)
    return [mp.mpf(r) for r in roots]


def tableau(s):
    c = radau_nodes(s)
    assert abs(c[-1] - 1) < mp.mpf(10) ** (-40), c
    c[-1] = mp.mpf(1)
    # Solve V a_i = rhs_i with V[q][j] = c_j^{q-1}, rhs_i[q] = c_i^q / q
    V = mp.matrix(s, s)
    for q in range(1, s + 1):
        for j in range(s):
            V[q - 1, j] = c[j] ** (q - 1)
    a = mp.matrix(s, s)
    for i in range(s):
        rhs = mp.matrix(s, 1)
        for q in range(1, s + 1):
            rhs[q - 1] = c[i] ** q / q
        col = mp.lu_solve(V, rhs)
        for j in range(s):
            a[i, j] = col[j]
    return a, c


def fmt(v):
    return mp.nstr(v, DIGITS, strip_zeros=False)


def main():
    print("// Generated by tools/generate_radau_tableaux.py -- do not edit by hand.")
    for s in STAGES:
        a, c = tableau(s)
        print(f"// Radau-IIA, {s} stage(s), order {2 * s - 1}")
        print(f"inline constexpr double kRadauA{s}[{s}][{s}] = {{")
        for i in range(s):
            row = ", ".join(fmt(a[i, j]) for j in range(s))
            print(f"    {{{row}}},")
        print("};")
        row = ", ".join(fmt(ci) for ci in c)
        print(f"inline constexpr double kRadauC{s}[{s}] = {{{row}}};")
        print()


if __name__ == "__main__":
    main()
