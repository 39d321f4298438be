#!/usr/bin/env python3
"""Independent reference values for the Rust test suite.

Every frozen constant in the Rust unit tests is produced by this script, so
the numbers can be regenerated and audited without touching the Rust code.
Run:  python3 scripts/reference_values.py

Implements, with scipy only:
  * partial-wave (separation-of-variables) scattering of a plane wave by a
    penetrable homogeneous ball: interface-matched coefficients, far-field
    pattern, interior/exterior total field, optical-theorem cross-check;
  * the same separation of variables for a point source at the ball center;
  * ball-averaged Helmholtz kernel values by 1-D quadrature;
  * small closed-form quantities (capacitance examples, a 2x2 coupled
    point-scatterer solve, the index-from-Green formula example).
"""

import numpy as np
from scipy.integrate import quad
from scipy.special import spherical_jn, spherical_yn, eval_legendre


def jl(l, x):
    return spherical_jn(l, x)


def jl_d(l, x):
    return spherical_jn(l, x, derivative=True)


def yl(l, x):
    return spherical_yn(l, x)


def yl_d(l, x):
    return spherical_yn(l, x, derivative=True)


def hl(l, x):
    return jl(l, x) + 1j * yl(l, x)


def hl_d(l, x):
    return jl_d(l, x) + 1j * yl_d(l, x)


def ball_coefficients(n0, radius, kappa, lmax=40):
    """Interface matching for a penetrable ball centered at the origin.

    Interior field  sum_l (2l+1) i^l a_l j_l(kappa*n0*r) P_l,
    scattered field sum_l (2l+1) i^l b_l h_l(kappa*r)    P_l,
    incident plane wave sum_l (2l+1) i^l j_l(kappa*r) P_l.
    Continuity of u and u' at r=radius gives a 2x2 system per mode.
    """
    k1 = kappa * n0
    a = np.zeros(lmax + 1, dtype=complex)
    b = np.zeros(lmax + 1, dtype=complex)
    for l in range(lmax + 1):
        # [ j_l(k1 R)    -h_l(kR) ] [a_l]   [ j_l(kR)  ]
        # [ k1 j_l'(k1R) -k h_l'(kR)] [b_l] = [ k j_l'(kR)]
        m11 = jl(l, k1 * radius)
        m12 = -hl(l, kappa * radius)
        m21 = k1 * jl_d(l, k1 * radius)
        m22 = -kappa * hl_d(l, kappa * radius)
        r1 = jl(l, kappa * radius)
        r2 = kappa * jl_d(l, kappa * radius)
        det = m11 * m22 - m12 * m21
        a[l] = (r1 * m22 - m12 * r2) / det
        b[l] = (m11 * r2 - r1 * m21) / det
    return a, b


def far_field(n0, radius, kappa, xhat, theta, center=np.zeros(3), lmax=40):
    """Far-field pattern, outgoing-wave amplitude normalized to e^{ikr}/(4 pi r)."""
    _, b = ball_coefficients(n0, radius, kappa, lmax)
    ls = np.arange(lmax + 1)
    cosg = float(np.dot(xhat, theta))
    series = np.sum((2 * ls + 1) * b * eval_legendre(ls, cosg))
    v = 4 * np.pi / (1j * kappa) * series
    # Translation rule for a ball centered off the origin.
    return v * np.exp(1j * kappa * np.dot(theta - xhat, center))


def total_field(n0, radius, kappa, theta, x, center=np.zeros(3), lmax=40):
    a, b = ball_coefficients(n0, radius, kappa, lmax)
    ls = np.arange(lmax + 1)
    rel = np.asarray(x, dtype=float) - center
    r = np.linalg.norm(rel)
    phase = np.exp(1j * kappa * np.dot(theta, center))
    if r == 0.0:
        cosg = 1.0
    else:
        cosg = float(np.dot(rel / r, theta))
    leg = eval_legendre(ls, cosg)
    if r < radius:
        rad = a * jl(ls, kappa * n0 * r)
    else:
        rad = jl(ls, kappa * r) + b * hl(ls, kappa * r)
    return phase * np.sum((2 * ls + 1) * (1j ** ls) * rad * leg)


def scattering_cross_sections(n0, radius, kappa, lmax=40):
    """sigma_s three ways: coefficient sum, |far field|^2 quadrature, optical theorem."""
    _, b = ball_coefficients(n0, radius, kappa, lmax)
    ls = np.arange(lmax + 1)
    sigma_coeff = 4 * np.pi / kappa**2 * np.sum((2 * ls + 1) * np.abs(b) ** 2)

    def f_abs2(cosg):
        amp = np.sum((2 * ls + 1) * b * eval_legendre(ls, cosg)) / (1j * kappa)
        return np.abs(amp) ** 2

    val, _ = quad(f_abs2, -1.0, 1.0, limit=200)
    sigma_quad = 2 * np.pi * val
    sigma_optical = -4 * np.pi / kappa**2 * np.real(np.sum((2 * ls + 1) * b))
    return sigma_coeff, sigma_quad, sigma_optical


def center_source_coefficients(n0, radius, kappa):
    """Point source at the center of the ball: interior e^{ik1 r}/(4 pi r) + alpha j0(k1 r),
    exterior gamma e^{ik r}/(4 pi r). Returns (alpha, gamma)."""
    k1 = kappa * n0
    R = radius

    def phi(k, r):
        return np.exp(1j * k * r) / (4 * np.pi * r)

    def phi_d(k, r):
        return np.exp(1j * k * r) * (1j * k * r - 1) / (4 * np.pi * r**2)

    # alpha j0(k1 R) - gamma phi(k,R) = -phi(k1,R)
    # alpha k1 j0'(k1 R) - gamma phi'(k,R) = -phi'(k1,R)
    m11 = jl(0, k1 * R)
    m12 = -phi(kappa, R)
    m21 = k1 * jl_d(0, k1 * R)
    m22 = -phi_d(kappa, R)
    r1 = -phi(k1, R)
    r2 = -phi_d(k1, R)
    det = m11 * m22 - m12 * m21
    alpha = (r1 * m22 - m12 * r2) / det
    gamma = (m11 * r2 - r1 * m21) / det
    return alpha, gamma


def ball_averaged_kernel(kappa, r, rho):
    """integral over the ball B_r(0) of e^{i kappa |x-y|}/(4 pi |x-y|) dy, |x| = rho.

    Reduced to 1-D: F = 1/(2 i kappa rho) * int_0^r s [e^{ik(rho+s)} - e^{ik|rho-s|}] ds.
    """
    if rho == 0.0:
        return (np.exp(1j * kappa * r) * (1 - 1j * kappa * r) - 1) / kappa**2

    def integrand_re(s):
        return np.real(s * (np.exp(1j * kappa * (rho + s)) - np.exp(1j * kappa * abs(rho - s))))

    def integrand_im(s):
        return np.imag(s * (np.exp(1j * kappa * (rho + s)) - np.exp(1j * kappa * abs(rho - s))))

    re, _ = quad(integrand_re, 0.0, r, limit=200)
    im, _ = quad(integrand_im, 0.0, r, limit=200)
    return (re + 1j * im) / (2j * kappa * rho)


def c(z):
    return f"Complex64::new({z.real!r}, {z.imag!r})"


def main():
    np.set_printoptions(precision=17)
    print("// ---- spherical Bessel spot values (scipy.special) ----")
    for l, x in [(0, 0.5), (1, 0.5), (2, 0.5), (5, 0.5), (0, 2.0), (3, 2.0), (8, 2.0),
                 (2, 10.0), (10, 10.0), (15, 4.0)]:
        print(f"// j_{l}({x}) = {jl(l, x)!r}   y_{l}({x}) = {yl(l, x)!r}")

    print("// ---- Legendre spot values ----")
    for l, x in [(2, 0.3), (5, -0.3), (7, 0.9), (10, -0.95)]:
        print(f"// P_{l}({x}) = {eval_legendre(l, x)!r}")

    n0, R, kappa = 1.2, 1.0, 1.0
    a, b = ball_coefficients(n0, R, kappa)
    print("// ---- penetrable ball n0=1.2, R=1, kappa=1 ----")
    for l in range(5):
        print(f"// a_{l} = {c(a[l])}")
        print(f"// b_{l} = {c(b[l])}")

    zhat = np.array([0.0, 0.0, 1.0])
    xhat1 = np.array([0.6, 0.0, 0.8])
    v_fwd = far_field(n0, R, kappa, zhat, zhat)
    v_back = far_field(n0, R, kappa, -zhat, zhat)
    v_obl = far_field(n0, R, kappa, xhat1, zhat)
    print(f"// V_inf(z^, z^)          = {c(v_fwd)}")
    print(f"// V_inf(-z^, z^)         = {c(v_back)}")
    print(f"// V_inf((.6,0,.8), z^)   = {c(v_obl)}")
    center = np.array([0.3, -0.2, 0.1])
    v_shift = far_field(n0, R, kappa, xhat1, zhat, center=center)
    print(f"// V_inf off-center (.3,-.2,.1) = {c(v_shift)}")

    for x in [np.array([0.2, 0.1, -0.3]), np.array([0.0, 0.0, 0.5]),
              np.array([0.0, 0.0, 1.0]), np.array([1.5, 0.0, 0.0])]:
        u = total_field(n0, R, kappa, zhat, x)
        print(f"// u_total at {tuple(x)} = {c(u)}")
    u_shift = total_field(n0, R, kappa, zhat, np.array([0.4, -0.1, 0.2]), center=center)
    print(f"// u_total off-center at (0.4,-0.1,0.2) = {c(u_shift)}")

    s1, s2, s3 = scattering_cross_sections(n0, R, kappa)
    print(f"// sigma_s (coeff)   = {s1!r}")
    print(f"// sigma_s (quad)    = {s2!r}")
    print(f"// sigma_s (optical) = {s3!r}")

    alpha, gamma = center_source_coefficients(n0, R, kappa)
    print("// ---- point source at ball center, n0=1.2, R=1, kappa=1 ----")
    print(f"// alpha = {c(alpha)}")
    print(f"// gamma = {c(gamma)}")

    print("// ---- ball-averaged kernel, kappa=1.3, r=0.2 ----")
    for rho in [0.0, 0.05, 0.15, 0.2, 0.5, 3.0]:
        print(f"// F(rho={rho}) = {c(ball_averaged_kernel(1.3, 0.2, rho))}")

    print("// ---- capacitance examples ----")
    for aa, h in [(0.01, 0.25), (0.5, 50.0), (0.04, 0.2), (0.005, 0.2)]:
        val = -4 * np.pi * aa ** (1 - h) * (1 - aa**h)
        print(f"// C(a={aa}, h={h}) = {val!r}")

    print("// ---- coupled pair, free space, kappa=1 ----")
    C = -0.2707
    d = 0.1
    g = np.exp(1j * kappa * d) / (4 * np.pi * d)
    # Q_1 + C g Q_2 = -C * 1 ; Q_2 + C g Q_1 = -C * 1   (theta = z^, both sources in z=0 plane)
    det = 1 - (C * g) ** 2
    q1 = (-C - C * g * (-C)) / det
    print(f"// g = Phi(z1,z2) = {c(g)}")
    print(f"// Q1 = Q2 = {c(q1)}")

    print("// ---- index-from-Green formula example ----")
    nd = (np.exp(0.13j) - 1) / (0.1j)
    print(f"// n_hat = {c(nd)}   |n_hat - 1.3| = {abs(nd - 1.3)!r}")

    print("// ---- smooth bump spot value ----")
    # 1 + (n0-1) exp(1 - R^2/(R^2-rho^2)) at rho=0.5, n0=1.5, R=1
    print(f"// bump(0.5) = {1 + 0.5 * np.exp(1 - 1 / (1 - 0.25))!r}")


if __name__ == "__main__":
    main()
