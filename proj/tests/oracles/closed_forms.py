"""Independent high-precision evaluation of the closed-form bounds.

Written straight from the formulas with mpmath so the frozen constants in the
C++ tests do not share any code path with the library. Run:
    python3 tests/oracles/closed_forms.py
"""
from mpmath import mp, mpf, sqrt, log, exp

mp.dps = 50


def quadratic(rho, rho_hat, eq1, D, eta, b, n, th, k=None):
    pref = 1 / (1 - rho) if k is None else (1 - rho**k) / (1 - rho)
    return pref * 2 * eta * D**2 / n * max(1 + th, (1 - rho_hat + eta / b * eq1) / (1 - rho_hat))


def strongly_convex(K1, K2, mu, D, E, eta, n, th, k=None):
    r = 1 if k is None else 1 - (1 - eta * mu / 2) ** k
    a = 1 + 2 * th**2 + 2 * E**2 / mu**2
    c = 2 - eta / mu * K1**2 - 56 * eta / mu * D**2 * K2**2 + 64 * eta / mu**3 * D**2 * K2**2 * E**2
    return 8 * D * K2 * r / (n * mu) * (2 * E / mu + 1) * max(a, c)


def q_bound(E, m, K):
    return (E + sqrt(E**2 + 4 * m * K)) / (2 * m)


def noisy(m, eta, K1, K2, D, E, K, s2, b, n, th, eta_bar, psi, k=None):
    Q = q_bound(E, m, K)
    pref = (1 if k is None else 1 - eta_bar**k) / (2 * sqrt(psi * (1 + psi)) * (1 - eta_bar))
    gap = 2 * b / n * max(psi * (4 + 8 * eta**2 * K1**2),
                          1 + psi * (1 + eta**2 * s2 + 16 * (1 + 2 * eta**2 * K1**2) * Q**2
                                     + 4 * eta**2 * (2 * E**2 + 2 * K1**2 * Q**2)))
    lyap = max(1 + 2 * th**2 + 2 * Q**2,
               2 - eta / m * K1**2 - 56 * eta / m * D**2 * K2**2 + 64 * eta / m * D**2 * K2**2 * Q**2
               + 2 * K / m + eta / m * s2)
    return pref * gap * lyap


def plain(m, eta, K1, K2, D, E, K, b, n, th, k=None):
    Q = q_bound(E, m, K)
    B = (4 * th**2 + 4 * Q**2 + 4 - 2 * eta / m * K1**2 - 112 * eta / m * D**2 * K2**2
         + 128 * eta / m * D**2 * K2**2 * Q**2 + 4 * K / m + 2 * Q**2)
    r = 1 if k is None else 1 - (1 - eta * m) ** k
    return B, r * (4 * D**2 * K2**2 * eta * (8 * B + 2) / (b * n * m)
                   + 4 * K2 * D * (1 + K1 * eta) / (n * m) * (1 + 5 * B) + 2 * K / m)


def subconvex(p, mu, K1, K2, D, E, eta, b, n):
    t = (E / mu) ** (p / (p - 1))
    C2 = 4 * D**2 * K2**2 * eta / mu * (2 ** (p + 2) * (8 * eta / mu * D**2 * K2**2 * (2 ** (p + 1) * t + 5))
                                        + 2 ** (p + 2) * t + 10)
    C3 = (32 * D**3 * K2**3 * eta / mu**2 * (1 + K1 * eta) * 10 * 2 ** (p - 1) * (2 ** (p + 1) * t + 5)
          + 4 * D * K2 / mu * (1 + K1 * eta) * (10 * 2 ** (p - 1) * t + 5))
    return C2, C3, C2 / (b * n * mu) + C3 / n


def log_eta_hat_branches(sigma, eta, m, K0, eps, K1, gsup, M):
    # d = 1, Sigma scalar
    r = sqrt(2 * K0 / m * (1 + eps) - 1)
    first = 1 - exp(-(M / eta - gsup) ** 2 / 2) / sqrt(1 - sigma)
    log_second_half = -(1 + K1 * eta) * r / (2 * eta**2) * (1 / sigma) * ((1 + K1 * eta) * r + 2 * (M + eta * gsup))
    return log(first), log_second_half, 2 * min(log(first), log_second_half)


if __name__ == "__main__":
    print("quadratic k=inf", quadratic(mpf('0.9'), mpf('0.9'), 1, sqrt(2), mpf('0.1'), 1, 10, 0))
    print("quadratic k=1", quadratic(mpf('0.9'), mpf('0.9'), 1, sqrt(2), mpf('0.1'), 1, 10, 0, 1))
    print("strongly convex", strongly_convex(1, 1, 1, 1, 1, mpf('0.01'), 100, 0))
    K0 = 2 * 1 - mpf('0.01') - 56 * mpf('0.01') + 0 + 2 * mpf('0.5') + mpf('0.01')
    print("K0", K0)
    psi = mpf('0.25') / (mpf('0.01') * K0)
    eta_bar = 1 - 1 * mpf('0.01') * mpf('0.5') * mpf('1.5') * mpf('0.25') / (4 + 2 * mpf('1.5') * mpf('0.25'))
    print("eta_bar", eta_bar, "psi", psi)
    print("noisy k=inf", noisy(1, mpf('0.01'), 1, 1, 1, 0, mpf('0.5'), 1, 1, 100, 0, eta_bar, psi))
    print("noisy k=inf eta_bar=0.9996053", noisy(1, mpf('0.01'), 1, 1, 1, 0, mpf('0.5'), 1, 1, 100, 0, mpf('0.9996053'), psi))
    print("plain", plain(1, mpf('0.01'), 1, 1, 1, 0, 1, 1, 100, 0))
    print("plain n=1e6", plain(1, mpf('0.01'), 1, 1, 1, 0, 1, 1, 10**6, 0))
    print("subconvex", subconvex(mpf('1.5'), 1, 1, 1, 1, 0, mpf('0.01'), 1, 100))
    print("admissible subconvex eta", 1 / (1 + 2 ** mpf('5.5')))
    print("eta_hat", log_eta_hat_branches(mpf('0.5'), mpf('0.1'), 1, mpf('2.44'), mpf('0.5'), 1, 1, 1))
