"""High-precision reference values for the theory calculator.

Writes tests/fixtures/theory_grid.csv. Inputs are stored with repr() so they
round-trip to the same doubles; outputs carry 30 significant digits.

    python3 scripts/theory_oracle.py
"""

import csv
import math
import random
from pathlib import Path

from mpmath import mp, mpf, sqrt

# sqrt(a + h^2) - h cancels about log10(h^2 / a) digits, up to ~300 on this grid
mp.dps = 400

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "theory_grid.csv"
POINTS = 100


def reference(beta, n, b, lip, sigma_l, varsigma, f0_gap, eta, k_total):
    beta, lip = mpf(beta), mpf(lip)
    nb = n * b
    pow_nb = beta**nb
    q = (1 - pow_nb) ** (mpf(1) / nb)
    c = (1 + 1 / pow_nb) / (1 - pow_nb)
    a = (1 - q) ** 2 / (30 * c**2 * lip**2 * n)
    h = mpf(3) * n**2 / 4
    eta_max = min(sqrt(a + h**2) - h, 1 / lip)
    eta = mpf(eta)
    rhs = (
        6 * mpf(f0_gap) / (eta * k_total)
        + (9 * lip + 2) * eta * mpf(sigma_l) ** 2 / (3 * n)
        + 2 * eta * mpf(varsigma) ** 2 / n
    )
    # threshold exactly as displayed: three separate terms
    denom = a + mpf(9) * n**4 / 16 - sqrt(3) * mpf(n) ** 1.5 * (1 - q) / (c * lip * sqrt(40))
    k_threshold = 2 * n / denom
    return q, 1 - q, c, eta_max, rhs, k_threshold


def main():
    rng = random.Random(20240901)
    rows = []
    while len(rows) < POINTS:
        n = rng.randint(2, 16)
        b = rng.randint(1, max(1, n - 1))
        log10_pow = -rng.uniform(0.05, 60.0)  # log10 of beta^(NB)
        beta = 10 ** (log10_pow / (n * b))
        if not 0.0 < beta < 1.0:
            continue
        lip = 10 ** rng.uniform(-2, 2)
        sigma_l = rng.uniform(0.0, 5.0)
        varsigma = rng.uniform(0.0, 5.0)
        f0_gap = 10 ** rng.uniform(-3, 3)
        k_total = int(10 ** rng.uniform(0, 9))
        _, _, _, eta_max, _, _ = reference(beta, n, b, lip, sigma_l, varsigma, f0_gap, 1.0, k_total)
        eta = 0.5 * float(eta_max)
        if not (eta > 0.0 and math.isfinite(eta)) or eta < 1e-290:
            continue
        q, omq, c, eta_max, rhs, k_thr = reference(beta, n, b, lip, sigma_l, varsigma, f0_gap, eta, k_total)
        rows.append(
            [repr(beta), n, b, repr(lip), repr(sigma_l), repr(varsigma), repr(f0_gap), repr(eta), k_total]
            + [mp.nstr(v, 30, min_fixed=0, max_fixed=0) for v in (q, omq, c, eta_max, rhs, k_thr)]
        )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["beta", "n", "b", "lipschitz", "sigma_l", "varsigma", "f0_gap", "eta", "k_total",
             "q", "one_minus_q", "c", "eta_max", "rhs_bound", "k_threshold"]
        )
        w.writerows(rows)


if __name__ == "__main__":
    main()
