"""Measure the leading moment coefficients and remainder rates.

Prints, for alpha in {2, 3}:
  * the delta^alpha coefficient of the first-order moments on the unit disk
    (Richardson-extrapolated from delta = 0.1, 0.05) next to 2 pi alpha;
  * for alpha = 2, the delta^2 coefficient of the extra quadratic term next
    to pi alpha;
  * log-log slopes of |moment| on a non-symmetric curve, which grow like
    delta^(alpha + min(2 gamma, alpha)).
"""

import numpy as np

from singular_liouville.bubble import BubbleParams
from singular_liouville.geometry import DomainModel
from singular_liouville.reduction import moment_integrals, plane_weighted_kernel_moment, quadratic_moment_integrals

DISK = DomainModel.unit_disk()
CURVE = DomainModel.curve([1.0, 0.05, 0.08], [0.0, 0.03])


def leading(alpha):
    vals = []
    for d in (0.1, 0.05):
        p = BubbleParams(alpha, d, 0j)
        vals.append(abs(moment_integrals(p, None, 1, alpha, 1.0, "re", domain=DISK)) / d**alpha)
    return (4 * vals[1] - vals[0]) / 3


def extra_quadratic():
    vals = []
    for d in (0.1, 0.05):
        p = BubbleParams(2, d, (0.3 + 0.2j) * d**2)
        q = quadratic_moment_integrals(p, None, 1, 1.0, 1.0, "re", domain=DISK)
        vals.append((q - 0.5 * plane_weighted_kernel_moment(p, 1)) / d**2)
    return (4 * vals[1] - vals[0]) / 3


def remainder_slopes(alpha, deltas=(0.1, 0.05, 0.025)):
    out = {}
    for gamma in range(alpha):
        r = [abs(moment_integrals(BubbleParams(alpha, d, (0.3 + 0.2j) * d**alpha), None, 1, gamma, 1.0, "re",
                                  domain=CURVE)) for d in deltas]
        out[gamma] = float(np.polyfit(np.log(deltas), np.log(r), 1)[0])
    return out


if __name__ == "__main__":
    for alpha in (2, 3):
        print(f"alpha={alpha}: leading coefficient {leading(alpha):.6f}  (2 pi alpha = {2 * np.pi * alpha:.6f})")
    print(f"alpha=2: extra quadratic coefficient {extra_quadratic():.6f}  (pi alpha = {2 * np.pi:.6f})")
    for alpha in (2, 3):
        for gamma, s in remainder_slopes(alpha).items():
            print(f"alpha={alpha} gamma={gamma}: slope {s:.2f}  (alpha + min(2 gamma, alpha) = {alpha + min(2 * gamma, alpha)})")
