"""Reference values computed independently of the package.

Run directly (``python tests/oracles.py``) to print them. The loss values
use mpmath at 50 digits; the transform values use hand-written 2x2 matrix
products; the AdamW and schedule values evaluate the textbook recurrences
in exact-ish arbitrary precision. Nothing here imports ``bevmotion``.
"""

import mpmath as mp

mp.mp.dps = 50


def mixture_nll(means, logits, gt):
    """-log sum_k softmax(logits)_k * exp(-0.5 * SSE_k); means[k][t] = (x, y)."""
    z = [mp.mpf(v) for v in logits]
    zmax = max(z)
    norm = mp.log(mp.fsum(mp.e ** (v - zmax) for v in z)) + zmax
    terms = []
    for k, traj in enumerate(means):
        sse = mp.fsum((mp.mpf(p[0]) - g[0]) ** 2 + (mp.mpf(p[1]) - g[1]) ** 2 for p, g in zip(traj, gt))
        terms.append(z[k] - norm - sse / 2)
    return -mp.log(mp.fsum(mp.e**t for t in terms))


def loss_anchors():
    exact = mixture_nll([[(0.0, 0.0)]], [0.0], [(0.0, 0.0)])
    offset = mixture_nll([[(0.0, 0.0)]], [0.0], [(1.0, 1.0)])
    t = 80
    gt = [(float(i), 0.0) for i in range(t)]
    two = mixture_nll([gt, [(x + 100.0, y + 100.0) for x, y in gt]], [0.0, 0.0], gt)
    return {"exact_hit": float(exact), "offset_1_1": float(offset), "two_component": float(two)}


def _mat(theta):
    c, s = mp.cos(theta), mp.sin(theta)
    return ((c, -s), (s, c))


def _mul(m, v):
    return (m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1])


def world_to_pixel(p, target, velocity, scale=0.5, anchor=(61, 112)):
    """Translate, rotate by -atan2(velocity), scale, flip the lateral axis into image rows."""
    theta = mp.atan2(velocity[1], velocity[0])
    d = (mp.mpf(p[0]) - target[0], mp.mpf(p[1]) - target[1])
    local = _mul(_mat(-theta), d)
    return (anchor[0] + local[0] / scale, anchor[1] - local[1] / scale)


def transform_examples():
    return {
        "origin": tuple(float(v) for v in world_to_pixel((0, 0), (0, 0), (10, 0))),
        "north_target": tuple(float(v) for v in world_to_pixel((5, 5), (5, 5), (0, 3))),
        "north_ahead": tuple(float(v) for v in world_to_pixel((5, 6), (5, 5), (0, 3))),
    }


def adamw_first_step(theta=1.0, g=1.0, lr=1e-3, wd=1e-2, b1=0.9, b2=0.999, eps=1e-8):
    m = (1 - mp.mpf(b1)) * g
    v = (1 - mp.mpf(b2)) * g * g
    mhat = m / (1 - mp.mpf(b1))
    vhat = v / (1 - mp.mpf(b2))
    return float(theta - lr * (mhat / (mp.sqrt(vhat) + eps) + wd * theta))


def cosine_lr(it, t0=11350, eta_max=1e-3, eta_min=1e-5):
    t = it % t0
    return float(mp.mpf(eta_min) + (mp.mpf(eta_max) - eta_min) * (1 + mp.cos(mp.pi * t / t0)) / 2)


if __name__ == "__main__":
    print("loss anchors:", loss_anchors())
    print("transform:", transform_examples())
    print("adamw first step:", adamw_first_step())
    print("lr at T0/2:", cosine_lr(5675), "at 0:", cosine_lr(0), "at T0:", cosine_lr(11350))
