"""Structural verification suites: inversion round-trips, the gamma=0
residual endpoint, stored-vs-reversible gradient agreement, finite
difference checks on losses and layers, and metric oracles.

Each suite returns a VerifyResult; `run_all` is what the CLI's verify
subcommand executes. The oracles here are deliberately naive (explicit
loops, set arithmetic, central differences) and share no code with the
implementations they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import loss as loss_mod
from . import metrics as metrics_mod
from .layers import build_residual_function
from .momentum import REVERSIBLE, STORED, MomentumBlock, MomentumChain, MomentumState


@dataclass
class VerifyResult:
    name: str
    passed: bool
    detail: str


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _make_chain(depth, gamma, mode, rng, kind="linear", dim=6, channels=2):
    if kind == "linear":
        desc = {"kind": "linear", "dim": dim}
    else:
        desc = {"kind": "conv", "channels": channels}
    blocks = [
        MomentumBlock(gamma, build_residual_function(desc, rng, np.float64, f"b{j}"), mode)
        for j in range(depth)
    ]
    return MomentumChain(blocks, name="verify")


def collect_grads(chain, x0, loss_weights):
    """Scalar loss <w, x_N>: returns (input grad, flat parameter grads)."""
    for p in chain.params():
        p.zero_grad()
    chain.clear()
    out = chain.forward(x0.copy(), train=True)
    gx, _ = chain.backward(loss_weights.copy())
    pg = np.concatenate([p.grad.ravel() for p in chain.params()])
    return gx, pg


def chain_loss(chain, x0, loss_weights):
    out = chain.forward(x0.copy(), train=False)
    return float((out.x * loss_weights).sum())


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / denom)


def fd_grad(fn, x, h=1e-5):
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


# ---------------------------------------------------------------- suites


def suite_inversion_roundtrip(cases=100, gammas=(0.1, 0.5, 0.9, 1.0),
                              tol=1e-10, seed=11) -> VerifyResult:
    rng = _rng(seed)
    worst = 0.0
    for gamma in gammas:
        for _ in range(cases):
            block = MomentumBlock(
                gamma,
                build_residual_function({"kind": "conv", "channels": 2}, rng, np.float64),
                REVERSIBLE,
            )
            s = MomentumState(rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4)))
            s2 = block.forward(s)
            back = block.inverse(s2)
            err = max(np.abs(back.x - s.x).max(), np.abs(back.v - s.v).max())
            worst = max(worst, err)
    return VerifyResult("inversion_roundtrip", worst <= tol,
                        f"max |inverse(forward(s)) - s| = {worst:.3e} (tol {tol:g})")


def suite_chain_roundtrip(depth=10, gamma=0.9, cases=20, tol=1e-8, seed=12) -> VerifyResult:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(cases):
        chain = _make_chain(depth, gamma, REVERSIBLE, rng, kind="conv")
        s = MomentumState(rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4)))
        state = s
        for b in chain.blocks:
            state = b.forward(state)
        for b in reversed(chain.blocks):
            state = b.inverse(state)
        err = max(np.abs(state.x - s.x).max(), np.abs(state.v - s.v).max())
        worst = max(worst, err)
    return VerifyResult("chain_roundtrip", worst <= tol,
                        f"depth-{depth} round-trip error = {worst:.3e} (tol {tol:g})")


def suite_resnet_endpoint(cases=100, seed=13) -> VerifyResult:
    rng = _rng(seed)
    ok = True
    for _ in range(cases):
        f = build_residual_function({"kind": "conv", "channels": 2}, rng, np.float64)
        block = MomentumBlock(0.0, f, STORED)
        x = rng.normal(size=(2, 4, 4))
        v = rng.normal(size=(2, 4, 4))
        out = block.forward(MomentumState(x, v))
        expected = x + f.forward(x, train=False)
        ok &= np.array_equal(out.x, expected)
    return VerifyResult("resnet_endpoint_gamma0", ok,
                        "x' == x + f(x) bit-exactly" if ok else "bitwise mismatch at gamma=0")


def suite_gradient_modes(depth=10, gamma=0.9, seeds=20, tol=1e-8, fd_tol=1e-6,
                         fd_cases=3) -> VerifyResult:
    """Stored vs reversible gradients, plus finite-difference spot checks."""
    worst_mode = 0.0
    worst_fd = 0.0
    for s in range(seeds):
        rng = _rng(1000 + s)
        stored = _make_chain(depth, gamma, STORED, rng, kind="linear", dim=6)
        rng2 = _rng(1000 + s)
        rev = _make_chain(depth, gamma, REVERSIBLE, rng2, kind="linear", dim=6)
        x0 = _rng(2000 + s).normal(size=6)
        w = _rng(3000 + s).normal(size=6)
        gx_s, pg_s = collect_grads(stored, x0, w)
        gx_r, pg_r = collect_grads(rev, x0, w)
        worst_mode = max(worst_mode, rel_err(gx_s, gx_r), rel_err(pg_s, pg_r))
        if s < fd_cases:
            gx_fd = fd_grad(lambda x: chain_loss(stored, x, w), x0.copy())
            worst_fd = max(worst_fd, rel_err(gx_s, gx_fd))
            # one representative parameter tensor per chain keeps verify
            # fast; the test suite covers every parameter
            worst_fd = max(worst_fd, rel_err(pg_s[: x0.size * x0.size],
                                             fd_grad_param(stored, x0, w, 0)))
    passed = worst_mode <= tol and worst_fd <= fd_tol
    return VerifyResult(
        "gradient_modes", passed,
        f"stored-vs-reversible rel err = {worst_mode:.3e} (tol {tol:g}); "
        f"fd rel err = {worst_fd:.3e} (tol {fd_tol:g})",
    )


def fd_grad_param(chain, x0, w, index, h=1e-5):
    p = chain.params()[index]
    return fd_grad(lambda _v: chain_loss(chain, x0, w), p.value).ravel()


def suite_loss_gradients(cases=25, tol=1e-6, seed=17) -> VerifyResult:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(cases):
        z = rng.normal(size=(2, 1, 4, 4)) * 2
        t = (rng.uniform(size=z.shape) < 0.4).astype(np.float64)
        for fn in (
            loss_mod.bce_with_logits,
            loss_mod.soft_dice_loss,
            loss_mod.hybrid_loss,
        ):
            lv = fn(z, t)
            fd = fd_grad(lambda q, f=fn: f(q, t).total, z.copy())
            worst = max(worst, rel_err(lv.grad, fd))
        zl = rng.normal(size=(3, 4)) * 2
        labels = rng.integers(0, 4, size=3)
        lv = loss_mod.cross_entropy(zl, labels)
        fd = fd_grad(lambda q: loss_mod.cross_entropy(q, labels).total, zl.copy())
        worst = max(worst, rel_err(lv.grad, fd))
    return VerifyResult("loss_gradients", worst <= tol,
                        f"max fd rel err = {worst:.3e} (tol {tol:g})")


# -------- brute-force metric oracles (independent of metrics.py internals)


def oracle_ratio_metrics(pred, gt):
    a = {tuple(c) for c in np.argwhere(np.asarray(pred, dtype=bool))}
    b = {tuple(c) for c in np.argwhere(np.asarray(gt, dtype=bool))}
    if not a and not b:
        return 1.0, 1.0, 1.0, 1.0, 1.0
    tp = len(a & b)
    fp = len(a - b)
    fn = len(b - a)
    dsc = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    rec = tp / (tp + fn) if (tp + fn) else 0.0
    prec = tp / (tp + fp) if (tp + fp) else 0.0
    f2 = 5 * prec * rec / (4 * prec + rec) if (4 * prec + rec) else 0.0
    return dsc, iou, rec, prec, f2


def oracle_boundary(mask):
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    pts = []
    for i in range(h):
        for j in range(w):
            if not m[i, j]:
                continue
            edge = i == 0 or j == 0 or i == h - 1 or j == w - 1
            if edge or not (m[i - 1, j] and m[i + 1, j] and m[i, j - 1] and m[i, j + 1]):
                pts.append((i, j))
    return pts


def oracle_hausdorff(pred, gt, variant="max"):
    a = oracle_boundary(pred)
    b = oracle_boundary(gt)
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf
    directed = []
    for p in a:
        directed.append(min(math.dist(p, q) for q in b))
    for q in b:
        directed.append(min(math.dist(q, p) for p in a))
    if variant == "max":
        return max(directed)
    return float(np.percentile(directed, 95, method="linear"))


def oracle_mcc(confusion):
    """Covariance form over expanded one-hot label/prediction samples."""
    c = np.asarray(confusion, dtype=np.int64)
    k = c.shape[0]
    t_rows, p_rows = [], []
    for i in range(k):
        for j in range(k):
            for _ in range(int(c[i, j])):
                t = np.zeros(k)
                p = np.zeros(k)
                t[i] = 1.0
                p[j] = 1.0
                t_rows.append(t)
                p_rows.append(p)
    t = np.array(t_rows)
    p = np.array(p_rows)
    tc = t - t.mean(axis=0)
    pc = p - p.mean(axis=0)
    cov_tp = (tc * pc).sum()
    cov_tt = (tc * tc).sum()
    cov_pp = (pc * pc).sum()
    den = math.sqrt(cov_tt) * math.sqrt(cov_pp)
    return 0.0 if den == 0 else cov_tp / den


def suite_metric_oracles(cases=200, seed=19) -> VerifyResult:
    rng = _rng(seed)
    worst_mcc = 0.0
    for _ in range(cases):
        pred = (rng.uniform(size=(8, 8)) < rng.uniform(0.1, 0.6)).astype(np.uint8)
        gt = (rng.uniform(size=(8, 8)) < rng.uniform(0.1, 0.6)).astype(np.uint8)
        got = metrics_mod.dice_iou_prf(pred, gt)
        want = oracle_ratio_metrics(pred, gt)
        if not all(math.isclose(g, w, rel_tol=0, abs_tol=0) for g, w in zip(got, want)):
            return VerifyResult("metric_oracles", False, "ratio metric mismatch")
        for variant in ("max", "hd95"):
            g = metrics_mod.hausdorff(pred, gt, variant)
            w = oracle_hausdorff(pred, gt, variant)
            same = (g == w) or (math.isinf(g) and math.isinf(w)) or abs(g - w) < 1e-12
            if not same:
                return VerifyResult("metric_oracles", False,
                                    f"hausdorff {variant} mismatch: {g} vs {w}")
        conf = rng.integers(0, 20, size=(4, 4))
        if conf.sum() == 0:
            conf[0, 0] = 1
        _, mcc = metrics_mod.accuracy_mcc(conf)
        worst_mcc = max(worst_mcc, abs(mcc - oracle_mcc(conf)))
    return VerifyResult("metric_oracles", worst_mcc <= 1e-12,
                        f"all exact; max MCC dev = {worst_mcc:.2e}")


def run_all(depth=10, gamma=0.9, dtype="f64") -> list[VerifyResult]:
    results = [suite_inversion_roundtrip(), suite_resnet_endpoint()]
    if gamma > 0.0:
        # inversion-based sweeps need gamma > 0; the plain residual
        # endpoint above still covers gamma = 0
        results.insert(1, suite_chain_roundtrip(depth=depth, gamma=gamma))
        results.append(suite_gradient_modes(depth=depth, gamma=gamma,
                                            seeds=5, fd_cases=2))
    results.append(suite_loss_gradients())
    results.append(suite_metric_oracles())
    return results
