"""Desk-scale differentiable Gaussian splatting.

A handful of anisotropic 3D Gaussians are projected orthographically onto a
small canvas and alpha-composited front to back.  Everything is plain numpy
with analytic gradients — no autodiff — so the renderer stays a few hundred
lines and every derivative can be checked against finite differences.

Orthographic projection is the one simplification that costs nothing: the 2D
marginal of a 3D Gaussian along z is exactly the top-left 2x2 block of its
covariance, so the compositing math is exercised without approximation.  Depth
only orders the Gaussians, which is why positions carry no z gradient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .errors import DimensionMismatch, TooSmall
from .gsply import DEFAULT_TAU, normalized_variance, scale_loss_gradient
from .imagecore import Image, clipped_image, psnr, ssim

# Opacity ceiling keeps transmittance positive and gradients finite.
ALPHA_MAX = 0.99
# Evaluation window in units of the largest 2D standard deviation.  Wide
# enough that the truncated tail (< e^-18) sits far below render and
# finite-difference tolerances.
CUTOFF_SIGMA = 6.0
COND_LIMIT = 1.0e12

TRACE_HEADER = ("iter", "l1", "scale_loss", "total", "psnr", "ssim", "max_nu")

PARAM_GROUPS = ("positions", "log_scales", "rotations", "color_logits",
                "opacity_logits")


@dataclass
class MiniGaussian:
    """One primitive: position (x, y, z=depth), log scales, rotation
    quaternion (w,x,y,z), color and opacity stored through their logits."""

    position: np.ndarray
    log_scales: np.ndarray
    rotation: np.ndarray
    color_logit: np.ndarray
    opacity_logit: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.color_logit = np.asarray(self.color_logit, dtype=np.float64)
        for name, want in (("position", 3), ("log_scales", 3),
                           ("rotation", 4), ("color_logit", 3)):
            if getattr(self, name).shape != (want,):
                raise DimensionMismatch(f"{name} must have shape ({want},)")


@dataclass
class MiniSplatScene:
    gaussians: list
    height: int
    width: int
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.background = np.asarray(self.background, dtype=np.float64)
        if not self.gaussians:
            raise ValueError("scene needs at least one Gaussian")
        if self.height < 8 or self.width < 8:
            raise TooSmall(f"canvas {self.width}x{self.height} below 8x8")
        if self.background.shape != (3,):
            raise DimensionMismatch("background must be an RGB triple")


@dataclass
class TrainConfig:
    iterations: int = 500
    lr_position: float = 0.1
    lr_log_scale: float = 0.02
    lr_rotation: float = 0.02
    lr_color: float = 0.1
    lr_opacity: float = 0.05
    lambda_scale: float = 0.0
    tau: float = DEFAULT_TAU
    seed: int = 0
    scale_loss_warmup: int = 0  # iterations before the penalty switches on
    track_ssim: bool = True     # SSIM is metric-only, never optimized

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        for name in ("lr_position", "lr_log_scale", "lr_rotation",
                     "lr_color", "lr_opacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.lambda_scale < 0 or self.tau < 0:
            raise ValueError("lambda_scale and tau must be >= 0")


@dataclass(frozen=True)
class RenderReport:
    evaluated: int
    skipped: int  # near-singular 2D covariances excluded from compositing


# --- parameter packing -------------------------------------------------------

def _params_from_scene(scene: MiniSplatScene) -> dict:
    gs = scene.gaussians
    return {
        "positions": np.stack([g.position for g in gs]),
        "log_scales": np.stack([g.log_scales for g in gs]),
        "rotations": np.stack([g.rotation for g in gs]),
        "color_logits": np.stack([g.color_logit for g in gs]),
        "opacity_logits": np.array([g.opacity_logit for g in gs], dtype=np.float64),
    }


def _scene_with_params(scene: MiniSplatScene, p: dict) -> MiniSplatScene:
    gs = [MiniGaussian(p["positions"][i].copy(), p["log_scales"][i].copy(),
                       p["rotations"][i].copy(), p["color_logits"][i].copy(),
                       float(p["opacity_logits"][i]))
          for i in range(p["positions"].shape[0])]
    return MiniSplatScene(gs, scene.height, scene.width,
                          scene.background.copy())


def _rots_from_quats(qn: np.ndarray) -> np.ndarray:
    """Batched rotation matrices from unit quaternions (w,x,y,z)."""
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    R = np.empty((qn.shape[0], 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


# --- forward pass ------------------------------------------------------------

def _forward(p: dict, height: int, width: int, background: np.ndarray,
             view_offset=(0.0, 0.0)) -> dict:
    """Render and keep every intermediate needed by the backward pass.

    The cache indexes Gaussians three ways: all N, the kept subset (non-
    singular covariance), and the kept subset in front-to-back z order; the
    `order` array maps sorted slots back to kept indices.
    """
    n = p["positions"].shape[0]
    s = np.exp(p["log_scales"])                       # (N,3) activated scales
    q = p["rotations"]
    qnorm = np.linalg.norm(q, axis=1)
    qn = q / qnorm[:, None]
    R = _rots_from_quats(qn)

    # Sigma3 = R diag(s^2) R^T; orthographic projection keeps the xy block.
    RS = R * (s * s)[:, None, :]                      # R @ diag(s^2)
    a = np.einsum("nk,nk->n", RS[:, 0, :], R[:, 0, :])
    b = np.einsum("nk,nk->n", RS[:, 0, :], R[:, 1, :])
    c = np.einsum("nk,nk->n", RS[:, 1, :], R[:, 1, :])

    half_tr = 0.5 * (a + c)
    half_disc = 0.5 * np.sqrt((a - c) ** 2 + 4 * b * b)
    lmax = half_tr + half_disc
    lmin = half_tr - half_disc
    keep = (lmin > 0) & (lmax <= COND_LIMIT * lmin)
    kept = np.nonzero(keep)[0]

    det = a[kept] * c[kept] - b[kept] ** 2
    A00, A01, A11 = c[kept] / det, -b[kept] / det, a[kept] / det

    mu_x = p["positions"][kept, 0] + view_offset[0]
    mu_y = p["positions"][kept, 1] + view_offset[1]
    order = np.argsort(p["positions"][kept, 2], kind="stable")  # front first

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    dx = xs[None, None, :] - mu_x[order][:, None, None]   # (M,H,W)
    dy = ys[None, :, None] - mu_y[order][:, None, None]

    A00s, A01s, A11s = A00[order], A01[order], A11[order]
    m = (A00s[:, None, None] * dx * dx
         + 2.0 * A01s[:, None, None] * dx * dy
         + A11s[:, None, None] * dy * dy)
    radius = CUTOFF_SIGMA * np.sqrt(lmax[kept][order]) + 1.0
    box = ((np.abs(dx) <= radius[:, None, None])
           & (np.abs(dy) <= radius[:, None, None]))
    g = np.exp(-0.5 * m) * box

    o = expit(p["opacity_logits"])[kept][order]
    colors = expit(p["color_logits"])[kept][order]        # (M,3)

    alpha_raw = o[:, None, None] * g
    alpha = np.minimum(alpha_raw, ALPHA_MAX)
    one_minus = 1.0 - alpha
    # exclusive transmittance: T_k = prod_{j<k} (1 - alpha_j)
    T = np.ones_like(alpha)
    if alpha.shape[0] > 1:
        T[1:] = np.cumprod(one_minus[:-1], axis=0)
    T_end = T[-1] * one_minus[-1] if alpha.shape[0] else np.ones((height, width))
    u = alpha * T
    out = np.einsum("khw,kc->chw", u, colors) \
        + background[:, None, None] * T_end

    return {
        "n": n, "keep": keep, "kept": kept, "order": order,
        "s": s, "q": q, "qnorm": qnorm, "qn": qn, "R": R,
        "A": (A00s, A01s, A11s), "dx": dx, "dy": dy,
        "g": g, "o": o, "colors": colors,
        "alpha_raw": alpha_raw, "alpha": alpha, "one_minus": one_minus,
        "T": T, "T_end": T_end, "u": u, "out": out,
        "background": background, "height": height, "width": width,
    }


def render(scene: MiniSplatScene, view_offset=(0.0, 0.0)) -> Image:
    img, _ = render_report(scene, view_offset)
    return img


def render_report(scene: MiniSplatScene, view_offset=(0.0, 0.0)):
    """Render plus bookkeeping on how many Gaussians actually drew."""
    cache = _forward(_params_from_scene(scene), scene.height, scene.width,
                     scene.background, view_offset)
    img = clipped_image(cache["out"])
    n = cache["n"]
    kept = cache["kept"].shape[0]
    return img, RenderReport(evaluated=kept, skipped=n - kept)


# --- backward pass -----------------------------------------------------------

def _backward(cache: dict, w: np.ndarray) -> dict:
    """Propagate dL/d(out) = w back to all parameter groups.

    Compositing is peeled with suffix sums: alpha_k feeds its own term and
    scales every later transmittance by (1 - alpha_k), so

        dL/dalpha_k = (w.c_k) T_k - S_k / (1 - alpha_k),

    with S_k the w-weighted contribution of everything behind k (later
    Gaussians plus background).
    """
    kept, order = cache["kept"], cache["order"]
    M = kept.shape[0]
    h, wd = cache["height"], cache["width"]
    zeros = lambda *shape: np.zeros(shape, dtype=np.float64)
    grads = {
        "positions": zeros(cache["n"], 3),
        "log_scales": zeros(cache["n"], 3),
        "rotations": zeros(cache["n"], 4),
        "color_logits": zeros(cache["n"], 3),
        "opacity_logits": zeros(cache["n"]),
    }
    if M == 0:
        return grads

    colors, u, T, g, o = (cache["colors"], cache["u"], cache["T"],
                          cache["g"], cache["o"])
    wc = np.einsum("chw,kc->khw", w, colors)
    bgw = np.einsum("chw,c->hw", w, cache["background"])
    wu = wc * u
    tail = np.cumsum(wu[::-1], axis=0)[::-1] - wu       # sum over j > k
    S = tail + bgw * cache["T_end"]
    dalpha = wc * T - S / cache["one_minus"]
    dalpha *= cache["alpha_raw"] < ALPHA_MAX            # clamp gate

    # opacity and color logits
    do = np.einsum("khw,khw->k", dalpha, g)
    dcolor = np.einsum("khw,chw->kc", u, w)
    grads["opacity_logits"][kept[order]] = do * o * (1.0 - o)
    grads["color_logits"][kept[order]] = dcolor * colors * (1.0 - colors)

    # through the Gaussian falloff: g = exp(-m/2), m = d^T A d
    dm = -0.5 * g * (dalpha * o[:, None, None])
    dx, dy = cache["dx"], cache["dy"]
    A00, A01, A11 = cache["A"]
    Sx = np.einsum("khw,khw->k", dm, dx)
    Sy = np.einsum("khw,khw->k", dm, dy)
    dmu_x = -2.0 * (A00 * Sx + A01 * Sy)
    dmu_y = -2.0 * (A01 * Sx + A11 * Sy)
    grads["positions"][kept[order], 0] = dmu_x
    grads["positions"][kept[order], 1] = dmu_y
    # z only orders the list; no gradient flows through the sort.

    # dL/dA as a full 2x2 (m treats A00, A01, A10, A11 independently)
    Mxx = np.einsum("khw,khw,khw->k", dm, dx, dx)
    Mxy = np.einsum("khw,khw,khw->k", dm, dx, dy)
    Myy = np.einsum("khw,khw,khw->k", dm, dy, dy)
    A = np.empty((M, 2, 2))
    A[:, 0, 0], A[:, 0, 1], A[:, 1, 0], A[:, 1, 1] = A00, A01, A01, A11
    MA = np.empty((M, 2, 2))
    MA[:, 0, 0], MA[:, 0, 1], MA[:, 1, 0], MA[:, 1, 1] = Mxx, Mxy, Mxy, Myy
    dSigma2 = -np.einsum("kij,kjl,klm->kim", A, MA, A)  # A = Sigma2^-1

    G3 = np.zeros((M, 3, 3))
    G3[:, :2, :2] = dSigma2
    R = cache["R"][kept][order]
    s = cache["s"][kept][order]
    s2 = s * s
    # Sigma3 = R diag(s^2) R^T with G3 symmetric:
    dR = 2.0 * np.einsum("kij,kjl->kil", G3, R * s2[:, None, :])
    ds2 = np.einsum("kia,kij,kja->ka", R, G3, R)
    grads["log_scales"][kept[order]] = ds2 * 2.0 * s2   # d(s^2)/d(log s) = 2 s^2

    # rotation: contract dR with dR/dq-hat, then through the normalization
    qn = cache["qn"][kept][order]
    wq, xq, yq, zq = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    r = {(i, j): dR[:, i, j] for i in range(3) for j in range(3)}
    dqh = np.empty((M, 4))
    dqh[:, 0] = 2 * (-zq * r[0, 1] + yq * r[0, 2] + zq * r[1, 0]
                     - xq * r[1, 2] - yq * r[2, 0] + xq * r[2, 1])
    dqh[:, 1] = 2 * (yq * r[0, 1] + zq * r[0, 2] + yq * r[1, 0]
                     - 2 * xq * r[1, 1] - wq * r[1, 2] + zq * r[2, 0]
                     + wq * r[2, 1] - 2 * xq * r[2, 2])
    dqh[:, 2] = 2 * (-2 * yq * r[0, 0] + xq * r[0, 1] + wq * r[0, 2]
                     + xq * r[1, 0] + zq * r[1, 2] - wq * r[2, 0]
                     + zq * r[2, 1] - 2 * yq * r[2, 2])
    dqh[:, 3] = 2 * (-2 * zq * r[0, 0] - wq * r[0, 1] + xq * r[0, 2]
                     + wq * r[1, 0] - 2 * zq * r[1, 1] + yq * r[1, 2]
                     + xq * r[2, 0] + yq * r[2, 1])
    # q-hat = q / |q|  =>  dq = (I - q-hat q-hat^T) dq-hat / |q|
    qnorm = cache["qnorm"][kept][order]
    proj = dqh - qn * np.einsum("ki,ki->k", qn, dqh)[:, None]
    grads["rotations"][kept[order]] = proj / qnorm[:, None]
    return grads


# --- loss --------------------------------------------------------------------

def _loss_parts(cache: dict, target: np.ndarray, lam: float, tau: float):
    out = cache["out"]
    resid = out - target
    l1 = float(np.mean(np.abs(resid)))
    w = np.sign(resid) / resid.size
    nu = normalized_variance(cache["s"])
    sloss = float(lam * np.mean(np.maximum(0.0, nu - tau))) if lam > 0 else 0.0
    return l1, sloss, w, nu


def loss_and_gradients(scene: MiniSplatScene, target: Image,
                       cfg: TrainConfig, view_offset=(0.0, 0.0)):
    """Mean-L1 to the target plus the elongation penalty, with analytic
    gradients for every parameter group."""
    if (target.height, target.width) != (scene.height, scene.width):
        raise DimensionMismatch(
            f"target {target.width}x{target.height} vs canvas "
            f"{scene.width}x{scene.height}")
    p = _params_from_scene(scene)
    cache = _forward(p, scene.height, scene.width, scene.background,
                     view_offset)
    l1, sloss, w, _ = _loss_parts(cache, target.planes, cfg.lambda_scale,
                                  cfg.tau)
    grads = _backward(cache, w)
    if cfg.lambda_scale > 0:
        s = cache["s"]
        gs = scale_loss_gradient(s, tau=cfg.tau, lam=cfg.lambda_scale)
        grads["log_scales"] += gs * s                   # ds/d(log s) = s
    return l1 + sloss, grads


# --- optimization ------------------------------------------------------------

class _Adam:
    """Plain Adam (b1=0.9, b2=0.999, eps=1e-8) with one lr per group."""

    def __init__(self, params: dict, lrs: dict):
        self.lrs = lrs
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= self.lrs[k] * (self.m[k] / c1) / \
                (np.sqrt(self.v[k] / c2) + eps)


@dataclass(frozen=True)
class ViewTarget:
    image: Image
    offset: tuple = (0.0, 0.0)  # scene shift when rendering this view


def _as_view_targets(targets):
    out = []
    for t in targets:
        out.append(t if isinstance(t, ViewTarget) else ViewTarget(t))
    if not out:
        raise ValueError("need at least one target")
    first = out[0].image
    for t in out[1:]:
        if (t.image.height, t.image.width) != (first.height, first.width):
            raise DimensionMismatch("all targets must share dimensions")
    return out


def fit(scene: MiniSplatScene, targets, cfg: TrainConfig,
        clean_reference: Image | None = None):
    """Optimize the scene against one or more views.

    Each view renders the same scene shifted by its 2D offset and the view
    losses are averaged, so inconsistent per-view content (e.g. independent
    noise) pulls the shared Gaussians toward the views' pointwise median —
    the blur-averaging effect under test.  Returns the fitted scene, a
    per-iteration trace (TRACE_HEADER columns; PSNR/SSIM tracked against the
    first view), and a metrics dict.  Deterministic for fixed inputs.
    """
    views = _as_view_targets(targets)
    tgt0 = views[0].image
    if (tgt0.height, tgt0.width) != (scene.height, scene.width):
        raise DimensionMismatch("target dimensions must equal the canvas")
    p = _params_from_scene(scene)
    lrs = {"positions": cfg.lr_position, "log_scales": cfg.lr_log_scale,
           "rotations": cfg.lr_rotation, "color_logits": cfg.lr_color,
           "opacity_logits": cfg.lr_opacity}
    opt = _Adam(p, lrs)
    trace = []
    for it in range(cfg.iterations):
        lam = cfg.lambda_scale if it >= cfg.scale_loss_warmup else 0.0
        total_l1 = 0.0
        sloss = 0.0
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        first_out = None
        nu = None
        for vi, view in enumerate(views):
            cache = _forward(p, scene.height, scene.width, scene.background,
                             view.offset)
            l1, s_part, w, nu = _loss_parts(cache, view.image.planes, lam,
                                            cfg.tau)
            total_l1 += l1
            g = _backward(cache, w)
            for k in grads:
                grads[k] += g[k]
            if vi == 0:
                first_out = cache["out"]
                sloss = s_part  # identical across views (same scene)
        nview = len(views)
        for k in grads:
            grads[k] /= nview
        total_l1 /= nview
        if lam > 0:
            s = np.exp(p["log_scales"])
            grads["log_scales"] += scale_loss_gradient(s, cfg.tau, lam) * s

        snap = clipped_image(first_out)
        row = (it, total_l1, sloss, total_l1 + sloss,
               psnr(snap, tgt0),
               ssim(snap, tgt0) if cfg.track_ssim else float("nan"),
               float(np.max(nu)))
        trace.append(row)
        opt.step(p, grads)

    fitted = _scene_with_params(scene, p)
    final_nu = normalized_variance(np.exp(p["log_scales"]))
    metrics = {
        "psnr": [], "ssim": [],
        "max_nu": float(np.max(final_nu)),
        "psnr_clean": None, "ssim_clean": None,
    }
    for view in views:
        img = render(fitted, view.offset)
        metrics["psnr"].append(psnr(img, view.image))
        metrics["ssim"].append(ssim(img, view.image))
    if clean_reference is not None:
        img = render(fitted)
        metrics["psnr_clean"] = psnr(img, clean_reference)
        metrics["ssim_clean"] = ssim(img, clean_reference)
    return fitted, trace, metrics


# --- synthetic perturbations -------------------------------------------------

def perturb(img: Image, mode: str = "uniform", epsilon: float = 16 / 255,
            seed: int = 0, view: int = 0) -> Image:
    """Add a bounded test perturbation.

    uniform: i.i.d. noise in [-eps, eps], seeded.  checker: the worst case
    for a 2x2 block-mean filter's complement — a block-aligned, zero-mean
    +/-eps checkerboard that lives entirely in the detail subbands (needs
    eps of headroom to survive the [0,1] clamp unclipped).  per-view:
    uniform with a (seed, view)-derived stream so each view draws
    independent noise reproducibly.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if mode == "uniform":
        rng = np.random.default_rng(seed)
        noise = rng.uniform(-epsilon, epsilon, size=img.planes.shape)
    elif mode == "per-view":
        rng = np.random.default_rng([seed, view])
        noise = rng.uniform(-epsilon, epsilon, size=img.planes.shape)
    elif mode == "checker":
        rr = np.arange(img.height)[:, None]
        cc = np.arange(img.width)[None, :]
        sign = np.where((rr + cc) % 2 == 0, 1.0, -1.0)
        noise = np.broadcast_to(epsilon * sign, img.planes.shape)
    else:
        raise ValueError(f"unknown perturbation mode {mode!r}")
    return clipped_image(img.planes + noise)


def seed_scene(n: int, height: int, width: int, seed: int = 0,
               background=(0.0, 0.0, 0.0), spread: float | None = None,
               color: float = 0.5, opacity: float = 0.3) -> MiniSplatScene:
    """Reproducible initialization: positions uniform over the canvas,
    near-isotropic scales sized so n Gaussians roughly tile it, identity-ish
    rotations, uniform color/opacity starting points."""
    rng = np.random.default_rng(seed)
    if spread is None:
        spread = 0.6 * np.sqrt(height * width / n)
    gs = []
    zs = rng.permutation(n) * 1.0 + rng.uniform(0.1, 0.9, n)  # distinct depths
    for i in range(n):
        pos = np.array([rng.uniform(0, width - 1), rng.uniform(0, height - 1),
                        zs[i]])
        log_s = np.log(spread) + rng.uniform(-0.2, 0.2, 3)
        quat = np.array([1.0, 0, 0, 0]) + rng.uniform(-0.05, 0.05, 4)
        gs.append(MiniGaussian(pos, log_s, quat,
                               np.full(3, float(logit(color))),
                               float(logit(opacity))))
    return MiniSplatScene(gs, height, width, np.asarray(background, float))


# --- serialization -----------------------------------------------------------

def scene_to_dict(scene: MiniSplatScene) -> dict:
    return {
        "height": scene.height,
        "width": scene.width,
        "background": [float(v) for v in scene.background],
        "gaussians": [
            {
                "position": [float(v) for v in g.position],
                "log_scales": [float(v) for v in g.log_scales],
                "rotation": [float(v) for v in g.rotation],
                "color_logit": [float(v) for v in g.color_logit],
                "opacity_logit": float(g.opacity_logit),
            }
            for g in scene.gaussians
        ],
    }


def scene_from_dict(d: dict) -> MiniSplatScene:
    gs = [MiniGaussian(np.array(g["position"]), np.array(g["log_scales"]),
                       np.array(g["rotation"]), np.array(g["color_logit"]),
                       float(g["opacity_logit"]))
          for g in d["gaussians"]]
    return MiniSplatScene(gs, int(d["height"]), int(d["width"]),
                          np.array(d["background"], dtype=np.float64))


def trace_to_csv(trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_HEADER)
        for row in trace:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
