"""Loss assembly: multi-view silhouette loss with gradients, and the
stripe-based tree similarity with regularization multipliers.

The differentiable path chains d(loss)/d(pixels) through the renderer and
the generator Jacobian. The tree path compares semantic masks stripe by
stripe and multiplies in min/max characteristic ratios; the result is a
similarity in [0, 1] that the genetic optimizer maximizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .generators import generate, get_generator
from .mesh import TriangleMesh
from .params import ParameterVector
from .render import Camera, SilhouetteMask, mse, render_backward, render_silhouette

BACKGROUND, BRANCH, FOLIAGE = 0, 1, 2
RATIO_EPS = 1e-3  # regularizes B/L on leafless stripes
DEFAULT_STRIPES = 24
KIND_MISMATCH_FACTOR = 0.5

# HSV classification thresholds (hue in degrees)
FOLIAGE_HUE = (60.0, 180.0)
FOLIAGE_MIN_SAT = 0.25
FOLIAGE_MIN_VAL = 0.15
BRANCH_HUE_MAX = 60.0
BRANCH_VAL = (0.1, 0.8)

_SEMANTIC_PALETTE = [0, 0, 0, 139, 90, 43, 60, 170, 60]


@dataclass
class SemanticMask:
    """Per-pixel {background, branch, foliage} classification."""

    classes: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.uint8)
        if self.classes.ndim != 2:
            raise ValueError("classes must be 2D")
        if self.classes.max(initial=0) > FOLIAGE:
            raise ValueError("classes must be 0, 1 or 2")

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    def coverage(self) -> SilhouetteMask:
        return SilhouetteMask((self.classes != BACKGROUND).astype(np.float64))


@dataclass
class StripeStats:
    """Per-stripe crown borders, dense-crown borders and pixel fractions."""

    a: np.ndarray  # first non-background column
    b: np.ndarray  # dense-crown start
    c: np.ndarray  # dense-crown end
    d: np.ndarray  # last non-background column
    branch_frac: np.ndarray  # B
    leaf_frac: np.ndarray  # L
    crown: np.ndarray  # bool; True = Crown, False = Trunk
    empty: np.ndarray  # bool; stripe has no foreground pixels
    width: int

    @property
    def stripe_count(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class TreeCharacteristics:
    """Optional regularization targets; any subset may be active."""

    branch_vertices: float | None = None
    height: float | None = None
    width: float | None = None
    branch_density: float | None = None
    leaf_density: float | None = None
    leaf_size: float | None = None

    def active(self) -> dict[str, float]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if getattr(self, f.name) is not None
        }

    @staticmethod
    def from_dict(values: dict) -> "TreeCharacteristics":
        known = {f.name for f in fields(TreeCharacteristics)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown tree characteristics {unknown}")
        return TreeCharacteristics(**{k: float(v) for k, v in values.items()})


# ----------------------------------------------------------------------
# differentiable multi-view loss
# ----------------------------------------------------------------------

def multiview_loss(P: ParameterVector, cams: list[Camera],
                   refs: list[SilhouetteMask], gen_id: str, lod: int,
                   rng_seed: int = 0, with_grad: bool = True):
    """Mean per-view silhouette MSE and its gradients.

    Returns (loss, d_P, d_cams) with d_P in raw parameter units (zero at
    discrete slots) and d_cams one (azimuth, elevation, distance, fov) row
    per view. With ``with_grad=False`` the gradient slots are None.
    """
    info = get_generator(gen_id)
    if not info.differentiable:
        raise ValueError(
            f"generator {gen_id!r} is not differentiable; use the genetic path"
        )
    if not cams or len(cams) != len(refs):
        raise ValueError("need equal, nonzero numbers of cameras and references")

    mesh, jac = generate(gen_id, P, lod, with_jacobian=with_grad)
    indices = mesh.opaque_indices()
    n = len(cams)
    loss = 0.0
    d_p = np.zeros(len(P)) if with_grad else None
    d_cams = np.zeros((n, 4)) if with_grad else None
    for i, (cam, ref) in enumerate(zip(cams, refs)):
        rendered = render_silhouette(mesh.positions, indices, cam)
        l_i, d_pix = mse(rendered, ref)
        loss += l_i / n
        if with_grad:
            grads = render_backward(mesh.positions, indices, cam, d_pix,
                                    rng_seed=rng_seed * 131071 + i)
            d_p += jac.vjp(grads.d_pos) / n
            d_cams[i] = grads.d_camera / n
    return loss, d_p, d_cams


# ----------------------------------------------------------------------
# semantic masks
# ----------------------------------------------------------------------

def semantic_from_color(image: np.ndarray) -> SemanticMask:
    """Classify an 8-bit RGB image by color: green foliage, brown/gray branches.

    Every pixel maps to exactly one class.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] < 3:
        raise ValueError("expected an (H, W, 3) RGB image")
    rgb = img[..., :3] / 255.0
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    chroma = mx - mn
    val = mx
    sat = np.where(mx > 0, chroma / np.maximum(mx, 1e-12), 0.0)

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    hue = np.zeros_like(mx)
    nz = chroma > 1e-12
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    safe = np.where(nz, chroma, 1.0)
    hue[rmax] = (60.0 * ((g - b) / safe))[rmax] % 360.0
    hue[gmax] = (60.0 * ((b - r) / safe) + 120.0)[gmax]
    hue[bmax] = (60.0 * ((r - g) / safe) + 240.0)[bmax]

    foliage = (
        (hue >= FOLIAGE_HUE[0]) & (hue <= FOLIAGE_HUE[1])
        & (sat > FOLIAGE_MIN_SAT) & (val > FOLIAGE_MIN_VAL)
    )
    branch_band = (val > BRANCH_VAL[0]) & (val <= BRANCH_VAL[1])
    branch = ~foliage & branch_band & ((hue < BRANCH_HUE_MAX) | (sat <= FOLIAGE_MIN_SAT))
    classes = np.zeros(mx.shape, dtype=np.uint8)
    classes[branch] = BRANCH
    classes[foliage] = FOLIAGE
    return SemanticMask(classes)


def semantic_from_mesh(mesh: TriangleMesh, cam: Camera) -> SemanticMask:
    """Semantic impostor of a generated tree: branch vs foliage coverage."""
    woody = mesh.indices_for_labels(("trunk", "branch"))
    leafy = mesh.indices_for_labels(("leaf",))
    b_cov = render_silhouette(mesh.positions, woody, cam).coverage
    l_cov = render_silhouette(mesh.positions, leafy, cam).coverage
    classes = np.zeros(b_cov.shape, dtype=np.uint8)
    classes[(b_cov >= 0.5) & (b_cov >= l_cov)] = BRANCH
    classes[(l_cov >= 0.5) & (l_cov > b_cov)] = FOLIAGE
    return SemanticMask(classes)


# ----------------------------------------------------------------------
# stripe decomposition and tree similarity
# ----------------------------------------------------------------------

def stripe_decompose(mask: SemanticMask, n_stripes: int = DEFAULT_STRIPES) -> StripeStats:
    """Split the mask into horizontal stripes and extract per-stripe features."""
    if n_stripes < 1:
        raise ValueError("need at least one stripe")
    cls = mask.classes
    h, w = cls.shape
    bounds = np.linspace(0, h, n_stripes + 1).astype(int)
    a = np.zeros(n_stripes, dtype=np.int64)
    b = np.zeros(n_stripes, dtype=np.int64)
    c = np.zeros(n_stripes, dtype=np.int64)
    d = np.zeros(n_stripes, dtype=np.int64)
    branch_frac = np.zeros(n_stripes)
    leaf_frac = np.zeros(n_stripes)
    crown = np.zeros(n_stripes, dtype=bool)
    empty = np.ones(n_stripes, dtype=bool)

    for i in range(n_stripes):
        band = cls[bounds[i]:bounds[i + 1]]
        if band.size == 0:
            continue
        nonbg = band != BACKGROUND
        cols = np.flatnonzero(nonbg.any(axis=0))
        branch_frac[i] = np.count_nonzero(band == BRANCH) / band.size
        leaf_frac[i] = np.count_nonzero(band == FOLIAGE) / band.size
        crown[i] = leaf_frac[i] > branch_frac[i]
        if len(cols) == 0:
            continue
        empty[i] = False
        a[i], d[i] = cols[0], cols[-1]
        nbg_count = nonbg.sum(axis=0)
        fol_count = (band == FOLIAGE).sum(axis=0)
        dense = np.zeros(w, dtype=bool)
        has = nbg_count > 0
        dense[has] = fol_count[has] / nbg_count[has] > 0.75
        dense[: a[i]] = False
        dense[d[i] + 1:] = False
        run = _longest_run(dense)
        if run is None:
            b[i] = c[i] = (a[i] + d[i]) // 2
        else:
            b[i], c[i] = run
    return StripeStats(a, b, c, d, branch_frac, leaf_frac, crown, empty, w)


def _longest_run(flags: np.ndarray) -> tuple[int, int] | None:
    """(start, end) of the longest True run, or None."""
    idx = np.flatnonzero(flags)
    if len(idx) == 0:
        return None
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [len(idx) - 1]])
    lengths = ends - starts
    k = int(np.argmax(lengths))
    return int(idx[starts[k]]), int(idx[ends[k]])


def tree_similarity(ref: StripeStats, gen: StripeStats) -> float:
    """Per-stripe similarity in [0, 1], averaged over non-empty stripes.

    Each stripe compares crown borders (a, b, c, d) with an exponential
    falloff, multiplies the min/max ratio of the regularized B/L ratios,
    and is halved when the trunk/crown classification disagrees.
    """
    if ref.stripe_count != gen.stripe_count:
        raise ValueError(
            f"stripe counts differ: {ref.stripe_count} vs {gen.stripe_count}"
        )
    if ref.width != gen.width:
        raise ValueError(f"stripe widths differ: {ref.width} vs {gen.width}")
    active = ~(ref.empty & gen.empty)
    if not np.any(active):
        return 1.0
    delta = (
        np.abs(ref.a - gen.a) + np.abs(ref.b - gen.b)
        + np.abs(ref.c - gen.c) + np.abs(ref.d - gen.d)
    ).astype(np.float64)
    s = np.exp(-delta / ref.width)
    rho_ref = (ref.branch_frac + RATIO_EPS) / (ref.leaf_frac + RATIO_EPS)
    rho_gen = (gen.branch_frac + RATIO_EPS) / (gen.leaf_frac + RATIO_EPS)
    s *= np.minimum(rho_ref, rho_gen) / np.maximum(rho_ref, rho_gen)
    s = np.where(ref.crown == gen.crown, s, s * KIND_MISMATCH_FACTOR)
    return float(np.mean(s[active]))


def regularized_tree_loss(tsim: float, gen_chars: TreeCharacteristics,
                          ref_chars: TreeCharacteristics) -> float:
    """tsim times the product of min/max ratios over shared characteristics.

    Returned as a fitness to maximize: every multiplier is 1 exactly when
    the generated characteristic matches the reference.
    """
    if not 0.0 <= tsim <= 1.0 + 1e-9:
        raise ValueError(f"tsim out of [0, 1]: {tsim}")
    gen_active = gen_chars.active()
    result = float(tsim)
    for name, ref_val in ref_chars.active().items():
        if name not in gen_active:
            continue
        gen_val = gen_active[name]
        if ref_val <= 0 or gen_val <= 0:
            raise ValueError(f"characteristic {name} must be positive")
        result *= min(gen_val, ref_val) / max(gen_val, ref_val)
    return result


# ----------------------------------------------------------------------
# semantic mask file I/O (indexed PNG: 0 background, 1 branch, 2 foliage)
# ----------------------------------------------------------------------

def semantic_to_rgb(mask: SemanticMask) -> np.ndarray:
    """Colorize a semantic mask (black/brown/green), e.g. for synthetic references."""
    palette = np.array(_SEMANTIC_PALETTE, dtype=np.uint8).reshape(3, 3)
    return palette[mask.classes]


def save_semantic(mask: SemanticMask, path: Path) -> None:
    img = Image.fromarray(mask.classes, mode="P")
    img.putpalette(_SEMANTIC_PALETTE)
    img.save(Path(path))


def load_semantic(path: Path) -> SemanticMask:
    img = Image.open(Path(path))
    if img.mode != "P":
        raise ValueError(f"{path}: semantic masks must be indexed PNG")
    return SemanticMask(np.asarray(img, dtype=np.uint8))
