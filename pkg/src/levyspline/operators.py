"""Spline-admissible operator catalog.

Each operator L comes with a causal or decaying Green's function rho_L
(L rho_L = delta), an adjoint left inverse T acting on sampled test
functions (T L* phi = phi), and discrete forward applications used to
recover impulse trains from synthesized realizations.  The fractional
Laplacian has no closed-form Green's constant here; it is inverted
spectrally with the DC bin zeroed, which selects one valid left inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

# Margin tolerance for exponentially decaying kernels: margin solves
# exp(-alpha * margin) < TRUNCATION_TOL.
TRUNCATION_TOL = 1e-6
# Spectral synthesis pads the window by this fraction of the box length
# per side before inversion to suppress periodic wrap-around.
SPECTRAL_PAD_FRACTION = 0.25
# Minimum number of samples a test function's support must span per axis.
MIN_SUPPORT_SPAN = 16

CLOSED_FORM_FAMILIES = ("D", "DaI", "DxDy", "DaIxDaIy")
GRAMMAR_ONLY_FAMILIES = ("Dgamma", "polyharmonic_log")


class OperatorError(Exception):
    """Invalid operator construction or application."""


class UnsupportedOperator(OperatorError):
    """Family is part of the config grammar but not constructible."""


class UnsupportedClosedForm(OperatorError):
    """Operator has no closed-form Green's function; use the spectral path."""


class GridTooCoarse(OperatorError):
    """Test function support spans too few samples for stable quadrature."""


@dataclass(frozen=True)
class OperatorSpec:
    """One catalog operator.

    family: 'D' (n-fold derivative, 1-D), 'DaI' (D + alpha I, 1-D),
    'DxDy' (separable first derivatives, 2-D), 'DaIxDaIy' (separable
    D + alpha I, 2-D), 'frac_laplacian' ((-Laplace)^(gamma/2), spectral).
    """

    family: str
    n: int = 1
    alpha: float | None = None
    gamma: float | None = None
    dim: int = 1

    def __post_init__(self):
        fam = self.family
        if fam in GRAMMAR_ONLY_FAMILIES:
            raise UnsupportedOperator(
                f"operator family {fam!r} is in the catalog grammar but not constructible"
            )
        if fam == "D":
            if self.dim != 1 or self.n < 1:
                raise OperatorError("D requires dim=1 and n >= 1")
        elif fam == "DaI":
            if self.dim != 1:
                raise OperatorError("DaI requires dim=1")
            self._check_alpha()
        elif fam == "DxDy":
            if self.dim != 2:
                raise OperatorError("DxDy requires dim=2")
        elif fam == "DaIxDaIy":
            if self.dim != 2:
                raise OperatorError("DaIxDaIy requires dim=2")
            self._check_alpha()
        elif fam == "frac_laplacian":
            if self.gamma is None or not self.gamma > 0.0:
                raise OperatorError("frac_laplacian requires gamma > 0")
            if self.dim < 1:
                raise OperatorError("frac_laplacian requires dim >= 1")
        else:
            raise OperatorError(f"unknown operator family {fam!r}")

    def _check_alpha(self):
        if self.alpha is None or isinstance(self.alpha, complex):
            raise OperatorError("exponential family requires a real alpha > 0")
        if not self.alpha > 0.0:
            raise OperatorError("exponential family requires alpha > 0")

    @property
    def inversion(self):
        return "spectral" if self.family == "frac_laplacian" else "closed_form"

    @property
    def causal(self):
        return self.family != "frac_laplacian"

    @property
    def pinned(self):
        """Causal 1-D synthesis pins the null-space mode so s(lo) = 0."""
        return self.family in ("D", "DaI")


def make_operator(family, n=1, alpha=None, gamma=None, dim=None):
    if dim is None:
        dim = 2 if family in ("DxDy", "DaIxDaIy") else 1
    return OperatorSpec(family=family, n=int(n), alpha=alpha, gamma=gamma, dim=int(dim))


def parse_operator_config(source, dim=None):
    """Parse 'operator=DaI alpha=0.1' style descriptors (string or mapping)."""
    if isinstance(source, str):
        try:
            pairs = dict(tok.split("=", 1) for tok in source.split())
        except ValueError as exc:
            raise OperatorError(f"bad operator descriptor {source!r}") from exc
    else:
        pairs = {k: str(v) for k, v in dict(source).items()}
    if "operator" not in pairs:
        raise OperatorError("operator descriptor missing 'operator=' token")
    fam = pairs["operator"]
    kw = {}
    try:
        if "n" in pairs:
            kw["n"] = int(pairs["n"])
        if "alpha" in pairs:
            kw["alpha"] = float(pairs["alpha"])
        if "gamma" in pairs:
            kw["gamma"] = float(pairs["gamma"])
        use_dim = int(pairs["dim"]) if "dim" in pairs else dim
    except ValueError as exc:
        raise OperatorError(f"bad numeric value in operator descriptor {source!r}") from exc
    return make_operator(fam, dim=use_dim, **kw)


def format_operator_config(op):
    """Inverse of parse_operator_config for the catalog grammar."""
    if op.family == "D":
        return f"operator=D n={op.n}"
    if op.family == "DaI":
        return f"operator=DaI alpha={op.alpha:.17g}"
    if op.family == "DxDy":
        return "operator=DxDy"
    if op.family == "DaIxDaIy":
        return f"operator=DaIxDaIy alpha={op.alpha:.17g}"
    return f"operator=frac_laplacian gamma={op.gamma:.17g}"


def margin_rule(op, box):
    """Per-side sampling margin required by the operator's kernel decay."""
    if op.family in ("D", "DxDy"):
        return 0.0
    if op.family in ("DaI", "DaIxDaIy"):
        return math.log(1.0 / TRUNCATION_TOL) / op.alpha
    return SPECTRAL_PAD_FRACTION * max(box.lengths)


def green(op, x):
    """Closed-form Green's function, Heaviside convention u(0) = 1."""
    if op.inversion != "closed_form":
        raise UnsupportedClosedForm(
            "fractional Laplacian has no closed-form kernel here; use the spectral path"
        )
    if op.dim == 1:
        t = np.asarray(x, dtype=float)
        if op.family == "D":
            mask = t >= 0.0
            if op.n == 1:
                out = mask.astype(float)
            else:
                out = np.where(mask, t, 0.0) ** (op.n - 1) / math.factorial(op.n - 1)
                out = np.where(mask, out, 0.0)
        else:
            out = np.where(t >= 0.0, np.exp(-op.alpha * np.where(t >= 0.0, t, 0.0)), 0.0)
        return float(out) if np.ndim(x) == 0 else out
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if op.family == "DxDy":
        out = ((pts[:, 0] >= 0.0) & (pts[:, 1] >= 0.0)).astype(float)
    else:
        mask = (pts[:, 0] >= 0.0) & (pts[:, 1] >= 0.0)
        decay = np.exp(-op.alpha * np.clip(pts[:, 0], 0.0, None)) * np.exp(
            -op.alpha * np.clip(pts[:, 1], 0.0, None)
        )
        out = np.where(mask, decay, 0.0)
    return float(out[0]) if scalar else out


def _support_spans(phi):
    """Span in samples of the nonzero region along each axis."""
    nz = phi != 0.0
    spans = []
    for axis in range(phi.ndim):
        other = tuple(i for i in range(phi.ndim) if i != axis)
        line = nz.any(axis=other) if other else nz
        idx = np.nonzero(line)[0]
        spans.append(0 if idx.size == 0 else int(idx[-1] - idx[0] + 1))
    return spans


def _check_support(phi):
    if not np.any(phi):
        return False
    if min(_support_spans(phi)) < MIN_SUPPORT_SPAN:
        raise GridTooCoarse(
            f"test function support spans fewer than {MIN_SUPPORT_SPAN} samples"
        )
    return True


def _tail_integral(phi, h, axis=-1):
    """Right-tail trapezoid integral along `axis`: out(x) = integral_x^end phi."""
    phi = np.moveaxis(phi, axis, -1)
    panels = 0.5 * h * (phi[..., :-1] + phi[..., 1:])
    out = np.zeros_like(phi)
    out[..., :-1] = np.flip(np.cumsum(np.flip(panels, -1), axis=-1), -1)
    return np.moveaxis(out, -1, axis)


def _tail_exp_integral(phi, h, alpha, axis=-1):
    """Trapezoid discretization of integral_x^end exp(-alpha (t - x)) phi(t) dt.

    Backward recursion I_i = r I_{i+1} + (h/2)(phi_i + r phi_{i+1}), r =
    exp(-alpha h), evaluated with a linear filter on the reversed array.
    """
    r = math.exp(-alpha * h)
    rev = np.flip(phi, axis)
    lead = [slice(None)] * rev.ndim
    lead[axis] = slice(0, 1)
    # zero tail at the window end: cancel the filter's leading half panel
    zi = -0.5 * h * rev[tuple(lead)]
    out, _ = lfilter([0.5 * h, 0.5 * h * r], [1.0, -r], rev, axis=axis, zi=zi)
    return np.flip(out, axis)


def _frequency_norm(shape, h):
    freqs = [2.0 * math.pi * np.fft.fftfreq(n, d=h) for n in shape]
    mesh = np.meshgrid(*freqs, indexing="ij")
    return np.sqrt(sum(g**2 for g in mesh))


def spectral_divide(phi, h, gamma):
    """Inverse Fourier multiplier ||omega||^(-gamma) with the DC bin zeroed."""
    norm = _frequency_norm(phi.shape, h)
    spec = np.fft.fftn(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        spec = np.where(norm > 0.0, spec / norm**gamma, 0.0)
    return np.fft.ifftn(spec).real


def spectral_multiply(phi, h, gamma):
    """Forward Fourier multiplier ||omega||^gamma (DC stays zero)."""
    norm = _frequency_norm(phi.shape, h)
    spec = np.fft.fftn(phi) * norm**gamma
    return np.fft.ifftn(spec).real


def apply_T(op, phi, step):
    """Adjoint left inverse on a sampled test function.

    phi must be compactly supported inside the grid; its support must span
    at least MIN_SUPPORT_SPAN samples per axis.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != op.dim:
        raise OperatorError("test function dimension must match the operator")
    if not _check_support(phi):
        return np.zeros_like(phi)
    h = float(step)
    if op.family == "D":
        out = phi
        for _ in range(op.n):
            out = _tail_integral(out, h, axis=0)
        return out
    if op.family == "DaI":
        return _tail_exp_integral(phi, h, op.alpha, axis=0)
    if op.family == "DxDy":
        return _tail_integral(_tail_integral(phi, h, axis=0), h, axis=1)
    if op.family == "DaIxDaIy":
        out = _tail_exp_integral(phi, h, op.alpha, axis=0)
        return _tail_exp_integral(out, h, op.alpha, axis=1)
    return spectral_divide(phi, h, op.gamma)


def apply_adjoint(op, phi, step):
    """Sampled adjoint L* phi via central differences (spectral ops exactly)."""
    phi = np.asarray(phi, dtype=float)
    h = float(step)
    if op.family == "D":
        out = phi
        for _ in range(op.n):
            out = -np.gradient(out, h, axis=0, edge_order=2)
        return out
    if op.family == "DaI":
        return -np.gradient(phi, h, axis=0, edge_order=2) + op.alpha * phi
    if op.family == "DxDy":
        gx = np.gradient(phi, h, axis=0, edge_order=2)
        return np.gradient(gx, h, axis=1, edge_order=2)
    if op.family == "DaIxDaIy":
        out = -np.gradient(phi, h, axis=0, edge_order=2) + op.alpha * phi
        return -np.gradient(out, h, axis=1, edge_order=2) + op.alpha * out
    return spectral_multiply(phi, h, op.gamma)


def _forward_diff(arr, h, axis):
    out = np.zeros_like(arr)
    src = np.moveaxis(arr, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[:-1] = (src[1:] - src[:-1]) / h
    return out


def apply_L_discrete(op, realization):
    """Discrete forward operator on a GridRealization (or on a raw array
    paired with `step` via apply_L_samples)."""
    out = apply_L_samples(op, realization.samples, realization.step)
    return replace(realization, samples=out)


def apply_L_samples(op, samples, step):
    s = np.asarray(samples, dtype=float)
    h = float(step)
    if op.family == "D":
        out = s
        for _ in range(op.n):
            out = _forward_diff(out, h, axis=0)
        return out
    if op.family == "DaI":
        return _forward_diff(s, h, axis=0) + op.alpha * s
    if op.family == "DxDy":
        return _forward_diff(_forward_diff(s, h, axis=0), h, axis=1)
    if op.family == "DaIxDaIy":
        out = _forward_diff(s, h, axis=0) + op.alpha * s
        return _forward_diff(out, h, axis=1) + op.alpha * out
    return spectral_multiply(s, h, op.gamma)
