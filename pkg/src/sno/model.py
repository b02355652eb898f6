"""The polynomial-spectral operator network.

Architecture: a pointwise lifting map L raises in_channels to a hidden
width; each spectral layer fits every hidden channel with a degree-d
polynomial, scales coefficient n by n!, mixes channels per mode with a
learnable [degree+1, width, width] tensor, undoes the scaling, evaluates
back onto the grid, and adds a pointwise linear bias path; a two-stage
projection P lowers the hidden state to out_channels.  Parameters never
depend on the grid length, so a trained model evaluates on any grid that
spans (up to a 5% margin) the training domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ExtrapolationOutOfRange, ShapeMismatch
from .polycore import (
    EXTRAPOLATION_MARGIN,
    FitOperator,
    Grid,
    factorials,
    fit_operator,
)


@dataclass(frozen=True)
class ModelConfig:
    width: int
    n_layers: int
    degree: int
    in_channels: int
    out_channels: int
    seed: int = 0

    def validate(self):
        if self.width < 1:
            raise ConfigError(f"width must be >= 1, got {self.width}")
        if not (0 <= self.degree <= 20):
            raise ConfigError(f"degree must be in [0, 20], got {self.degree}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be >= 1")

    def to_dict(self) -> dict:
        return {"width": self.width, "n_layers": self.n_layers, "degree": self.degree,
                "in_channels": self.in_channels, "out_channels": self.out_channels,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: int(d[k]) for k in
                      ("width", "n_layers", "degree", "in_channels", "out_channels", "seed")})


@dataclass
class SNOModel:
    config: ModelConfig
    params: T.ParamStore
    # z-score statistics of the training inputs, attached by the trainer so
    # evaluation at any resolution normalizes exactly as training did
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None


def param_count(config: ModelConfig) -> int:
    """Closed-form trainable-value count; independent of any grid length."""
    w, d, L = config.width, config.degree, config.n_layers
    lift = w * config.in_channels + w
    layers = L * ((d + 1) * w * w + w * w + w)
    proj = (w * w + w) + (config.out_channels * w + config.out_channels)
    return lift + layers + proj


def mode_gains(degree: int, n_ref: int = 256) -> np.ndarray:
    """Amplification of each coefficient mode through the fit/evaluate pair.

    gamma_m = ||V[:, m]|| * ||V+[m, :]|| on a reference uniform grid in
    [-1, 1]: the norm of the rank-one map a unit per-mode weight induces,
    nearly independent of the grid length for n >> degree.  The monomial
    basis is far from orthogonal, so these reach ~1e4 by degree 16; the
    spectral path divides each learned mode weight by its gain so that
    unit-scale parameter moves cause unit-scale functional moves.  Without
    this static normalization a per-coordinate optimizer step of 1e-3 on a
    high mode shifts the layer output a hundredfold and training diverges.
    """
    ref = fit_operator(Grid(np.linspace(-1.0, 1.0, n_ref)), degree)
    return np.linalg.norm(ref.vandermonde, axis=0) * np.linalg.norm(ref.pinv, axis=1)


def init_model(config: ModelConfig) -> SNOModel:
    """Seeded initialization; same seed gives identical parameter bytes."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    w, d = config.width, config.degree

    def fan_in_uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    ps = T.ParamStore()
    ps.add("lift.W", fan_in_uniform((w, config.in_channels), config.in_channels))
    ps.add("lift.b", fan_in_uniform((w,), config.in_channels))
    s = 1.0 / (w * (d + 1))
    for i in range(config.n_layers):
        ps.add(f"layers.{i}.spectral", rng.uniform(-s, s, size=(d + 1, w, w)))
        ps.add(f"layers.{i}.W", fan_in_uniform((w, w), w))
        ps.add(f"layers.{i}.b", fan_in_uniform((w,), w))
    ps.add("proj.W1", fan_in_uniform((w, w), w))
    ps.add("proj.b1", fan_in_uniform((w,), w))
    ps.add("proj.W2", fan_in_uniform((config.out_channels, w), w))
    ps.add("proj.b2", fan_in_uniform((config.out_channels,), w))
    return SNOModel(config=config, params=ps)


_MODE_GAIN_CACHE: dict[int, np.ndarray] = {}


def _cached_mode_gains(degree: int) -> np.ndarray:
    g = _MODE_GAIN_CACHE.get(degree)
    if g is None:
        g = _MODE_GAIN_CACHE[degree] = mode_gains(degree)
    return g


def _spectral_path(h: T.Tensor, spectral_weights: T.Tensor, fitop: FitOperator,
                   eval_vandermonde: np.ndarray | None = None) -> T.Tensor:
    """Fit -> factorial scaling -> per-mode channel mix -> unscale -> evaluate.

    The learned mixing is applied as spectral_weights[m] / gamma_m with the
    static per-mode gains from mode_gains(); see there for why.
    """
    fact = factorials(fitop.degree)
    gains = _cached_mode_gains(fitop.degree)
    coeffs = T.apply_matrix(h, fitop.pinv.T)
    spec = T.scale_last(coeffs, fact)
    mixing = T.mul(spectral_weights, (1.0 / gains)[:, None, None])
    mixed = T.mode_mix(spec, mixing)
    back = T.scale_last(mixed, 1.0 / fact)
    V = fitop.vandermonde if eval_vandermonde is None else eval_vandermonde
    return T.apply_matrix(back, V.T)


def sumudu_layer_forward(h: T.Tensor, layer_params: dict, fitop: FitOperator,
                         last: bool = False,
                         eval_vandermonde: np.ndarray | None = None,
                         bias_input: T.Tensor | None = None) -> T.Tensor:
    """One spectral layer: transform path plus pointwise bias path.

    bias_input defaults to h; super-resolution passes h interpolated onto
    the evaluation grid so both paths leave at the same length.
    """
    if h.data.ndim != 3 or h.data.shape[-1] != fitop.n:
        raise ShapeMismatch(
            f"hidden state {h.data.shape} incompatible with {fitop.n}-point fit operator")
    spectral = _spectral_path(h, layer_params["spectral"], fitop, eval_vandermonde)
    local = bias_input if bias_input is not None else h
    out = T.add(spectral, T.linear(local, layer_params["W"], layer_params["b"]))
    return out if last else T.activation(out)


def _layer_params(model: SNOModel, i: int) -> dict:
    return {"spectral": model.params[f"layers.{i}.spectral"],
            "W": model.params[f"layers.{i}.W"],
            "b": model.params[f"layers.{i}.b"]}


def _project(model: SNOModel, h: T.Tensor) -> T.Tensor:
    p1 = T.activation(T.linear(h, model.params["proj.W1"], model.params["proj.b1"]))
    return T.linear(p1, model.params["proj.W2"], model.params["proj.b2"])


def forward(model: SNOModel, x, grid: Grid) -> T.Tensor:
    """Full pass on the training-resolution grid: P(layers(L(x)))."""
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    if x.data.ndim != 3 or x.data.shape[1] != model.config.in_channels:
        raise ShapeMismatch(f"input {x.data.shape} vs {model.config.in_channels} channels")
    if x.data.shape[2] != grid.n:
        raise ShapeMismatch(f"input length {x.data.shape[2]} vs {grid.n}-point grid")
    fitop = fit_operator(grid, model.config.degree)
    h = T.linear(x, model.params["lift.W"], model.params["lift.b"])
    n_layers = model.config.n_layers
    for i in range(n_layers):
        h = sumudu_layer_forward(h, _layer_params(model, i), fitop,
                                 last=(i == n_layers - 1))
    return _project(model, h)


def interp_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Dense linear-interpolation matrix [n_dst, n_src].

    Points beyond the source range extend the boundary segment linearly, so
    affine signals stay exact across the extrapolation margin.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n_src = src.shape[0]
    M = np.zeros((dst.shape[0], n_src))
    idx = np.searchsorted(src, dst, side="left")
    for r, (t, j) in enumerate(zip(dst, idx)):
        if j < n_src and src[j] == t:
            M[r, j] = 1.0
            continue
        j = min(max(j, 1), n_src - 1)  # boundary segment beyond the range
        w = (t - src[j - 1]) / (src[j] - src[j - 1])
        M[r, j - 1] = 1.0 - w
        M[r, j] = w
    return M


def forward_at_resolution(model: SNOModel, x, train_grid: Grid, eval_grid: Grid) -> T.Tensor:
    """Evaluate with training-resolution inputs on a different output grid.

    All layers but the last run at training resolution; the last layer's
    polynomial is evaluated on eval_grid and its bias path sees the hidden
    state linearly interpolated onto eval_grid.  eval_grid must stay within
    the training span plus the 5% extrapolation margin.
    """
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    if x.data.shape[2] != train_grid.n:
        raise ShapeMismatch(f"input length {x.data.shape[2]} vs {train_grid.n}-point grid")
    fitop = fit_operator(train_grid, model.config.degree)
    if np.array_equal(eval_grid.points, train_grid.points):
        V_eval = fitop.vandermonde
    else:
        z = fitop.domain_map.apply(eval_grid.points)
        zmax = float(np.max(np.abs(z)))
        if zmax > EXTRAPOLATION_MARGIN:
            raise ExtrapolationOutOfRange(
                f"evaluation grid reaches normalized {zmax:.4f}, beyond margin {EXTRAPOLATION_MARGIN}")
        V_eval = np.power(z[:, None], np.arange(model.config.degree + 1)[None, :])
    h = T.linear(x, model.params["lift.W"], model.params["lift.b"])
    n_layers = model.config.n_layers
    for i in range(n_layers - 1):
        h = sumudu_layer_forward(h, _layer_params(model, i), fitop, last=False)
    M = interp_matrix(train_grid.points, eval_grid.points)
    h_eval = T.apply_matrix(h, M.T)
    h = sumudu_layer_forward(h, _layer_params(model, n_layers - 1), fitop, last=True,
                             eval_vandermonde=V_eval, bias_input=h_eval)
    return _project(model, h)
