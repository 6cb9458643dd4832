"""Holomorphic neural networks for the crack-enriched auxiliary functions.

A network is a complex multilayer perceptron with ``exp`` activations, so its
output is an entire function of its input. Forward evaluation propagates
jets (value, d/dz, d2/dz2) layer by layer; parameter gradients of the
boundary loss are obtained by reverse-mode sweeps over that jet propagation.

Gradients use the convention ``g = dL/dRe(w) + i dL/dIm(w)`` for every
complex parameter w, which is what the Adam update consumes component-wise.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .boundary import BoundarySet, bc_values
from .elastic import CrackGeometry, ElasticMaterial, HoloJet, evaluate_fields, fields_from_jets
from .errors import Diverged, Overflow

PREACT_LIMIT = 50.0
PARAMS_SCHEMA = "holocrack.hnn_params/1"


@dataclass(frozen=True)
class HnnArchitecture:
    layer_widths: tuple = (1, 10, 10, 10, 1)
    activation: str = "complex_exp"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2 or widths[0] != 1 or widths[-1] != 1 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        if self.activation != "complex_exp":
            raise ValueError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def parameter_count(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


@dataclass
class HnnParams:
    """Weights ``(n_out, n_in)`` and biases ``(n_out,)`` per layer.

    Calling an instance evaluates the network jet, so a parameter set can be
    handed directly to the field routines as a holomorphic supplier.
    """

    weights: list
    biases: list
    input_scale: float = 1.0

    def __call__(self, z) -> HoloJet:
        return forward_jet(self, z)

    @property
    def architecture(self) -> HnnArchitecture:
        widths = [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]
        return HnnArchitecture(tuple(widths))

    def copy(self) -> "HnnParams":
        return HnnParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.input_scale)

    def zeros_like(self) -> "HnnParams":
        return HnnParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases],
                         self.input_scale)

    def arrays(self):
        return list(self.weights) + list(self.biases)

    def to_dict(self) -> dict:
        return {
            "schema": PARAMS_SCHEMA,
            "layer_widths": list(self.architecture.layer_widths),
            "activation": "complex_exp",
            "input_scale": self.input_scale,
            "weights_re": [w.real.ravel().tolist() for w in self.weights],
            "weights_im": [w.imag.ravel().tolist() for w in self.weights],
            "biases_re": [b.real.tolist() for b in self.biases],
            "biases_im": [b.imag.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HnnParams":
        if data.get("schema") != PARAMS_SCHEMA:
            raise ValueError(f"unexpected schema {data.get('schema')!r}")
        widths = data["layer_widths"]
        weights, biases = [], []
        for i in range(len(widths) - 1):
            shape = (widths[i + 1], widths[i])
            w = np.asarray(data["weights_re"][i]) + 1j * np.asarray(data["weights_im"][i])
            weights.append(w.reshape(shape))
            biases.append(np.asarray(data["biases_re"][i]) + 1j * np.asarray(data["biases_im"][i]))
        return cls(weights, biases, float(data["input_scale"]))


def init_params(arch: HnnArchitecture, rng, input_scale: float = 1.0, output_gain: float = 1.0) -> HnnParams:
    """Uniform complex weights with half-width ``sqrt(3/fan_in)/2``; zero biases.

    ``output_gain`` scales the last layer. A small gain starts training near
    the zero function instead of at an output that is orders of magnitude
    off the boundary data.
    """
    widths = arch.layer_widths
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        b = 0.5 * np.sqrt(3.0 / n_in)
        re = rng.uniform(-b, b, size=(n_out, n_in))
        im = rng.uniform(-b, b, size=(n_out, n_in))
        weights.append(re + 1j * im)
        biases.append(np.zeros(n_out, dtype=complex))
    weights[-1] *= output_gain
    return HnnParams(weights, biases, float(input_scale))


def _forward(params: HnnParams, z):
    """Jet propagation; returns the output jet rows and the cache for backprop."""
    x = np.asarray(z, dtype=complex).reshape(1, -1) / params.input_scale
    h = x
    h1 = np.full_like(x, 1.0 / params.input_scale)
    h2 = np.zeros_like(x)
    cache = []
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        p = W @ h + b[:, None]
        p1 = W @ h1
        p2 = W @ h2
        cache.append((h, h1, h2))
        if i == last:
            return (p[0], p1[0], p2[0]), cache
        if np.max(np.abs(p)) > PREACT_LIMIT:
            raise Overflow(f"pre-activation magnitude exceeds {PREACT_LIMIT} in layer {i}")
        a = np.exp(p)
        a1 = a * p1
        a2 = a * (p2 + p1 * p1)
        cache[-1] = (h, h1, h2, p1, p2, a)
        h, h1, h2 = a, a1, a2
    raise AssertionError("unreachable")


def forward_jet(params: HnnParams, z) -> HoloJet:
    z_arr = np.asarray(z, dtype=complex)
    (v, d1, d2), _ = _forward(params, z_arr.ravel())
    shape = z_arr.shape
    return HoloJet(v.reshape(shape), d1.reshape(shape), d2.reshape(shape))


def _backward(params: HnnParams, cache, gv, g1, g2) -> HnnParams:
    """Reverse sweep: gradients of a real loss w.r.t. all parameters.

    ``gv, g1, g2`` are the loss gradients w.r.t. the output jet components.
    """
    n = len(params.weights)
    gW = [None] * n
    gb = [None] * n
    gp, gp1, gp2 = gv[None, :], g1[None, :], g2[None, :]
    for i in range(n - 1, -1, -1):
        W = params.weights[i]
        entry = cache[i]
        h, h1, h2 = entry[0], entry[1], entry[2]
        gW[i] = gp @ h.conj().T + gp1 @ h1.conj().T + gp2 @ h2.conj().T
        gb[i] = gp.sum(axis=1)
        if i == 0:
            break
        WH = W.conj().T
        ga, ga1, ga2 = WH @ gp, WH @ gp1, WH @ gp2
        # previous layer's activation: a = exp(p), a1 = a p1, a2 = a (p2 + p1^2)
        _, _, _, p1, p2, a = cache[i - 1]
        ac = a.conj()
        gp2 = ac * ga2
        gp1 = ac * ga1 + 2.0 * (a * p1).conj() * ga2
        gp = ac * (ga + p1.conj() * ga1 + (p2 + p1 * p1).conj() * ga2)
    return HnnParams(gW, gb, params.input_scale)


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    s_u: float = 1.0
    s_sigma: float = 1.0
    n_u: int = 0
    n_sigma: int = 300
    seed: int = 0
    early_stop_loss: Optional[float] = None
    lr_decay: float = 0.5
    lr_decay_every: int = 250

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.s_u < 0 or self.s_sigma < 0 or self.s_u + self.s_sigma <= 0:
            raise ValueError("loss weights must be nonnegative with a positive sum")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class TrainReport:
    final_loss: float
    loss_history: list
    epochs_run: int
    wall_time: float


@dataclass
class HnnPair:
    chi: HnnParams
    gamma: HnnParams

    def copy(self) -> "HnnPair":
        return HnnPair(self.chi.copy(), self.gamma.copy())


def _point_weights(points: BoundarySet, s_u, s_sigma):
    n_tr, n_u = points.n_traction, points.n_displacement
    w = np.where(points.is_traction, s_sigma / max(n_tr, 1), s_u / max(n_u, 1))
    return w.astype(float)


def loss(chi_params: HnnParams, gamma_params: HnnParams, points: BoundarySet, crack: CrackGeometry,
         material: ElasticMaterial, cfg: TrainConfig) -> float:
    """Weighted mean squared boundary-condition residual, evaluated through the field kernel."""
    state = evaluate_fields(chi_params, gamma_params, crack, material, points.z)
    res = bc_values(state, points) - points.target
    w = _point_weights(points, cfg.s_u, cfg.s_sigma)
    return float(np.sum(w * np.sum(res * res, axis=1)))


class PairVector:
    """Parameters of a network pair packed into one flat complex vector.

    Layer arrays are views into the vector, stacked over the pair (index 0
    is chi, 1 is gamma), so both networks run through shared batched
    matrix products and the optimizer updates a single array.
    """

    def __init__(self, widths, theta=None, input_scale: float = 1.0):
        self.widths = tuple(widths)
        self.input_scale = float(input_scale)
        self._layout = []
        off = 0
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            self._layout.append((off, (2, n_out, n_in)))
            off += 2 * n_out * n_in
        for n_out in self.widths[1:]:
            self._layout.append((off, (2, n_out)))
            off += 2 * n_out
        self.size = off
        self.theta = np.zeros(off, dtype=complex) if theta is None else theta
        self.weights, self.biases = self.views(self.theta)

    def views(self, vec):
        arrs = [vec[o:o + int(np.prod(shape))].reshape(shape) for o, shape in self._layout]
        n = len(self.widths) - 1
        return arrs[:n], arrs[n:]

    @classmethod
    def from_pair(cls, pair: "HnnPair") -> "PairVector":
        widths = pair.chi.architecture.layer_widths
        if pair.gamma.architecture.layer_widths != widths or pair.chi.input_scale != pair.gamma.input_scale:
            raise ValueError("both networks of a pair must share architecture and input scale")
        out = cls(widths, input_scale=pair.chi.input_scale)
        for k, net in enumerate((pair.chi, pair.gamma)):
            for dst, src in zip(out.weights, net.weights):
                dst[k] = src
            for dst, src in zip(out.biases, net.biases):
                dst[k] = src
        return out

    def unpack(self, vec=None) -> "HnnPair":
        Ws, bs = self.views(self.theta if vec is None else vec)
        nets = [HnnParams([W[k].copy() for W in Ws], [b[k].copy() for b in bs], self.input_scale) for k in (0, 1)]
        return HnnPair(*nets)


def _forward_pair(vec: PairVector, x):
    """Jets of both networks at the same inputs.

    Returns the output jets as a ``(2, 3, M)`` array (network, jet
    component, point) plus the caches needed by :func:`_backward_pair`.
    """
    M = x.size
    hv = np.broadcast_to(x / vec.input_scale, (2, 1, M))
    h1 = np.full((2, 1, M), 1.0 / vec.input_scale, dtype=complex)
    h2 = np.zeros((2, 1, M), dtype=complex)
    cache = []
    last = len(vec.weights) - 1
    for i, (W, b) in enumerate(zip(vec.weights, vec.biases)):
        pv = W @ hv
        pv += b[:, :, None]
        p1 = W @ h1
        p2 = W @ h2
        cache.append([hv, h1, h2])
        if i == last:
            return np.stack([pv[:, 0], p1[:, 0], p2[:, 0]], axis=1), cache
        if np.max(np.abs(pv)) > PREACT_LIMIT:
            raise Overflow(f"pre-activation magnitude exceeds {PREACT_LIMIT} in layer {i}")
        a = np.exp(pv)
        q = p2 + p1 * p1
        cache[-1] += [p1, q, a]
        hv, h1, h2 = a, a * p1, a * q
    raise AssertionError("unreachable")


def _hermitian(a):
    return a.conj().transpose(0, 2, 1)


def _backward_pair(vec: PairVector, cache, g):
    """Reverse sweep for both networks; ``g`` is the ``(2, 3, M)`` output-jet gradient."""
    grad = np.empty(vec.size, dtype=complex)
    gWs, gbs = vec.views(grad)
    gv, g1, g2 = g[:, 0:1], g[:, 1:2], g[:, 2:3]
    for i in range(len(vec.weights) - 1, -1, -1):
        hv, h1, h2 = cache[i][:3]
        gWs[i][...] = gv @ _hermitian(hv) + g1 @ _hermitian(h1) + g2 @ _hermitian(h2)
        gbs[i][...] = gv.sum(axis=2)
        if i == 0:
            break
        WH = _hermitian(vec.weights[i])
        ga, ga1, ga2 = WH @ gv, WH @ g1, WH @ g2
        # previous activation: a = exp(p), a1 = a p1, a2 = a (p2 + p1^2)
        p1, q, a = cache[i - 1][3:]
        ac = a.conj()
        gv = ac * (ga + p1.conj() * ga1 + q.conj() * ga2)
        g1 = ac * ga1 + 2.0 * h1.conj() * ga2
        g2 = ac * ga2
    return grad


# Per point, the fields are real-linear in twelve complex network outputs:
# for each network (chi, gamma), each side (zhat, conj zhat) and each jet
# component (value, d1, d2). Slot index = 6*network + 3*side + component.
N_SLOTS = 12


class BoundaryOperator:
    """Real-linear map from network output jets to boundary residuals for one crack.

    The coefficients are tabulated once per crack, after which an epoch
    costs one batched sweep through both networks and a few array products.
    """

    def __init__(self, points: BoundarySet, crack: CrackGeometry, material: ElasticMaterial,
                 s_u: float = 1.0, s_sigma: float = 1.0):
        self.points = points
        self.crack = crack
        self.material = material
        self.weights = _point_weights(points, s_u, s_sigma)
        zhat = crack.to_local(points.z)
        self.inputs = np.concatenate([zhat, np.conj(zhat)])
        n = len(points)
        zeros = np.zeros(n, dtype=complex)
        B = np.zeros((n, 2, N_SLOTS), dtype=complex)
        for k in range(N_SLOTS):
            for unit in (1.0, 1j):
                slots = [zeros] * N_SLOTS
                slots[k] = np.full(n, unit)
                jets = [HoloJet(*slots[j:j + 3]) for j in range(0, N_SLOTS, 3)]
                state = fields_from_jets(*jets, crack, material, points.z)
                B[:, :, k] += unit * bc_values(state, points)
        self.B = B
        # (point, component, network, side, jet) view matching the batched output layout
        self._B5 = B.reshape(n, 2, 2, 2, 3)
        self._Bc5 = B.conj().reshape(n, 2, 2, 2, 3)

    def _outputs(self, out):
        return out.reshape(2, 3, 2, len(self.points))

    def residual_from_outputs(self, out):
        q = np.einsum("icnsk,nksi->ic", self._Bc5, self._outputs(out)).real
        return q - self.points.target

    def _value(self, r) -> float:
        return float(np.sum(self.weights * np.sum(r * r, axis=1)))

    def loss_vec(self, vec: PairVector) -> float:
        out, _ = _forward_pair(vec, self.inputs)
        return self._value(self.residual_from_outputs(out))

    def loss_and_grad_vec(self, vec: PairVector):
        out, cache = _forward_pair(vec, self.inputs)
        r = self.residual_from_outputs(out)
        gout = np.einsum("ic,icnsk->nksi", 2.0 * self.weights[:, None] * r, self._B5)
        return self._value(r), _backward_pair(vec, cache, gout.reshape(2, 3, -1))

    def loss(self, pair: HnnPair) -> float:
        return self.loss_vec(PairVector.from_pair(pair))

    def loss_and_grad(self, pair: HnnPair):
        vec = PairVector.from_pair(pair)
        value, grad = self.loss_and_grad_vec(vec)
        return value, vec.unpack(grad)


def param_gradient(chi_params, gamma_params, points, crack, material, cfg: TrainConfig) -> HnnPair:
    op = BoundaryOperator(points, crack, material, cfg.s_u, cfg.s_sigma)
    return op.loss_and_grad(HnnPair(chi_params, gamma_params))[1]


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, arrays: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float):
    """One Adam update, in place, treating real and imaginary parts as separate parameters."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g.real * g.real + 1j * (g.imag * g.imag))
        mh = m / bc1
        vh = v / bc2
        p -= lr * (mh.real / (np.sqrt(vh.real) + state.eps) + 1j * (mh.imag / (np.sqrt(vh.imag) + state.eps)))
    return params, state


def train(chi_params: HnnParams, gamma_params: HnnParams, points: BoundarySet, crack: CrackGeometry,
          material: ElasticMaterial, cfg: TrainConfig, operator: Optional[BoundaryOperator] = None):
    """Full-batch Adam on the boundary loss.

    The inputs are not modified. ``loss_history[k]`` is the loss before
    update k and the last entry is the loss of the returned parameters.
    """
    t0 = time.perf_counter()
    op = operator or BoundaryOperator(points, crack, material, cfg.s_u, cfg.s_sigma)
    vec = PairVector.from_pair(HnnPair(chi_params, gamma_params))
    state = AdamState.zeros([vec.theta])
    history = []
    steps = 0
    for epoch in range(cfg.epochs):
        value, grad = op.loss_and_grad_vec(vec)
        if not np.isfinite(value):
            raise Diverged(f"non-finite loss at epoch {epoch}")
        history.append(value)
        if cfg.early_stop_loss is not None and value < cfg.early_stop_loss:
            break
        adam_step([vec.theta], [grad], state, cfg.lr_at(epoch))
        steps += 1
    final = op.loss_vec(vec)
    if not np.isfinite(final):
        raise Diverged("non-finite loss after training")
    history.append(final)
    report = TrainReport(final, history, steps, time.perf_counter() - t0)
    return vec.unpack(), report


def warm_start(trained: HnnPair) -> HnnPair:
    """Independent copy of a trained pair, used to seed training for a nearby crack."""
    return copy.deepcopy(trained)


def rigid_body_drift(pair: HnnPair, crack: CrackGeometry, material: ElasticMaterial, points: BoundarySet):
    """Mean displacement and mean rotation over the given points.

    Pure-traction problems leave rigid motion undetermined; this is a
    diagnostic only and never enters the loss.
    """
    state = evaluate_fields(pair.chi, pair.gamma, crack, material, points.z)
    ux, uy = state.ux, state.uy
    x, y = points.z.real, points.z.imag
    xc, yc = x - x.mean(), y - y.mean()
    denom = float(np.sum(xc * xc + yc * yc)) or 1.0
    rotation = float(np.sum(xc * (uy - uy.mean()) - yc * (ux - ux.mean())) / denom)
    return {"mean_ux": float(ux.mean()), "mean_uy": float(uy.mean()), "rotation": rotation}
