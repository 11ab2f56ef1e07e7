"""Small-tensor neural stack with hand-derived reverse-mode gradients.

One network = per-type two-layer MLP encoders (shared embedding width), a
single-head graph attention layer, and a two-layer MLP head. Everything is
float64 and batched over graphs that share a node template (same kinds and
ego slot); per-sample absent neighbors are handled by masking, which is
exactly softmax over the present subset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CheckpointError
from .hetgraph import HeteroGraph

EMBED_DIM = 64
HEAD_HIDDEN = 128
LRELU_HIDDEN = 0.01   # encoder / head hidden layers
LRELU_ATTN = 0.2      # attention logits
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

TANH = "tanh"
LINEAR = "linear"


@dataclass(frozen=True)
class NetSpec:
    in_widths: dict[str, int]     # node kind -> encoder input width
    out_dim: int
    out_activation: str           # TANH or LINEAR
    embed_dim: int = EMBED_DIM
    head_hidden: int = HEAD_HIDDEN

    def param_shapes(self) -> dict[str, tuple[int, int] | tuple[int]]:
        shapes: dict = {}
        for kind in sorted(self.in_widths):
            w = self.in_widths[kind]
            shapes[f"enc_{kind}_w1"] = (self.embed_dim, w)
            shapes[f"enc_{kind}_b1"] = (self.embed_dim,)
            shapes[f"enc_{kind}_w2"] = (self.embed_dim, self.embed_dim)
            shapes[f"enc_{kind}_b2"] = (self.embed_dim,)
        shapes["gat_w"] = (self.embed_dim, self.embed_dim)
        shapes["gat_a"] = (2 * self.embed_dim,)
        shapes["head_w1"] = (self.head_hidden, 2 * self.embed_dim)
        shapes["head_b1"] = (self.head_hidden,)
        shapes["head_w2"] = (self.out_dim, self.head_hidden)
        shapes["head_b2"] = (self.out_dim,)
        return shapes


def _fan_in(name: str, shape) -> int:
    if name.endswith(("_w1", "_w2")):
        return shape[1]
    # biases and the attention vector scale with the embedding they act on
    return shape[-1]


class Network:
    """Parameters plus Adam moment state for one actor or critic.

    All tensors live in one flat float64 buffer with named views, so the
    optimizer and soft updates are single vector operations. The views are
    never rebound; mutate through them only.
    """

    def __init__(self, spec: NetSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        shapes = spec.param_shapes()
        self._offsets: dict[str, tuple[int, int]] = {}
        total = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            self._offsets[name] = (total, total + size)
            total += size
        self.flat = np.zeros(total)
        self.flat_m = np.zeros(total)
        self.flat_v = np.zeros(total)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in shapes.items():
            lo, hi = self._offsets[name]
            self.params[name] = self.flat[lo:hi].reshape(shape)
            if rng is not None:
                bound = 1.0 / np.sqrt(_fan_in(name, shape))
                self.params[name][...] = rng.uniform(-bound, bound, size=shape)
        self.adam_m = {n: self.flat_m[lo:hi].reshape(shapes[n])
                       for n, (lo, hi) in self._offsets.items()}
        self.adam_v = {n: self.flat_v[lo:hi].reshape(shapes[n])
                       for n, (lo, hi) in self._offsets.items()}
        self.adam_t = 0

    def clone(self) -> "Network":
        out = Network(self.spec, rng=None)
        out.flat[...] = self.flat
        out.flat_m[...] = self.flat_m
        out.flat_v[...] = self.flat_v
        out.adam_t = self.adam_t
        return out

    def flatten(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        if not hasattr(self, "_gscratch"):
            self._gscratch = np.zeros_like(self.flat)
        out = self._gscratch
        for name, (lo, hi) in self._offsets.items():
            g = grads.get(name)
            if g is None:
                out[lo:hi] = 0.0
            else:
                out[lo:hi] = g.reshape(-1)
        return out


def _lrelu(x, slope):
    return np.where(x > 0, x, slope * x)


def _lrelu_grad(x, slope):
    return np.where(x > 0, 1.0, slope)


def _slope_mask(x, slope):
    """Pointwise LeakyReLU derivative; y = x * mask gives the activation and
    the same mask backpropagates it."""
    return slope + (1.0 - slope) * (x > 0)


@lru_cache(maxsize=64)
def _kind_runs(kinds: tuple) -> tuple:
    """Consecutive same-kind node ranges, so encoder batches use views."""
    runs = []
    start = 0
    for i in range(1, len(kinds) + 1):
        if i == len(kinds) or kinds[i] != kinds[start]:
            runs.append((kinds[start], start, i))
            start = i
    return tuple(runs)


@dataclass
class Tape:
    """Cached intermediates of one batched forward pass (slope arrays hold
    the LeakyReLU derivatives, which double as the activation masks)."""

    feats: np.ndarray            # (B, n, F)
    kinds: tuple
    ego: int
    nbr_idx: np.ndarray          # node indices of the neighbors
    mask: np.ndarray | None      # (B, n-1) neighbor presence
    use_gat: bool
    s1: np.ndarray               # (B, n, E) first encoder layer slopes
    a1: np.ndarray
    s2: np.ndarray
    h: np.ndarray                # (B, n, E) encoder outputs
    wh: np.ndarray | None        # (B, n, E)
    se: np.ndarray | None        # (B, n-1) attention logit slopes
    alpha: np.ndarray | None     # (B, n-1)
    g: np.ndarray                # (B, E)
    x_head: np.ndarray           # (B, 2E)
    s3: np.ndarray
    a3: np.ndarray
    out: np.ndarray              # (B, out_dim)


def forward(net: Network, feats: np.ndarray, kinds, ego: int,
            mask: np.ndarray | None = None, use_gat: bool = True) -> Tape:
    """Batched forward pass over graphs sharing one node template.

    feats: (B, n, F); kinds: length-n node kinds; ego: ego slot index;
    mask: (B, n-1) presence of each non-ego node (None = all present).
    """
    spec = net.spec
    p = net.params
    b, n, in_w = feats.shape
    e_dim = spec.embed_dim
    kinds = tuple(kinds)

    s1 = np.empty((b, n, e_dim))
    a1 = np.empty((b, n, e_dim))
    s2 = np.empty((b, n, e_dim))
    h = np.empty((b, n, e_dim))
    for kind, lo, hi in _kind_runs(kinds):
        x = feats[:, lo:hi, :].reshape(-1, in_w)
        z1k = x @ p[f"enc_{kind}_w1"].T + p[f"enc_{kind}_b1"]
        s1k = _slope_mask(z1k, LRELU_HIDDEN)
        a1k = z1k * s1k
        z2k = a1k @ p[f"enc_{kind}_w2"].T + p[f"enc_{kind}_b2"]
        s2k = _slope_mask(z2k, LRELU_HIDDEN)
        shape = (b, hi - lo, e_dim)
        s1[:, lo:hi] = s1k.reshape(shape)
        a1[:, lo:hi] = a1k.reshape(shape)
        s2[:, lo:hi] = s2k.reshape(shape)
        h[:, lo:hi] = (z2k * s2k).reshape(shape)

    nbr_idx = np.array([i for i in range(n) if i != ego], dtype=int)
    wh = se = alpha = None
    g = np.zeros((b, e_dim))
    if use_gat and len(nbr_idx) > 0:
        wh = (h.reshape(-1, e_dim) @ p["gat_w"].T).reshape(b, n, e_dim)
        a_src = p["gat_a"][:e_dim]
        a_dst = p["gat_a"][e_dim:]
        e_logits = wh[:, nbr_idx, :] @ a_src + (wh[:, ego, :] @ a_dst)[:, None]
        se = _slope_mask(e_logits, LRELU_ATTN)
        el = e_logits * se
        if mask is None:
            top = el.max(axis=1, keepdims=True)
            ex = np.exp(el - top)
        else:
            shifted = np.where(mask, el, -np.inf)
            top = shifted.max(axis=1, keepdims=True)
            top = np.where(np.isfinite(top), top, 0.0)
            ex = np.where(mask, np.exp(el - top), 0.0)
        denom = ex.sum(axis=1, keepdims=True)
        alpha = np.divide(ex, denom, out=np.zeros_like(ex), where=denom > 0)
        g = np.einsum("bk,bke->be", alpha, wh[:, nbr_idx, :])

    x_head = np.concatenate([h[:, ego, :], g], axis=1)
    z3 = x_head @ p["head_w1"].T + p["head_b1"]
    s3 = _slope_mask(z3, LRELU_HIDDEN)
    a3 = z3 * s3
    z4 = a3 @ p["head_w2"].T + p["head_b2"]
    out = np.tanh(z4) if spec.out_activation == TANH else z4

    return Tape(feats, kinds, ego, nbr_idx, mask, use_gat,
                s1, a1, s2, h, wh, se, alpha, g, x_head, s3, a3, out)


def backward(net: Network, tape: Tape, dout: np.ndarray):
    """Exact gradients of sum(dout * out) w.r.t. parameters and inputs.

    Returns (grads dict matching net.params, dfeats of shape (B, n, F)).
    """
    spec = net.spec
    p = net.params
    b, n, in_w = tape.feats.shape
    e_dim = spec.embed_dim
    grads: dict[str, np.ndarray] = {}

    dz4 = dout * (1.0 - tape.out ** 2) if spec.out_activation == TANH else np.asarray(dout)
    grads["head_w2"] = dz4.T @ tape.a3
    grads["head_b2"] = dz4.sum(axis=0)
    da3 = dz4 @ p["head_w2"]
    dz3 = da3 * tape.s3
    grads["head_w1"] = dz3.T @ tape.x_head
    grads["head_b1"] = dz3.sum(axis=0)
    dx_head = dz3 @ p["head_w1"]

    dg = dx_head[:, e_dim:]
    if tape.use_gat and len(tape.nbr_idx) > 0:
        wh_nbr = tape.wh[:, tape.nbr_idx, :]
        a_src = p["gat_a"][:e_dim]
        a_dst = p["gat_a"][e_dim:]

        dalpha = np.einsum("be,bke->bk", dg, wh_nbr)
        dwh_nbr = tape.alpha[:, :, None] * dg[:, None, :]
        # softmax: masked entries have alpha == 0, so they drop out here
        inner = (tape.alpha * dalpha).sum(axis=1, keepdims=True)
        d_el = tape.alpha * (dalpha - inner)
        de = d_el * tape.se

        da_vec = np.empty(2 * e_dim)
        da_vec[:e_dim] = np.einsum("bk,bke->e", de, wh_nbr)
        da_vec[e_dim:] = (de.sum(axis=1)[:, None] * tape.wh[:, tape.ego, :]).sum(axis=0)
        grads["gat_a"] = da_vec
        dwh_nbr += de[:, :, None] * a_src[None, None, :]

        # neighbor slots and the ego cover every node exactly once
        dwh = np.empty((b, n, e_dim))
        dwh[:, tape.nbr_idx, :] = dwh_nbr
        dwh[:, tape.ego, :] = de.sum(axis=1)[:, None] * a_dst[None, :]
        grads["gat_w"] = dwh.reshape(-1, e_dim).T @ tape.h.reshape(-1, e_dim)
        dh = (dwh.reshape(-1, e_dim) @ p["gat_w"]).reshape(b, n, e_dim)
        dh[:, tape.ego, :] += dx_head[:, :e_dim]
    else:
        dh = np.zeros((b, n, e_dim))
        dh[:, tape.ego, :] = dx_head[:, :e_dim]

    def _accum(key, value):
        if key in grads:
            grads[key] += value
        else:
            grads[key] = value

    dfeats = np.empty_like(tape.feats)  # the kind runs cover every node
    for kind, lo, hi in _kind_runs(tape.kinds):
        dz2 = (dh[:, lo:hi, :] * tape.s2[:, lo:hi]).reshape(-1, e_dim)
        _accum(f"enc_{kind}_w2", dz2.T @ tape.a1[:, lo:hi].reshape(-1, e_dim))
        _accum(f"enc_{kind}_b2", dz2.sum(axis=0))
        da1 = dz2 @ p[f"enc_{kind}_w2"]
        dz1 = da1 * tape.s1[:, lo:hi].reshape(-1, e_dim)
        xk = tape.feats[:, lo:hi, :].reshape(-1, in_w)
        _accum(f"enc_{kind}_w1", dz1.T @ xk)
        _accum(f"enc_{kind}_b1", dz1.sum(axis=0))
        dfeats[:, lo:hi, :] = (dz1 @ p[f"enc_{kind}_w1"]).reshape(b, hi - lo, in_w)
    return grads, dfeats


# ---------------------------------------------------------------------------
# single-graph api

def encode(net: Network, kind: str, v: np.ndarray) -> np.ndarray:
    """Two-layer LeakyReLU embedding of one node feature vector."""
    v = np.asarray(v, dtype=float)
    expected = net.spec.in_widths[kind]
    if v.shape != (expected,):
        raise ValueError(f"{kind} encoder expects width {expected}, got {v.shape}")
    p = net.params
    a1 = _lrelu(v @ p[f"enc_{kind}_w1"].T + p[f"enc_{kind}_b1"], LRELU_HIDDEN)
    return _lrelu(a1 @ p[f"enc_{kind}_w2"].T + p[f"enc_{kind}_b2"], LRELU_HIDDEN)


def attention_coefficients(net: Network, h_ego: np.ndarray,
                           neighbor_embeddings: np.ndarray) -> np.ndarray:
    """Softmax attention over the neighbor set (the ego is not included)."""
    nbr = np.atleast_2d(np.asarray(neighbor_embeddings, dtype=float))
    e_dim = net.spec.embed_dim
    w = net.params["gat_w"]
    a_src = net.params["gat_a"][:e_dim]
    a_dst = net.params["gat_a"][e_dim:]
    logits = _lrelu((nbr @ w.T) @ a_src + (w @ h_ego) @ a_dst, LRELU_ATTN)
    ex = np.exp(logits - logits.max())
    return ex / ex.sum()


def gat_aggregate(net: Network, h_ego: np.ndarray,
                  neighbor_embeddings) -> np.ndarray:
    """Attention-weighted sum of projected neighbor embeddings; the empty
    neighborhood aggregates to the zero vector."""
    nbr = np.asarray(neighbor_embeddings, dtype=float)
    if nbr.size == 0:
        return np.zeros(net.spec.embed_dim)
    nbr = np.atleast_2d(nbr)
    alpha = attention_coefficients(net, h_ego, nbr)
    return alpha @ (nbr @ net.params["gat_w"].T)


def forward_graph(net: Network, graph: HeteroGraph, use_gat: bool = True) -> Tape:
    mask = None
    return forward(net, graph.features[None, :, :], tuple(graph.node_kinds),
                   graph.ego, mask, use_gat)


def actor_forward(net: Network, graph: HeteroGraph, use_gat: bool = True) -> np.ndarray:
    """Continuous action in (-1, 1)^2 from a local graph."""
    return forward_graph(net, graph, use_gat).out[0]


def critic_forward(net: Network, graph: HeteroGraph, use_gat: bool = True) -> float:
    """Scalar joint action-value from one ego view of the global graph."""
    return float(forward_graph(net, graph, use_gat).out[0, 0])


def adam_step(net: Network, grads: dict[str, np.ndarray], lr: float) -> None:
    """Bias-corrected adaptive moment update, in place over the flat buffer."""
    net.adam_t += 1
    t = net.adam_t
    g = net.flatten(grads)
    m, v = net.flat_m, net.flat_v
    m *= ADAM_BETA1
    g *= (1.0 - ADAM_BETA1)
    m += g
    g *= g  # now (1-b1)^2 g^2; rescale into the v update
    g *= (1.0 - ADAM_BETA2) / (1.0 - ADAM_BETA1) ** 2
    v *= ADAM_BETA2
    v += g
    denom = v / (1.0 - ADAM_BETA2 ** t)
    np.sqrt(denom, out=denom)
    denom += ADAM_EPS
    step_vec = m / denom
    step_vec *= lr / (1.0 - ADAM_BETA1 ** t)
    net.flat -= step_vec


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, then (name_len, name, rows, cols, data)

CHECKPOINT_MAGIC = b"HGAM"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Binary dump of named float64 tensors (vectors as one row, little
    endian), in sorted name order."""
    try:
        fh = open(path, "wb")
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    with fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            mat = arr.reshape(1, -1) if arr.ndim <= 1 else arr
            if mat.ndim != 2:
                raise CheckpointError(f"tensor {name} has rank {arr.ndim} > 2")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    tensors: dict[str, np.ndarray] = {}
    off = 8
    while off < len(blob):
        try:
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off: off + name_len].decode("utf-8")
            off += name_len
            rows, cols = struct.unpack_from("<II", blob, off)
            off += 8
            count = rows * cols
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
            off += 8 * count
        except (struct.error, ValueError) as exc:
            raise CheckpointError(f"{path}: truncated or corrupt ({exc})") from exc
        if off > len(blob):
            raise CheckpointError(f"{path}: truncated tensor {name}")
        tensors[name] = data.reshape(rows, cols).astype(float)
    return tensors


def network_tensors(name: str, net: Network) -> dict[str, np.ndarray]:
    """Flatten one network (params, Adam moments, step) into named tensors."""
    out = {}
    for k, v in net.params.items():
        out[f"{name}/{k}"] = v
        out[f"{name}/{k}#m"] = net.adam_m[k]
        out[f"{name}/{k}#v"] = net.adam_v[k]
    out[f"{name}/adam_t"] = np.array([[float(net.adam_t)]])
    return out


def network_from_tensors(name: str, spec: NetSpec,
                         tensors: dict[str, np.ndarray]) -> Network:
    """Rebuild a network, validating every shape against the spec."""
    net = Network(spec, rng=None)
    for k, shape in spec.param_shapes().items():
        for suffix, dest in (("", net.params), ("#m", net.adam_m), ("#v", net.adam_v)):
            key = f"{name}/{k}{suffix}"
            if key not in tensors:
                raise CheckpointError(f"missing tensor {key}")
            arr = tensors[key]
            flat_ok = len(shape) == 1 and arr.shape == (1, shape[0])
            if arr.shape != tuple(shape) and not flat_ok:
                raise CheckpointError(
                    f"tensor {key}: shape {arr.shape} incompatible with {shape}")
            dest[k][...] = arr.reshape(shape)
    t_key = f"{name}/adam_t"
    if t_key not in tensors:
        raise CheckpointError(f"missing tensor {t_key}")
    net.adam_t = int(tensors[t_key].reshape(-1)[0])
    return net
