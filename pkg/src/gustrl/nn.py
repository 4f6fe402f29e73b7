"""Fixed-topology 1D-conv + dense network with hand-written reverse-mode gradients.

Topology: conv1d (valid, stride 1) -> flatten -> dense -> ReLU -> dense -> ReLU -> head.
All arithmetic is float64.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

PARAM_NAMES = ("conv_w", "conv_b", "w1", "b1", "w2", "b2", "w3", "b3")
HEAD_INIT_SCALE = 1e-3


@dataclass(frozen=True)
class NetworkSpec:
    input_channels: int
    outputs: int
    input_length: int = 10
    kernel: int = 3
    filters: int = 16
    hidden: tuple[int, int] = (512, 512)

    def __post_init__(self):
        if self.input_channels < 1 or self.outputs < 1:
            raise ValueError("input_channels and outputs must be positive")
        if self.kernel > self.input_length:
            raise ValueError("kernel longer than the input window")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) != 2:
            raise ValueError("exactly two hidden layers")

    @property
    def conv_length(self) -> int:
        return self.input_length - self.kernel + 1

    def shapes(self) -> dict[str, tuple[int, ...]]:
        flat = self.filters * self.conv_length
        h1, h2 = self.hidden
        return {
            "conv_w": (self.filters, self.input_channels, self.kernel),
            "conv_b": (self.filters,),
            "w1": (flat, h1), "b1": (h1,),
            "w2": (h1, h2), "b2": (h2,),
            "w3": (h2, self.outputs), "b3": (self.outputs,),
        }

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())


@dataclass
class AdamState:
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()}, **hyper)


class Network:
    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray], adam: AdamState | None = None):
        shapes = spec.shapes()
        if set(params) != set(shapes):
            raise ValueError(f"parameter names {sorted(params)} do not match the spec")
        for k, shp in shapes.items():
            if params[k].shape != shp:
                raise ValueError(f"parameter {k} has shape {params[k].shape}, expected {shp}")
        self.spec = spec
        self.params = {k: np.ascontiguousarray(params[k], dtype=np.float64) for k in PARAM_NAMES}
        self.adam = adam if adam is not None else AdamState.for_params(self.params)
        self._cache = None

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng: np.random.Generator, lr: float = 3e-5) -> "Network":
        """He-uniform for the ReLU trunk, small uniform for the head, zero biases."""
        shapes = spec.shapes()
        params = {}
        for name, fan_in in (("conv_w", spec.input_channels * spec.kernel),
                             ("w1", shapes["w1"][0]), ("w2", shapes["w2"][0])):
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, shapes[name])
        params["w3"] = rng.uniform(-HEAD_INIT_SCALE, HEAD_INIT_SCALE, shapes["w3"])
        for b in ("conv_b", "b1", "b2", "b3"):
            params[b] = np.zeros(shapes[b])
        net = cls(spec, params)
        net.adam.lr = lr
        return net

    # forward / backward

    def _patches(self, x: np.ndarray) -> np.ndarray:
        k, n = self.spec.kernel, self.spec.conv_length
        return np.stack([x[:, :, i:i + k] for i in range(n)], axis=1)  # (B, n, C, k)

    def forward(self, x, record: bool = False) -> np.ndarray:
        """Raw head outputs for a (C, L) or (B, C, L) input."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        spec = self.spec
        if x.ndim != 3 or x.shape[1:] != (spec.input_channels, spec.input_length):
            raise ValueError(f"input shape {x.shape} does not match "
                             f"(batch, {spec.input_channels}, {spec.input_length})")
        p = self.params
        patches = self._patches(x)
        conv = np.einsum("bnck,fck->bfn", patches, p["conv_w"]) + p["conv_b"][None, :, None]
        flat = conv.reshape(len(x), -1)
        z1 = flat @ p["w1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ p["w2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        out = a2 @ p["w3"] + p["b3"]
        if record:
            self._cache = (patches, flat, z1, a1, z2, a2)
        return out[0] if single else out

    def backward(self, dout: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given d(loss)/d(outputs) of the recorded forward pass."""
        if self._cache is None:
            raise RuntimeError("backward called without a recorded forward pass")
        patches, flat, z1, a1, z2, a2 = self._cache
        p = self.params
        dout = np.asarray(dout, dtype=np.float64).reshape(len(flat), -1)
        g = {"w3": a2.T @ dout, "b3": dout.sum(0)}
        da2 = dout @ p["w3"].T
        dz2 = da2 * (z2 > 0)
        g["w2"] = a1.T @ dz2
        g["b2"] = dz2.sum(0)
        da1 = dz2 @ p["w2"].T
        dz1 = da1 * (z1 > 0)
        g["w1"] = flat.T @ dz1
        g["b1"] = dz1.sum(0)
        dconv = (dz1 @ p["w1"].T).reshape(len(flat), self.spec.filters, self.spec.conv_length)
        g["conv_w"] = np.einsum("bfn,bnck->fck", dconv, patches)
        g["conv_b"] = dconv.sum((0, 2))
        return g

    def copy(self) -> "Network":
        adam = AdamState(self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.eps, self.adam.step,
                         {k: v.copy() for k, v in self.adam.m.items()},
                         {k: v.copy() for k, v in self.adam.v.items()})
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()}, adam)


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1: (C, L) x (F, C, K) -> (F, L - K + 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or kernels.ndim != 3 or kernels.shape[1] != x.shape[0] or bias.shape != (kernels.shape[0],):
        raise ValueError(f"shape mismatch: input {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    k = kernels.shape[2]
    n = x.shape[1] - k + 1
    if n < 1:
        raise ValueError("kernel longer than input")
    patches = np.stack([x[:, i:i + k] for i in range(n)])  # (n, C, k)
    return np.einsum("nck,fck->fn", patches, kernels) + bias[:, None]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def forward_actor(net: Network, obs) -> np.ndarray:
    """Action probabilities for one observation or a batch."""
    return softmax(net.forward(obs))


def forward_critic(net: Network, obs):
    out = net.forward(obs)
    return float(out[0]) if out.ndim == 1 else out[:, 0]


def adam_step(net: Network, grads: dict[str, np.ndarray]) -> None:
    """In-place bias-corrected Adam update of ``net.params``."""
    st = net.adam
    for k in PARAM_NAMES:
        if grads[k].shape != net.params[k].shape:
            raise ValueError(f"gradient {k} has shape {grads[k].shape}, expected {net.params[k].shape}")
    st.step += 1
    c1 = 1.0 - st.beta1 ** st.step
    c2 = 1.0 - st.beta2 ** st.step
    step_size = st.lr / c1
    root_c2 = np.sqrt(c2)
    for k in PARAM_NAMES:
        g = grads[k]
        m = st.m[k]
        v = st.v[k]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        sq = g * g
        sq *= 1.0 - st.beta2
        v += sq
        denom = np.sqrt(v)
        denom /= root_c2
        denom += st.eps
        np.divide(m, denom, out=denom)
        denom *= step_size
        net.params[k] -= denom


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float):
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


# serialization

MAGIC = b"GUSTPOL\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHQI")  # magic, version, total length, header length
_DIGEST = 32


class PolicyFileError(Exception):
    pass


class TruncatedFileError(PolicyFileError):
    pass


class ChecksumError(PolicyFileError):
    pass


class VersionMismatchError(PolicyFileError):
    pass


class SpecMismatchError(PolicyFileError):
    pass


def _spec_to_json(spec: NetworkSpec) -> dict:
    d = asdict(spec)
    d["hidden"] = list(spec.hidden)
    return d


def save_networks(nets: dict[str, Network], config_hash: str = "") -> bytes:
    header = {"config_hash": config_hash, "networks": []}
    body = io.BytesIO()
    for name, net in nets.items():
        a = net.adam
        header["networks"].append({"name": name, "spec": _spec_to_json(net.spec),
                                   "adam": {"lr": a.lr, "beta1": a.beta1, "beta2": a.beta2,
                                            "eps": a.eps, "step": a.step}})
        for group in (net.params, a.m, a.v):
            for k in PARAM_NAMES:
                body.write(np.ascontiguousarray(group[k], dtype="<f8").tobytes())
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = body.getvalue()
    total = _PREFIX.size + len(hbytes) + len(payload) + _DIGEST
    head = _PREFIX.pack(MAGIC, FORMAT_VERSION, total, len(hbytes))
    data = head + hbytes + payload
    return data + hashlib.sha256(data).digest()


def load_networks(data: bytes) -> tuple[dict[str, Network], str]:
    if len(data) < _PREFIX.size:
        raise TruncatedFileError("file shorter than the fixed header")
    magic, version, total, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise PolicyFileError("not a policy file (bad magic bytes)")
    if len(data) < total:
        raise TruncatedFileError(f"policy file truncated: {len(data)} of {total} bytes")
    if len(data) > total:
        raise PolicyFileError(f"trailing bytes after policy payload ({len(data) - total})")
    if hashlib.sha256(data[:-_DIGEST]).digest() != data[-_DIGEST:]:
        raise ChecksumError("policy file checksum mismatch")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"policy format version {version}, expected {FORMAT_VERSION}")
    offset = _PREFIX.size
    header = json.loads(data[offset:offset + hlen])
    offset += hlen
    nets = {}
    for entry in header["networks"]:
        spec = NetworkSpec(**entry["spec"])
        groups = []
        for _ in range(3):
            group = {}
            for k, shp in spec.shapes().items():
                n = int(np.prod(shp)) * 8
                if offset + n > len(data) - _DIGEST:
                    raise TruncatedFileError("tensor data ends early")
                group[k] = np.frombuffer(data, dtype="<f8", count=n // 8, offset=offset).reshape(shp).copy()
                offset += n
            groups.append(group)
        params, m, v = groups
        adam = AdamState(m=m, v=v, **entry["adam"])
        nets[entry["name"]] = Network(spec, params, adam)
    return nets, header["config_hash"]


def save_network(net: Network, config_hash: str = "") -> bytes:
    return save_networks({"net": net}, config_hash)


def load_network(data: bytes, expected_spec: NetworkSpec | None = None) -> Network:
    nets, _ = load_networks(data)
    if len(nets) != 1:
        raise PolicyFileError(f"expected one network, found {len(nets)}")
    net = next(iter(nets.values()))
    check_spec(net.spec, expected_spec)
    return net


def check_spec(actual: NetworkSpec, expected: NetworkSpec | None) -> None:
    if expected is None:
        return
    if actual.input_channels != expected.input_channels:
        raise SpecMismatchError(f"network expects {actual.input_channels} input channels, "
                                f"requested configuration has {expected.input_channels}")
    if actual != expected:
        raise SpecMismatchError(f"network spec {actual} does not match {expected}")
