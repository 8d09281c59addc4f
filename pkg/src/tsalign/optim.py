"""Parameter registry and the AdamW update rule.

The registry owns every trainable tensor, remembers each one's kind
(weight / bias / norm) so regularization and decoupled decay can skip
biases and norm parameters, and reproduces its initialization bit for
bit from a single seed.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParamRegistry:
    """Ordered name -> Tensor map with seeded, reproducible initialization.

    Weights draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases
    and norm shifts start at zero, norm scales at one. Re-creating a
    registry with the same seed and the same registration order yields
    bit-identical values.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._entries: dict[str, Tensor] = {}
        self._kinds: dict[str, str] = {}

    def _register(self, name: str, tensor: Tensor, kind: str) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor.requires_grad = True
        self._entries[name] = tensor
        self._kinds[name] = kind
        return tensor

    def weight(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        values = self._rng.uniform(-bound, bound, size=shape).astype(np.float32)
        return self._register(name, Tensor(values), "weight")

    def bias(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, Tensor(np.zeros(shape, dtype=np.float32)), "bias")

    def norm_scale(self, name: str, dim: int) -> Tensor:
        return self._register(name, Tensor(np.ones(dim, dtype=np.float32)), "norm")

    def norm_shift(self, name: str, dim: int) -> Tensor:
        return self._register(name, Tensor(np.zeros(dim, dtype=np.float32)), "norm")

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def kind(self, name: str) -> str:
        return self._kinds[name]

    def weights(self):
        """Weight-kind tensors only (regularization / decay targets)."""
        return [(n, t) for n, t in self._entries.items() if self._kinds[n] == "weight"]

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.zero_grad()

    def count(self) -> int:
        return sum(t.size for t in self._entries.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._entries.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self._entries.items():
            src = arrays[name]
            if src.shape != tensor.data.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {tensor.shape}")
            tensor.data = src.astype(np.float32).copy()


class AdamW:
    """AdamW with decoupled weight decay and bias correction.

    Decay multiplies weight-kind parameters by (1 - lr * weight_decay)
    before the moment update; biases and norm parameters are never
    decayed. Moment state persists across steps.
    """

    def __init__(self, params: ParamRegistry, lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self) -> None:
        beta1, beta2 = self.betas
        self._t += 1
        bc1 = 1.0 - beta1 ** self._t
        bc2 = 1.0 - beta2 ** self._t
        for name, p in self.params.items():
            if p.grad is None:
                raise RuntimeError(f"parameter {name} has no gradient; run backward first")
            g = p.grad
            if name not in self._m:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            m, v = self._m[name], self._v[name]
            if self.weight_decay != 0.0 and self.params.kind(name) == "weight":
                p.data *= np.float32(1.0 - self.lr * self.weight_decay)
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(np.float32)


def adamw_step(params: ParamRegistry, lr: float = 1e-4,
               betas: tuple[float, float] = (0.9, 0.999),
               eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One AdamW update; moment state is stashed on the registry."""
    opt = getattr(params, "_adamw", None)
    if opt is None:
        opt = AdamW(params, lr, betas, eps, weight_decay)
        params._adamw = opt
    else:
        opt.lr, opt.betas = float(lr), (float(betas[0]), float(betas[1]))
        opt.eps, opt.weight_decay = float(eps), float(weight_decay)
    opt.step()
