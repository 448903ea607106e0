"""Small deterministic neural-network numerics on plain numpy arrays.

Tensors are ndarrays of shape (batch, length, channels).  Every layer
carries its own weights and exposes an analytic backward pass; the test
suite checks each one against central finite differences and a naive
convolution oracle.  All math runs in float64 by default; production code
can flip the whole module to float32 with :func:`set_dtype`.

Nothing here owns global state besides the dtype switch, so layers can be
used from several threads as long as each thread works on its own arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_DTYPES = {"float32": np.float32, "float64": np.float64}
_active_dtype = np.float64


def set_dtype(name: str) -> None:
    """Select arithmetic width for newly created layers: float64 or float32."""
    global _active_dtype
    try:
        _active_dtype = _DTYPES[name]
    except KeyError:
        raise ValueError(f"unknown dtype {name!r}; expected one of {sorted(_DTYPES)}") from None


def active_dtype():
    return _active_dtype


class ShapeMismatch(ValueError):
    """Raised when an input shape does not fit a layer or a pairing."""


def _check_tensor3(x: np.ndarray, c_in: int, what: str) -> None:
    if x.ndim != 3:
        raise ShapeMismatch(f"{what}: expected (batch, length, channels), got shape {x.shape}")
    if x.shape[2] != c_in:
        raise ShapeMismatch(f"{what}: expected {c_in} channels, got {x.shape[2]}")


def _same_pads(kernel_size: int) -> tuple[int, int]:
    # Total zero padding is kernel_size - 1, with the extra column on the right.
    left = (kernel_size - 1) // 2
    return left, (kernel_size - 1) - left


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(_active_dtype)


@dataclass
class Conv1DLayer:
    """Strided 1-D convolution over (batch, length, channels) tensors.

    "same" padding pads the length axis with kernel_size - 1 zeros split
    symmetrically (extra zero on the right) and yields ceil(length/stride)
    outputs; "valid" slides the kernel only over fully covered positions.
    """

    kernel_size: int
    stride: int
    c_in: int
    c_out: int
    padding: str = "same"
    w: np.ndarray = field(default=None, repr=False)  # (kernel_size, c_in, c_out)
    b: np.ndarray = field(default=None, repr=False)  # (c_out,)

    def __post_init__(self):
        if self.kernel_size < 1 or self.stride < 1:
            raise ValueError("kernel_size and stride must be >= 1")
        if self.c_in < 1 or self.c_out < 1:
            raise ValueError("channel counts must be >= 1")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.w is None:
            self.w = np.zeros((self.kernel_size, self.c_in, self.c_out), dtype=_active_dtype)
        if self.b is None:
            self.b = np.zeros(self.c_out, dtype=_active_dtype)
        if self.w.shape != (self.kernel_size, self.c_in, self.c_out):
            raise ShapeMismatch(f"weight shape {self.w.shape} does not match layer geometry")
        if self.b.shape != (self.c_out,):
            raise ShapeMismatch(f"bias shape {self.b.shape} does not match c_out")

    @classmethod
    def init(cls, rng: np.random.Generator, kernel_size: int, stride: int,
             c_in: int, c_out: int, padding: str = "same") -> "Conv1DLayer":
        w = _uniform_init(rng, (kernel_size, c_in, c_out), kernel_size * c_in)
        b = np.zeros(c_out, dtype=_active_dtype)
        return cls(kernel_size, stride, c_in, c_out, padding, w, b)

    def out_length(self, length: int) -> int:
        if self.padding == "same":
            return -(-length // self.stride)
        if length < self.kernel_size:
            raise ShapeMismatch(f"length {length} shorter than kernel {self.kernel_size} (valid padding)")
        return (length - self.kernel_size) // self.stride + 1

    def _padded(self, x: np.ndarray) -> np.ndarray:
        if self.padding == "valid":
            return x
        left, right = _same_pads(self.kernel_size)
        return np.pad(x, ((0, 0), (left, right), (0, 0)))

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_tensor3(x, self.c_in, "Conv1DLayer.forward")
        n_out = self.out_length(x.shape[1])
        xp = self._padded(x)
        s = self.stride
        y = np.broadcast_to(self.b, (x.shape[0], n_out, self.c_out)).astype(self.w.dtype).copy()
        for j in range(self.kernel_size):
            # strided view of the padded input aligned with kernel tap j
            y += xp[:, j:j + (n_out - 1) * s + 1:s, :] @ self.w[j]
        return y

    def backward(self, x: np.ndarray, grad_out: np.ndarray):
        """Gradients for inputs, weights, and bias given upstream grad_out."""
        _check_tensor3(x, self.c_in, "Conv1DLayer.backward")
        n_out = self.out_length(x.shape[1])
        if grad_out.shape != (x.shape[0], n_out, self.c_out):
            raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match output")
        xp = self._padded(x)
        s = self.stride
        grad_b = grad_out.sum(axis=(0, 1))
        grad_w = np.zeros_like(self.w)
        grad_xp = np.zeros_like(xp)
        for j in range(self.kernel_size):
            sl = slice(j, j + (n_out - 1) * s + 1, s)
            grad_w[j] = np.einsum("bli,blo->io", xp[:, sl, :], grad_out)
            grad_xp[:, sl, :] += grad_out @ self.w[j].T
        if self.padding == "same":
            left, _ = _same_pads(self.kernel_size)
            grad_x = grad_xp[:, left:left + x.shape[1], :]
        else:
            grad_x = grad_xp
        return grad_x, grad_w, grad_b


@dataclass
class ConvTranspose1DLayer:
    """Strided transposed 1-D convolution (the adjoint of Conv1DLayer).

    With "same" padding the output length is input length * stride; with
    "valid" it is (length - 1) * stride + kernel_size.  Sharing weights with
    a Conv1DLayer (axes swapped) makes forward() the exact adjoint of that
    convolution, which the tests assert via the inner-product identity.
    """

    kernel_size: int
    stride: int
    c_in: int
    c_out: int
    padding: str = "same"
    w: np.ndarray = field(default=None, repr=False)  # (kernel_size, c_in, c_out)
    b: np.ndarray = field(default=None, repr=False)  # (c_out,)

    def __post_init__(self):
        if self.kernel_size < 1 or self.stride < 1:
            raise ValueError("kernel_size and stride must be >= 1")
        if self.c_in < 1 or self.c_out < 1:
            raise ValueError("channel counts must be >= 1")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.w is None:
            self.w = np.zeros((self.kernel_size, self.c_in, self.c_out), dtype=_active_dtype)
        if self.b is None:
            self.b = np.zeros(self.c_out, dtype=_active_dtype)
        if self.w.shape != (self.kernel_size, self.c_in, self.c_out):
            raise ShapeMismatch(f"weight shape {self.w.shape} does not match layer geometry")
        if self.b.shape != (self.c_out,):
            raise ShapeMismatch(f"bias shape {self.b.shape} does not match c_out")

    @classmethod
    def init(cls, rng: np.random.Generator, kernel_size: int, stride: int,
             c_in: int, c_out: int, padding: str = "same") -> "ConvTranspose1DLayer":
        w = _uniform_init(rng, (kernel_size, c_in, c_out), kernel_size * c_in)
        b = np.zeros(c_out, dtype=_active_dtype)
        return cls(kernel_size, stride, c_in, c_out, padding, w, b)

    def out_length(self, length: int) -> int:
        if self.padding == "same":
            return length * self.stride
        return (length - 1) * self.stride + self.kernel_size

    def _tap_ranges(self, j: int, n_in: int, n_out: int):
        # Input step t writes output position u = t*stride + j - pad_left.
        offset = j - (_same_pads(self.kernel_size)[0] if self.padding == "same" else 0)
        # smallest t with t*stride + offset >= 0, i.e. ceil(-offset / stride)
        t_lo = -(offset // self.stride) if offset < 0 else 0
        t_hi = min(n_in - 1, (n_out - 1 - offset) // self.stride)
        return offset, t_lo, t_hi

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_tensor3(x, self.c_in, "ConvTranspose1DLayer.forward")
        n_in = x.shape[1]
        n_out = self.out_length(n_in)
        s = self.stride
        y = np.broadcast_to(self.b, (x.shape[0], n_out, self.c_out)).astype(self.w.dtype).copy()
        for j in range(self.kernel_size):
            offset, t_lo, t_hi = self._tap_ranges(j, n_in, n_out)
            if t_lo > t_hi:
                continue
            u_lo = t_lo * s + offset
            n = t_hi - t_lo + 1
            y[:, u_lo:u_lo + (n - 1) * s + 1:s, :] += x[:, t_lo:t_hi + 1, :] @ self.w[j]
        return y

    def backward(self, x: np.ndarray, grad_out: np.ndarray):
        _check_tensor3(x, self.c_in, "ConvTranspose1DLayer.backward")
        n_in = x.shape[1]
        n_out = self.out_length(n_in)
        if grad_out.shape != (x.shape[0], n_out, self.c_out):
            raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match output")
        s = self.stride
        grad_b = grad_out.sum(axis=(0, 1))
        grad_w = np.zeros_like(self.w)
        grad_x = np.zeros_like(x)
        for j in range(self.kernel_size):
            offset, t_lo, t_hi = self._tap_ranges(j, n_in, n_out)
            if t_lo > t_hi:
                continue
            u_lo = t_lo * s + offset
            n = t_hi - t_lo + 1
            g = grad_out[:, u_lo:u_lo + (n - 1) * s + 1:s, :]
            grad_w[j] = np.einsum("bli,blo->io", x[:, t_lo:t_hi + 1, :], g)
            grad_x[:, t_lo:t_hi + 1, :] += g @ self.w[j].T
        return grad_x, grad_w, grad_b


@dataclass
class DenseLayer:
    """Fully connected layer on (batch, features) arrays: y = x @ w + b."""

    d_in: int
    d_out: int
    w: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.d_in < 1 or self.d_out < 1:
            raise ValueError("dense dimensions must be >= 1")
        if self.w is None:
            self.w = np.zeros((self.d_in, self.d_out), dtype=_active_dtype)
        if self.b is None:
            self.b = np.zeros(self.d_out, dtype=_active_dtype)
        if self.w.shape != (self.d_in, self.d_out):
            raise ShapeMismatch(f"weight shape {self.w.shape} does not match ({self.d_in}, {self.d_out})")
        if self.b.shape != (self.d_out,):
            raise ShapeMismatch(f"bias shape {self.b.shape} does not match d_out")

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int) -> "DenseLayer":
        w = _uniform_init(rng, (d_in, d_out), d_in)
        b = np.zeros(d_out, dtype=_active_dtype)
        return cls(d_in, d_out, w, b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeMismatch(f"DenseLayer.forward: expected (batch, {self.d_in}), got {x.shape}")
        return x @ self.w + self.b

    def backward(self, x: np.ndarray, grad_out: np.ndarray):
        if grad_out.shape != (x.shape[0], self.d_out):
            raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match output")
        return grad_out @ self.w.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # Subgradient 0 at exactly 0.
    return grad_out * (x > 0)


def mae(x: np.ndarray, x_prime: np.ndarray) -> float:
    """Mean absolute error between two equally shaped arrays."""
    x = np.asarray(x)
    x_prime = np.asarray(x_prime)
    if x.shape != x_prime.shape:
        raise ShapeMismatch(f"mae: shapes {x.shape} and {x_prime.shape} differ")
    return float(np.mean(np.abs(x - x_prime)))


def mae_grad(x: np.ndarray, x_prime: np.ndarray) -> np.ndarray:
    """d mae / d x_prime, using sign(0) = 0 at kinks."""
    if x.shape != x_prime.shape:
        raise ShapeMismatch(f"mae_grad: shapes {x.shape} and {x_prime.shape} differ")
    return np.sign(x_prime - x) / x.size


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers plus the shared step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def adam_init(params: list, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.m = [np.zeros_like(p) for p in params]
    state.v = [np.zeros_like(p) for p in params]
    return state


def adam_step(params: list, grads: list, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to params in place.

        m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
        p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads, and state must have matching lengths")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
