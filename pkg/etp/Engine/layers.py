import numpy as np

from . import functional as F
from .tensor import Module, uniform_init, as_tensor


class Linear(Module):
    """``y = x W + b`` with ``W`` stored as ``(d_in, d_out)``."""

    def __init__(self, name, d_in, d_out, rng=None, zero_init=False):
        super().__init__(name)
        if zero_init or rng is None:
            weight = np.zeros((d_in, d_out))
        else:
            weight = uniform_init(rng, (d_in, d_out), d_in)
        self.weight = self.add_param("weight", weight)
        self.bias = self.add_param("bias", np.zeros(d_out))

    @property
    def d_in(self):
        return self.weight.shape[0]

    @property
    def d_out(self):
        return self.weight.shape[1]

    def forward(self, x):
        x = as_tensor(x)
        return F.linear_forward(x, self.weight, self.bias), x

    def backward(self, dy, cache):
        return F.linear_backward(dy, cache, self.weight, self.bias)


class GRUCell(Module):
    """Gated recurrent unit with the update gate weighting the old state.

    r = sigmoid(x W_r + h U_r + b_r)
    z = sigmoid(x W_z + h U_z + b_z)
    h_hat = tanh(x W + (r * h) U + b)
    h' = z * h + (1 - z) * h_hat
    """

    def __init__(self, name, d_in, hidden, rng=None):
        super().__init__(name)
        self.hidden = hidden

        def w(shape, fan_in):
            return uniform_init(rng, shape, fan_in) if rng is not None else np.zeros(shape)

        self.W_r = self.add_param("W_r", w((d_in, hidden), d_in))
        self.U_r = self.add_param("U_r", w((hidden, hidden), hidden))
        self.b_r = self.add_param("b_r", np.zeros(hidden))
        self.W_z = self.add_param("W_z", w((d_in, hidden), d_in))
        self.U_z = self.add_param("U_z", w((hidden, hidden), hidden))
        self.b_z = self.add_param("b_z", np.zeros(hidden))
        self.W = self.add_param("W", w((d_in, hidden), d_in))
        self.U = self.add_param("U", w((hidden, hidden), hidden))
        self.b = self.add_param("b", np.zeros(hidden))

    @property
    def d_in(self):
        return self.W.shape[0]

    def step(self, x, h_prev):
        x = as_tensor(x)
        h_prev = as_tensor(h_prev)
        r = F.sigmoid(x @ self.W_r.value + h_prev @ self.U_r.value + self.b_r.value)
        z = F.sigmoid(x @ self.W_z.value + h_prev @ self.U_z.value + self.b_z.value)
        rh = r * h_prev
        h_hat = F.tanh(x @ self.W.value + rh @ self.U.value + self.b.value)
        h = z * h_prev + (1.0 - z) * h_hat
        return h, (x, h_prev, r, z, rh, h_hat)

    def step_backward(self, dh, cache):
        x, h_prev, r, z, rh, h_hat = cache
        x2 = x.reshape(-1, x.shape[-1])
        h2 = h_prev.reshape(-1, h_prev.shape[-1])

        dz = dh * (h_prev - h_hat)
        dh_hat = dh * (1.0 - z)
        dh_prev = dh * z

        da = F.tanh_backward(dh_hat, h_hat)
        self.W.grad += x2.T @ da.reshape(x2.shape[0], -1)
        self.U.grad += rh.reshape(x2.shape[0], -1).T @ da.reshape(x2.shape[0], -1)
        self.b.grad += da.reshape(x2.shape[0], -1).sum(axis=0)
        dx = da @ self.W.value.T
        drh = da @ self.U.value.T
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r

        da_z = F.sigmoid_backward(dz, z)
        self.W_z.grad += x2.T @ da_z.reshape(x2.shape[0], -1)
        self.U_z.grad += h2.T @ da_z.reshape(x2.shape[0], -1)
        self.b_z.grad += da_z.reshape(x2.shape[0], -1).sum(axis=0)
        dx = dx + da_z @ self.W_z.value.T
        dh_prev = dh_prev + da_z @ self.U_z.value.T

        da_r = F.sigmoid_backward(dr, r)
        self.W_r.grad += x2.T @ da_r.reshape(x2.shape[0], -1)
        self.U_r.grad += h2.T @ da_r.reshape(x2.shape[0], -1)
        self.b_r.grad += da_r.reshape(x2.shape[0], -1).sum(axis=0)
        dx = dx + da_r @ self.W_r.value.T
        dh_prev = dh_prev + da_r @ self.U_r.value.T
        return dx, dh_prev


class NonLocalBlock(Module):
    """Residual dot-product self-attention over a (padded) position axis.

    ``y_i = (1/N) * sum_j (theta(x_i) . phi(x_j)) g(x_j)`` over the N valid
    positions, followed by ``out`` and the residual ``x + out(y)``. ``out``
    starts at zero so a fresh block is the identity.
    """

    def __init__(self, name, dim, inner_dim=None, rng=None):
        super().__init__(name)
        inner_dim = inner_dim or max(1, dim // 2)
        self.theta = self.add_child(Linear(f"{name}.theta", dim, inner_dim, rng))
        self.phi = self.add_child(Linear(f"{name}.phi", dim, inner_dim, rng))
        self.g = self.add_child(Linear(f"{name}.g", dim, inner_dim, rng))
        self.out = self.add_child(Linear(f"{name}.out", inner_dim, dim, zero_init=True))

    def forward(self, x, mask=None):
        """``x`` is ``(B, L, D)`` (or ``(L, D)``); ``mask`` flags valid positions."""
        x = as_tensor(x)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if mask is None:
            mask = np.ones(x.shape[:2])
        mask = as_tensor(mask).reshape(x.shape[:2])
        counts = np.maximum(mask.sum(axis=1), 1.0)

        t, t_cache = self.theta.forward(x)
        p, p_cache = self.phi.forward(x)
        g, g_cache = self.g.forward(x)
        scale = mask[:, None, :] / counts[:, None, None]
        attn = (t @ np.swapaxes(p, 1, 2)) * scale
        y = attn @ g
        o, o_cache = self.out.forward(y)
        z = x + o
        cache = (squeeze, t, p, g, scale, attn, t_cache, p_cache, g_cache, o_cache)
        return (z[0] if squeeze else z), cache

    def backward(self, dz, cache):
        squeeze, t, p, g, scale, attn, t_cache, p_cache, g_cache, o_cache = cache
        dz = as_tensor(dz)
        if squeeze:
            dz = dz[None]
        dy = self.out.backward(dz, o_cache)
        dattn = dy @ np.swapaxes(g, 1, 2)
        dg = np.swapaxes(attn, 1, 2) @ dy
        ds = dattn * scale
        dt = ds @ p
        dp = np.swapaxes(ds, 1, 2) @ t
        dx = dz + self.theta.backward(dt, t_cache) + self.phi.backward(dp, p_cache) \
            + self.g.backward(dg, g_cache)
        return dx[0] if squeeze else dx
