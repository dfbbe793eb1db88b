import numpy as np

from etp.Engine import GRUCell, Linear, Module
from etp.Utils.errors import InputError
from .regression import RegressionTarget


def pad_sequences(sequences):
    """Stack variable-length ``(L_i, D)`` sequences into ``(B, L, D)`` plus a mask."""
    lengths = np.array([len(s) for s in sequences])
    if len(sequences) == 0 or lengths.min() < 1:
        raise InputError("every sequence needs at least one unit")
    dim = sequences[0].shape[1]
    x = np.zeros((len(sequences), lengths.max(), dim))
    mask = np.zeros((len(sequences), lengths.max()))
    for b, seq in enumerate(sequences):
        x[b, :len(seq)] = seq
        mask[b, :len(seq)] = 1.0
    return x, mask, lengths


def reverse_padded(x, lengths):
    """Reverse each sequence inside its valid prefix."""
    out = np.zeros_like(x)
    for b, n in enumerate(lengths):
        out[b, :n] = x[b, :n][::-1]
    return out


def run_gru_stack(cells, x, mask):
    """Masked pass through stacked cells; padded steps hold the state."""
    batch, steps, _ = x.shape
    layer_input = x
    caches = []
    for cell in cells:
        h = np.zeros((batch, cell.hidden))
        outputs = np.zeros((batch, steps, cell.hidden))
        step_caches = []
        for t in range(steps):
            h_new, cache = cell.step(layer_input[:, t], h)
            m = mask[:, t:t + 1]
            h = m * h_new + (1.0 - m) * h
            outputs[:, t] = h
            step_caches.append((cache, m))
        caches.append(step_caches)
        layer_input = outputs
    return layer_input[:, -1], caches


def backprop_gru_stack(cells, caches, d_final, steps):
    d_outputs = np.zeros((d_final.shape[0], steps, d_final.shape[1]))
    d_outputs[:, -1] = d_final
    for cell, step_caches in zip(reversed(cells), reversed(caches)):
        dh = np.zeros((d_outputs.shape[0], cell.hidden))
        d_inputs = np.zeros((d_outputs.shape[0], steps, cell.d_in))
        for t in reversed(range(steps)):
            dh = dh + d_outputs[:, t]
            cache, m = step_caches[t]
            dx, dh_prev = cell.step_backward(m * dh, cache)
            d_inputs[:, t] = dx
            dh = dh_prev + (1.0 - m) * dh
        d_outputs = d_inputs
    return d_outputs


class RnModel(Module):
    """Two GRU stacks reading the unit sequence in opposite directions.

    The final states of both stacks are concatenated and a linear head maps
    them to the (center, log-span) offsets.
    """

    def __init__(self, input_dim, hidden=512, depth=2, rng=None, name="rn"):
        super().__init__(name)
        self.input_dim = input_dim
        self.hidden = hidden
        self.depth = depth
        self.forward_cells = [
            self.add_child(GRUCell(f"{name}.fwd.{i}", input_dim if i == 0 else hidden, hidden, rng))
            for i in range(depth)]
        self.backward_cells = [
            self.add_child(GRUCell(f"{name}.bwd.{i}", input_dim if i == 0 else hidden, hidden, rng))
            for i in range(depth)]
        self.head = self.add_child(Linear(f"{name}.head", 2 * hidden, 2, zero_init=True))

    def forward(self, sequences):
        """``sequences``: list of ``(L_i, D)`` unit features -> ``(B, 2)`` offsets."""
        x, mask, lengths = pad_sequences(sequences)
        if x.shape[2] != self.input_dim:
            raise InputError(f"unit features have dimension {x.shape[2]}, model expects {self.input_dim}")
        h_fwd, fwd_caches = run_gru_stack(self.forward_cells, x, mask)
        h_bwd, bwd_caches = run_gru_stack(self.backward_cells, reverse_padded(x, lengths), mask)
        code = np.concatenate([h_fwd, h_bwd], axis=1)
        preds, head_cache = self.head.forward(code)
        return preds, (x.shape[1], fwd_caches, bwd_caches, head_cache)

    def backward(self, d_preds, cache):
        steps, fwd_caches, bwd_caches, head_cache = cache
        d_code = self.head.backward(d_preds, head_cache)
        self.backprop_stacks(d_code, steps, fwd_caches, bwd_caches)

    def backprop_stacks(self, d_code, steps, fwd_caches, bwd_caches):
        backprop_gru_stack(self.forward_cells, fwd_caches, d_code[:, :self.hidden], steps)
        backprop_gru_stack(self.backward_cells, bwd_caches, d_code[:, self.hidden:], steps)

    @classmethod
    def from_state(cls, state: dict, name="rn"):
        depth = len([k for k in state if k.startswith(f"{name}.fwd.") and k.endswith(".W_r")])
        input_dim, hidden = state[f"{name}.fwd.0.W_r"].shape
        model = cls(input_dim, hidden=hidden, depth=depth, name=name)
        model.load_state_dict(state)
        return model


def encode_regress(model: RnModel, unit_features) -> RegressionTarget:
    preds, _ = model.forward([np.asarray(unit_features, dtype=np.float64)])
    return RegressionTarget(c=float(preds[0, 0]), s=float(preds[0, 1]))
