import numpy as np

from etp.Engine import Linear, Module, NonLocalBlock, masked_mean_pool, masked_mean_pool_backward
from etp.Refinement.model import pad_sequences
from etp.Utils.errors import InputError
from .stages import NUM_POOLED


def pad_pooling(weights, steps):
    """Stack ``(5, L_i)`` pooling rows into ``(B, 5, steps)``."""
    out = np.zeros((len(weights), NUM_POOLED, steps))
    for b, w in enumerate(weights):
        out[b, :, :w.shape[1]] = w
    return out


class LnModel(Module):
    """Non-local block over the staged units, pyramid pooling and three heads.

    ``cls`` scores the K action classes plus background, ``comp`` the
    completeness of the proposal and ``reg`` the (center, log-span) offsets.
    """

    def __init__(self, input_dim, num_classes, rng=None, non_local=True, name="ln"):
        super().__init__(name)
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.block = self.add_child(NonLocalBlock(f"{name}.nonlocal", input_dim, rng=rng)) if non_local else None
        pooled = NUM_POOLED * input_dim
        self.cls = self.add_child(Linear(f"{name}.cls", pooled, num_classes + 1, rng))
        self.comp = self.add_child(Linear(f"{name}.comp", pooled, 1, rng))
        self.reg = self.add_child(Linear(f"{name}.reg", pooled, 2, zero_init=True))

    @property
    def non_local(self):
        return self.block is not None

    def pyramid(self, samples):
        """``samples``: list of ``(units, pooling_weights)`` pairs -> ``(B, 5D)``."""
        x, mask, _ = pad_sequences([units for units, _ in samples])
        if x.shape[2] != self.input_dim:
            raise InputError(f"unit features have dimension {x.shape[2]}, model expects {self.input_dim}")
        weights = pad_pooling([w for _, w in samples], x.shape[1])
        block_cache = None
        if self.block is not None:
            x, block_cache = self.block.forward(x, mask)
        pooled = masked_mean_pool(x, weights)
        return pooled.reshape(len(samples), -1), (weights, block_cache)

    def forward(self, samples):
        """Returns ``(logits (B, K+1), completeness (B,), offsets (B, 2))`` and a cache."""
        feature, pyramid_cache = self.pyramid(samples)
        logits, cls_cache = self.cls.forward(feature)
        comp, comp_cache = self.comp.forward(feature)
        offsets, reg_cache = self.reg.forward(feature)
        return (logits, comp[:, 0], offsets), (pyramid_cache, cls_cache, comp_cache, reg_cache)

    def backward(self, d_logits, d_comp, d_offsets, cache):
        (weights, block_cache), cls_cache, comp_cache, reg_cache = cache
        d_feature = self.cls.backward(d_logits, cls_cache)
        d_feature = d_feature + self.comp.backward(d_comp[:, None], comp_cache)
        d_feature = d_feature + self.reg.backward(d_offsets, reg_cache)
        d_pooled = d_feature.reshape(weights.shape[0], NUM_POOLED, self.input_dim)
        d_x = masked_mean_pool_backward(d_pooled, weights)
        if self.block is not None:
            d_x = self.block.backward(d_x, block_cache)
        return d_x

    @classmethod
    def from_state(cls, state: dict, name="ln"):
        pooled, classes = state[f"{name}.cls.weight"].shape
        model = cls(pooled // NUM_POOLED, classes - 1,
                    non_local=f"{name}.nonlocal.out.weight" in state, name=name)
        model.load_state_dict(state)
        return model
