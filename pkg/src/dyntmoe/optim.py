"""AdamW with decoupled weight decay."""

import numpy as np

from .errors import ParameterError


class AdamW:
    """Moments are keyed by parameter name so the parameter set may change
    between steps (experts added or pruned). Parameters whose ``grad`` is
    None are skipped entirely, including their decay.
    """

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        if lr <= 0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = {}

    def step(self, named_params):
        b1, b2 = self.betas
        for name, p in named_params:
            if p.grad is None:
                continue
            st = self.state.get(name)
            if st is None or st["m"].shape != p.shape:
                st = self.state[name] = {"t": 0, "m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            g = p.grad
            st["t"] += 1
            st["m"] = b1 * st["m"] + (1 - b1) * g
            st["v"] = b2 * st["v"] + (1 - b2) * g * g
            m_hat = st["m"] / (1 - b1 ** st["t"])
            v_hat = st["v"] / (1 - b2 ** st["t"])
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def forget(self, prefix):
        """Drop moments of every parameter whose name starts with ``prefix``."""
        for name in [n for n in self.state if n.startswith(prefix)]:
            del self.state[name]
