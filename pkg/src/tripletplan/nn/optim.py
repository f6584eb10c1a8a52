"""Adam optimizer over named parameter dicts, kernel-backed fused update."""

import numpy as np

from .. import _kernels as kernels


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros(p.data.size) for k, p in self.params.items()}
        self.v = {k: np.zeros(p.data.size) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        """One update; parameters whose grad is None are left untouched."""
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            grad = np.ascontiguousarray(p.grad, dtype=np.float64).reshape(-1)
            kernels.adam_step(
                p.data.reshape(-1), grad, self.m[name], self.v[name],
                self.t, self.lr, self.beta1, self.beta2, self.eps,
            )
