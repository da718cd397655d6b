"""Adam optimizer with bias correction; moment state lives on the Parameter."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            if p.adam_m is None:
                p.adam_m = np.zeros_like(p.data)
                p.adam_v = np.zeros_like(p.data)
            p.adam_step += 1
            t = p.adam_step
            p.adam_m *= self.beta1
            p.adam_m += (1.0 - self.beta1) * g
            p.adam_v *= self.beta2
            p.adam_v += (1.0 - self.beta2) * (g * g)
            mhat = p.adam_m / (1.0 - self.beta1 ** t)
            vhat = p.adam_v / (1.0 - self.beta2 ** t)
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)
