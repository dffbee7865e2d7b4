# A single KAN layer: every input-output edge carries its own learnable curve.
# Here we fit one edge to sin(3x) with plain gradient descent to see the spline at work.

import numpy as np

from gyralkan.kan import kan_backward, kan_forward, xavier_init

layer = xavier_init(1, 1, rng_seed=0)
x = np.linspace(-1, 1, 64)[:, None]
y = np.sin(3 * x)

for step in range(2001):
    pred = kan_forward(layer, x)
    err = pred - y
    g = kan_backward(layer, x, 2 * err / len(x))
    for name, grad in g.params().items():
        getattr(layer, name)[...] -= 0.5 * grad
    if step % 500 == 0:
        print(step, "mse", float(np.mean(err ** 2)))

xs = np.array([[-0.8], [0.0], [0.5]])
print("fit   ", kan_forward(layer, xs).ravel().round(3))
print("target", np.sin(3 * xs).ravel().round(3))
