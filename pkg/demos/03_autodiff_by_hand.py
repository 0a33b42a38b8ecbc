"""
Checking reverse-mode gradients against finite differences
==========================================================
"""

import numpy as np

from actfn import tensor as T
from actfn.activations import ActivationSpec, act_forward
from actfn.gradcheck import numerical_gradient, relative_error

rng = np.random.default_rng(0)
x = rng.standard_normal((2, 1, 4, 9))
k = rng.standard_normal((3, 1, 4, 1))    # a spatial kernel spanning all channels
w = rng.standard_normal((27, 2))
labels = np.array([0, 1])


def loss_of(kernel, track=True):
    kt = T.Tensor(kernel, requires_grad=track)
    h = T.conv2d(T.Tensor(x), kt)                  # (2, 3, 1, 9)
    h = act_forward(ActivationSpec("swish"), h)
    logits = T.dense(T.flatten(h), T.Tensor(w))
    return T.softmax_cross_entropy(logits, labels), kt


loss, kt = loss_of(k)
T.backward(loss)
print("loss", float(loss.data))


def f(values):
    with T.no_grad():
        return float(loss_of(values, track=False)[0].data)


numeric = numerical_gradient(f, k)
print("autodiff   ", np.round(kt.grad.ravel()[:6], 6))
print("finite diff", np.round(numeric.ravel()[:6], 6))
print("worst relative error %.1e" % relative_error(kt.grad, numeric))

# The graph is freed after backward; a second pass is an error, not a silent zero
try:
    T.backward(loss)
except Exception as exc:
    print(type(exc).__name__, "-", exc)
