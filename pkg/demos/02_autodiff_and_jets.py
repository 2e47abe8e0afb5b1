"""The differentiation tape and second-order input jets.

Training a network against an ODE residual needs u, u' and u'' with
respect to the scalar input -- and then gradients of all three with
respect to the weights.  The tape provides both: jets propagate the input
derivatives forward, and one reverse sweep per output produces weight
gradients.
"""

import numpy as np

from projsqp import Tape, backward
from projsqp import autodiff as ad
from projsqp import model
from projsqp.problems import SpringConfig, spring_exact_jet

print("== reverse-mode gradients vs finite differences ==")
spec = model.MlpSpec((1, 16, 16, 1))
rng = np.random.default_rng(1)
theta = model.init_params(spec, rng)
xs = np.linspace(0, 1, 20)
targets = np.sin(3 * xs)

tape = Tape()
leaves = model.param_leaves(spec, theta, tape)
pred = model.forward_on_tape(spec, leaves, tape, xs[None, :])
loss = ad.mean(ad.square(ad.sub(pred, tape.constant(targets[None, :]))))
grad = model.grads_to_flat(spec, backward(tape, loss))

def loss_value(th):
    p = model.forward(spec, th, xs[None, :])[0]
    return float(np.mean((p - targets) ** 2))

step = 1e-6
worst = 0.0
for _ in range(5):
    direction = rng.standard_normal(spec.n_params)
    direction /= np.linalg.norm(direction)
    fd = (loss_value(theta + step * direction) - loss_value(theta - step * direction)) / (2 * step)
    worst = max(worst, abs(grad @ direction - fd))
print(f"worst directional-derivative gap over 5 probes: {worst:.2e}")

print("\n== jets through the network ==")
ts = np.array([0.1, 0.5, 0.9])
tape = Tape()
leaves = model.param_leaves(spec, theta, tape)
jet = model.forward_jet(spec, leaves, tape, ts)
h = 1e-4
up = model.forward(spec, theta, (ts + h)[None, :])[0]
dn = model.forward(spec, theta, (ts - h)[None, :])[0]
mid = model.forward(spec, theta, ts[None, :])[0]
print("u'  from jet:", np.round(jet.d1.value[0], 6))
print("u'  from FD: ", np.round((up - dn) / (2 * h), 6))
print("u'' from jet:", np.round(jet.d2.value[0], 4))
print("u'' from FD: ", np.round((up - 2 * mid + dn) / h ** 2, 4))

print("\n== value-level jets certify the closed-form oscillator solution ==")
cfg = SpringConfig()
worst = 0.0
for t in np.linspace(0, 1, 30):
    j = spring_exact_jet(float(t), cfg)
    resid = cfg.mass * j.d2 + cfg.friction * j.d1 + cfg.stiffness * j.val
    worst = max(worst, abs(resid))
print(f"max |m u'' + mu u' + k u| of the exact solution on the grid: {worst:.2e}")
