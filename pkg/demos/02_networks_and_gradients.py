"""
The dense-network layer: scaled-softmax action heads, analytic backprop
checked against finite differences, and the feasibility mapping.

Run:  python demos/02_networks_and_gradients.py
"""

import numpy as np

from coopcache import DenseNet, NetSpec, map_action, softmax_scaled_head
from coopcache.ddpg import map_action_jacobian, storage_slack

# An actor head for B=2 stations, F=5 items, budget L=2 per station:
# each station's block is L * softmax(logits), so it sums to L exactly.
rng = np.random.default_rng(0)
z = rng.normal(size=10)
proto = softmax_scaled_head(z, scale=2.0, groups=2)
print("proto-action blocks:", np.round(proto.reshape(2, 5), 3))
print("block sums:", proto.reshape(2, 5).sum(axis=1))

# Entries can exceed 1 (impossible cache fractions); min(1, .) repairs that
# but wastes whatever the clip removes: that waste is the storage slack the
# training penalty charges for.
hot = z.copy()
hot[2] += 6.0
proto_hot = softmax_scaled_head(hot, scale=2.0, groups=2)
mapped = map_action(proto_hot)
print("\nsaturated proto:", np.round(proto_hot[:5], 3))
print("after clipping :", np.round(mapped[:5], 3))
print("storage slack  :", storage_slack(mapped, 2, 2.0))
print("clip jacobian  :", map_action_jacobian(proto_hot[:5]))

# Backprop returns gradients for parameters AND inputs; the input gradient
# is what lets a critic steer an actor. Check both against central
# finite differences.
spec = NetSpec(layer_sizes=(6, 16, 12, 8), hidden_activation="tanh",
               head="softmax_scaled", head_scale=1.6, head_groups=2)
net = DenseNet(spec)
params = net.init_params(rng)
x = rng.normal(size=(4, 6))
upstream = rng.normal(size=(4, 8))

y, cache = net.forward(params, x)
grads, input_grads = net.backward(params, cache, upstream)

h = 1e-5
i = int(rng.integers(net.num_params))
params[i] += h
up, _ = net.forward(params, x)
params[i] -= 2 * h
down, _ = net.forward(params, x)
params[i] += h
fd = float((upstream * (up - down)).sum()) / (2 * h)
print(f"\nparam {i}: analytic {grads[i]:+.10f}  finite-diff {fd:+.10f}")

xi = x.copy()
xi[0, 3] += h
up, _ = net.forward(params, xi)
xi[0, 3] -= 2 * h
down, _ = net.forward(params, xi)
fd_x = float((upstream * (up - down)).sum()) / (2 * h)
print(f"input (0,3): analytic {input_grads[0, 3]:+.10f}  "
      f"finite-diff {fd_x:+.10f}")
