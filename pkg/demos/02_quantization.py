"""Straight-through rounding and the mean-offset decode identity.

The symbols actually coded are round(y_hat - mu); decoding computes
round(symbols + mu) and recovers y_hat exactly, so training, evaluation and
the bitstream all see the same integer grid.
"""

import torch

from taskcodec.quantizer import desymbolize, ste_round, symbolize

# Forward pass rounds (half away from zero), backward is the identity:
y = torch.tensor([2.4, 2.5, -2.5, 0.2], requires_grad=True)
rounded = ste_round(y)
print("ste_round:", y.detach().tolist(), "->", rounded.detach().tolist())

rounded.sum().backward()
print("gradient of sum (identity Jacobian):", y.grad.tolist())

# The decode identity, on a grid with awkward fractional means:
y_hat = torch.tensor([3.0, 3.0, -4.0, 0.0])
mu = torch.tensor([0.4, 0.6, -0.3, 0.49])
plane = symbolize(y_hat, mu)
print("symbols round(y_hat - mu):", plane.symbols.tolist())
recovered = desymbolize(plane)
print("round(symbols + mu):", recovered.tolist(), "== y_hat:",
      torch.equal(recovered, y_hat))

# And at scale:
gen = torch.Generator().manual_seed(0)
y_big = torch.randint(-100, 101, (100_000,), generator=gen).double()
mu_big = torch.rand(100_000, generator=gen).double() * 1.8 - 0.9
exact = torch.equal(desymbolize(symbolize(y_big, mu_big)), y_big)
print("100k randomized round-trip exact:", exact)
