"""
Edge-gated features
===================

The transfer step lets an edge map amplify image features. Each image value
``x`` is multiplied by ``1 + sigmoid(e)`` for the matching edge value ``e``,
so a strong edge doubles it and a strongly negative one leaves it alone.
"""

import torch

from edgegan.transfer import attention_map, transfer_features

# A 1-D strip of image feature values and a matching edge response
x = torch.linspace(-1, 1, 5)
for e in (-40.0, 0.0, 40.0):
    out = transfer_features(torch.full_like(x, e), x)
    print(f"edge {e:+5.0f}  gain {float(out[-1] / x[-1]):.3f}  ->", [round(v, 3) for v in out.tolist()])

# The attention map drawn in figures is the gate itself
edge = torch.tensor([[-3.0, 0.0, 3.0]])
print("attention", attention_map(edge).tolist())
