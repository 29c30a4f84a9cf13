"""Multi-scale non-local reconstruction network.

Rows are scale spaces (row 0 at full resolution, each lower row at half the
previous size). Every row runs ``nl_per_scale`` non-local submodules in
sequence; vertical crossings move features between neighbouring rows:

* column ``t < down_crossings``: before row ``s`` runs its t-th submodule it
  receives ``Down(row s-1)``, taken right after row ``s-1``'s t-th submodule;
* column ``t >= nl_per_scale - up_crossings``: after every row has run its
  t-th submodule, rows are merged bottom-up with ``row s-1 += Up(row s)``.

A 3x3 head lifts the image into row 0 and a 3x3 tail maps row 0 back to one
channel, added to the input (global residual).
"""

from dataclasses import dataclass, field

import numpy as np

from .affinity import AffinityMatrix
from .autograd import functional as F
from .autograd.nn import Conv2d, Module
from .autograd.tensor import DimensionError
from .measurement import embedded_gaussian_attention


class ResidualBlock(Module):
    def __init__(self, channels, rng):
        self.channels = channels
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise DimensionError(f"residual block expects {self.channels} channels, got {x.shape[1]}")
        return F.add(x, self.conv2(F.relu(self.conv1(x))))


class DenseGroup(Module):
    """Densely connected residual blocks with a 1x1 aggregation.

    Block ``k > 0`` sees the concatenation of the input and all earlier block
    outputs, squeezed back to ``channels`` by its own 1x1 projection. The
    aggregation maps the concatenation of everything to ``channels``.
    """

    def __init__(self, channels, depth, rng):
        if depth < 1:
            raise ValueError("a dense group needs at least one block")
        self.blocks = [ResidualBlock(channels, rng) for _ in range(depth)]
        self.projections = [Conv2d((k + 1) * channels, channels, 1, rng) for k in range(1, depth)]
        self.aggregate = Conv2d((depth + 1) * channels, channels, 1, rng)

    def forward(self, x):
        feats = [x]
        for k, block in enumerate(self.blocks):
            inp = x if k == 0 else self.projections[k - 1](F.concat_channels(feats))
            feats.append(block(inp))
        return self.aggregate(F.concat_channels(feats))


class DownsampleSubmodule(Module):
    def __init__(self, in_ch, out_ch, depth, rng):
        self.reduce = Conv2d(in_ch, out_ch, 3, rng, stride=2, padding=1)
        self.dense = DenseGroup(out_ch, depth, rng)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise DimensionError(f"downsampling needs even spatial dims, got {(h, w)}")
        y = self.reduce(x)
        return F.add(y, self.dense(y))


class UpsampleSubmodule(Module):
    def __init__(self, in_ch, out_ch, depth, rng):
        self.expand = Conv2d(in_ch, out_ch * 4, 1, rng)
        self.dense = DenseGroup(out_ch, depth, rng)

    def forward(self, x):
        y = F.pixel_shuffle(self.expand(x), 2)
        return F.add(y, self.dense(y))


class NonLocalSubmodule(Module):
    """Pooled-key non-local attention followed by residual blocks.

    Queries use every position; keys and values are average-pooled by
    ``pool``. Output is ``z + project(blocks(attention(z)))``. With
    ``use_nonlocal=False`` the attention step (and its three embeddings) is
    dropped and the blocks act on ``z`` directly.
    """

    def __init__(self, channels, pool, depth, rng, use_nonlocal=True):
        self.pool = pool
        self.use_nonlocal = use_nonlocal
        # drawn either way, so toggling attention leaves the other weights unchanged
        attention_rng = np.random.default_rng(rng.integers(1 << 62))
        if use_nonlocal:
            self.theta = Conv2d(channels, channels, 1, attention_rng, bias=False)
            self.phi = Conv2d(channels, channels, 1, attention_rng, bias=False)
            self.g = Conv2d(channels, channels, 1, attention_rng, bias=False)
        self.blocks = [ResidualBlock(channels, rng) for _ in range(depth)]
        self.project = Conv2d(channels, channels, 1, rng)

    def attend(self, z):
        n, c, h, w = z.shape
        p = self.pool
        if h // p == 0 or w // p == 0:
            raise DimensionError(f"pooling {(h, w)} by {p} leaves no key positions")
        pooled = F.avg_pool2d(z, p)
        m = (h // p) * (w // p)
        q = F.reshape(self.theta(z), (n, c, h * w))
        key = F.reshape(self.phi(pooled), (n, c, m))
        val = F.reshape(self.g(pooled), (n, c, m))
        agg, logits, weights = embedded_gaussian_attention(q, key, val)
        return F.reshape(agg, (n, c, h, w)), AffinityMatrix(logits, weights, (h, w), p)

    def forward(self, z):
        affinity = None
        u = z
        if self.use_nonlocal:
            u, affinity = self.attend(z)
        for block in self.blocks:
            u = block(u)
        return F.add(z, self.project(u)), affinity


@dataclass
class FeatureAffinitySet:
    entries: list = field(default_factory=list)  # (scale, index, AffinityMatrix)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def matrices(self):
        return [r for _, _, r in self.entries]


class MSNLNet(Module):
    def __init__(self, config, rng):
        self.config = config
        rows = config.active_scales
        ch = config.channels
        self.head = Conv2d(1, ch[0], 3, rng)
        self.nonlocal_rows = [
            [
                NonLocalSubmodule(ch[s], config.pool_factors[s], config.nl_blocks[s], rng, config.enable_nlf)
                for _ in range(config.nl_per_scale)
            ]
            for s in range(rows)
        ]
        self.down = [
            [DownsampleSubmodule(ch[s], ch[s + 1], config.down_blocks, rng) for _ in range(config.down_crossings)]
            for s in range(rows - 1)
        ]
        self.up = [
            [UpsampleSubmodule(ch[s + 1], ch[s], config.up_blocks, rng) for _ in range(config.up_crossings)]
            for s in range(rows - 1)
        ]
        self.tail = Conv2d(ch[0], 1, 3, rng, zero=True)

    def forward(self, x0):
        """Refine ``x0`` [N, 1, h, w]; returns (x_final, FeatureAffinitySet)."""
        cfg = self.config
        h, w = x0.shape[-2:]
        m = cfg.spatial_multiple()
        x = F.reflect_pad(x0, (-h) % m, (-w) % m)

        rows = cfg.active_scales
        state = [self.head(x)] + [None] * (rows - 1)
        affinities = FeatureAffinitySet()
        first_up = cfg.nl_per_scale - cfg.up_crossings
        for t in range(cfg.nl_per_scale):
            for s in range(rows):
                if s > 0 and t < cfg.down_crossings:
                    incoming = self.down[s - 1][t](state[s - 1])
                    state[s] = incoming if state[s] is None else F.add(state[s], incoming)
                state[s], r = self.nonlocal_rows[s][t](state[s])
                if r is not None:
                    affinities.entries.append((s, t, r))
            if rows > 1 and t >= first_up:
                for s in range(rows - 1, 0, -1):
                    state[s - 1] = F.add(state[s - 1], self.up[s - 1][t - first_up](state[s]))
        out = F.add(x, self.tail(state[0]))
        return F.crop(out, h, w), affinities
