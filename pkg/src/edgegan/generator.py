"""Shared encoder, edge and image branches, and the assembled generator."""

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import ResBlockDown, SNConv2d, SPADEResBlock
from .semantic import SemanticPreserving
from .transfer import transfer_features, transfer_image


class Encoder(nn.Module):
    """Layout -> deep feature at full resolution.

    A stem convolution, ``num_down`` stride-2 residual blocks, then the same
    number of nearest-upsample + SPADE residual blocks conditioned on the layout.
    """

    def __init__(self, num_classes, channels=64, num_down=3, spade_hidden=128, slope=0.2,
                 power_iterations=1):
        super().__init__()
        kw = dict(power_iterations=power_iterations)
        self.num_down = num_down
        self.stem = SNConv2d(num_classes, channels, 3, **kw)
        self.down = nn.ModuleList(ResBlockDown(channels, channels, slope, **kw) for _ in range(num_down))
        self.up = nn.ModuleList(
            SPADEResBlock(channels, channels, num_classes, spade_hidden, slope, **kw)
            for _ in range(num_down)
        )

    @property
    def factor(self):
        return 2 ** self.num_down

    def check_size(self, size):
        h, w = size
        if h < 8 or w < 8 or h % self.factor or w % self.factor:
            raise ValueError(
                f"layout size {h}x{w} must be >= 8 and divisible by {self.factor}"
            )

    def forward(self, layout):
        self.check_size(layout.shape[-2:])
        x = self.stem(layout)
        for block in self.down:
            x = block(x)
        for block in self.up:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = block(x, layout)
        return x


class EdgeBranch(nn.Module):
    def __init__(self, channels=64, n=3, slope=0.2, power_iterations=1):
        super().__init__()
        self.slope = slope
        self.convs = nn.ModuleList(
            SNConv2d(channels, channels, 3, power_iterations=power_iterations) for _ in range(n)
        )
        self.out = SNConv2d(channels, 3, 3, power_iterations=power_iterations)

    def forward(self, feature):
        """Return (list of n edge feature maps, edge map in [-1, 1])."""
        stack = []
        x = feature
        for conv in self.convs:
            x = F.leaky_relu(conv(x), self.slope)
            stack.append(x)
        return stack, torch.tanh(self.out(x))


class ImageBranch(nn.Module):
    def __init__(self, channels=64, n=3, slope=0.2, power_iterations=1):
        super().__init__()
        self.slope = slope
        self.convs = nn.ModuleList(
            SNConv2d(channels, channels, 3, power_iterations=power_iterations) for _ in range(n)
        )
        self.out = SNConv2d(channels, 3, 3, power_iterations=power_iterations)

    def forward(self, feature, edge_stack=None, edge_map=None):
        """Return (refined feature stack, raw image, refined image).

        With ``edge_stack``/``edge_map`` of None the branch is a plain head and
        the refined image is the raw one.
        """
        if edge_stack is not None and len(edge_stack) != len(self.convs):
            raise ValueError(f"edge stack has {len(edge_stack)} maps, branch has {len(self.convs)} layers")
        stack = []
        x = feature
        for j, conv in enumerate(self.convs):
            x = F.leaky_relu(conv(x), self.slope)
            if edge_stack is not None:
                x = transfer_features(edge_stack[j], x)
            stack.append(x)
        raw = torch.tanh(self.out(x))
        refined = transfer_image(edge_map, raw) if edge_map is not None else raw
        return stack, raw, refined


@dataclass
class GeneratorOutputs:
    final_image: torch.Tensor
    intermediate_image: torch.Tensor
    raw_image: torch.Tensor
    edge: torch.Tensor = None
    deep_feature: torch.Tensor = None
    edge_stack: list = field(default_factory=list)
    image_stack: list = field(default_factory=list)
    gamma: torch.Tensor = None


class Generator(nn.Module):
    """Encoder plus branches wired according to the ablation flags.

    ``use_Ge`` adds the edge branch, ``use_Gt`` lets it gate the image branch
    and ``use_Gs`` adds the semantic preserving module. Without ``use_Gs`` the
    final image is the intermediate one.
    """

    def __init__(self, num_classes, channels=64, n=3, num_down=3, spade_hidden=128, slope=0.2,
                 power_iterations=1, use_Ge=True, use_Gt=True, use_Gs=True,
                 gs_edge_source="generated", size=None):
        super().__init__()
        if (use_Gt or use_Gs) and not use_Ge:
            raise ValueError("edge transfer and semantic preserving modules need the edge branch")
        kw = dict(slope=slope, power_iterations=power_iterations)
        self.num_classes = num_classes
        self.channels = channels
        self.use_Ge, self.use_Gt, self.use_Gs = use_Ge, use_Gt, use_Gs
        self.gs_edge_source = gs_edge_source
        self.encoder = Encoder(num_classes, channels, num_down, spade_hidden, **kw)
        if size is not None:
            self.encoder.check_size(size)
        self.edge_branch = EdgeBranch(channels, n, **kw) if use_Ge else None
        self.image_branch = ImageBranch(channels, n, **kw)
        self.semantic = SemanticPreserving(num_classes, channels, **kw) if use_Gs else None

    @classmethod
    def from_config(cls, config):
        return cls(
            num_classes=config["data.num_classes"],
            channels=config["model.C"],
            n=config["model.n"],
            num_down=config["model.num_down"],
            spade_hidden=config["nn.spade_hidden"],
            slope=config["model.slope"],
            power_iterations=config["nn.power_iterations"],
            use_Ge=config["model.use_Ge"],
            use_Gt=config["model.use_Gt"],
            use_Gs=config["model.use_Gs"],
            gs_edge_source=config["model.gs_edge_source"],
            size=tuple(config["data.size"]),
        )

    def components(self):
        """Named sub-networks; the transfer step is listed although it owns no parameters."""
        return {
            "encoder": self.encoder,
            "edge_branch": self.edge_branch,
            "image_branch": self.image_branch,
            "transfer": None,
            "semantic_preserving": self.semantic,
        }

    def encode(self, layout):
        return self.encoder(layout)

    def forward(self, layout, edge_target=None):
        feature = self.encoder(layout)
        edge_stack, edge = [], None
        if self.use_Ge:
            edge_stack, edge = self.edge_branch(feature)
        if self.use_Gt:
            image_stack, raw, intermediate = self.image_branch(feature, edge_stack, edge)
        else:
            image_stack, raw, intermediate = self.image_branch(feature)
        final, gamma = intermediate, None
        if self.use_Gs:
            gs_edge = edge
            if self.gs_edge_source == "target":
                if edge_target is None:
                    raise ValueError("gs_edge_source='target' needs edge_target")
                gs_edge = edge_target
            final, gamma, _ = self.semantic(layout, gs_edge, intermediate, feature)
        return GeneratorOutputs(
            final_image=final,
            intermediate_image=intermediate,
            raw_image=raw,
            edge=edge,
            deep_feature=feature,
            edge_stack=edge_stack,
            image_stack=image_stack,
            gamma=gamma,
        )
