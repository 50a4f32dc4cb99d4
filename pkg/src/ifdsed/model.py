"""Shared CNN encoder with attention-pooling, domain-projection and SED heads."""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import ModelConfig

EPS = 1e-7


class ConvBlock(nn.Module):
    """3x3 conv -> batch norm -> ReLU -> max pool along frequency only."""

    def __init__(self, in_channels: int, out_channels: int, freq_pool: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.bn = nn.BatchNorm2d(out_channels)
        self.pool = nn.MaxPool2d((1, freq_pool)) if freq_pool > 1 else nn.Identity()

    def forward(self, x):
        return self.pool(torch.relu(self.bn(self.conv(x))))


class SEDModel(nn.Module):
    """Frame embeddings h_t feed three heads.

    * attention pooling: p_tc = sigmoid(u_c . h_t + b_c), a_tc = softmax_t(w_c . h_t),
      clip probability P_c = sum_t a_tc p_tc. This is the only head used at test time.
    * domain projection: v_t = W h_t + b, the space the inter-frame distance acts on.
    * SED branch: frame probabilities sigmoid(W' h_t + b'), trained on strong labels.

    Inputs are (batch, T, n_mels) log-mel matrices; the stored feature mean and
    std are applied before the first convolution.
    """

    def __init__(self, n_mels: int, num_classes: int, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.n_mels = n_mels
        self.num_classes = num_classes
        blocks = []
        in_ch = 1
        for out_ch, pool in zip(config.channels, config.freq_pool):
            blocks.append(ConvBlock(in_ch, out_ch, pool))
            in_ch = out_ch
        self.encoder = nn.Sequential(*blocks)
        self.embed_dim = in_ch
        self.attention = nn.Linear(in_ch, num_classes, bias=False)
        self.classifier = nn.Linear(in_ch, num_classes)
        self.domain = nn.Linear(in_ch, config.domain_dim)
        self.sedb = nn.Linear(in_ch, num_classes)
        self.register_buffer("feat_mean", torch.zeros(n_mels))
        self.register_buffer("feat_std", torch.ones(n_mels))

    def set_normalization(self, mean, std) -> None:
        self.feat_mean.copy_(torch.as_tensor(mean, dtype=self.feat_mean.dtype))
        self.feat_std.copy_(torch.as_tensor(std, dtype=self.feat_std.dtype).clamp_min(1e-5))

    def encode(self, features: torch.Tensor) -> torch.Tensor:
        """(B, T, F) features -> (B, T, D) frame embeddings; T is preserved."""
        if features.ndim != 3 or features.shape[-1] != self.n_mels:
            raise ValueError(f"expected (batch, T, {self.n_mels}) features, got {tuple(features.shape)}")
        x = (features - self.feat_mean) / self.feat_std
        x = self.encoder(x.unsqueeze(1))  # (B, D, T, F')
        return x.mean(dim=3).transpose(1, 2)

    def attention_pool(self, emb: torch.Tensor):
        """Returns (clip_probs (B, C), frame_probs (B, T, C), attention (B, T, C))."""
        frame_probs = torch.sigmoid(self.classifier(emb))
        attention = torch.softmax(self.attention(emb), dim=1)
        clip_probs = (attention * frame_probs).sum(dim=1)
        return clip_probs, frame_probs, attention

    def domain_project(self, emb: torch.Tensor) -> torch.Tensor:
        return self.domain(emb)

    def sedb_forward(self, emb: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.sedb(emb))

    def forward(self, features: torch.Tensor) -> dict[str, torch.Tensor]:
        emb = self.encode(features)
        clip_probs, frame_probs, attention = self.attention_pool(emb)
        return {
            "embeddings": emb,
            "clip_probs": clip_probs,
            "frame_probs": frame_probs,
            "attention": attention,
            "domain": self.domain_project(emb),
            "sedb_probs": self.sedb_forward(emb),
        }


def build_model(n_mels: int, num_classes: int, config: ModelConfig, seed: int) -> SEDModel:
    """Construct a model whose initial weights depend only on ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return SEDModel(n_mels, num_classes, config)


def binary_cross_entropy(probs: torch.Tensor, targets: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    p = probs.clamp(eps, 1.0 - eps)
    return -(targets * torch.log(p) + (1.0 - targets) * torch.log(1.0 - p))


def weak_loss(clip_probs: torch.Tensor, weak_labels: torch.Tensor) -> torch.Tensor:
    """Clip-level BCE, averaged over classes (and clips when batched)."""
    return binary_cross_entropy(clip_probs, weak_labels).mean()


def sedb_loss(frame_probs: torch.Tensor, frame_labels: torch.Tensor) -> torch.Tensor:
    """Frame-level BCE summed over classes and frames, normalised by T x C."""
    if frame_probs.shape != frame_labels.shape:
        raise ValueError(f"shape mismatch: probs {tuple(frame_probs.shape)} vs labels {tuple(frame_labels.shape)}")
    return binary_cross_entropy(frame_probs, frame_labels).mean()
