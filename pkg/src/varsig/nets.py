"""Neural building blocks for the recurrent conditional variational model.

Encoders are small convolutional stacks ending in adaptive pooling, so the
same topology serves every measurement geometry; Gaussian heads emit
(mean, stddev) with stddev = exp(0.5 * logvar) and logvar clamped to
[-10, 10]. Decoders carry the recurrence: a fully connected LSTM cell for
one-dimensional signals (packed pulse spectra, toy vectors) and a
convolutional LSTM cell for image/video signals.
"""

from __future__ import annotations

import torch
from torch import nn

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


class FeatureEncoder1d(nn.Module):
    """(B, L) -> (B, out_dim) feature vector via strided 1-D convolutions."""

    def __init__(self, channels: tuple[int, int] = (16, 32), pooled: int = 8):
        super().__init__()
        c0, c1 = channels
        self.conv = nn.Sequential(
            nn.Conv1d(1, c0, kernel_size=5, stride=2, padding=2),
            nn.GELU(),
            nn.Conv1d(c0, c1, kernel_size=5, stride=2, padding=2),
            nn.GELU(),
            nn.AdaptiveAvgPool1d(pooled),
        )
        self.out_dim = c1 * pooled

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x.unsqueeze(1)).flatten(1)


class FeatureEncoder2d(nn.Module):
    """(B, C, H, W) -> (B, out_dim) feature vector via strided 2-D convolutions."""

    def __init__(self, in_ch: int, channels: tuple[int, int] = (16, 32), pooled: int = 4):
        super().__init__()
        c0, c1 = channels
        self.conv = nn.Sequential(
            nn.Conv2d(in_ch, c0, kernel_size=3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(c0, c1, kernel_size=3, stride=2, padding=1),
            nn.GELU(),
            nn.AdaptiveAvgPool2d(pooled),
        )
        self.out_dim = c1 * pooled * pooled

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x).flatten(1)


class GaussianHead(nn.Module):
    """Features -> (mean, stddev) of a diagonal Gaussian over R^M."""

    def __init__(self, in_dim: int, latent_dim: int, hidden: int = 128):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.GELU(),
            nn.Linear(hidden, 2 * latent_dim),
        )
        self.latent_dim = latent_dim

    def forward(self, feat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.net(feat)
        mean, logvar = out.chunk(2, dim=-1)
        logvar = torch.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX)
        return mean, torch.exp(0.5 * logvar)


class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell: gates from one convolution over [x, h]."""

    def __init__(self, in_ch: int, hidden_ch: int, kernel_size: int = 3):
        super().__init__()
        self.hidden_ch = hidden_ch
        self.gates = nn.Conv2d(
            in_ch + hidden_ch, 4 * hidden_ch, kernel_size, padding=kernel_size // 2
        )

    def init_state(self, batch: int, hw: tuple[int, int], ref: torch.Tensor):
        shape = (batch, self.hidden_ch, *hw)
        zeros = torch.zeros(shape, dtype=ref.dtype, device=ref.device)
        return zeros, zeros.clone()

    def forward(self, x: torch.Tensor, state):
        h, c = state
        i, f, o, g = self.gates(torch.cat([x, h], dim=1)).chunk(4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, (h, c)


class FcRecurrentDecoder(nn.Module):
    """Shared decoder for 1-D signals: feedback embed + z -> LSTM -> delta f."""

    def __init__(self, feedback_embed: nn.Module, latent_dim: int,
                 lstm_hidden: int, out_len: int):
        super().__init__()
        self.embed = feedback_embed
        self.cell = nn.LSTMCell(latent_dim + feedback_embed.out_dim, lstm_hidden)
        self.head = nn.Linear(lstm_hidden, out_len)
        self.lstm_hidden = lstm_hidden

    def init_state(self, batch: int, ref: torch.Tensor):
        zeros = torch.zeros(batch, self.lstm_hidden, dtype=ref.dtype, device=ref.device)
        return zeros, zeros.clone()

    def forward(self, z: torch.Tensor, feedback: torch.Tensor, state):
        x = torch.cat([z, self.embed(feedback)], dim=-1)
        h, c = self.cell(x, state)
        return self.head(h), (h, c)


class ConvRecurrentDecoder(nn.Module):
    """Shared decoder for image/video signals with a convolutional LSTM.

    Feedback (channel-first measurement) is embedded to n/4 resolution, z is
    projected and reshaped to the same grid, and the ConvLSTM hidden state is
    upsampled back to the full n x n signal with out_ch channels.
    """

    def __init__(self, meas_ch: int, n: int, latent_dim: int, out_ch: int,
                 embed_channels: tuple[int, int] = (16, 32),
                 z_ch: int = 8, hidden_ch: int = 32):
        super().__init__()
        if n % 4 != 0:
            raise ValueError(f"signal size {n} must be divisible by 4")
        self.base = n // 4
        c0, c1 = embed_channels
        self.embed = nn.Sequential(
            nn.Conv2d(meas_ch, c0, kernel_size=3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(c0, c1, kernel_size=3, stride=2, padding=1),
            nn.GELU(),
        )
        self.z_ch = z_ch
        self.zproj = nn.Linear(latent_dim, z_ch * self.base * self.base)
        self.cell = ConvLSTMCell(c1 + z_ch, hidden_ch)
        self.head = nn.Sequential(
            nn.ConvTranspose2d(hidden_ch, c0, kernel_size=4, stride=2, padding=1),
            nn.GELU(),
            nn.ConvTranspose2d(c0, out_ch, kernel_size=4, stride=2, padding=1),
        )

    def init_state(self, batch: int, ref: torch.Tensor):
        return self.cell.init_state(batch, (self.base, self.base), ref)

    def forward(self, z: torch.Tensor, feedback: torch.Tensor, state):
        zmap = self.zproj(z).reshape(-1, self.z_ch, self.base, self.base)
        x = torch.cat([self.embed(feedback), zmap], dim=1)
        h, state = self.cell(x, state)
        return self.head(h), state
