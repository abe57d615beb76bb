import torch
import torch.nn.functional as F
from torch import nn

from .moment_kernels import SpatialFilter, bank_moment_loss, delta_targets, exact_derivative_bank


class PdeModel(nn.Module):
    """
    Learned temporal derivative dh/dt = sum_{i,j} c_ij * d^{i+j}h / dx^i dy^j of a latent feature map.

    Every latent channel is convolved with all k*k derivative filters (same zero padding),
    then a bias-free 1x1 convolution mixes the (channels * k*k) responses back to `channels`.
    The module has no nonlinearity and no bias, so it is exactly linear in its input.

    Args:
        channels (int): Latent channels.
        kernel_size (int): Filter side k; the bank holds k*k filters, one per order (i, j) in [0, k-1]^2.
    """

    targets: torch.Tensor

    def __init__(self, channels: int, kernel_size: int = 7):
        super().__init__()
        if kernel_size < 3 or kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 3, got {kernel_size}")

        self.channels = channels
        self.kernel_size = kernel_size
        n_filters = kernel_size * kernel_size

        self.derivative_bank = nn.Parameter(torch.empty(n_filters, kernel_size, kernel_size))
        nn.init.kaiming_uniform_(self.derivative_bank.view(n_filters, 1, kernel_size, kernel_size), a=5**0.5)
        self.combination = nn.Conv2d(channels * n_filters, channels, kernel_size=1, bias=False)
        self.register_buffer("targets", delta_targets(kernel_size, dtype=torch.float32), persistent=False)

    @property
    def num_filters(self) -> int:
        return self.kernel_size * self.kernel_size

    def derivative_channel(self, channel: int, i: int, j: int) -> int:
        """Index of the (i, j)-derivative response of `channel` among the combination inputs."""
        return channel * self.num_filters + i * self.kernel_size + j

    def spatial_derivatives(self, h: torch.Tensor) -> torch.Tensor:
        """All derivative responses, (B, C * k*k, H, W)."""
        if h.ndim != 4 or h.shape[1] != self.channels:
            raise ValueError(f"Expected (B, {self.channels}, H, W) input, got {tuple(h.shape)}")
        b, c, height, width = h.shape
        if min(height, width) < self.kernel_size:
            raise ValueError(
                f"Spatial size {height}x{width} is smaller than the {self.kernel_size}x{self.kernel_size} filters"
            )

        bank = self.derivative_bank.unsqueeze(1)
        responses = F.conv2d(h.reshape(b * c, 1, height, width), bank, padding=self.kernel_size // 2)
        return responses.reshape(b, c * self.num_filters, height, width)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.combination(self.spatial_derivatives(h))

    def temporal_derivative(self, h: torch.Tensor) -> torch.Tensor:
        return self(h)

    def taylor_derivatives(self, h0: torch.Tensor, order: int) -> list[torch.Tensor]:
        """[h0, h0', ..., h0^(order-1)], each term the temporal derivative of the previous one."""
        if order < 1:
            raise ValueError(f"Taylor order must be >= 1, got {order}")

        terms = [h0]
        for _ in range(order - 1):
            terms.append(self(terms[-1]))
        return terms

    def moment_loss(self) -> torch.Tensor:
        return bank_moment_loss(self.derivative_bank, self.targets.to(self.derivative_bank))

    def filters(self) -> list[SpatialFilter]:
        k = self.kernel_size
        return [SpatialFilter(self.derivative_bank[n], divmod(n, k)) for n in range(self.num_filters)]

    @torch.no_grad()
    def load_exact_filters(self):
        """Overwrite the bank with the closed-form filters (zero moment loss)."""
        self.derivative_bank.copy_(exact_derivative_bank(self.kernel_size).to(self.derivative_bank))
