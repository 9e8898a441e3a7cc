import pytest
import torch

from faceinpaint.data import make_masked_input
from faceinpaint.encoder import EncoderConfig, HybridEncoder, VitBranch


def masked_pair(n=2, size=64, seed=0, hole=True):
    g = torch.Generator().manual_seed(seed)
    img = torch.rand((n, 3, size, size), generator=g) * 2 - 1
    mask = torch.zeros(n, 1, size, size)
    if hole:
        mask[:, :, size // 4 : size // 2, size // 4 : size // 2] = 1.0
    return make_masked_input(img, mask)


def test_cnn_branch_shape_and_scale():
    torch.manual_seed(0)
    enc = HybridEncoder(EncoderConfig(base_channels=64, mode="cnn_only"), resolution=64)
    out = enc(*masked_pair(size=64))
    assert out.data.shape == (2, 256, 8, 8)
    assert out.scale == 8


def test_zero_input_finite():
    torch.manual_seed(0)
    enc = HybridEncoder(EncoderConfig(base_channels=8, vit_dim=16, vit_heads=2, vit_layers=1),
                        resolution=32)
    zeros = torch.zeros(1, 3, 32, 32)
    out = enc(zeros, torch.zeros(1, 1, 32, 32))
    assert torch.isfinite(out.data).all()


def test_eval_determinism_all_modes():
    for mode in ("cnn_only", "vit_only", "hybrid"):
        torch.manual_seed(1)
        enc = HybridEncoder(
            EncoderConfig(base_channels=8, vit_dim=16, vit_heads=2, vit_layers=1, mode=mode),
            resolution=32,
        ).eval()
        inp = masked_pair(size=32, seed=2)
        assert torch.equal(enc(*inp).data, enc(*inp).data), mode


def test_vit_token_grid():
    torch.manual_seed(0)
    branch = VitBranch(EncoderConfig(vit_dim=16, vit_heads=2, vit_layers=1), resolution=64)
    assert branch.pos_embed.shape == (1, 64, 16)  # 64 tokens at patch 8
    out = branch(torch.randn(2, 4, 64, 64))
    assert out.shape == (2, 16, 8, 8)


def test_vit_permutation_equivariance_without_pos_embed():
    # with positional embeddings zeroed, permuting input patches permutes
    # the output tokens identically
    torch.manual_seed(3)
    branch = VitBranch(EncoderConfig(vit_dim=16, vit_heads=2, vit_layers=2), resolution=32).double()
    with torch.no_grad():
        branch.pos_embed.zero_()
    branch.eval()
    x = torch.randn(1, 4, 32, 32, dtype=torch.float64)
    perm = torch.randperm(16, generator=torch.Generator().manual_seed(5))

    def permute_patches(img):
        patches = img.unfold(2, 8, 8).unfold(3, 8, 8).reshape(1, 4, 16, 8, 8)
        shuffled = patches[:, :, perm]
        grid = shuffled.reshape(1, 4, 4, 4, 8, 8).permute(0, 1, 2, 4, 3, 5)
        return grid.reshape(1, 4, 32, 32)

    out = branch(x).flatten(2)            # 1 x C x 16
    out_perm = branch(permute_patches(x)).flatten(2)
    assert torch.allclose(out[:, :, perm], out_perm, atol=1e-10)


def test_fuse_hybrid_output_channels():
    torch.manual_seed(0)
    enc = HybridEncoder(
        EncoderConfig(base_channels=64, vit_dim=128, vit_heads=4, vit_layers=1), resolution=64
    )
    out = enc(*masked_pair(size=64))
    assert out.data.shape == (2, 256, 8, 8)


def test_single_branch_modes_build_only_their_branch():
    torch.manual_seed(0)
    cnn_only = HybridEncoder(EncoderConfig(base_channels=8, mode="cnn_only"), resolution=32)
    assert cnn_only.vit is None and cnn_only.cnn is not None
    vit_only = HybridEncoder(
        EncoderConfig(vit_dim=16, vit_heads=2, vit_layers=1, mode="vit_only"), resolution=32
    )
    assert vit_only.cnn is None and vit_only.vit is not None
    out = vit_only(*masked_pair(size=32))
    assert out.data.shape[2:] == (4, 4)


def test_gradient_reaches_both_branches_in_hybrid():
    torch.manual_seed(2)
    enc = HybridEncoder(
        EncoderConfig(base_channels=8, vit_dim=16, vit_heads=2, vit_layers=1), resolution=32
    )
    out = enc(*masked_pair(size=32))
    out.data.sum().backward()
    cnn_norm = sum(p.grad.norm() for p in enc.cnn.parameters() if p.grad is not None)
    vit_norm = sum(p.grad.norm() for p in enc.vit.parameters() if p.grad is not None)
    assert cnn_norm > 0 and vit_norm > 0


def test_extreme_inputs_finite():
    torch.manual_seed(0)
    enc = HybridEncoder(
        EncoderConfig(base_channels=8, vit_dim=16, vit_heads=2, vit_layers=1), resolution=32
    )
    for fill in (-1.0, 1.0):
        img = torch.full((1, 3, 32, 32), fill)
        out = enc(img * 0, torch.ones(1, 1, 32, 32))  # fully masked extreme
        assert torch.isfinite(out.data).all()


def test_resolution_divisibility_checked_at_construction():
    with pytest.raises(ValueError, match="divisible"):
        HybridEncoder(EncoderConfig(base_channels=8), resolution=36)
    with pytest.raises(ValueError, match="patch"):
        HybridEncoder(EncoderConfig(base_channels=8, patch_size=5), resolution=32)
    with pytest.raises(ValueError, match="divisible"):
        EncoderConfig(vit_dim=15, vit_heads=2)
