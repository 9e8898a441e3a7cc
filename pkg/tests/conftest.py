import pytest
import torch

from faceinpaint.config import RunConfig, config_from_dict
from faceinpaint.data import FolderDataset


def tiny_run_config(**over) -> RunConfig:
    """Small, fast profile shared by most tests."""
    base = {
        "data": {"root": "bundled:smoke", "resolution": 32},
        "encoder": {"base_channels": 8, "vit_layers": 1, "vit_heads": 2, "vit_dim": 16},
        "stage1": {"num_classes": 4},
        "stage2": {"scales": [1, 2], "key_dim": 8},
        "critics": {"base_channels": 8},
        "train": {"batch_size": 2, "g_lr": 1e-3, "d_lr": 5e-4, "epochs": 1, "seed": 11,
                  "out_dir": "unused"},
    }
    for block, keys in over.items():
        base.setdefault(block, {}).update(keys)
    return config_from_dict(base)


@pytest.fixture(scope="session")
def smoke_images_64() -> torch.Tensor:
    return FolderDataset("bundled:smoke", "train", 64).load_all()


@pytest.fixture(scope="session")
def smoke_images_32() -> torch.Tensor:
    return FolderDataset("bundled:smoke", "train", 32).load_all()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for status, flag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", "call") != "call":
                continue
            if "test_acceptance.py" in rep.nodeid:
                rows.append((rep.nodeid.split("::")[-1], flag))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, flag in sorted(rows):
            terminalreporter.write_line(f"{flag}  {name}")
