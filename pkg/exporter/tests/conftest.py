import numpy as np
import pytest
from PIL import Image


class StubRunner:
    """Deterministic fake backbone: attention derived from image statistics."""

    def __init__(self, grid=4, heads=3, fail_with=None):
        self.grid = grid
        self.heads = heads
        self.fail_with = fail_with
        self.calls = []

    def run(self, image, time_step):
        if self.fail_with is not None:
            raise self.fail_with
        self.calls.append((image.shape, time_step))
        n = self.grid * self.grid
        # seed from the image so different images give different tensors
        seed = int(image.sum() * 1000) % (2**31) + time_step
        rng = np.random.default_rng(seed)
        out = {}
        for name in ("down0", "down1", "up0", "up1", "up2"):
            logits = rng.normal(size=(self.heads, n, n))
            e = np.exp(logits - logits.max(axis=-1, keepdims=True))
            out[name] = (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)
        return out


@pytest.fixture()
def stub():
    return StubRunner()


@pytest.fixture()
def image_path(tmp_path):
    rng = np.random.default_rng(0)
    arr = (rng.random((40, 40, 3)) * 255).astype(np.uint8)
    p = tmp_path / "input.png"
    Image.fromarray(arr).save(p)
    return p
