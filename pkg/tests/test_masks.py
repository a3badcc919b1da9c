import numpy as np
import pytest
from scipy import ndimage

from ghostspeckle.masks import disk_mask, embed, llama_mask, llama_silhouette, square_mask
from ghostspeckle.specklefield import GridSpec

G = GridSpec(64, 64, speckle_radius=2)


def test_llama_is_one_connected_shape():
    pic = llama_silhouette(40)
    _, n = ndimage.label(pic)
    assert n == 1
    assert 300 < pic.sum() < 700
    # legs reach further down than the head, head sits right of the tail
    rows, cols = np.nonzero(pic)
    assert rows.max() > 35 and rows.min() < 5


@pytest.mark.parametrize("size", [12, 40, 80])
def test_llama_scales(size):
    pic = llama_silhouette(size)
    assert pic.shape == (size, size)
    assert pic.sum() / size**2 == pytest.approx(llama_silhouette(40).sum() / 1600, rel=0.2)


def test_llama_mask_is_centred():
    m = llama_mask(G)
    assert m.area == llama_silhouette().sum()
    assert not m.pixels[:8].any() and not m.pixels[-8:].any()


def test_square_and_disk_areas():
    assert square_mask(G, 16).area == 256
    sq = square_mask(G, 4, center=(10, 20)).pixels
    assert sq[18:22, 8:12].all() and sq.sum() == 16
    assert disk_mask(G, 10).area == pytest.approx(np.pi * 100, rel=0.05)


def test_embed_refuses_overflow():
    with pytest.raises(ValueError):
        embed(np.ones((10, 10)), G, center=(2, 30))
