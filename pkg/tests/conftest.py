import pytest

from thermface.imaging import generate_corpus

ROTATIONS = (0.0, 15.0, -15.0, 45.0, -45.0)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """4 subjects x 10 images at 64 px; returns (directory, manifest)."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(root, 4, 10, rotations=ROTATIONS, size=64, seed=0)
    return root, manifest
