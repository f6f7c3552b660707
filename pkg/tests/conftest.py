import pytest


@pytest.fixture(autouse=True)
def _no_ambient_output_dir(monkeypatch):
    # Keep CLI tests hermetic: never let an inherited output dir leak in.
    monkeypatch.delenv("ENCMAP_OUTPUT_DIR", raising=False)
