import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stripes import prepare_corpus


@pytest.fixture(scope="session")
def varied_corpus(tmp_path_factory):
    """40 images whose stripe widths spread widely: 8..64 px (LW 5..40%)."""
    root = tmp_path_factory.mktemp("varied")
    rng = np.random.default_rng(13)
    widths = sorted(rng.uniform(8.0, 64.0, size=40).tolist())
    out = prepare_corpus(root, widths)
    return root, out


@pytest.fixture(scope="session")
def trained_checkpoint(varied_corpus, tmp_path_factory):
    from widthbridge.train import TrainingRun, train_width_model

    root, out = varied_corpus
    model_dir = tmp_path_factory.mktemp("model")
    run = TrainingRun(
        manifest_path=str(out / "manifest.csv"),
        width_table_path=str(out / "widths.csv"),
        images_root=str(root / "images"),
        out_dir=str(model_dir),
        epochs=2,
        batch_size=4,
        learning_rate=1e-3,
        input_size=96,
        pretrained=False,
        seed=3,
    )
    return run, train_width_model(run)
