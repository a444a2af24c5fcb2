import pytest

from ionmorph_trainer import (
    TrainConfig,
    build_training_set,
    export_scorer,
    generate_training_corpus,
    train,
)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Synthetic corpus: 60 Train / 12 Val / 6 Test labeled images."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_training_corpus(root, seed=7)
    data = build_training_set([manifest], root)
    return root, manifest, data


@pytest.fixture(scope="session")
def trained(corpus, tmp_path_factory):
    """A converged desk-scale run plus its exported scorer."""
    _, _, data = corpus
    run_dir = tmp_path_factory.mktemp("run")
    config = TrainConfig(
        lr_start=1e-3, lr_min=1e-5, warmup_epochs=2, max_epochs=40, patience=10, seed=0
    )
    result = train(config, data["Train"], data["Val"], run_dir)
    export_dir = tmp_path_factory.mktemp("export")
    command = export_scorer(result.checkpoint_path, export_dir)
    return result, export_dir, command
