import pytest
from hypothesis import HealthCheck, settings

from pacc.synthetic import write_toy_corpus

settings.register_profile("pacc", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pacc")


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Toy inputs on disk: 30 drugs x 30 cells, 12 genes."""
    return write_toy_corpus(tmp_path_factory.mktemp("corpus"))


TOY_CONFIG = """\
# small MCA so the suite stays fast
variants = 4
model.H = 8
model.f = 8
model.m = 2
model.A = 16
model.dense = 32,16
train.max_steps = 40
train.eval_interval = 20
train.batch_size = 64
train.checkpoint_keep = 2
"""


@pytest.fixture(scope="session")
def trained_run(corpus, tmp_path_factory):
    """A lenient split and a short CLI training run over the toy corpus."""
    from pacc.cli import main

    root = tmp_path_factory.mktemp("run")
    cfg = root / "toy.cfg"
    cfg.write_text(TOY_CONFIG, encoding="utf-8")
    assert main(["split", "--responses", corpus["responses"], "--protocol", "lenient",
                 "--out", str(root / "split")]) == 0
    assert main(["train", "--config", str(cfg), "--smiles", corpus["smiles"], "--expression",
                 corpus["expression"], "--responses", corpus["responses"], "--split",
                 str(root / "split" / "split.txt"), "--out", str(root / "train")]) == 0
    ckpts = sorted(str(p) for p in (root / "train" / "checkpoints").glob("*.ckpt"))
    return dict(corpus, root=root, config=str(cfg), split=str(root / "split" / "split.txt"),
                checkpoints=ckpts, checkpoint=ckpts[0])
