import pytest
from types import SimpleNamespace

import zeroshot as zs

# Desk-scale architecture used by the end-to-end tests: one relu+batchnorm
# reducer layer, concat fusion, linear semantic layer, frozen output.
# Chosen from the reference runs recorded in tests/test_acceptance.py.
DESK_ARCH = dict(
    reducer_widths=(24,),
    trunk_widths=(),
    semantic_activation="linear",
    reducer_dropout=0.0,
    trunk_dropout=0.0,
    reducer_batchnorm=True,
)


def desk_config(seed=0, **overrides):
    params = dict(n1=64, n2=32, sem_dim=16, seed=seed, **DESK_ARCH)
    params.update(overrides)
    return zs.ModelConfig(**params)


def build_pipeline(seed=0, noise=0.05, train_model=True, per_class=30):
    img, txt, cv, man = zs.generate_synthetic(20, 64, 32, 16, per_class, noise, seed=seed)
    split = zs.make_split(man.labels, 5, seed=seed)
    train_set, zero_set = zs.assemble_dataset(img, txt, cv, man, split)
    cfg = desk_config(seed=seed)
    model = zs.init_model(cv, train_set.label_order, cfg)
    history = None
    if train_model:
        history = zs.train(model, train_set, zs.TrainConfig(seed=seed))
    return SimpleNamespace(
        img=img, txt=txt, cv=cv, manifest=man, split=split,
        train_set=train_set, zero_set=zero_set, cfg=cfg,
        model=model, history=history,
    )


@pytest.fixture(scope="session")
def trained_pipeline():
    """One trained 20-class synthetic run shared by read-only tests."""
    return build_pipeline(seed=0)
