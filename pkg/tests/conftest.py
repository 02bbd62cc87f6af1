import dataclasses

import pytest

from advdistill.anchors import AnchorConfig
from advdistill.config import DistillConfig, ExperimentConfig
from advdistill.models import BackboneSpec
from advdistill.shapes_data import ShapesConfig, generate_dataset, load_dataset

# Tiny 16x16 setup: two scales (4x4, 2x2), a couple dozen images. Keeps the
# trainer-level tests in the seconds range.
TINY_BACKBONE = BackboneSpec(channels=(8, 16, 16), strides=(2, 2, 2), emit=(1, 2),
                             image_size=16, convs_per_stage=1)
TINY_STUDENT = BackboneSpec(channels=(4, 8, 8), strides=(2, 2, 2), emit=(1, 2),
                            image_size=16, convs_per_stage=1)
TINY_ANCHORS = AnchorConfig(image_size=16, grids=(4, 2), sizes=((0.3,), (0.6,)),
                            ratios=(1.0, 2.0))


def tiny_config(dataset_dir: str, output_dir: str, **distill_overrides) -> ExperimentConfig:
    distill = DistillConfig(batch_size=8, teacher_epochs=2, stage1_epochs=2,
                            stage2_epochs=1, checkpoint_every=0, **distill_overrides)
    cfg = ExperimentConfig(
        data=ShapesConfig(image_size=16, size=24, min_scale=0.25, max_scale=0.5, seed=3),
        teacher=TINY_BACKBONE,
        student=TINY_STUDENT,
        anchors=TINY_ANCHORS,
        distill=distill,
        dataset_dir=dataset_dir,
        output_dir=output_dir,
        seed=1,
        seeds=(1, 2),
    )
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyds")
    cfg = tiny_config(str(root), str(root))
    generate_dataset(cfg.data, root / "ds")
    return load_dataset(root / "ds")


@pytest.fixture()
def tiny_cfg(tiny_dataset, tmp_path):
    return tiny_config(str(tiny_dataset.root), str(tmp_path / "runs"))


def replace_distill(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return dataclasses.replace(cfg, distill=dataclasses.replace(cfg.distill, **kwargs))
