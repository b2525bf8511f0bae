import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from artigen.contact import ContactTrajectory
from artigen.error_handling import ArtigenError, DimensionMismatch, MissingInput, handle_exception
from artigen.file_io import (
    CLOUD_FILE,
    read_masks,
    read_model,
    read_ply,
    read_trajectory,
    write_masks,
    write_model,
    write_ply,
    write_trajectory,
)
from artigen.geometry import LabeledPointCloud, RigidTransform
from artigen.keyframes import MaskSequence
from artigen.models import AssetPayload, GroundTruth, ObjectPayload, SceneConfig
from artigen.oracle import SceneBundle
from artigen.replacement import ReplacementAsset
from artigen.retarget import EeTrajectory

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)


@dataclass(frozen=True, eq=False)
class DemoInputs:
    """What a captured demonstration provides: masks, labeled clouds and the end-effector path."""
    masks: MaskSequence
    clouds: Tuple[LabeledPointCloud, ...]
    trajectory: EeTrajectory

    def __post_init__(self):
        if not len(self.masks) == len(self.clouds) == len(self.trajectory):
            raise DimensionMismatch(
                f"Frame counts differ: {len(self.masks)} masks, {len(self.clouds)} clouds, "
                f"{len(self.trajectory)} poses")

    @classmethod
    def from_bundle(cls, bundle: SceneBundle) -> "DemoInputs":
        return cls(bundle.masks, bundle.clouds, bundle.trajectory)


class SceneBundleService:
    """File layout of a scene bundle directory."""

    def __init__(self, root: str):
        self.root = root

    @property
    def masks_dir(self) -> str:
        return os.path.join(self.root, "masks")

    @property
    def clouds_dir(self) -> str:
        return os.path.join(self.root, "clouds")

    @property
    def trajectory_path(self) -> str:
        return os.path.join(self.root, "trajectory.json")

    @property
    def truth_path(self) -> str:
        return os.path.join(self.root, "ground_truth.json")

    @property
    def scene_path(self) -> str:
        return os.path.join(self.root, "scene.json")

    @property
    def object_path(self) -> str:
        return os.path.join(self.root, "object.json")

    def part_path(self, name: str) -> str:
        return os.path.join(self.root, "parts", f"{name}.ply")

    def cloud_path(self, frame: int) -> str:
        return os.path.join(self.clouds_dir, CLOUD_FILE.format(frame))

    def dump_bundle(self, bundle: SceneBundle) -> None:
        """Writes every artifact of an oracle scene."""
        try:
            os.makedirs(self.root, exist_ok=True)
            write_masks(self.masks_dir, bundle.masks)
            for t, cloud in enumerate(bundle.clouds):
                write_ply(self.cloud_path(t), cloud)
            write_trajectory(self.trajectory_path, bundle.trajectory)
            write_model(self.truth_path, bundle.truth)
            write_model(self.scene_path, bundle.config)

            move, static = bundle.parts
            write_ply(self.part_path("part_move"), move)
            write_ply(self.part_path("part_static"), static)
            pose = bundle.object_pose
            write_model(self.object_path, ObjectPayload(
                object_pose=[*pose.translation.tolist(), *pose.rotation.tolist()],
                object_joint=bundle.object_joint,
                contact_start=bundle.contact_trajectory.start_frame,
                contact_points=[tuple(p) for p in bundle.contact_trajectory.points.tolist()],
            ))
            logger.info(f"Wrote scene bundle with {len(bundle.clouds)} frames to {self.root}")
        except ArtigenError:
            raise
        except Exception as e:
            raise handle_exception("dump_bundle", e)

    def load_clouds(self) -> Tuple[LabeledPointCloud, ...]:
        if not os.path.isdir(self.clouds_dir):
            raise MissingInput(f"Cloud directory not found: {self.clouds_dir}")
        clouds, t = [], 0
        while os.path.isfile(self.cloud_path(t)):
            clouds.append(read_ply(self.cloud_path(t)))
            t += 1
        logger.info(f"Loaded {len(clouds)} point clouds from {self.clouds_dir}")
        return tuple(clouds)

    def load_inputs(self) -> DemoInputs:
        """Masks, clouds and trajectory only; works for captured and synthetic bundles alike."""
        try:
            return DemoInputs(read_masks(self.masks_dir), self.load_clouds(), read_trajectory(self.trajectory_path))
        except ArtigenError:
            raise
        except Exception as e:
            raise handle_exception("load_inputs", e)

    def load_truth(self) -> GroundTruth:
        return read_model(self.truth_path, GroundTruth)

    def has_truth(self) -> bool:
        return os.path.isfile(self.truth_path)

    def load_bundle(self, inputs: Optional[DemoInputs] = None) -> SceneBundle:
        """Full oracle bundle, including the ground truth and clean parts."""
        try:
            inputs = inputs or self.load_inputs()
            extra = read_model(self.object_path, ObjectPayload)
            pose_row = np.asarray(extra.object_pose, dtype=float)
            return SceneBundle(
                config=read_model(self.scene_path, SceneConfig),
                clouds=inputs.clouds,
                masks=inputs.masks,
                trajectory=inputs.trajectory,
                contact_trajectory=ContactTrajectory(np.asarray(extra.contact_points, dtype=float),
                                                     start_frame=extra.contact_start),
                truth=self.load_truth(),
                object_pose=RigidTransform(pose_row[3:7], pose_row[:3]),
                parts=(read_ply(self.part_path("part_move")), read_ply(self.part_path("part_static"))),
                object_joint=extra.object_joint,
            )
        except ArtigenError:
            raise
        except Exception as e:
            raise handle_exception("load_bundle", e)


class AssetService:
    """Replacement asset directory: part_move.ply, part_static.ply and asset.json."""

    def __init__(self, root: str):
        self.root = root

    def _path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def dump_asset(self, asset: ReplacementAsset) -> None:
        os.makedirs(self.root, exist_ok=True)
        write_ply(self._path("part_move.ply"), asset.part_move)
        write_ply(self._path("part_static.ply"), asset.part_static)
        pose = asset.base_pose
        write_model(self._path("asset.json"), AssetPayload(
            joint=asset.joint, base_pose=[*pose.translation.tolist(), *pose.rotation.tolist()]))
        logger.info(f"Wrote replacement asset to {self.root}")

    def load_asset(self) -> ReplacementAsset:
        try:
            payload = read_model(self._path("asset.json"), AssetPayload)
            row = np.asarray(payload.base_pose, dtype=float)
            if row.shape != (7,):
                raise DimensionMismatch(f"Asset base pose needs 7 values, got {row.size}")
            return ReplacementAsset(
                part_move=read_ply(self._path("part_move.ply")),
                part_static=read_ply(self._path("part_static.ply")),
                joint=payload.joint,
                base_pose=RigidTransform(row[3:7], row[:3]),
            )
        except ArtigenError:
            raise
        except Exception as e:
            raise handle_exception("load_asset", e)
