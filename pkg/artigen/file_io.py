import logging
import os
from typing import List, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, TypeAdapter

from artigen.error_handling import DimensionMismatch, FrameMismatch, MissingInput, ValidationError
from artigen.geometry import LabeledPointCloud
from artigen.keyframes import MaskFrame, MaskSequence
from artigen.models import ArticulationTrace, JointTrajectoryPayload, TraceFrame, TrajectoryPayload
from artigen.retarget import EeTrajectory

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

ModelT = TypeVar("ModelT", bound=BaseModel)

MOVABLE_MASK = "movable_{:05d}.pgm"
ROBOT_MASK = "robot_{:05d}.pgm"
CLOUD_FILE = "cloud_{:05d}.ply"

_TRACE_ADAPTER = TypeAdapter(List[TraceFrame])


def _require_file(path: str) -> None:
    if not os.path.isfile(path):
        raise MissingInput(f"File not found: {path}", details={"path": path})


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


# PLY point clouds
def write_ply(path: str, cloud: LabeledPointCloud) -> None:
    _ensure_parent(path)
    header = "\n".join([
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "property int label",
        "end_header",
    ])
    with open(path, "w") as f:
        f.write(header + "\n")
        for p, label in zip(cloud.points, cloud.labels):
            x, y, z = (repr(float(v)) for v in p)
            f.write(f"{x} {y} {z} {int(label)}\n")


def read_ply(path: str) -> LabeledPointCloud:
    _require_file(path)
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValidationError(f"{path} is not a PLY file")

    count, properties, body = None, [], None
    for i, line in enumerate(lines[1:], start=1):
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format" and tokens[1] != "ascii":
            raise ValidationError(f"{path}: only ASCII PLY is supported (got {tokens[1]})")
        elif tokens[0] == "element" and tokens[1] == "vertex":
            count = int(tokens[2])
        elif tokens[0] == "property" and count is not None:
            properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            body = i + 1
            break
    if count is None or body is None or not {"x", "y", "z"} <= set(properties):
        raise ValidationError(f"{path}: malformed PLY header", details={"properties": properties})

    rows = [line.split() for line in lines[body:body + count]]
    if len(rows) != count or any(len(r) != len(properties) for r in rows):
        raise DimensionMismatch(f"{path}: expected {count} vertices with {len(properties)} values")
    data = np.array(rows, dtype=float).reshape(count, len(properties))
    points = data[:, [properties.index(k) for k in ("x", "y", "z")]]
    labels = data[:, properties.index("label")].astype(np.int64) if "label" in properties else np.zeros(count, np.int64)
    return LabeledPointCloud(points, labels)


# PGM masks
def write_pgm(path: str, mask: MaskFrame, binary: bool = True) -> None:
    _ensure_parent(path)
    pixels = np.where(mask.bits, 255, 0).astype(np.uint8)
    if binary:
        with open(path, "wb") as f:
            f.write(f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii"))
            f.write(pixels.tobytes())
    else:
        with open(path, "w") as f:
            f.write(f"P2\n{mask.width} {mask.height}\n255\n")
            for row in pixels:
                f.write(" ".join(str(v) for v in row) + "\n")


def _pgm_header(data: bytes, path: str) -> Tuple[str, int, int, int, int]:
    """Magic, width, height, maxval and the offset where pixel data begins."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    # exactly one whitespace byte separates the header from binary data
    return tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3]), pos + 1


def read_pgm(path: str) -> MaskFrame:
    _require_file(path)
    with open(path, "rb") as f:
        data = f.read()
    magic, width, height, maxval, offset = _pgm_header(data, path)
    if magic == "P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    elif magic == "P2":
        pixels = np.array(data[offset:].split(), dtype=np.int64)
    else:
        raise ValidationError(f"{path}: unsupported PGM magic {magic}")
    if pixels.size != width * height:
        raise DimensionMismatch(f"{path}: expected {width * height} pixels, got {pixels.size}")
    return MaskFrame.from_flat(width, height, pixels != 0)


def write_masks(directory: str, sequence: MaskSequence) -> None:
    os.makedirs(directory, exist_ok=True)
    for t, (movable, robot) in enumerate(sequence.frames):
        write_pgm(os.path.join(directory, MOVABLE_MASK.format(t)), movable)
        write_pgm(os.path.join(directory, ROBOT_MASK.format(t)), robot)


def read_masks(directory: str) -> MaskSequence:
    if not os.path.isdir(directory):
        raise MissingInput(f"Mask directory not found: {directory}")
    frames, t = [], 0
    while os.path.isfile(os.path.join(directory, MOVABLE_MASK.format(t))):
        robot_path = os.path.join(directory, ROBOT_MASK.format(t))
        movable = read_pgm(os.path.join(directory, MOVABLE_MASK.format(t)))
        # a missing robot mask means the robot is not visible in that frame
        robot = read_pgm(robot_path) if os.path.isfile(robot_path) else MaskFrame.empty(movable.width, movable.height)
        frames.append((movable, robot))
        t += 1
    logger.info(f"Loaded {len(frames)} mask frames from {directory}")
    return MaskSequence(tuple(frames))


# JSON payloads
def write_model(path: str, model: BaseModel) -> None:
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(model.model_dump_json(indent=2))


def read_model(path: str, cls: Type[ModelT]) -> ModelT:
    _require_file(path)
    with open(path, "r") as f:
        return cls.model_validate_json(f.read())


def write_trajectory(path: str, tau: EeTrajectory) -> None:
    write_model(path, TrajectoryPayload(frames=tau.to_array().tolist()))


def read_trajectory(path: str) -> EeTrajectory:
    payload = read_model(path, TrajectoryPayload)
    widths = {len(row) for row in payload.frames}
    if len(widths) > 1:
        raise DimensionMismatch(f"{path}: mixed row widths {sorted(widths)}")
    return EeTrajectory.from_array(payload.frames)


def write_joint_trajectory(path: str, joints, failed_frame=None) -> None:
    rows = [] if joints is None else np.asarray(joints, dtype=float).tolist()
    write_model(path, JointTrajectoryPayload(joints=rows, success=failed_frame is None, failed_frame=failed_frame))


def write_trace(path: str, trace: ArticulationTrace) -> None:
    _ensure_parent(path)
    with open(path, "wb") as f:
        f.write(_TRACE_ADAPTER.dump_json(trace.frames(), indent=2))


def read_trace(path: str) -> ArticulationTrace:
    _require_file(path)
    with open(path, "rb") as f:
        frames = _TRACE_ADAPTER.validate_json(f.read())
    if not frames:
        raise ValidationError(f"{path}: empty articulation trace")
    numbers = [fr.frame for fr in frames]
    if numbers != list(range(numbers[0], numbers[0] + len(numbers))):
        raise FrameMismatch(f"{path}: trace frames are not consecutive")
    return ArticulationTrace(start_frame=numbers[0], theta=[fr.theta for fr in frames],
                             residuals=[fr.residual for fr in frames])
