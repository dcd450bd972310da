"""Plain-text array files and provenance headers."""
import hashlib

import numpy as np

from .errors import ConfigError, InvalidArgument
from .geometry import Pose, SuperArrayConfig


def provenance_header(config_text, seed):
    digest = hashlib.sha256(config_text.encode()).hexdigest()
    return f"# config_sha256={digest} seed={seed}\n"


def write_array_file(path, config, header=""):
    """One module per line: ``cx cy pose``."""
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("# cx cy pose\n")
        for (x, y), p in zip(config.centers, config.poses):
            fh.write(f"{x:.9f} {y:.9f} {Pose(p).name}\n")


def read_array_file(path):
    """Parse an array file; ``#`` starts a comment, the pose column is optional (``UP``)."""
    centers, poses = [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].split()
            if not body:
                continue
            if len(body) not in (2, 3):
                raise ConfigError(f"{path}:{lineno}: expected 'cx cy [pose]'")
            try:
                centers.append((float(body[0]), float(body[1])))
                poses.append(Pose.parse(body[2]) if len(body) == 3 else Pose.UP)
            except (ValueError, InvalidArgument) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not centers:
        raise ConfigError(f"{path}: no modules")
    if not np.all(np.isfinite(centers)):
        raise ConfigError(f"{path}: non-finite coordinate")
    return SuperArrayConfig(np.array(centers), poses)
